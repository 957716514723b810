"""Byte-budgeted prompt construction and the few-shot prompt memory.

The rendered prompt is four ordered blocks (telemetry, context,
instructions, optional exemplars) capped at 1200 bytes (1.2 decimal kB).
Truncation priority: exemplars are dropped last-first, then the context
tail is cut at a word boundary with an ellipsis marker.  Telemetry and
instruction blocks are never truncated.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from math import sqrt
from typing import List, Optional, Sequence, Tuple

from .detection import ClassLabel
from .errors import BudgetImpossible, NoContextForBenign
from .telemetry import NormalizedTelemetry

BYTE_BUDGET = 1200  # 1.2 kB, decimal
ELLIPSIS = " …"


class ReasoningMode(Enum):
    ZeroShot = "zero_shot"
    FewShot = "few_shot"
    CoT = "cot"


@dataclass(frozen=True)
class AttackContext:
    label: ClassLabel
    description: str


def _load_asset(name: str, override_dir=None) -> str:
    if override_dir is not None:
        return (override_dir / name).read_text(encoding="utf-8")
    return resources.files("edgeids.assets").joinpath(name).read_text(encoding="utf-8")


def _knowledge_base(override_dir=None) -> dict:
    raw = json.loads(_load_asset("knowledge_base.json", override_dir))
    return {ClassLabel[k]: v for k, v in raw.items()}


def lookup_context(label: ClassLabel, override_dir=None) -> AttackContext:
    """Fixed knowledge-base description for a non-benign class."""
    if label is ClassLabel.Benign:
        raise NoContextForBenign("no attack context exists for benign traffic")
    return AttackContext(label=label, description=_knowledge_base(override_dir)[label])


_INSTRUCTION_ASSETS = {
    ReasoningMode.ZeroShot: "instructions_zero_shot.txt",
    ReasoningMode.FewShot: "instructions_few_shot.txt",
    ReasoningMode.CoT: "instructions_cot.txt",
}


@dataclass(frozen=True)
class Prompt:
    blocks: Tuple[Tuple[str, str], ...]  # (block name, text)
    rendered: str
    byte_len: int
    digest: str
    mode: ReasoningMode

    def __post_init__(self):
        if self.byte_len != len(self.rendered.encode("utf-8")):
            raise ValueError("byte_len does not match rendered text")
        if self.byte_len > BYTE_BUDGET:
            raise ValueError(f"prompt exceeds {BYTE_BUDGET} bytes")
        if self.digest != sha256_hex(self.rendered):
            raise ValueError("digest does not match rendered text")

    @property
    def token_counts(self) -> Counter:
        return Counter(self.rendered.lower().split())


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _telemetry_block(m: NormalizedTelemetry) -> str:
    cpu, mem, lat, energy, score = m.values
    return (
        f"Telemetry (normalized): cpu={cpu:.3f} mem={mem:.3f} "
        f"latency={lat:.3f} energy={energy:.3f} score={score:.3f}"
    )


def _context_block(ctx: AttackContext) -> str:
    return f"Context [{ctx.label.display}]: {ctx.description}"


def _exemplar_block(exemplars: Sequence[Prompt]) -> str:
    # Only the telemetry and context lines of each exemplar are quoted;
    # repeating nested instructions would waste the byte budget.
    lines = ["Example incidents:"]
    for ex in exemplars:
        for name, text in ex.blocks:
            if name in ("telemetry", "context"):
                lines.append(f"- {text}")
    return "\n".join(lines)


def _byte_len(blocks) -> int:
    return len("\n".join(text for _, text in blocks).encode("utf-8"))


def _truncate_context(text: str, budget: int) -> Optional[str]:
    """Longest word-boundary prefix of text such that prefix+marker fits."""
    words = text.split(" ")
    for n in range(len(words) - 1, -1, -1):
        candidate = " ".join(words[:n]).rstrip(",;:") + ELLIPSIS
        if len(candidate.encode("utf-8")) <= budget:
            return candidate
    return None


def encode_prompt(
    m: NormalizedTelemetry,
    ctx: AttackContext,
    mode: ReasoningMode = ReasoningMode.ZeroShot,
    exemplars: Sequence[Prompt] = (),
    override_dir=None,
) -> Prompt:
    """Assemble the budgeted prompt; deterministic for identical inputs."""
    telemetry = _telemetry_block(m)
    context = _context_block(ctx)
    instructions = _load_asset(_INSTRUCTION_ASSETS[mode], override_dir).strip()

    fixed = [("telemetry", telemetry), ("instructions", instructions)]
    if _byte_len(fixed) > BYTE_BUDGET:
        raise BudgetImpossible(
            "telemetry and instruction blocks alone exceed the byte budget"
        )

    kept = list(exemplars) if mode is ReasoningMode.FewShot else []
    while True:
        blocks = [("telemetry", telemetry), ("context", context), ("instructions", instructions)]
        if kept:
            blocks.append(("exemplars", _exemplar_block(kept)))
        if _byte_len(blocks) <= BYTE_BUDGET:
            break
        if kept:
            kept.pop()  # drop exemplars last-first
            continue
        # context tail truncation; other blocks are already minimal
        others = [("telemetry", telemetry), ("instructions", instructions)]
        context_budget = BYTE_BUDGET - _byte_len(others) - 1  # joining newline
        truncated = _truncate_context(context, context_budget)
        if truncated is None:
            blocks = others
        else:
            blocks = [("telemetry", telemetry), ("context", truncated), ("instructions", instructions)]
        break

    rendered = "\n".join(text for _, text in blocks)
    return Prompt(
        blocks=tuple(blocks),
        rendered=rendered,
        byte_len=len(rendered.encode("utf-8")),
        digest=sha256_hex(rendered),
        mode=mode,
    )


def prompt_similarity(a: Prompt, b: Prompt) -> float:
    """Cosine similarity of lowercase whitespace-token count vectors."""
    ca, cb = a.token_counts, b.token_counts
    if not ca or not cb:
        return 0.0
    dot = sum(ca[t] * cb[t] for t in ca.keys() & cb.keys())
    na = sqrt(sum(v * v for v in ca.values()))
    nb = sqrt(sum(v * v for v in cb.values()))
    return dot / (na * nb)


@dataclass
class PromptMemory:
    """Bounded ring of past prompts for few-shot retrieval (oldest evicted)."""

    capacity: int = 256
    entries: deque = field(default_factory=deque)

    def add(self, prompt: Prompt, timestamp: int) -> None:
        self.entries.append((prompt, prompt.token_counts, timestamp))
        while len(self.entries) > self.capacity:
            self.entries.popleft()

    def __len__(self):
        return len(self.entries)

    def snapshot(self) -> List[Tuple[Prompt, Counter, int]]:
        return list(self.entries)


def retrieve_similar(memory: PromptMemory, query: Prompt, k: int) -> List[Prompt]:
    """Top-k prompts by similarity; similarity ties go to the most recent."""
    if k <= 0:
        return []
    scored = [
        (prompt_similarity(p, query), ts, p) for p, _, ts in memory.snapshot()
    ]
    scored.sort(key=lambda item: (-item[0], -item[1]))
    return [p for _, _, p in scored[:k]]
