import json
from pathlib import Path

from edgeids.budget import Constraints
from edgeids.cli import main
from edgeids.config import load_config
from edgeids.prompt import ReasoningMode

GOLDEN_LOG = Path(__file__).parent / "data" / "golden_log.txt"

CSV_HEADER = (
    "session_id,timestamp,duration,fwd_packet_count,bwd_packet_count,"
    "mean_packet_size,packet_size_variance,inter_arrival_mean,dst_port,"
    "src_port,protocol,tcp_flag_counts,distinct_dst_ports_in_window,"
    "failed_auth_count_in_window,label\n"
)


class TestConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert cfg.pipeline.tau_alert == 0.70
        assert cfg.pipeline.constraints == Constraints(1.5, 100.0, 0.60)
        assert cfg.limiter_capacity == 5.0

    def test_toml_overrides(self, tmp_path):
        path = tmp_path / "edgeids.toml"
        path.write_text(
            "[pipeline]\n"
            'reasoning_mode = "cot"\n'
            "tau_alert = 0.8\n"
            "[constraints]\n"
            "t_max_s = 2.0\n"
            "[limiter]\n"
            "capacity = 3.0\n"
        )
        cfg = load_config(path)
        assert cfg.pipeline.reasoning_mode is ReasoningMode.CoT
        assert cfg.pipeline.tau_alert == 0.8
        assert cfg.pipeline.constraints.t_max_s == 2.0
        assert cfg.pipeline.constraints.e_budget_j == 100.0  # untouched default
        assert cfg.limiter_capacity == 3.0


class TestCli:
    def test_replay_golden_prints_log(self, capsys):
        assert main(["replay", "--golden"]) == 0
        out = capsys.readouterr().out
        assert out == GOLDEN_LOG.read_text(encoding="utf-8")

    def test_bench_writes_trials_csv(self, tmp_path, capsys):
        out = tmp_path / "trials.csv"
        rc = main(
            ["bench", "--trials", "2", "--windows", "4", "--out", str(out)]
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 3  # header + 2 trials
        assert lines[0].startswith("trial,attack,windows")

    def test_report_over_bench_output(self, tmp_path, capsys):
        a, b = tmp_path / "zero.csv", tmp_path / "few.csv"
        for path, seed in ((a, 0), (b, 1)):
            main(
                ["bench", "--trials", "3", "--windows", "4", "--seed", str(seed),
                 "--out", str(path)]
            )
        report_path = tmp_path / "report.json"
        rc = main(
            ["report", "--trials", f"zero={a}", f"few={b}", "--out", str(report_path)]
        )
        assert rc == 0
        table = capsys.readouterr().out
        assert "ANOVA F" in table and "Tukey Result" in table
        report = json.loads(report_path.read_text())
        assert set(report["compliance"]) == {"zero", "few"}

    def test_train_then_run(self, tmp_path, capsys):
        data = tmp_path / "flows.csv"
        rows = []
        for i in range(12):
            label = "BENIGN" if i % 2 else "SSH-Patator"
            auth = 0 if i % 2 else 30
            rows.append(
                f"s{i},1000,2.0,10,5,500,{100 + i},3,22,{40000 + i},TCP,"
                f"SYN:4;ACK:10,2,{auth},{label}\n"
            )
        data.write_text(CSV_HEADER + "".join(rows))
        model_dir = tmp_path / "models"
        assert main(["train", "--data", str(data), "--out", str(model_dir)]) == 0
        for name in ("dt.json", "knn.json", "rf.json", "stats.json"):
            assert (model_dir / name).exists()

        flows = tmp_path / "live.csv"
        flows.write_text(
            CSV_HEADER + "s99,1000,2.0,10,5,500,120,3,22,40000,TCP,SYN:4;ACK:10,2,0,\n"
        )
        timeline = tmp_path / "telemetry.json"
        timeline.write_text(
            json.dumps(
                [{"cpu": 47.6, "memory_mb": 372, "latency_ms": 48.2,
                  "energy_j": 21.7, "power_w": 5.0}]
            )
        )
        rc = main(
            ["replay", "--flows", str(flows), "--models", str(model_dir),
             "--telemetry", str(timeline)]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "session_id: s99" in out

    def test_replay_without_inputs_errors(self, capsys):
        assert main(["replay"]) == 2
