import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import const_vector
from edgeids.detection import (
    ClassLabel,
    ClassifierModel,
    MarginModel,
    ModelKind,
    aggregate_scores,
    consensus_count,
    label_from_text,
    likelihood_ratio_alert,
    load_model,
    make_external,
    make_knn,
    predict,
    predict_knn,
    save_model,
    score_margin,
    train_decision_tree,
    train_random_forest,
)
from edgeids.errors import DegenerateData, EmptyList, UntrainedModel
from edgeids.features import FeatureVector


def first_dim_vector(x: float) -> FeatureVector:
    return FeatureVector((float(x),) + (0.0,) * 11)


def separable_1d(n=10):
    data = []
    for i in range(n):
        data.append((first_dim_vector(-1.0 - i), ClassLabel.Benign))
        data.append((first_dim_vector(1.0 + i), ClassLabel.DoS))
    return data


class TestDecisionTree:
    def test_separable_depth_one(self):
        model = train_decision_tree(separable_1d(), max_depth=1)
        for vec, lbl in separable_1d():
            assert predict(model, vec).label is lbl

    def test_identical_features_single_leaf(self):
        data = [(const_vector(1.0), ClassLabel.Benign)] * 3 + [
            (const_vector(1.0), ClassLabel.DoS)
        ]
        model = train_decision_tree(data)
        p = predict(model, const_vector(1.0))
        assert p.posteriors[ClassLabel.Benign] == pytest.approx(0.75)
        assert p.posteriors[ClassLabel.DoS] == pytest.approx(0.25)

    def test_blobs_accuracy_vs_nearest_mean_oracle(self, blobs):
        model = train_decision_tree(blobs)
        correct = sum(1 for v, l in blobs if predict(model, v).label is l)
        assert correct / len(blobs) >= 0.95
        # independent nearest-mean oracle on the same draw
        oracle_correct = 0
        for v, l in blobs:
            d_b = np.linalg.norm(v.array + 3.0)
            d_d = np.linalg.norm(v.array - 3.0)
            guess = ClassLabel.Benign if d_b <= d_d else ClassLabel.DoS
            oracle_correct += guess is l
        assert oracle_correct / len(blobs) >= 0.95

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateData):
            train_decision_tree([(const_vector(0.0), ClassLabel.Benign)] * 4)

    def test_depth_one_matches_exhaustive_split_oracle(self):
        rng = np.random.default_rng(7)
        data = [
            (FeatureVector.from_array(rng.normal(0, 2, 12)),
             ClassLabel.Benign if rng.random() < 0.5 else ClassLabel.DoS)
            for _ in range(20)
        ]
        if len({l for _, l in data}) < 2:
            data[0] = (data[0][0], ClassLabel.DoS)
        model = train_decision_tree(data, max_depth=1)
        X = np.stack([v.array for v, _ in data])
        y = np.array([l.value for _, l in data])

        # brute-force oracle: scan every feature and midpoint threshold
        def gini(lbls):
            if len(lbls) == 0:
                return 0.0
            _, c = np.unique(lbls, return_counts=True)
            p = c / len(lbls)
            return 1.0 - float(np.sum(p * p))

        best = None
        for j in range(12):
            vals = np.unique(X[:, j])
            for lo, hi in zip(vals[:-1], vals[1:]):
                thr = (lo + hi) / 2
                m = X[:, j] <= thr
                imp = m.mean() * gini(y[m]) + (~m).mean() * gini(y[~m])
                if best is None or (imp, j, thr) < best:
                    best = (imp, j, thr)
        _, j_star, thr_star = best
        for vec, _ in data:
            side = vec.array[j_star] <= thr_star
            lbls = y[X[:, j_star] <= thr_star] if side else y[X[:, j_star] > thr_star]
            vals, counts = np.unique(lbls, return_counts=True)
            want = ClassLabel(int(vals[np.lexsort((vals, -counts))][0]))
            assert predict(model, vec).label is want


class TestRandomForest:
    def test_single_tree_no_subsampling_equals_dt(self, blobs):
        dt = train_decision_tree(blobs, max_depth=4)
        rf = train_random_forest(
            blobs, tree_count=1, max_depth=4, bootstrap=False, feature_subsample=False
        )
        for v, _ in blobs[:20]:
            assert predict(rf, v).posteriors == predict(dt, v).posteriors

    def test_blobs_not_much_worse_than_dt(self, blobs):
        dt = train_decision_tree(blobs)
        rf = train_random_forest(blobs, tree_count=10, seed=3)
        acc = lambda m: sum(predict(m, v).label is l for v, l in blobs) / len(blobs)
        assert acc(rf) >= acc(dt) - 0.02

    def test_duplicated_rows_give_unit_posterior(self):
        data = [(const_vector(5.0), ClassLabel.DoS)] * 10 + [
            (const_vector(-5.0), ClassLabel.Benign)
        ] * 10
        rf = train_random_forest(data, tree_count=5, seed=1)
        p = predict(rf, const_vector(5.0))
        assert p.label is ClassLabel.DoS
        assert p.posteriors[ClassLabel.DoS] == pytest.approx(1.0)

    def test_seeded_training_is_reproducible(self, blobs, tmp_path):
        a = train_random_forest(blobs, tree_count=5, seed=42)
        b = train_random_forest(blobs, tree_count=5, seed=42)
        save_model(a, tmp_path / "a.json")
        save_model(b, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


class TestKnn:
    def exemplars(self):
        return [
            (first_dim_vector(0.0), ClassLabel.Benign),
            (first_dim_vector(1.0), ClassLabel.DoS),
            (first_dim_vector(2.0), ClassLabel.DoS),
            (first_dim_vector(5.0), ClassLabel.PortScan),
        ]

    def test_k1_exact_match(self):
        p = predict_knn(self.exemplars(), 1, first_dim_vector(1.0))
        assert p.label is ClassLabel.DoS
        assert p.posteriors[ClassLabel.DoS] == 1.0

    def test_k_equals_n_gives_global_frequencies(self):
        p = predict_knn(self.exemplars(), 4, first_dim_vector(0.0))
        assert p.posteriors[ClassLabel.DoS] == pytest.approx(0.5)
        assert p.posteriors[ClassLabel.Benign] == pytest.approx(0.25)
        assert p.posteriors[ClassLabel.PortScan] == pytest.approx(0.25)

    def test_k3_hand_placed(self):
        # two DoS at distance 1, one Benign at distance 2, PortScan farther
        exemplars = [
            (first_dim_vector(1.0), ClassLabel.DoS),
            (first_dim_vector(-1.0), ClassLabel.DoS),
            (first_dim_vector(2.0), ClassLabel.Benign),
            (first_dim_vector(9.0), ClassLabel.PortScan),
        ]
        p = predict_knn(exemplars, 3, first_dim_vector(0.0))
        assert p.label is ClassLabel.DoS
        assert p.posteriors[ClassLabel.DoS] == pytest.approx(2 / 3)

    def test_matches_naive_all_pairs_oracle(self):
        rng = np.random.default_rng(11)
        exemplars = [
            (FeatureVector.from_array(rng.normal(0, 1, 12)),
             ClassLabel(int(rng.integers(0, 3))))
            for _ in range(20)
        ]
        model = make_knn(exemplars, k=5)
        for _ in range(25):
            x = rng.normal(0, 1, 12)
            got = predict(model, FeatureVector.from_array(x))
            dists = [
                (float(np.linalg.norm(v.array - x)), i)
                for i, (v, _) in enumerate(exemplars)
            ]
            nearest = sorted(dists)[:5]
            votes = {}
            for _, i in nearest:
                votes[exemplars[i][1]] = votes.get(exemplars[i][1], 0) + 1
            want = max(votes.items(), key=lambda kv: (kv[1], -kv[0].value))[0]
            assert got.label is want


class TestPredictInvariants:
    def test_external_posteriors(self):
        post = {ClassLabel.Benign: 0.3, ClassLabel.DoS: 0.5, ClassLabel.PortScan: 0.2}
        model = make_external("CNN", posterior_source=lambda: post)
        p = predict(model, const_vector(0.0))
        assert p.anomaly_score == pytest.approx(0.7)
        assert p.max_attack_posterior == pytest.approx(0.5)
        assert p.label is ClassLabel.DoS

    def test_all_benign_scores_zero(self):
        model = make_external("x", posterior_source=lambda: {ClassLabel.Benign: 1.0})
        p = predict(model, const_vector(0.0))
        assert p.anomaly_score == 0.0 and p.label is ClassLabel.Benign

    def test_all_attack_scores_one(self):
        model = make_external("x", posterior_source=lambda: {ClassLabel.DoS: 1.0})
        assert predict(model, const_vector(0.0)).anomaly_score == 1.0

    def test_untrained_model_raises(self):
        with pytest.raises(UntrainedModel):
            predict(ClassifierModel(kind=ModelKind.DecisionTree, name="DT"), const_vector(0.0))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_posterior_invariants_hold(self, seed):
        rng = np.random.default_rng(seed)
        raw = rng.dirichlet(np.ones(6))
        post = {lbl: float(p) for lbl, p in zip(ClassLabel, raw) if p > 0}
        model = make_external("x", posterior_source=lambda: post)
        p = predict(model, const_vector(0.0))
        assert abs(sum(p.posteriors.values()) - 1.0) < 1e-9
        assert 0.0 <= p.anomaly_score <= 1.0
        assert p.anomaly_score == pytest.approx(
            1.0 - p.posteriors.get(ClassLabel.Benign, 0.0), abs=1e-12
        )


class TestMarginModel:
    def test_zero_margin_is_half(self):
        m = MarginModel(weights=(1.0,) + (0.0,) * 11, bias=0.0)
        assert score_margin(m, const_vector(0.0)) == 0.5

    def test_ln3_gives_three_quarters(self):
        m = MarginModel(weights=(1.0,) + (0.0,) * 11, bias=0.0)
        x = FeatureVector((math.log(3),) + (0.0,) * 11)
        assert score_margin(m, x) == pytest.approx(0.75)

    def test_monotone_in_margin(self):
        m = MarginModel(weights=(1.0,) + (0.0,) * 11, bias=0.0)
        scores = [
            score_margin(m, FeatureVector((z,) + (0.0,) * 11))
            for z in np.linspace(-5, 5, 41)
        ]
        assert all(a < b for a, b in zip(scores, scores[1:]))
        assert scores[-1] < 1.0


class TestLikelihoodRatioAlert:
    def test_boundary_inclusive(self):
        assert likelihood_ratio_alert({ClassLabel.Benign: 0.5, ClassLabel.DoS: 0.5}, 1.0)

    def test_fully_benign_no_alert(self):
        assert not likelihood_ratio_alert({ClassLabel.Benign: 1.0}, 1.0)

    def test_hand_ratio(self):
        post = {ClassLabel.Benign: 0.2, ClassLabel.DoS: 0.8}
        assert likelihood_ratio_alert(post, 3.0)  # ratio 4
        assert not likelihood_ratio_alert(post, 4.1)


class TestAggregation:
    def test_runtime_log_scores(self):
        s = aggregate_scores([0.91, 0.89, 0.94, 0.96, 0.92, 0.97])
        assert f"{s:.2f}" == "0.93"

    def test_constant(self):
        assert aggregate_scores([0.4] * 5) == pytest.approx(0.4)

    def test_symmetry(self):
        assert aggregate_scores([0.0, 1.0]) == 0.5

    def test_empty_raises(self):
        with pytest.raises(EmptyList):
            aggregate_scores([])

    @given(st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=12))
    def test_permutation_invariant_and_bounded(self, scores):
        s = aggregate_scores(scores)
        assert aggregate_scores(list(reversed(scores))) == pytest.approx(s)
        assert min(scores) - 1e-12 <= s <= max(scores) + 1e-12

    def test_consensus_count(self):
        labels = [ClassLabel.BruteForce] * 6
        assert consensus_count(labels) == (6, ClassLabel.BruteForce)
        mixed = [ClassLabel.DoS, ClassLabel.DoS, ClassLabel.Benign]
        assert consensus_count(mixed) == (2, ClassLabel.DoS)


class TestSerialization:
    def test_round_trip_all_kinds(self, tmp_path, blobs):
        models = [
            train_decision_tree(blobs, max_depth=3),
            train_random_forest(blobs, tree_count=3, seed=0),
            make_knn(blobs, k=3),
        ]
        for m in models:
            path = tmp_path / f"{m.name}.json"
            save_model(m, path)
            loaded = load_model(path)
            for v, _ in blobs[:10]:
                assert predict(loaded, v).posteriors == predict(m, v).posteriors

    def test_header_fields(self, tmp_path, blobs):
        path = tmp_path / "m.json"
        save_model(train_decision_tree(blobs), path)
        doc = json.loads(path.read_text())
        assert doc["format"] == "edgeids-model"
        assert doc["version"] == 1
        assert doc["kind"] == "DecisionTree"
        assert doc["dimension"] == 12

    def test_unknown_format_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "other", "version": 9}')
        with pytest.raises(ValueError):
            load_model(path)


def test_label_text_round_trip():
    assert label_from_text("brute force") is ClassLabel.BruteForce
    assert label_from_text("Benign") is ClassLabel.Benign
    assert label_from_text("nonsense") is None
