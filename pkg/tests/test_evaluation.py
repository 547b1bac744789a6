import numpy as np
import pytest

from skeletor.corruption import CorruptionSpec
from skeletor.datagen import build_corpus
from skeletor.errors import ConfigError
from skeletor.evaluation import EvalReport, evaluate, format_reports, sweep
from skeletor.inference import InferenceConfig

INF = InferenceConfig(window_size=8, radius=1)


class IdentityModel:
    def predict(self, coords, confidence):
        return coords.copy()


@pytest.fixture(scope="module")
def corpus():
    return build_corpus(n_sequences=6, n_frames=30, seed=4)


class TestEvalReport:
    def test_aggregates(self):
        report = EvalReport(
            protocol={}, scope="all_frames", model_id="m",
            per_sequence=[{"id": "a", "mse": 0.1}, {"id": "b", "mse": 0.2}, {"id": "c", "mse": 0.9}],
        )
        assert report.min_mse == pytest.approx(0.1)
        assert report.ave_mse == pytest.approx(0.4)
        assert report.max_mse == pytest.approx(0.9)

    def test_json_contains_aggregates(self):
        report = EvalReport(protocol={"mode": "mask_frames"}, scope="all_frames", model_id="", per_sequence=[{"id": "a", "mse": 1.0}])
        doc = report.to_json()
        assert doc["min"] == doc["ave"] == doc["max"] == 1.0


class TestEvaluate:
    def test_identity_model_zero_corruption_gives_zero(self, corpus):
        spec = CorruptionSpec(mode="mask_frames", p=0.0)
        report = evaluate(IdentityModel(), corpus.test, corpus.tree, spec, INF)
        assert report.max_mse == pytest.approx(0.0, abs=1e-18)

    def test_identity_model_mse_equals_masked_magnitude(self, corpus):
        # Closed-form oracle from the corruption record: with an identity
        # model, the only error is the zeroed ground truth at masked cells.
        from skeletor.corruption import corrupt
        from skeletor.skeleton import normalize

        spec = CorruptionSpec(mode="mask_frames", p=0.15)
        report = evaluate(IdentityModel(), corpus.test, corpus.tree, spec, INF)
        for entry, seq in zip(report.per_sequence, corpus.test):
            normed, _ = normalize(seq, corpus.tree)
            _, record = corrupt(normed, spec, corpus.tree)
            cells = record.cells[:, :, None]
            expected = float(((normed.joints**2) * cells).sum() / normed.joints.size)
            assert entry["mse"] == pytest.approx(expected, rel=1e-9)

    def test_corrupted_only_scope(self, corpus):
        from skeletor.corruption import corrupt
        from skeletor.skeleton import normalize

        spec = CorruptionSpec(mode="mask_frames", p=0.15)
        report = evaluate(IdentityModel(), corpus.test, corpus.tree, spec, INF, scope="corrupted_only")
        normed, _ = normalize(corpus.test[0], corpus.tree)
        _, record = corrupt(normed, spec, corpus.tree)
        cells = record.cells[:, :, None]
        expected = float(((normed.joints**2) * cells).sum() / (cells.sum() * 3))
        assert report.per_sequence[0]["mse"] == pytest.approx(expected, rel=1e-9)

    def test_empty_corpus_rejected(self, corpus):
        with pytest.raises(ConfigError):
            evaluate(IdentityModel(), [], corpus.tree, CorruptionSpec(mode="mask_frames", p=0.1), INF)

    def test_repeat_runs_identical(self, corpus):
        spec = CorruptionSpec(mode="noise_frames", p=0.2, s=0.3, seed=9)
        a = evaluate(IdentityModel(), corpus.test, corpus.tree, spec, INF)
        b = evaluate(IdentityModel(), corpus.test, corpus.tree, spec, INF)
        assert a.per_sequence == b.per_sequence


class TestSweep:
    def test_noise_grid_orders_identity_model_mse(self, corpus):
        # With the identity model the residual is exactly the injected noise,
        # so ave MSE must increase strictly with s.
        base = CorruptionSpec(mode="noise_frames", p=0.15, s=0.1, seed=11)
        reports = sweep("noise_s", [0.1, 0.3, 0.5, 0.7, 0.9], IdentityModel(), corpus.test, corpus.tree, base, INF)
        aves = [r.ave_mse for r in reports]
        assert all(a < b for a, b in zip(aves, aves[1:]))

    def test_empty_grid_gives_empty_reports(self, corpus):
        base = CorruptionSpec(mode="noise_frames", p=0.15, s=0.1, seed=11)
        assert sweep("noise_s", [], IdentityModel(), corpus.test, corpus.tree, base, INF) == []

    def test_repeat_sweeps_identical(self, corpus):
        base = CorruptionSpec(mode="noise_joints", p=0.15, s=0.2, seed=13)
        a = sweep("noise_s", [0.1, 0.5], IdentityModel(), corpus.test, corpus.tree, base, INF)
        b = sweep("noise_s", [0.1, 0.5], IdentityModel(), corpus.test, corpus.tree, base, INF)
        assert [r.per_sequence for r in a] == [r.per_sequence for r in b]

    def test_joint_vs_frame_axis_switches_mode(self, corpus):
        base = CorruptionSpec(mode="noise_frames", p=0.15, s=0.3, seed=17)
        reports = sweep("joint_vs_frame", ["noise_frames", "noise_joints"], IdentityModel(), corpus.test, corpus.tree, base, INF)
        assert [r.protocol["mode"] for r in reports] == ["noise_frames", "noise_joints"]

    def test_train_mask_p_needs_aligned_models(self, corpus):
        base = CorruptionSpec(mode="mask_frames", p=0.15)
        with pytest.raises(ConfigError):
            sweep("train_mask_p", [0.05, 0.10], IdentityModel(), corpus.test, corpus.tree, base, INF)

    def test_unknown_axis_rejected(self, corpus):
        with pytest.raises(ConfigError):
            sweep("gamma", [1], IdentityModel(), corpus.test, corpus.tree, CorruptionSpec(mode="mask_frames", p=0.1), INF)


def test_format_reports_is_aligned_table(corpus):
    base = CorruptionSpec(mode="noise_frames", p=0.15, s=0.1, seed=19)
    reports = sweep("noise_s", [0.1, 0.3], IdentityModel(), corpus.test, corpus.tree, base, INF)
    text = format_reports(reports)
    lines = text.splitlines()
    assert "min" in lines[0] and "ave" in lines[0] and "max" in lines[0]
    assert len(lines) == 4
