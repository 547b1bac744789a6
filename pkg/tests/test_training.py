import numpy as np
import pytest

from skeletor import autodiff as ad
from skeletor.autodiff import Tensor, backward, zero_grads
from skeletor.corruption import CorruptionRecord, CorruptionSpec, corrupt
from skeletor.datagen import Corpus, MotionSpec, build_corpus, generate
from skeletor.errors import ConfigError, ShapeError
from skeletor.model import ModelConfig, SkeletorModel, assemble_input
from skeletor.optim import AdamState, adam_step
from skeletor.skeleton import SkeletonSequence, normalize
from skeletor.training import (
    TrainConfig,
    TrainReport,
    build_dev_windows,
    make_windows,
    mse_loss,
    train,
)

TOY_MODEL = ModelConfig(n_joints=50, d_model=16, n_layers=1, n_heads=2, d_ff=32, window_size=8)


def toy_train_config(**overrides) -> TrainConfig:
    base = dict(
        model=TOY_MODEL,
        window_size=8,
        batch_size=4,
        iterations=10,
        learning_rate=1e-3,
        corruptions=(CorruptionSpec(mode="mask_frames", p=0.10),),
        mix=(1.0,),
        checkpoint_every=5,
        dev_eval_every=5,
        seed=3,
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def tiny_corpus() -> Corpus:
    return build_corpus(n_sequences=8, n_frames=40, seed=2)


class TestMakeWindows:
    def test_count_at_stride_one(self):
        seq = generate(MotionSpec.sample(seed=0, n_frames=5))
        windows = make_windows(seq, 3, 1)
        assert len(windows) == 3
        np.testing.assert_array_equal(windows[1].joints, seq.joints[1:4])

    def test_exact_fit_gives_single_window(self):
        seq = generate(MotionSpec.sample(seed=1, n_frames=3))
        assert len(make_windows(seq, 3, 1)) == 1

    def test_short_sequence_extends_last_frame(self):
        seq = generate(MotionSpec.sample(seed=2, n_frames=2))
        windows = make_windows(seq, 4, 1)
        assert len(windows) == 1
        w = windows[0]
        assert w.n_frames == 4
        np.testing.assert_array_equal(w.joints[2], seq.joints[1])
        np.testing.assert_array_equal(w.joints[3], seq.joints[1])

    def test_stride_skips_starts(self):
        seq = generate(MotionSpec.sample(seed=3, n_frames=10))
        assert len(make_windows(seq, 4, 3)) == 3  # starts 0, 3, 6


class TestMseLoss:
    def test_identical_inputs_give_zero(self):
        x = np.random.default_rng(0).normal(size=(4, 6))
        assert mse_loss(Tensor(x), x).item() == 0.0

    def test_constant_offset_of_two_gives_four(self):
        target = np.zeros((3, 5))
        assert mse_loss(Tensor(target + 2.0), target).item() == pytest.approx(4.0)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(1)
        pred, target = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
        total = 0.0
        for i in range(3):
            for j in range(4):
                total += (pred[i, j] - target[i, j]) ** 2
        assert mse_loss(Tensor(pred), target).item() == pytest.approx(total / 12, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            mse_loss(Tensor(np.zeros((2, 3))), np.zeros((3, 2)))

    def test_corrupted_only_scope_restricts_cells(self):
        t, n = 4, 2
        pred = np.zeros((t, 3 * n))
        target = np.zeros((t, 3 * n))
        target[1, :] = 1.0  # error only on frame 1
        target[3, :] = 5.0  # error on frame 3 too, but outside the record
        cells = np.zeros((t, n), dtype=bool)
        cells[1, :] = True
        record = CorruptionRecord(mode="mask_frames", cells=cells, frame_indices=(1,))
        loss = mse_loss(Tensor(pred), target, record, scope="corrupted_only")
        assert loss.item() == pytest.approx(1.0)

    def test_corrupted_only_requires_record(self):
        with pytest.raises(ConfigError):
            mse_loss(Tensor(np.zeros((2, 6))), np.zeros((2, 6)), None, scope="corrupted_only")

    def test_empty_record_rejected(self):
        record = CorruptionRecord(mode="mask_frames", cells=np.zeros((2, 2), dtype=bool), frame_indices=())
        with pytest.raises(ConfigError):
            mse_loss(Tensor(np.zeros((2, 6))), np.zeros((2, 6)), record, scope="corrupted_only")

    def test_corrupted_only_never_sees_clean_cells(self):
        rng = np.random.default_rng(2)
        pred, target = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
        cells = np.zeros((4, 2), dtype=bool)
        cells[2, 1] = True
        record = CorruptionRecord(mode="mask_joints", cells=cells, frame_indices=(2,))
        loss = mse_loss(Tensor(pred), target, record, scope="corrupted_only")
        manual = ((pred[2, 3:6] - target[2, 3:6]) ** 2).mean()
        assert loss.item() == pytest.approx(manual, abs=1e-12)


class TestConfigValidation:
    def test_rejects_zero_stride(self):
        with pytest.raises(ConfigError):
            toy_train_config(stride=0)

    def test_rejects_mix_length_mismatch(self):
        with pytest.raises(ConfigError):
            toy_train_config(mix=(0.5, 0.5))

    def test_rejects_unknown_scope(self):
        with pytest.raises(ConfigError):
            toy_train_config(loss_scope="masked")

    def test_json_round_trip(self):
        cfg = toy_train_config()
        clone = TrainConfig.from_json(cfg.to_json())
        assert clone == cfg


class TestTrain:
    def test_reproducible_bitwise(self, tiny_corpus):
        m1, r1 = train(tiny_corpus, toy_train_config())
        m2, r2 = train(tiny_corpus, toy_train_config())
        for name in m1.params:
            np.testing.assert_array_equal(m1.params[name].data, m2.params[name].data)
        assert r1.checkpoints == r2.checkpoints

    def test_dev_mse_recorded_at_cadence(self, tiny_corpus):
        _, report = train(tiny_corpus, toy_train_config())
        assert [c["iteration"] for c in report.checkpoints] == [0, 5, 10]

    def test_loss_decreases_on_toy_corpus(self, tiny_corpus):
        _, report = train(tiny_corpus, toy_train_config(iterations=300, dev_eval_every=300))
        assert report.checkpoints[-1]["dev_mse"] < report.checkpoints[0]["dev_mse"]

    def test_checkpoint_files_written(self, tiny_corpus, tmp_path):
        out = tmp_path / "model.ckpt"
        train(tiny_corpus, toy_train_config(), checkpoint_path=out)
        assert out.exists()
        assert (tmp_path / "model-000005.ckpt").exists()
        assert (tmp_path / "model-000010.ckpt").exists()

    def test_final_test_aggregates_present(self, tiny_corpus):
        _, report = train(tiny_corpus, toy_train_config())
        assert report.final_test is not None
        assert report.final_test["min"] <= report.final_test["ave"] <= report.final_test["max"]

    def test_report_json_has_no_wall_time(self, tiny_corpus):
        _, report = train(tiny_corpus, toy_train_config())
        assert report.wall_time_s > 0
        assert "wall_time_s" not in report.to_json()

    def test_empty_corpus_rejected(self, tiny_corpus):
        empty = Corpus(tree=tiny_corpus.tree, train=[], dev=list(tiny_corpus.dev), test=[])
        with pytest.raises(ConfigError):
            train(empty, toy_train_config())

    def test_single_adam_step_decreases_batch_loss(self, tiny_corpus):
        # One step on one fixed batch, learning rate 1e-5.
        tree = tiny_corpus.tree
        model = SkeletorModel.init(TOY_MODEL, np.random.default_rng(0))
        normed, _ = normalize(tiny_corpus.train[0], tree)
        window = SkeletonSequence(normed.joints[:8].copy(), normed.confidence[:8].copy())
        corrupted, _ = corrupt(window, CorruptionSpec(mode="mask_frames", p=0.15), tree)
        x = assemble_input(corrupted.joints.reshape(8, -1), corrupted.confidence, TOY_MODEL)
        target = window.joints.reshape(8, -1)

        def batch_loss() -> float:
            return mse_loss(model.forward(x), target).item()

        before = batch_loss()
        loss = mse_loss(model.forward(x), target)
        backward(loss)
        adam_step(AdamState(learning_rate=1e-5), model.params, {k: p.grad for k, p in model.params.items()})
        zero_grads(model.params.values())
        assert batch_loss() < before


class TestDevWindows:
    def test_dev_protocol_masks_fifteen_percent(self, tiny_corpus):
        coords, confs, targets = build_dev_windows(tiny_corpus.dev, tiny_corpus.tree, 8)
        assert coords.shape[1:] == (8, 150)
        assert confs.shape[1:] == (8, 50)
        # Some cells must be masked (conf 0), and the targets keep them.
        assert (confs == 0.0).any()
        assert coords.shape[0] == targets.shape[0]

    def test_dev_windows_deterministic(self, tiny_corpus):
        a = build_dev_windows(tiny_corpus.dev, tiny_corpus.tree, 8)
        b = build_dev_windows(tiny_corpus.dev, tiny_corpus.tree, 8)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)
