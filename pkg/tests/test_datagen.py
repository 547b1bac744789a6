import numpy as np
import pytest

from skeletor.datagen import Corpus, MotionSpec, build_corpus, generate, project_orthographic
from skeletor.errors import ConfigError
from skeletor.skeleton import default_tree


def spec_for(seed=0, **kw):
    return MotionSpec.sample(seed=seed, **kw)


class TestGenerate:
    def test_zero_amplitudes_give_static_pose(self):
        spec = spec_for(n_frames=10)
        spec.amplitudes[:] = 0.0
        seq = generate(spec)
        for t in range(1, 10):
            np.testing.assert_array_equal(seq.joints[t], seq.joints[0])

    def test_bone_lengths_exact_every_frame(self):
        spec = spec_for(seed=3, n_frames=40)
        seq = generate(spec)
        tree = spec.tree
        for t in (0, 17, 39):
            for j in range(tree.n_joints):
                if j == tree.root:
                    continue
                d = np.linalg.norm(seq.joints[t, j] - seq.joints[t, tree.parents[j]])
                assert abs(d - spec.bone_lengths[j]) < 1e-9

    def test_same_seed_identical(self):
        a = generate(spec_for(seed=11, n_frames=20))
        b = generate(spec_for(seed=11, n_frames=20))
        np.testing.assert_array_equal(a.joints, b.joints)
        np.testing.assert_array_equal(a.confidence, b.confidence)

    def test_confidences_default_to_one(self):
        seq = generate(spec_for(seed=1, n_frames=5))
        np.testing.assert_array_equal(seq.confidence, 1.0)

    def test_confidence_variation_stays_in_bounds(self):
        seq = generate(spec_for(seed=2, n_frames=50, confidence_variation=0.4))
        assert seq.confidence.min() >= 0.6 - 1e-9
        assert seq.confidence.max() <= 1.0

    def test_motion_is_smooth(self):
        spec = spec_for(seed=4, n_frames=60)
        seq = generate(spec)
        step = np.linalg.norm(np.diff(seq.joints, axis=0), axis=2).max()
        assert step < 0.5 * spec.bone_lengths[1:].min()

    def test_violent_spec_rejected(self):
        spec = spec_for(seed=5, n_frames=30)
        spec.frequencies[:] = 8.0
        spec.amplitudes[:] = 1.5
        with pytest.raises(ConfigError):
            generate(spec)

    def test_planar_spec_keeps_z_zero(self):
        seq = generate(spec_for(seed=6, n_frames=20, planar=True))
        np.testing.assert_array_equal(seq.joints[:, :, 2], 0.0)


class TestProjection:
    def test_planar_projection_equals_xy(self):
        seq = generate(spec_for(seed=7, n_frames=10, planar=True))
        flat = project_orthographic(seq)
        np.testing.assert_array_equal(flat.points, seq.joints[:, :, :2])

    def test_depth_translation_invisible(self):
        seq = generate(spec_for(seed=8, n_frames=10))
        moved = seq.copy()
        moved.joints[:, :, 2] += 7.5
        np.testing.assert_array_equal(project_orthographic(moved).points, project_orthographic(seq).points)

    def test_confidences_carry_over(self):
        seq = generate(spec_for(seed=9, n_frames=10, confidence_variation=0.3))
        np.testing.assert_array_equal(project_orthographic(seq).confidence, seq.confidence)


class TestCorpus:
    def test_splits_disjoint_and_deterministic(self):
        a = build_corpus(n_sequences=20, n_frames=30, seed=5)
        b = build_corpus(n_sequences=20, n_frames=30, seed=5)
        assert a.splits == b.splits
        ids = [s.id for s in a.train + a.dev + a.test]
        assert len(ids) == len(set(ids)) == 20
        np.testing.assert_array_equal(a.train[0].joints, b.train[0].joints)

    def test_split_sizes_follow_fractions(self):
        corpus = build_corpus(n_sequences=20, n_frames=30, seed=6)
        assert len(corpus.train) == 14
        assert len(corpus.dev) == 3
        assert len(corpus.test) == 3

    def test_different_seed_changes_assignment(self):
        a = build_corpus(n_sequences=20, n_frames=30, seed=7)
        b = build_corpus(n_sequences=20, n_frames=30, seed=8)
        assert any(np.abs(x.joints - y.joints).max() > 1e-9 for x, y in zip(a.train, b.train))

    def test_too_few_sequences_rejected(self):
        with pytest.raises(ConfigError):
            build_corpus(n_sequences=2, n_frames=10, seed=0)


def test_default_tree_round_trip_through_spec():
    spec = spec_for(seed=10, n_frames=4)
    assert spec.tree.n_joints == default_tree().n_joints == 50
