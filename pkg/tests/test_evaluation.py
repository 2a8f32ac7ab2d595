import math

import numpy as np
import pytest

from modgap.alignment import make_aligned_fixture, ssp
from modgap.evaluation import (
    LabeledEmbeddings,
    LabelMismatch,
    cross_modal_retrieve,
    target_ranks,
    zero_shot_classify,
)
from modgap.geometry import DimensionMismatch, PairedConfig, normalize_rows, random_rotation
from modgap.vmf import VmfParams, sample


def brute_force_topk(queries, keys, targets, k):
    """Sort every key list explicitly with (-similarity, index) as the key."""
    hits = 0
    for q, t in zip(queries, targets):
        sims = [float(q @ key) for key in keys]
        order = sorted(range(len(keys)), key=lambda j: (-sims[j], j))
        hits += t in order[:k]
    return hits / len(targets)


def random_unit(n, h, seed):
    return normalize_rows(np.random.default_rng(seed).standard_normal((n, h))).data


class TestLabeledEmbeddings:
    def test_mismatch(self):
        with pytest.raises(LabelMismatch):
            LabeledEmbeddings(np.eye(3), np.array([0, 1]))
        with pytest.raises(LabelMismatch):
            LabeledEmbeddings(np.eye(3), np.array([0, -1, 2]))
        with pytest.raises(LabelMismatch):
            LabeledEmbeddings(np.eye(3), np.array([0.0, 1.0, 2.0]))


class TestClassify:
    def test_identity_classes(self):
        res = zero_shot_classify(LabeledEmbeddings(np.eye(5), np.arange(5)), np.eye(5))
        assert res.r_at == {1: 1.0, 5: 1.0}
        assert res.direction == "classify"

    def test_all_ties_pick_class_zero(self):
        e = np.eye(6)
        images = np.tile(e[5], (8, 1))
        labels = np.array([0, 1, 0, 2, 3, 0, 4, 1])
        res = zero_shot_classify(LabeledEmbeddings(images, labels), e[:5], cutoffs=(1, 2))
        assert res.r_at[1] == np.mean(labels == 0)
        assert res.r_at[2] == np.mean(labels <= 1)

    def test_brute_force(self):
        images = random_unit(100, 8, 0)
        classes = random_unit(10, 8, 1)
        labels = np.random.default_rng(2).integers(0, 10, size=100)
        res = zero_shot_classify(LabeledEmbeddings(images, labels), classes, cutoffs=(1, 3, 5))
        for k in (1, 3, 5):
            assert res.r_at[k] == brute_force_topk(images, classes, labels, k)

    def test_errors(self):
        with pytest.raises(DimensionMismatch):
            zero_shot_classify(LabeledEmbeddings(np.eye(3), np.arange(3)), np.eye(4))
        with pytest.raises(LabelMismatch):
            zero_shot_classify(LabeledEmbeddings(np.eye(3), np.array([0, 1, 3])), np.eye(3))


class TestRetrieve:
    def test_identical(self):
        x = random_unit(30, 6, 3)
        i2t, t2i = cross_modal_retrieve(PairedConfig.from_arrays(x, x))
        assert i2t.r_at == t2i.r_at == {1: 1.0, 5: 1.0, 10: 1.0}
        assert (i2t.direction, t2i.direction) == ("img2txt", "txt2img")

    def test_brute_force(self):
        x = random_unit(120, 5, 4)
        y = normalize_rows(x + 0.8 * np.random.default_rng(5).standard_normal(x.shape)).data
        i2t, t2i = cross_modal_retrieve(PairedConfig.from_arrays(x, y))
        idx = np.arange(120)
        for k in (1, 5, 10):
            assert i2t.r_at[k] == brute_force_topk(x, y, idx, k)
            assert t2i.r_at[k] == brute_force_topk(y, x, idx, k)

    def test_monotone_and_rotation_invariant(self):
        x = random_unit(200, 6, 6)
        y = normalize_rows(x + np.random.default_rng(7).standard_normal(x.shape)).data
        cfg = PairedConfig.from_arrays(x, y)
        q = random_rotation(6, np.random.default_rng(8))
        rot = PairedConfig.from_arrays(x @ q.T, y @ q.T)
        for a, b in zip(cross_modal_retrieve(cfg), cross_modal_retrieve(rot)):
            vals = [a.r_at[k] for k in (1, 5, 10)]
            assert vals == sorted(vals)
            assert a.r_at == b.r_at

    def test_cutoff_omitted(self):
        x = random_unit(4, 3, 9)
        i2t, t2i = cross_modal_retrieve(PairedConfig.from_arrays(x, x))
        assert set(i2t.r_at) == {1}
        assert any("5" in n for n in i2t.notes) and any("10" in n for n in t2i.notes)
        assert i2t.to_dict()["r_at"] == {"1": 1.0}

    def test_fixture_before_and_after_ssp(self):
        cfg, _ = make_aligned_fixture(8, math.radians(60), 500, kappa=10.0, seed=1)
        before, _ = cross_modal_retrieve(cfg, (1,))
        out, _ = ssp(cfg)
        after, back = cross_modal_retrieve(out, (1,))
        assert before.r_at[1] < 1.0
        assert after.r_at[1] == 1.0 and back.r_at[1] == 1.0


class TestTargetRanks:
    def test_tie_break(self):
        keys = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        q = np.array([[1.0, 0.0], [1.0, 0.0]])
        np.testing.assert_array_equal(target_ranks(q, keys, np.array([0, 1])), [0, 1])

    def test_large_blocked(self):
        x = sample(VmfParams(np.eye(4)[0], 0.5), 2500, seed=0).data
        ranks = target_ranks(x, x, np.arange(2500))
        assert np.all(ranks == 0)
