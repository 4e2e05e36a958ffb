import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxforge.filtering import (
    FAIL,
    PASS,
    EmptyMaskError,
    FilterConfig,
    binary_dice,
    quality_report,
    quality_test,
    sample_weight,
    segmented_fraction,
)
from voxforge.synthesis import SyntheticSample, UNFILTERED
from voxforge.volume import TUMOR, LabelMask, Volume


class StubSegmentor:
    """Segmentor stand-in returning a fixed probability map."""

    role = "segmentor"

    def __init__(self, prob: np.ndarray):
        self.prob = prob.astype(np.float32)

    def __call__(self, x):
        from voxforge.nn import Tensor

        return Tensor(self.prob[None])


def make_sample(fraction, dims=(4, 4, 4), case_id="s", mask_voxels=4):
    rng = np.random.default_rng(hash(case_id) % 2**32)
    original = Volume(rng.random(dims, dtype=np.float32))
    synthetic = Volume(rng.random(dims, dtype=np.float32))
    m = np.zeros(dims, dtype=np.uint8)
    flat = m.reshape(-1)
    flat[:mask_voxels] = TUMOR
    return SyntheticSample(case_id, original, LabelMask(m), synthetic, fraction, UNFILTERED, 0)


class TestSegmentedFraction:
    def test_full_and_zero_agreement(self):
        dims = (6, 6, 6)
        m = np.zeros(dims, dtype=np.uint8)
        m[2:4, 2:4, 2:4] = TUMOR
        mask = LabelMask(m)
        vol = Volume(np.full(dims, 0.5, dtype=np.float32))
        assert segmented_fraction(StubSegmentor(np.ones(dims)), vol, mask) == 1.0
        assert segmented_fraction(StubSegmentor(np.zeros(dims)), vol, mask) == 0.0

    def test_partial_count(self):
        # 8 mask voxels, 6 above cutoff -> 0.75
        dims = (2, 2, 2)
        mask = LabelMask(np.full(dims, TUMOR, dtype=np.uint8))
        prob = np.array([0.9, 0.8, 0.7, 0.6, 0.55, 0.5, 0.4, 0.1]).reshape(dims)
        vol = Volume(np.full(dims, 0.5, dtype=np.float32))
        assert segmented_fraction(StubSegmentor(prob), vol, mask, cutoff=0.5) == 0.75

    def test_empty_mask_raises(self):
        dims = (3, 3, 3)
        vol = Volume(np.zeros(dims, dtype=np.float32))
        with pytest.raises(EmptyMaskError):
            segmented_fraction(StubSegmentor(np.ones(dims)), vol, LabelMask(np.zeros(dims, dtype=np.uint8)))

    @given(st.integers(0, 10**6))
    @settings(max_examples=30, deadline=None)
    def test_matches_brute_force_double_loop(self, seed):
        rng = np.random.default_rng(seed)
        dims = tuple(rng.integers(2, 9, size=3))
        prob = rng.random(dims)
        m = (rng.random(dims) < 0.3).astype(np.uint8) * TUMOR
        if not m.any():
            m.reshape(-1)[0] = TUMOR
        vol = Volume(np.full(dims, 0.5, dtype=np.float32))
        got = segmented_fraction(StubSegmentor(prob), vol, LabelMask(m), cutoff=0.5)
        hits = total = 0
        for x in range(dims[0]):
            for y in range(dims[1]):
                for z in range(dims[2]):
                    if m[x, y, z] == TUMOR:
                        total += 1
                        if prob[x, y, z] >= 0.5:
                            hits += 1
        assert got == hits / total


class TestQualityTest:
    def test_boundary_inclusive(self):
        cfg = FilterConfig(threshold=0.7)
        verdict, vol = quality_test(make_sample(0.7), cfg)
        assert verdict == PASS

    def test_below_threshold_fails_with_original(self):
        cfg = FilterConfig(threshold=0.7)
        s = make_sample(0.69)
        verdict, vol = quality_test(s, cfg)
        assert verdict == FAIL
        assert vol.data.tobytes() == s.original.data.tobytes()

    def test_pass_returns_synthetic_bit_identical(self):
        s = make_sample(0.9)
        verdict, vol = quality_test(s, FilterConfig(threshold=0.7))
        assert verdict == PASS
        assert vol.data.tobytes() == s.synthetic.data.tobytes()

    def test_zero_threshold_accepts_everything(self):
        cfg = FilterConfig(threshold=0.0)
        for f in (0.0, 0.2, 1.0):
            assert quality_test(make_sample(f), cfg)[0] == PASS

    def test_off_mode_accepts_everything(self):
        cfg = FilterConfig(mode="off")
        assert quality_test(make_sample(0.0), cfg)[0] == PASS

    def test_adaptive_mode_keeps_volume_and_weights(self):
        cfg = FilterConfig(mode="adaptive")
        s = make_sample(0.4)
        verdict, vol = quality_test(s, cfg)
        assert verdict == PASS
        assert vol.data.tobytes() == s.synthetic.data.tobytes()
        assert sample_weight(s, cfg) == 0.4
        assert sample_weight(s, FilterConfig()) == 1.0

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            FilterConfig(mode="sometimes")
        with pytest.raises(ValueError):
            FilterConfig(threshold=1.5)


class TestMonotonicity:
    @given(st.integers(0, 10**6))
    @settings(max_examples=20, deadline=None)
    def test_accepted_sets_nest_across_thresholds(self, seed):
        rng = np.random.default_rng(seed)
        pool = [make_sample(float(f), case_id=f"s{i}") for i, f in enumerate(rng.random(40))]
        accepted = {}
        for t in (0.0, 0.5, 0.7, 0.9):
            cfg = FilterConfig(threshold=t)
            accepted[t] = {s.case_id for s in pool if quality_test(s, cfg)[0] == PASS}
        assert accepted[0.9] <= accepted[0.7] <= accepted[0.5] <= accepted[0.0]

    @given(st.integers(0, 10**6))
    @settings(max_examples=20, deadline=None)
    def test_accepted_mean_fraction_at_least_threshold(self, seed):
        rng = np.random.default_rng(seed)
        pool = [make_sample(float(f), case_id=f"s{i}") for i, f in enumerate(rng.random(30))]
        for t in (0.3, 0.7, 0.9):
            cfg = FilterConfig(threshold=t)
            fr = [s.fraction for s in pool if quality_test(s, cfg)[0] == PASS]
            if fr:
                assert np.mean(fr) >= t


class TestBinaryDice:
    def test_formula_cases(self):
        a = np.zeros((4, 4, 4), dtype=bool)
        b = np.zeros((4, 4, 4), dtype=bool)
        assert binary_dice(a, b) == 1.0
        a[0, 0, 0] = True
        assert binary_dice(a, b) == 0.0
        # |A| = 4, |B| = 4, |A n B| = 2 -> 0.5
        a[:] = False
        a.reshape(-1)[:4] = True
        b.reshape(-1)[2:6] = True
        assert binary_dice(a, b) == 0.5


class TestQualityReport:
    def _pool_and_segmentor(self):
        rng = np.random.default_rng(0)
        dims = (6, 6, 6)
        samples = []
        prob = rng.random(dims)
        for i, f in enumerate(np.linspace(0.0, 1.0, 12)):
            samples.append(make_sample(float(f), dims=dims, case_id=f"c{i}", mask_voxels=6))
        return samples, StubSegmentor(prob)

    def test_all_pass_means_equal(self):
        samples, seg = self._pool_and_segmentor()
        rep = quality_report(samples, seg, FilterConfig(threshold=0.0))
        assert rep["acceptance_rate"] == 1.0
        assert rep["mean_fraction_accepted"] == pytest.approx(rep["mean_fraction_all"])
        assert rep["mean_dice_accepted"] == pytest.approx(rep["mean_dice_all"])

    def test_mixed_verdicts_condition_the_mean(self):
        samples, seg = self._pool_and_segmentor()
        rep = quality_report(samples, seg, FilterConfig(threshold=0.7))
        assert 0 < rep["accepted"] < rep["samples"]
        assert rep["mean_fraction_accepted"] >= rep["mean_fraction_all"]

    def test_threshold_sweep_acceptance_non_increasing(self):
        samples, seg = self._pool_and_segmentor()
        rates = []
        for t in (0.0, 0.5, 0.7, 0.9):
            rep = quality_report(samples, seg, FilterConfig(threshold=t))
            # recount independently from the per-sample rows
            recount = sum(1 for r in rep["per_sample"] if r["fraction"] >= t) / len(samples)
            assert rep["acceptance_rate"] == pytest.approx(recount)
            rates.append(rep["acceptance_rate"])
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_empty_pool_rejected(self):
        with pytest.raises(ValueError):
            quality_report([], StubSegmentor(np.ones((2, 2, 2))), FilterConfig())
