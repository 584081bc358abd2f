from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from radcompat.model import RoiMask
from radcompat.phantom import PhantomSpec, UniformTexture, generate_phantom
from radcompat.volumetry import (
    NormalizedVolumeSeries,
    P_MODEL_STUDENT,
    VolumeSeries,
    is_compatible,
    measure_volume,
    normalize_series,
    p_from_t,
    t_statistic,
    thickness_p_matrix,
    volume_trend_report,
    welch_df,
)


class TestMeasureVolume:
    def test_unit_spacing_counts(self):
        bits = np.zeros((2, 2, 2), dtype=bool)
        bits[:] = True
        assert measure_volume(RoiMask((2, 2, 2), bits), (1.0, 1.0, 1.0)) == 8.0

    def test_anisotropic_spacing(self):
        bits = np.zeros((1, 2, 5), dtype=bool)
        bits[0, :, :] = True  # 10 voxels
        assert measure_volume(RoiMask((5, 2, 1), bits), (0.5, 0.5, 2.0)) == 5.0

    def test_sphere_phantom_volume(self):
        spec = PhantomSpec(
            radii_mm=(5.0,) * 3, base_spacing=(0.5,) * 3, dims=(49,) * 3, texture=UniformTexture()
        )
        _, mask = generate_phantom(spec)
        vol = measure_volume(mask, spec.base_spacing)
        analytic = 4.0 / 3.0 * math.pi * 125.0
        assert abs(vol - analytic) / analytic < 0.02

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            measure_volume(RoiMask((2, 2, 2), np.zeros((2, 2, 2), bool)), (1, 1, 1))

    def test_additive_over_disjoint_masks(self):
        rng = np.random.default_rng(0)
        a = rng.random((4, 4, 4)) < 0.4
        a[0, 0, 0] = True
        b = (~a) & (rng.random((4, 4, 4)) < 0.4)
        b[1, 1, 1] = not a[1, 1, 1]
        spacing = (0.7, 1.1, 1.3)
        va = measure_volume(RoiMask((4, 4, 4), a), spacing)
        vb = measure_volume(RoiMask((4, 4, 4), b), spacing)
        vab = measure_volume(RoiMask((4, 4, 4), a | b), spacing)
        assert abs(vab - (va + vb)) < 1e-9


class TestNormalizeSeries:
    def test_equal_entries_map_to_one(self):
        s = VolumeSeries("c", {t: 7.0 for t in (1.0, 2.0, 3.0)})
        n = normalize_series(s)
        assert all(v == 1.0 for v in n.entries.values())

    def test_two_entry_series(self):
        n = normalize_series(VolumeSeries("c", {1.0: 1.0, 2.0: 3.0}))
        assert n.entries[1.0] == 0.5
        assert n.entries[2.0] == 1.5

    def test_one_to_eight(self):
        entries = {float(t): float(t) for t in range(1, 9)}
        n = normalize_series(VolumeSeries("c", entries))
        assert abs(n.entries[1.0] - 1.0 / 4.5) < 1e-15

    def test_mean_is_one(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            k = rng.integers(2, 10)
            entries = {float(i): float(v) for i, v in enumerate(rng.uniform(0.01, 1000, size=k))}
            n = normalize_series(VolumeSeries("c", entries))
            assert abs(np.mean(list(n.entries.values())) - 1.0) < 1e-12

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError, match="> 0"):
            VolumeSeries("c", {1.0: 0.0, 2.0: 1.0})

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(1e-6, 1e9), min_size=2, max_size=12))
    def test_mean_is_one_property(self, volumes):
        entries = {float(i): v for i, v in enumerate(volumes)}
        n = normalize_series(VolumeSeries("c", entries))
        assert abs(sum(n.entries.values()) / len(volumes) - 1.0) < 1e-12


class TestTStatistic:
    def test_equal_means_zero(self):
        assert t_statistic(5.0, 1.0, 10, 5.0, 2.0, 12) == 0.0

    def test_hand_value(self):
        t = t_statistic(0.0, 1.0, 23, 1.0, 1.0, 23)
        assert abs(t - math.sqrt(11.5)) < 1e-12  # 3.3911649915626343

    def test_degenerate_zero_spread(self):
        assert t_statistic(1.0, 0.0, 5, 1.0, 0.0, 5) == 0.0
        assert t_statistic(1.0, 0.0, 5, 2.0, 0.0, 5) == math.inf

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            m1, m2 = rng.normal(size=2)
            s1, s2 = rng.uniform(0.1, 3, size=2)
            n1, n2 = rng.integers(2, 40, size=2)
            assert t_statistic(m1, s1, n1, m2, s2, n2) == t_statistic(m2, s2, n2, m1, s1, n1)

    def test_small_n_rejected(self):
        with pytest.raises(ValueError):
            t_statistic(0, 1, 1, 0, 1, 5)


class TestCompatibilityThreshold:
    def test_zero_compatible(self):
        assert is_compatible(0.0)

    def test_threshold_is_strict(self):
        assert not is_compatible(1.96)
        assert is_compatible(1.9599999999)

    def test_large_t_incompatible(self):
        assert not is_compatible(3.3912)
        assert not is_compatible(math.inf)

    def test_custom_threshold(self):
        assert is_compatible(2.5, threshold=3.0)


class TestPValues:
    def test_normal_tail_against_scipy(self):
        for t in (0.0, 0.5, 1.96, 3.3911649915626343):
            assert abs(p_from_t(t) - 2 * stats.norm.sf(t)) < 1e-14

    def test_student_model(self):
        df = welch_df(1.0, 23, 1.0, 23)
        assert abs(df - 44.0) < 1e-9
        t = math.sqrt(11.5)
        assert abs(p_from_t(t, df=df, model=P_MODEL_STUDENT) - 2 * stats.t.sf(t, 44.0)) < 1e-14

    def test_infinite_t(self):
        assert p_from_t(math.inf) == 0.0


class TestThicknessPMatrix:
    def _cohort(self, rng, n=23, sd=0.02):
        thicknesses = (5.0, 2.0, 1.0)
        cohort = []
        for i in range(n):
            entries = {5.0: 1.0 + rng.normal(0, sd), 2.0: 1.0 + rng.normal(0, sd), 1.0: 1.02 + rng.normal(0, sd)}
            cohort.append(NormalizedVolumeSeries(f"c{i}", entries))
        return cohort

    def test_diagonal_and_symmetry(self):
        cohort = self._cohort(np.random.default_rng(3))
        thicknesses, p = thickness_p_matrix(cohort)
        assert thicknesses == (5.0, 2.0, 1.0)
        assert np.array_equal(np.diag(p), np.ones(3))
        assert np.array_equal(p, p.T)

    def test_identical_distributions_p_one(self):
        cohort = [NormalizedVolumeSeries(f"c{i}", {1.0: 1.0, 2.0: 1.0}) for i in range(5)]
        _, p = thickness_p_matrix(cohort)
        assert p[0, 1] == 1.0

    def test_hand_computed_cell(self):
        # cohort means 1.0 vs 1.02, both SDs 0.02, n = 23 -> t ~ 3.39, p ~ 0.0007
        n = 23
        base = np.linspace(-1, 1, n)
        vals = base * 0.02 / np.std(base, ddof=1)
        cohort = [
            NormalizedVolumeSeries(f"c{i}", {2.0: 1.0 + vals[i], 1.0: 1.02 + vals[i]})
            for i in range(n)
        ]
        _, p = thickness_p_matrix(cohort)
        t = t_statistic(1.0, 0.02, n, 1.02, 0.02, n)
        assert abs(t - math.sqrt(11.5)) < 1e-9
        assert abs(p[0, 1] - 0.0007) < 5e-5
        assert not is_compatible(t)

    def test_mismatched_thickness_sets(self):
        cohort = [
            NormalizedVolumeSeries("a", {1.0: 1.0, 2.0: 1.0}),
            NormalizedVolumeSeries("b", {1.0: 1.0, 3.0: 1.0}),
        ]
        with pytest.raises(ValueError, match="thicknesses"):
            thickness_p_matrix(cohort)


class TestVolumeTrend:
    def test_all_ones_cohort(self):
        cohort = [
            NormalizedVolumeSeries(f"c{i}", {t: 1.0 for t in (1.0, 2.0, 5.0)}) for i in range(4)
        ]
        rows = volume_trend_report(cohort)
        assert [r[0] for r in rows] == [5.0, 2.0, 1.0]
        for _, mean_pct, sd_pct in rows:
            assert mean_pct == 0.0
            assert sd_pct == 0.0

    def test_percent_scale(self):
        cohort = [
            NormalizedVolumeSeries("a", {1.0: 1.05, 2.0: 0.95}),
            NormalizedVolumeSeries("b", {1.0: 1.03, 2.0: 0.97}),
        ]
        rows = volume_trend_report(cohort)
        by_t = {r[0]: r for r in rows}
        assert abs(by_t[1.0][1] - 4.0) < 1e-9  # mean of +5%, +3%
        assert abs(by_t[1.0][2] - np.std([5.0, 3.0], ddof=1)) < 1e-9
