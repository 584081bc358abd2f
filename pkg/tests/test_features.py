from __future__ import annotations

import math

import numpy as np
import pytest

from oracle import oracle_feature_vector
from radcompat.features import (
    DIRECTIONS_2D,
    DIRECTIONS_3D,
    FEATURE_COUNT,
    FEATURE_NAMES,
    DegenerateRoiError,
    FeatureConfig,
    build_glcm,
    build_ngldm,
    build_ngtdm,
    build_rlm,
    compute_feature_vector,
    extract_feature_sample,
    glcm_features,
    histogram_features,
    ngldm_features,
    ngtdm_features,
    quantize_array,
    rlm_features,
)
from radcompat.model import RoiMask, ScalarVolume


def _q(levels_2d, ng):
    """QuantizedRoi from an explicit single-slice level map; 0 = outside ROI."""
    arr = np.asarray(levels_2d, dtype=np.int32)[None, :, :]
    mask = arr > 0
    from radcompat.features import QuantizedRoi

    return QuantizedRoi(levels=arr, mask=mask, ng=ng, source_range=(0.0, 1.0))


def random_roi(rng, max_dim=8, max_ng=8, ints=True):
    """Random ROI guaranteed to have a co-occurring pair."""
    while True:
        shape = tuple(int(v) for v in rng.integers(2, max_dim + 1, size=3))
        mask = rng.random(shape) < 0.6
        mask[0, 0, 0] = mask[0, 0, 1 % shape[2]] = True
        if mask.sum() < 4:
            continue
        if ints:
            values = rng.integers(-1000, 1000, size=shape).astype(np.float64)
        else:
            values = rng.normal(0, 100, size=shape)
        ng = int(rng.integers(2, max_ng + 1))
        return values, mask, ng


class TestQuantize:
    def test_binning_formula(self):
        values = np.array([[[0.0, 1.0, 2.0, 3.0]]])
        mask = np.ones((1, 1, 4), dtype=bool)
        q = quantize_array(values, mask, 2)
        assert q.levels[0, 0].tolist() == [1, 1, 2, 2]

    def test_constant_roi_single_level(self):
        q = quantize_array(np.full((1, 2, 2), 5.0), np.ones((1, 2, 2), bool), 8)
        assert set(q.levels[q.mask].tolist()) == {1}

    def test_max_maps_to_ng(self):
        values = np.array([[[0.0, 10.0]]])
        q = quantize_array(values, np.ones((1, 1, 2), bool), 4)
        assert q.levels[0, 0, 1] == 4

    def test_empty_roi(self):
        with pytest.raises(ValueError, match="empty"):
            quantize_array(np.zeros((1, 2, 2)), np.zeros((1, 2, 2), bool), 4)

    def test_levels_in_range(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            values, mask, ng = random_roi(rng, ints=False)
            q = quantize_array(values, mask, ng)
            inside = q.levels[q.mask]
            assert inside.min() >= 1
            assert inside.max() <= ng
            assert np.all(q.levels[~q.mask] == 0)


class TestHistogram:
    def test_printed_formulas_on_1234(self):
        out = histogram_features(np.array([1.0, 2.0, 3.0, 4.0]))
        assert out[0] == 2.5
        assert abs(out[1] - math.sqrt(1.25)) < 1e-15
        assert abs(out[2] - math.sqrt(5.0 / 3.0)) < 1e-15
        assert out[3] == 0.0
        assert abs(out[4] - 0.9225) < 1e-15

    def test_constant_input(self):
        out = histogram_features(np.full(6, 3.25))
        assert out.tolist() == [3.25, 0.0, 0.0, 0.0, 0.0]

    def test_translation_behavior(self):
        rng = np.random.default_rng(1)
        x = rng.normal(0, 10, size=50)
        a = histogram_features(x)
        b = histogram_features(x + 100.0)
        assert abs(b[0] - (a[0] + 100.0)) < 1e-9
        assert np.allclose(a[1:], b[1:], atol=1e-9)

    def test_too_few_voxels(self):
        with pytest.raises(ValueError):
            histogram_features(np.array([1.0]))


class TestGlcm:
    def test_two_voxel_roi(self):
        q = _q([[1, 2]], 2)
        p = build_glcm(q, DIRECTIONS_3D)
        assert p[0, 1] == 0.5
        assert p[1, 0] == 0.5
        assert p[0, 0] == 0.0 and p[1, 1] == 0.0

    def test_constant_roi(self):
        q = _q([[1, 1], [1, 1]], 2)
        p = build_glcm(q, DIRECTIONS_3D)
        assert p[0, 0] == 1.0

    def test_checkerboard_axis_directions(self):
        q = _q([[1, 2], [2, 1]], 2)
        p = build_glcm(q, [(0, 0, 1), (0, 1, 0)])
        assert p[0, 1] + p[1, 0] == 1.0
        assert p[0, 0] == 0.0 and p[1, 1] == 0.0

    def test_single_voxel_degenerate(self):
        q = _q([[1]], 2)
        with pytest.raises(DegenerateRoiError):
            build_glcm(q, DIRECTIONS_3D)

    def test_features_single_cell(self):
        p = np.zeros((2, 2))
        p[0, 0] = 1.0
        out = glcm_features(p)
        by = dict(zip(["asm", "contrast", "correlation", "variance", "idm"], out[:5]))
        assert by["asm"] == 1.0
        assert by["contrast"] == 0.0
        assert by["correlation"] == 0.0  # degenerate rule
        assert by["idm"] == 1.0
        assert out[8] == 0.0  # entropy

    def test_features_antidiagonal(self):
        p = np.array([[0.0, 0.5], [0.5, 0.0]])
        out = glcm_features(p)
        assert out[0] == 0.5  # asm
        assert out[1] == 1.0  # contrast
        assert out[2] == -1.0  # correlation
        assert out[4] == 0.5  # idm
        assert out[8] == 1.0  # entropy, bits

    def test_features_uniform_independence(self):
        for ng in (2, 4, 8):
            p = np.full((ng, ng), 1.0 / ng**2)
            out = glcm_features(p)
            assert abs(out[8] - 2 * math.log2(ng)) < 1e-12  # entropy
            assert abs(out[2]) < 1e-12  # correlation

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError, match="sum to 1"):
            glcm_features(np.full((2, 2), 1.0))

    def test_matrix_properties_random(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            values, mask, ng = random_roi(rng)
            q = quantize_array(values, mask, ng)
            p = build_glcm(q, DIRECTIONS_3D)
            assert abs(p.sum() - 1.0) < 1e-12
            assert np.array_equal(p, p.T)
            out = glcm_features(p)
            asm, entropy, idm = out[0], out[8], out[4]
            assert 0 < asm <= 1
            assert 0 < idm <= 1
            assert -1e-12 <= entropy <= 2 * math.log2(ng) + 1e-12


class TestRlm:
    def test_run_decomposition(self):
        q = _q([[1, 1, 2]], 2)
        runs = build_rlm(q, [(0, 0, 1)])
        assert runs[0, 1] == 1  # level 1, length 2
        assert runs[1, 0] == 1  # level 2, length 1
        assert runs.sum() == 2

    def test_constant_row_single_run(self):
        q = _q([[1, 1, 1, 1, 1]], 2)
        runs = build_rlm(q, [(0, 0, 1)])
        assert runs[0, 4] == 1
        assert runs.sum() == 1

    def test_alternating_row_all_unit_runs(self):
        q = _q([[1, 2, 1, 2, 1]], 2)
        runs = build_rlm(q, [(0, 0, 1)])
        assert runs.sum() == 5
        assert runs[:, 1:].sum() == 0

    def test_roi_boundary_breaks_runs(self):
        q = _q([[1, 0, 1]], 2)  # middle voxel outside ROI
        runs = build_rlm(q, [(0, 0, 1)])
        assert runs[0, 0] == 2  # two runs of length 1

    def test_printed_feature_formulas(self):
        q = _q([[1, 1, 2]], 2)
        runs = build_rlm(q, [(0, 0, 1)])
        out = rlm_features(runs, roi_voxel_count=3, n_directions=1)
        sre, lre, gln, rln, rp = out
        assert sre == (0.25 + 1.0) / 2.0
        assert lre == (4.0 + 1.0) / 2.0
        assert gln == 1.0
        assert rln == 1.0
        assert abs(rp - 2.0 / 3.0) < 1e-15

    def test_unit_runs_extremes(self):
        q = _q([[1, 2, 1, 2]], 2)
        runs = build_rlm(q, [(0, 0, 1)])
        out = rlm_features(runs, roi_voxel_count=4, n_directions=1)
        assert out[0] == 1.0  # SRE
        assert out[1] == 1.0  # LRE
        assert out[4] == 1.0  # run percentage

    def test_single_long_run(self):
        n = 7
        q = _q([[1] * n], 2)
        out = rlm_features(build_rlm(q, [(0, 0, 1)]), n, 1)
        assert abs(out[0] - 1.0 / n**2) < 1e-15
        assert abs(out[1] - float(n**2)) < 1e-12

    def test_sre_lre_bounds_random(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            values, mask, ng = random_roi(rng)
            q = quantize_array(values, mask, ng)
            runs = build_rlm(q, DIRECTIONS_3D)
            out = rlm_features(runs, int(mask.sum()), len(DIRECTIONS_3D))
            assert 0 < out[0] <= 1.0 + 1e-12
            assert out[1] >= 1.0 - 1e-12


class TestNgldm:
    def test_single_voxel(self):
        q = _q([[1]], 2)
        table = build_ngldm(q, DIRECTIONS_3D)
        assert table[0, 0] == 1
        out = ngldm_features(table)
        assert out[0] == 1.0 and out[1] == 1.0

    def test_constant_cube_center(self):
        arr = np.ones((3, 3, 3), dtype=np.int32)
        from radcompat.features import QuantizedRoi

        q = QuantizedRoi(levels=arr, mask=arr > 0, ng=2, source_range=(0, 1))
        table = build_ngldm(q, DIRECTIONS_3D)
        assert table.shape[1] == 27  # center voxel has 26 qualifying neighbors
        assert table[0, 26] == 1
        # 8 corners with 7 neighbors, 12 edges with 11, 6 faces with 17
        assert table[0, 7] == 8
        assert table[0, 11] == 12
        assert table[0, 17] == 6

    def test_alternating_row_all_isolated(self):
        # no equal neighbors anywhere -> every voxel has dependence count 0
        q = _q([[1, 2, 1, 2, 1]], 2)
        table = build_ngldm(q, DIRECTIONS_2D)
        assert table[:, 0].sum() == 5
        assert table[:, 1:].sum() == 0

    def test_checkerboard_diagonal_neighbors_count(self):
        # in an 8-neighborhood the diagonals of a checkerboard DO match levels
        q = _q([[1, 2], [2, 1]], 2)
        table = build_ngldm(q, DIRECTIONS_2D)
        assert table[:, 1].sum() == 4
        assert table[:, 0].sum() == 0

    def test_mass_at_s3(self):
        table = np.zeros((2, 4))
        table[0, 3] = 5.0
        out = ngldm_features(table)
        assert out[0] == 1.0 / 16.0
        assert out[1] == 16.0

    def test_sne_lne_product_bound(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            values, mask, ng = random_roi(rng)
            q = quantize_array(values, mask, ng)
            out = ngldm_features(build_ngldm(q, DIRECTIONS_3D))
            assert out[0] * out[1] >= 1.0 - 1e-12


class TestNgtdm:
    def test_constant_roi_zero_differences(self):
        q = _q([[1, 1], [1, 1]], 2)
        p, s, n = build_ngtdm(q, DIRECTIONS_2D)
        assert n == 4
        assert np.all(s == 0.0)
        out = ngtdm_features(p, s, 2, n)
        assert out[0] == 1e6  # coarseness cap
        assert out[1] == 0.0
        assert out[2] == 0.0

    def test_center_voxel_contribution(self):
        q = _q([[1, 2, 1]], 2)
        p, s, n = build_ngtdm(q, DIRECTIONS_2D)
        # center voxel (level 2) sees only level-1 neighbors
        assert s[1] == 1.0
        # edge voxels (level 1) each see only the level-2 center
        assert s[0] == 2.0
        assert n == 3
        assert abs(p[0] - 2.0 / 3.0) < 1e-15
        assert abs(p[1] - 1.0 / 3.0) < 1e-15

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            values, mask, ng = random_roi(rng)
            q = quantize_array(values, mask, ng)
            p, s, n = build_ngtdm(q, DIRECTIONS_3D)
            assert abs(p.sum() - 1.0) < 1e-12

    def test_coarseness_monotone_in_s(self):
        p = np.array([0.5, 0.5])
        s = np.array([1.0, 2.0])
        a = ngtdm_features(p, s, 2, 10)[0]
        b = ngtdm_features(p, 2 * s, 2, 10)[0]
        assert b < a

    def test_two_level_row_coarseness_hand_value(self):
        q = _q([[1, 2, 1]], 2)
        p, s, n = build_ngtdm(q, DIRECTIONS_2D)
        out = ngtdm_features(p, s, 2, n)
        # sum p_i s(i) = (2/3)*2 + (1/3)*1 = 5/3
        assert abs(out[0] - 1.0 / (5.0 / 3.0 + 1e-12)) < 1e-12


class TestOracleEquivalence:
    def test_3d_random_rois(self):
        rng = np.random.default_rng(10)
        for _ in range(25):
            values, mask, ng = random_roi(rng, ints=False)
            impl = compute_feature_vector(values, mask, ng, "3d-whole-roi")
            ora = np.array(oracle_feature_vector(values.tolist(), mask.tolist(), ng, "3d"))
            assert np.all(np.isfinite(impl))
            np.testing.assert_allclose(impl, ora, rtol=1e-9, atol=1e-12)

    def test_2d_random_slices(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            ny, nx = rng.integers(2, 10, size=2)
            values = rng.normal(0, 50, size=(1, ny, nx))
            mask = rng.random((1, ny, nx)) < 0.75
            mask[0, 0, 0] = True
            mask[0, 0, min(1, nx - 1)] = True
            if nx == 1:
                mask[0, min(1, ny - 1), 0] = True
            ng = int(rng.integers(2, 9))
            impl = compute_feature_vector(values, mask, ng, "2d-per-slice")
            ora = np.array(oracle_feature_vector(values.tolist(), mask.tolist(), ng, "2d"))
            np.testing.assert_allclose(impl, ora, rtol=1e-9, atol=1e-12)


class TestAffineInvariance:
    def test_texture_groups_exactly_invariant(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            values, mask, ng = random_roi(rng, ints=True)
            base = compute_feature_vector(values, mask, ng, "3d-whole-roi")
            mapped = compute_feature_vector(2.0 * values + 100.0, mask, ng, "3d-whole-roi")
            # groups II-V identical; histogram mean/contrast/SD transform
            # affinely/linearly, skewness and kurtosis invariant
            assert np.array_equal(base[5:], mapped[5:])
            assert mapped[0] == 2.0 * base[0] + 100.0
            assert abs(mapped[1] - 2.0 * base[1]) < 1e-9
            assert abs(mapped[2] - 2.0 * base[2]) < 1e-9
            assert abs(mapped[3] - base[3]) < 1e-9
            assert abs(mapped[4] - base[4]) < 1e-9


class TestRotationInvariance:
    def test_quarter_turn_in_plane(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            ny = nx = int(rng.integers(3, 9))
            values = rng.normal(0, 30, size=(1, ny, nx))
            mask = rng.random((1, ny, nx)) < 0.8
            mask[0, 0, 0] = mask[0, 0, 1] = True
            ng = 4
            base = compute_feature_vector(values, mask, ng, "2d-per-slice")
            rot_values = np.rot90(values[0]).copy()[None]
            rot_mask = np.rot90(mask[0]).copy()[None]
            rot = compute_feature_vector(rot_values, rot_mask, ng, "2d-per-slice")
            # direction-merged GLCM/RLM features survive a 90-degree rotation
            np.testing.assert_allclose(rot[5:23], base[5:23], rtol=1e-9)


class TestExtractFeatureSample:
    def _sphere_case(self):
        from radcompat.phantom import GaussianFieldTexture, PhantomSpec, generate_phantom

        spec = PhantomSpec(
            radii_mm=(6.0,) * 3,
            base_spacing=(1.0,) * 3,
            dims=(24, 24, 24),
            texture=GaussianFieldTexture(2.0, 30.0),
            seed=3,
        )
        return generate_phantom(spec)

    def test_slice_counting_contract(self):
        volume, mask = self._sphere_case()
        cfg = FeatureConfig(ng=16, min_slice_voxels=5)
        sample = extract_feature_sample(volume, mask, cfg, case_id="c")
        expected = sum(
            1 for z in range(volume.dims[2]) if mask.bits[z].sum() >= cfg.min_slice_voxels
        )
        assert sample.usable
        assert sample.slice_count == expected
        assert sample.per_slice.shape == (expected, FEATURE_COUNT)
        assert np.all(np.isfinite(sample.per_slice))
        assert np.all(np.isfinite(sample.mean))
        assert np.all(np.isfinite(sample.sd))

    def test_identical_slices_zero_sd(self):
        values = np.tile(np.arange(36, dtype=float).reshape(6, 6), (4, 1, 1))
        bits = np.zeros((4, 6, 6), dtype=bool)
        bits[:, 1:5, 1:5] = True
        vol = ScalarVolume((6, 6, 4), (1.0, 1.0, 1.0), values)
        mask = RoiMask((6, 6, 4), bits)
        sample = extract_feature_sample(vol, mask, FeatureConfig(ng=8), case_id="c")
        assert sample.usable
        assert np.all(sample.sd == 0.0)

    def test_per_slice_matches_oracle(self):
        volume, mask = self._sphere_case()
        cfg = FeatureConfig(ng=8, min_slice_voxels=5)
        sample = extract_feature_sample(volume, mask, cfg, case_id="c")
        valid = [z for z in range(volume.dims[2]) if mask.bits[z].sum() >= cfg.min_slice_voxels]
        for row, z in zip(sample.per_slice, valid):
            ora = oracle_feature_vector(
                volume.voxels[z][None].tolist(), mask.bits[z][None].tolist(), cfg.ng, "2d"
            )
            np.testing.assert_allclose(row, np.array(ora), rtol=1e-9, atol=1e-12)

    def test_too_few_slices_flagged_unusable(self):
        values = np.zeros((2, 6, 6))
        bits = np.zeros((2, 6, 6), dtype=bool)
        bits[0, 1:4, 1:4] = True  # a single valid slice
        vol = ScalarVolume((6, 6, 2), (1.0, 1.0, 1.0), values)
        mask = RoiMask((6, 6, 2), bits)
        sample = extract_feature_sample(vol, mask, FeatureConfig(), case_id="c")
        assert not sample.usable
        assert "valid slices" in sample.reason
        assert np.all(np.isnan(sample.mean))

    def test_deterministic_output(self):
        volume, mask = self._sphere_case()
        cfg = FeatureConfig(ng=16)
        a = extract_feature_sample(volume, mask, cfg, case_id="c")
        b = extract_feature_sample(volume, mask, cfg, case_id="c")
        assert np.array_equal(a.per_slice, b.per_slice)


def test_feature_vector_layout():
    assert FEATURE_COUNT == 28
    assert len(FEATURE_NAMES) == 28
    assert FEATURE_NAMES[0] == "mean"
    assert FEATURE_NAMES[5] == "glcm_asm"
    assert FEATURE_NAMES[18] == "rlm_short_run_emphasis"
    assert FEATURE_NAMES[23] == "ngldm_small_number_emphasis"
    assert FEATURE_NAMES[25] == "ngtdm_coarseness"
