"""The 28 intensity and texture features over ROI voxels.

Five groups: histogram (5, on raw intensities), gray-level co-occurrence (13),
run length (5), gray-level dependence (2), gray-tone difference (3). Texture
groups operate on gray levels quantized per ROI into equal-width bins between
the ROI minimum and maximum.

Two extraction geometries: whole-ROI 3-D (13 offset directions, 26-voxel
neighborhood) and per-axial-slice 2-D (4 in-plane directions, 8-voxel
neighborhood). Per-slice extraction is the sampling unit for the compatibility
statistics: each image yields a mean and standard deviation per feature across
its valid ROI slices.

Conventions baked in throughout: logarithms base 2 with 0*log(0) = 0;
co-occurrence matrices are direction-merged and symmetric; run-length and
dependence tables hold raw counts; degenerate constructs (constant ROI, zero
marginal variance) resolve to finite values documented per feature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ReconCondition, RoiMask, ScalarVolume

FEATURE_NAMES: tuple[str, ...] = (
    "mean",
    "contrast",
    "standard_deviation",
    "skewness",
    "kurtosis",
    "glcm_asm",
    "glcm_contrast",
    "glcm_correlation",
    "glcm_variance",
    "glcm_inverse_difference_moment",
    "glcm_sum_average",
    "glcm_sum_entropy",
    "glcm_sum_variance",
    "glcm_entropy",
    "glcm_difference_variance",
    "glcm_difference_entropy",
    "glcm_imc1",
    "glcm_imc2",
    "rlm_short_run_emphasis",
    "rlm_long_run_emphasis",
    "rlm_gray_level_nonuniformity",
    "rlm_run_length_nonuniformity",
    "rlm_run_percentage",
    "ngldm_small_number_emphasis",
    "ngldm_large_number_emphasis",
    "ngtdm_coarseness",
    "ngtdm_complexity",
    "ngtdm_texture_strength",
)

FEATURE_COUNT = len(FEATURE_NAMES)

# (group name, start, end) index ranges into FEATURE_NAMES
FEATURE_GROUPS: tuple[tuple[str, int, int], ...] = (
    ("histogram", 0, 5),
    ("glcm", 5, 18),
    ("rlm", 18, 23),
    ("ngldm", 23, 25),
    ("ngtdm", 25, 28),
)

# offsets are (dz, dy, dx) into (z, y, x)-indexed arrays; one representative
# per +/- pair, first nonzero component positive
DIRECTIONS_3D: tuple[tuple[int, int, int], ...] = (
    (0, 0, 1),
    (0, 1, 0),
    (1, 0, 0),
    (0, 1, 1),
    (0, 1, -1),
    (1, 0, 1),
    (1, 0, -1),
    (1, 1, 0),
    (1, -1, 0),
    (1, 1, 1),
    (1, 1, -1),
    (1, -1, 1),
    (1, -1, -1),
)

DIRECTIONS_2D: tuple[tuple[int, int, int], ...] = (
    (0, 0, 1),
    (0, 1, 0),
    (0, 1, 1),
    (0, 1, -1),
)

MODE_2D = "2d-per-slice"
MODE_3D = "3d-whole-roi"

_EPS = 1e-12
_COARSENESS_CAP = 1e6


class DegenerateRoiError(ValueError):
    """ROI too small or too uniform for a texture matrix to exist."""


@dataclass(frozen=True)
class FeatureConfig:
    """Quantization and sampling parameters for feature extraction."""

    ng: int = 32
    min_slice_voxels: int = 5
    direction_mode: str = MODE_2D

    def __post_init__(self) -> None:
        if self.ng < 2:
            raise ValueError(f"gray-level count must be >= 2, got {self.ng}")
        if self.min_slice_voxels < 2:
            raise ValueError(f"min_slice_voxels must be >= 2, got {self.min_slice_voxels}")
        if self.direction_mode not in (MODE_2D, MODE_3D):
            raise ValueError(f"direction_mode must be {MODE_2D!r} or {MODE_3D!r}")


@dataclass(frozen=True)
class QuantizedRoi:
    """Per-voxel gray levels 1..ng inside the ROI, 0 outside."""

    levels: np.ndarray  # int32, shape (nz, ny, nx)
    mask: np.ndarray  # bool, same shape
    ng: int
    source_range: tuple[float, float]


def quantize_array(values: np.ndarray, mask: np.ndarray, ng: int) -> QuantizedRoi:
    """Equal-width binning of in-ROI intensities from their min..max into ng levels.

    level = min(ng, 1 + floor(ng * (x - min) / (max - min))); a constant ROI
    maps everything to level 1.
    """
    if ng < 2:
        raise ValueError(f"gray-level count must be >= 2, got {ng}")
    mask = np.asarray(mask, dtype=bool)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != mask.shape:
        raise ValueError(f"values shape {values.shape} != mask shape {mask.shape}")
    roi = values[mask]
    if roi.size == 0:
        raise ValueError("cannot quantize an empty ROI")
    lo, hi = float(roi.min()), float(roi.max())
    levels = np.zeros(values.shape, dtype=np.int32)
    if hi == lo:
        levels[mask] = 1
    else:
        binned = 1 + np.floor(ng * (roi - lo) / (hi - lo))
        levels[mask] = np.minimum(ng, binned).astype(np.int32)
    return QuantizedRoi(levels=levels, mask=mask, ng=ng, source_range=(lo, hi))


def quantize(v: ScalarVolume, m: RoiMask, ng: int) -> QuantizedRoi:
    m.check_congruent(v)
    return quantize_array(v.voxels, m.bits, ng)


def _xlog2(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    nz = x > 0
    out[nz] = x[nz] * np.log2(x[nz])
    return out


def histogram_features(roi_intensities: np.ndarray) -> np.ndarray:
    """Mean, RMS deviation (contrast), sample SD, skewness, kurtosis of raw values.

    Skewness and kurtosis are 0 by convention when the variance vanishes.
    """
    x = np.asarray(roi_intensities, dtype=np.float64).ravel()
    n = x.size
    if n < 2:
        raise ValueError(f"histogram features need >= 2 voxels, got {n}")
    mean = x.mean()
    d = x - mean
    ss = float(np.dot(d, d))
    contrast = np.sqrt(ss / n)
    var_sample = ss / (n - 1)
    sd = np.sqrt(var_sample)
    if ss == 0.0:
        skew = kurt = 0.0
    else:
        skew = (np.sum(d**3) / n) / var_sample**1.5
        kurt = (np.sum(d**4) / n) / var_sample**2
    return np.array([mean, contrast, sd, skew, kurt])


def _offset_slices(
    shape: tuple[int, ...], d: tuple[int, int, int]
) -> tuple[tuple[slice, ...], tuple[slice, ...]]:
    """Index pairs (src, dst) so that arr[dst] is arr[src] shifted by d."""
    src, dst = [], []
    for n, delta in zip(shape, d):
        if delta >= 0:
            src.append(slice(0, n - delta))
            dst.append(slice(delta, n))
        else:
            src.append(slice(-delta, n))
            dst.append(slice(0, n + delta))
    return tuple(src), tuple(dst)


def build_glcm(
    q: QuantizedRoi, directions: Sequence[tuple[int, int, int]] = DIRECTIONS_3D
) -> np.ndarray:
    """Direction-merged symmetric co-occurrence probabilities at distance 1.

    Counts every ordered pair of in-ROI voxels one offset apart, both
    orientations per direction, then normalizes to sum 1.
    """
    ng = q.ng
    counts = np.zeros(ng * ng, dtype=np.int64)
    for d in directions:
        src, dst = _offset_slices(q.levels.shape, d)
        valid = q.mask[src] & q.mask[dst]
        if not valid.any():
            continue
        a = q.levels[src][valid].astype(np.int64) - 1
        b = q.levels[dst][valid].astype(np.int64) - 1
        counts += np.bincount(a * ng + b, minlength=ng * ng)
    matrix = counts.reshape(ng, ng)
    sym = matrix + matrix.T
    total = sym.sum()
    if total == 0:
        raise DegenerateRoiError("no co-occurring voxel pairs in ROI")
    return sym / total


def glcm_features(p: np.ndarray) -> np.ndarray:
    """The 13 co-occurrence features from a normalized symmetric matrix."""
    p = np.asarray(p, dtype=np.float64)
    total = p.sum()
    if not np.isclose(total, 1.0, rtol=0, atol=1e-9):
        raise ValueError(f"co-occurrence matrix must sum to 1, got {total}")
    ng = p.shape[0]
    i = np.arange(1, ng + 1, dtype=np.float64)
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    mu_x = float(i @ px)
    mu_y = float(i @ py)
    sigma_x = np.sqrt(float(((i - mu_x) ** 2) @ px))
    sigma_y = np.sqrt(float(((i - mu_y) ** 2) @ py))

    ii = np.arange(ng)[:, None]
    jj = np.arange(ng)[None, :]
    # diagonal-band distributions p_{x+y}(k), k = 2..2ng, and p_{x-y}(k), k = 0..ng-1
    sum_idx = (ii + jj).ravel()
    diff_idx = np.abs(ii - jj).ravel()
    p_sum = np.bincount(sum_idx, weights=p.ravel(), minlength=2 * ng - 1)
    p_diff = np.bincount(diff_idx, weights=p.ravel(), minlength=ng)
    k_sum = np.arange(2, 2 * ng + 1, dtype=np.float64)
    k_diff = np.arange(0, ng, dtype=np.float64)

    asm = float(np.sum(p * p))
    contrast = float(np.sum(k_diff**2 * p_diff))
    prod_sum = float(((i[:, None] * i[None, :]) * p).sum())
    if sigma_x == 0.0 or sigma_y == 0.0:
        correlation = 0.0
    else:
        correlation = (prod_sum - mu_x * mu_y) / (sigma_x * sigma_y)
    mu = mu_x  # matrix is symmetric, grand mean equals the marginal mean
    variance = float((((i[:, None] - mu) ** 2) * p).sum())
    idm = float((p / (1.0 + (ii - jj) ** 2)).sum())
    sum_average = float(np.sum(k_sum * p_sum))
    sum_entropy = -float(np.sum(_xlog2(p_sum)))
    sum_variance = float(np.sum((k_sum - sum_average) ** 2 * p_sum))
    entropy = -float(np.sum(_xlog2(p)))
    mu_diff = float(np.sum(k_diff * p_diff))
    difference_variance = float(np.sum((k_diff - mu_diff) ** 2 * p_diff))
    difference_entropy = -float(np.sum(_xlog2(p_diff)))

    hx = -float(np.sum(_xlog2(px)))
    hy = -float(np.sum(_xlog2(py)))
    outer = px[:, None] * py[None, :]
    pos = outer > 0
    log_outer = np.zeros_like(outer)
    log_outer[pos] = np.log2(outer[pos])
    hxy1 = -float(np.sum(p * log_outer))
    hxy2 = -float(np.sum(outer[pos] * log_outer[pos]))
    denom = max(hx, hy)
    imc1 = 0.0 if denom == 0.0 else (entropy - hxy1) / denom
    imc2 = float(np.sqrt(max(0.0, 1.0 - np.exp(-2.0 * (hxy2 - entropy)))))

    return np.array(
        [
            asm,
            contrast,
            correlation,
            variance,
            idm,
            sum_average,
            sum_entropy,
            sum_variance,
            entropy,
            difference_variance,
            difference_entropy,
            imc1,
            imc2,
        ]
    )


def _runs_along_last_axis(lines: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Maximal runs of equal positive values per row; 0 breaks and is skipped."""
    nlines, m = lines.shape
    padded = np.zeros((nlines, m + 1), dtype=lines.dtype)
    padded[:, :m] = lines
    flat = padded.ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [flat.size]))
    values = flat[starts]
    lengths = ends - starts
    keep = values > 0
    return values[keep], lengths[keep]


def _lines_along_direction(levels: np.ndarray, d: tuple[int, int, int]) -> np.ndarray:
    """Rearrange voxels so lines along direction d become rows (0-padded)."""
    shape = levels.shape
    pivot = next(k for k in range(3) if d[k] == 1)
    others = [k for k in range(3) if k != pivot]
    n_pivot = shape[pivot]
    coords = np.indices(shape)
    pos = coords[pivot]
    keys = []
    sizes = []
    for o in others:
        delta = d[o]
        key = coords[o] - delta * pos
        offset = (n_pivot - 1) if delta == 1 else 0
        keys.append(key + offset)
        sizes.append(shape[o] + (n_pivot - 1) * abs(delta))
    out = np.zeros((sizes[0], sizes[1], n_pivot), dtype=levels.dtype)
    out[keys[0], keys[1], pos] = levels
    return out.reshape(-1, n_pivot)


def build_rlm(
    q: QuantizedRoi, directions: Sequence[tuple[int, int, int]] = DIRECTIONS_3D
) -> np.ndarray:
    """Run counts over all directions: entry (i, j) = number of maximal runs of
    level i+1 with length j+1. Runs break at the ROI boundary."""
    masked = np.where(q.mask, q.levels, 0).astype(np.int32)
    collected: list[tuple[np.ndarray, np.ndarray]] = []
    max_len = 1
    for d in directions:
        values, lengths = _runs_along_last_axis(_lines_along_direction(masked, d))
        if values.size:
            collected.append((values, lengths))
            max_len = max(max_len, int(lengths.max()))
    counts = np.zeros((q.ng, max_len), dtype=np.int64)
    for values, lengths in collected:
        np.add.at(counts, (values - 1, lengths - 1), 1)
    if counts.sum() == 0:
        raise DegenerateRoiError("no runs in ROI")
    return counts


def rlm_features(runs: np.ndarray, roi_voxel_count: int, n_directions: int) -> np.ndarray:
    """Short/long run emphasis, gray-level and run-length non-uniformity,
    run percentage (total runs over voxel count times direction count)."""
    runs = np.asarray(runs, dtype=np.float64)
    total = runs.sum()
    if total == 0:
        raise ValueError("run table is empty")
    j = np.arange(1, runs.shape[1] + 1, dtype=np.float64)
    sre = float((runs / j**2).sum() / total)
    lre = float((runs * j**2).sum() / total)
    gln = float((runs.sum(axis=1) ** 2).sum() / total)
    rln = float((runs.sum(axis=0) ** 2).sum() / total)
    run_percentage = float(total / (roi_voxel_count * n_directions))
    return np.array([sre, lre, gln, rln, run_percentage])


def build_ngldm(
    q: QuantizedRoi,
    directions: Sequence[tuple[int, int, int]] = DIRECTIONS_3D,
    alpha: int = 0,
) -> np.ndarray:
    """Dependence counts Q: entry (k, s) = voxels of level k+1 having s in-ROI
    neighbors within +/- alpha gray levels (neighborhood = directions and their
    negations, distance 1)."""
    shape = q.levels.shape
    dependence = np.zeros(shape, dtype=np.int64)
    for d in directions:
        src, dst = _offset_slices(shape, d)
        valid = q.mask[src] & q.mask[dst] & (np.abs(q.levels[src] - q.levels[dst]) <= alpha)
        dependence[src] += valid
        dependence[dst] += valid
    k = q.levels[q.mask].astype(np.int64) - 1
    s = dependence[q.mask]
    if s.size == 0:
        raise DegenerateRoiError("empty ROI")
    table = np.zeros((q.ng, int(s.max()) + 1), dtype=np.int64)
    np.add.at(table, (k, s), 1)
    return table


def ngldm_features(table: np.ndarray) -> np.ndarray:
    """Small/large dependence-count emphasis with the (s+1)^2 weighting."""
    table = np.asarray(table, dtype=np.float64)
    total = table.sum()
    if total == 0:
        raise ValueError("dependence table is empty")
    w = (np.arange(table.shape[1], dtype=np.float64) + 1.0) ** 2
    sne = float((table / w).sum() / total)
    lne = float((table * w).sum() / total)
    return np.array([sne, lne])


def build_ngtdm(
    q: QuantizedRoi, directions: Sequence[tuple[int, int, int]] = DIRECTIONS_3D
) -> tuple[np.ndarray, np.ndarray, int]:
    """Per-level occurrence probabilities and summed gray-tone differences.

    For each in-ROI voxel with at least one in-ROI neighbor: the absolute
    difference between its level and its neighbors' mean level accumulates
    into s at its level. Returns (p, s, n) over levels 1..ng with n the
    contributing-voxel count.
    """
    shape = q.levels.shape
    nbr_sum = np.zeros(shape, dtype=np.float64)
    nbr_cnt = np.zeros(shape, dtype=np.int64)
    lv = q.levels.astype(np.float64)
    for d in directions:
        src, dst = _offset_slices(shape, d)
        valid = q.mask[src] & q.mask[dst]
        nbr_sum[src] += np.where(valid, lv[dst], 0.0)
        nbr_cnt[src] += valid
        nbr_sum[dst] += np.where(valid, lv[src], 0.0)
        nbr_cnt[dst] += valid
    contributing = q.mask & (nbr_cnt > 0)
    n = int(contributing.sum())
    if n == 0:
        raise DegenerateRoiError("no ROI voxel has an in-ROI neighbor")
    mean_nbr = nbr_sum[contributing] / nbr_cnt[contributing]
    diff = np.abs(lv[contributing] - mean_nbr)
    levels0 = q.levels[contributing].astype(np.int64) - 1
    s = np.bincount(levels0, weights=diff, minlength=q.ng)
    counts = np.bincount(levels0, minlength=q.ng)
    p = counts / n
    return p, s, n


def ngtdm_features(p: np.ndarray, s: np.ndarray, ng: int, n: int) -> np.ndarray:
    """Coarseness (capped reciprocal), complexity, texture strength."""
    p = np.asarray(p, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    coarseness = min(_COARSENESS_CAP, 1.0 / (_EPS + float(np.sum(p * s))))
    present = np.flatnonzero(p > 0)
    lv = (present + 1).astype(np.float64)
    pi = p[present]
    si = s[present]
    diff = np.abs(lv[:, None] - lv[None, :])
    pair_p = pi[:, None] + pi[None, :]
    pair_ps = pi[:, None] * si[:, None] + pi[None, :] * si[None, :]
    complexity = float(np.sum(diff / (n * n * pair_p) * pair_ps))
    strength_num = float(np.sum(pair_p * (lv[:, None] - lv[None, :]) ** 2))
    strength = strength_num / (_EPS + float(s.sum()))
    return np.array([coarseness, complexity, strength])


def compute_feature_vector(
    values: np.ndarray, mask: np.ndarray, ng: int, mode: str = MODE_3D
) -> np.ndarray:
    """All 28 features of one ROI (3-D array in, slice arrays shaped (1, ny, nx))."""
    if mode == MODE_3D:
        directions = DIRECTIONS_3D
    elif mode == MODE_2D:
        directions = DIRECTIONS_2D
    else:
        raise ValueError(f"unknown direction mode {mode!r}")
    mask = np.asarray(mask, dtype=bool)
    q = quantize_array(values, mask, ng)
    roi_count = int(mask.sum())
    hist = histogram_features(np.asarray(values, dtype=np.float64)[mask])
    glcm = glcm_features(build_glcm(q, directions))
    rlm = rlm_features(build_rlm(q, directions), roi_count, len(directions))
    ngldm = ngldm_features(build_ngldm(q, directions))
    p, s, n = build_ngtdm(q, directions)
    ngtdm = ngtdm_features(p, s, q.ng, n)
    return np.concatenate([hist, glcm, rlm, ngldm, ngtdm])


def extract_features_3d(v: ScalarVolume, m: RoiMask, cfg: FeatureConfig) -> np.ndarray:
    """Whole-ROI feature vector with the 3-D direction set."""
    m.check_congruent(v)
    return compute_feature_vector(v.voxels, m.bits, cfg.ng, MODE_3D)


@dataclass(frozen=True)
class FeatureSample:
    """Per-slice feature vectors for one (case, condition) image, plus the
    across-slice mean and sample SD per feature consumed by the t-test.

    Samples with fewer than 2 valid slices are flagged unusable and excluded
    from compatibility counts.
    """

    case_id: str
    condition: ReconCondition | None
    per_slice: np.ndarray  # (n_slices, 28)
    mean: np.ndarray  # (28,)
    sd: np.ndarray  # (28,)
    usable: bool
    reason: str | None = None

    @property
    def slice_count(self) -> int:
        return int(self.per_slice.shape[0])


def _unusable(case_id: str, condition: ReconCondition | None, vectors: list, reason: str) -> FeatureSample:
    per_slice = (
        np.array(vectors) if vectors else np.empty((0, FEATURE_COUNT), dtype=np.float64)
    )
    nan = np.full(FEATURE_COUNT, np.nan)
    return FeatureSample(
        case_id=case_id,
        condition=condition,
        per_slice=per_slice,
        mean=nan,
        sd=nan,
        usable=False,
        reason=reason,
    )


def extract_feature_sample(
    v: ScalarVolume,
    m: RoiMask,
    cfg: FeatureConfig,
    case_id: str = "",
    condition: ReconCondition | None = None,
) -> FeatureSample:
    """Per-slice 2-D extraction over every valid axial ROI slice.

    A slice is valid when it has at least cfg.min_slice_voxels in-ROI voxels
    and supports every texture matrix (co-occurring pair, in-ROI neighbor);
    slices failing the second test are skipped with a recorded reason.
    """
    m.check_congruent(v)
    nz = v.dims[2]
    vectors: list[np.ndarray] = []
    skipped: list[str] = []
    for z in range(nz):
        slice_mask = m.bits[z]
        n_vox = int(slice_mask.sum())
        if n_vox < cfg.min_slice_voxels:
            continue
        try:
            vec = compute_feature_vector(
                v.voxels[z][None, :, :], slice_mask[None, :, :], cfg.ng, MODE_2D
            )
        except DegenerateRoiError as exc:
            skipped.append(f"slice {z}: {exc}")
            continue
        vectors.append(vec)
    if len(vectors) < 2:
        reason = f"only {len(vectors)} valid slices (need >= 2)"
        if skipped:
            reason += "; " + "; ".join(skipped)
        return _unusable(case_id, condition, vectors, reason)
    per_slice = np.array(vectors)
    return FeatureSample(
        case_id=case_id,
        condition=condition,
        per_slice=per_slice,
        mean=per_slice.mean(axis=0),
        sd=per_slice.std(axis=0, ddof=1),
        usable=True,
    )
