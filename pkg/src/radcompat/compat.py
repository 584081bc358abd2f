"""Pairwise compatibility of reconstruction conditions.

For every condition pair, every feature, and every case, the two per-slice
feature distributions are compared with the two-sample statistic; the cell's
compatibility ratio is the percentage of (feature, case) comparisons passing
t < threshold. Pairs involving an unusable sample are excluded from both the
numerator and the denominator and reported separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .features import FEATURE_COUNT, FEATURE_GROUPS, FEATURE_NAMES, FeatureSample
from .model import ReconCondition, sort_conditions
from .volumetry import T_THRESHOLD_DEFAULT, is_compatible, t_statistic

ORDER_CANONICAL = "canonical"
ORDER_BY_TOTAL = "byTotalCompatibility"

AXES = ("dose", "kernel", "thickness")


def pair_compatibility(
    sample_a: FeatureSample,
    sample_b: FeatureSample,
    feature_index: int,
    threshold: float = T_THRESHOLD_DEFAULT,
) -> bool:
    """One (feature, case) comparison between two condition samples."""
    if not (sample_a.usable and sample_b.usable):
        raise ValueError("cannot compare unusable samples; exclude them instead")
    if sample_a.case_id != sample_b.case_id:
        raise ValueError(f"samples belong to different cases: {sample_a.case_id!r} vs {sample_b.case_id!r}")
    t = t_statistic(
        float(sample_a.mean[feature_index]),
        float(sample_a.sd[feature_index]),
        sample_a.slice_count,
        float(sample_b.mean[feature_index]),
        float(sample_b.sd[feature_index]),
        sample_b.slice_count,
    )
    return is_compatible(t, threshold)


@dataclass(frozen=True)
class CompatibilityCell:
    condition_a: ReconCondition
    condition_b: ReconCondition
    compatible: int
    total: int
    excluded: int

    @property
    def ratio_percent(self) -> float | None:
        """None when every comparison was excluded (rendered as missing)."""
        if self.total == 0:
            return None
        return 100.0 * self.compatible / self.total


class CohortFeatureData:
    """Per-(condition, case) sample statistics in dense arrays.

    means/sds have shape (C, P, F); counts and usable are (C, P). Conditions
    are held in canonical order; a missing (condition, case) sample counts as
    unusable.
    """

    def __init__(
        self,
        conditions: Sequence[ReconCondition],
        case_ids: Sequence[str],
        means: np.ndarray,
        sds: np.ndarray,
        counts: np.ndarray,
        usable: np.ndarray,
    ) -> None:
        self.conditions = list(conditions)
        self.case_ids = list(case_ids)
        self.means = means
        self.sds = sds
        self.counts = counts
        self.usable = usable

    @classmethod
    def from_samples(cls, samples: Iterable[FeatureSample]) -> "CohortFeatureData":
        samples = list(samples)
        if not samples:
            raise ValueError("no samples supplied")
        if any(s.condition is None for s in samples):
            raise ValueError("every sample needs its reconstruction condition")
        conditions = sort_conditions({s.condition for s in samples})
        case_ids = sorted({s.case_id for s in samples})
        cond_idx = {c: i for i, c in enumerate(conditions)}
        case_idx = {p: i for i, p in enumerate(case_ids)}
        c, p = len(conditions), len(case_ids)
        means = np.full((c, p, FEATURE_COUNT), np.nan)
        sds = np.full((c, p, FEATURE_COUNT), np.nan)
        counts = np.zeros((c, p), dtype=np.int64)
        usable = np.zeros((c, p), dtype=bool)
        for s in samples:
            i, j = cond_idx[s.condition], case_idx[s.case_id]
            if s.usable:
                means[i, j] = s.mean
                sds[i, j] = s.sd
                counts[i, j] = s.slice_count
                usable[i, j] = True
        return cls(conditions, case_ids, means, sds, counts, usable)

    @property
    def n_conditions(self) -> int:
        return len(self.conditions)

    @property
    def n_cases(self) -> int:
        return len(self.case_ids)


def _pair_t(
    data: CohortFeatureData, i: int, js: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """t statistics of condition i against each j (vectorized over cases and
    features) plus the usable-pair mask; unusable entries hold NaN."""
    m_i, s_i, n_i = data.means[i], data.sds[i], data.counts[i]
    m_j, s_j, n_j = data.means[js], data.sds[js], data.counts[js]
    with np.errstate(invalid="ignore", divide="ignore"):
        num = np.abs(m_i[None] - m_j)
        var = s_i[None] ** 2 / np.maximum(n_i[None, :, None], 1) + s_j**2 / np.maximum(
            n_j[:, :, None], 1
        )
        denom = np.sqrt(var)
        t = np.where(denom > 0, num / denom, np.where(num == 0, 0.0, np.inf))
    pair_usable = data.usable[i][None] & data.usable[js]
    return t, pair_usable


def compatibility_counts(
    data: CohortFeatureData, threshold: float = T_THRESHOLD_DEFAULT
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(compatible, total, excluded) count matrices over all condition pairs."""
    c, p = data.n_conditions, data.n_cases
    compatible = np.zeros((c, c), dtype=np.int64)
    total = np.zeros((c, c), dtype=np.int64)
    excluded = np.zeros((c, c), dtype=np.int64)
    for i in range(c):
        js = np.arange(i, c)
        t, pair_usable = _pair_t(data, i, js)
        ok = (t < threshold) & pair_usable[:, :, None]
        compatible[i, i:] = ok.sum(axis=(1, 2))
        total[i, i:] = FEATURE_COUNT * pair_usable.sum(axis=1)
        excluded[i, i:] = FEATURE_COUNT * (p - pair_usable.sum(axis=1))
    lower = np.tril_indices(c, -1)
    compatible[lower] = compatible.T[lower]
    total[lower] = total.T[lower]
    excluded[lower] = excluded.T[lower]
    return compatible, total, excluded


def compatibility_ratio(
    cond_a: ReconCondition,
    cond_b: ReconCondition,
    samples: Iterable[FeatureSample],
    threshold: float = T_THRESHOLD_DEFAULT,
) -> CompatibilityCell:
    """Aggregate one condition pair over all cases and features."""
    relevant = [s for s in samples if s.condition in (cond_a, cond_b)]
    data = CohortFeatureData.from_samples(relevant)
    i = data.conditions.index(cond_a)
    j = data.conditions.index(cond_b)
    compatible, total, excluded = compatibility_counts(data, threshold)
    return CompatibilityCell(
        condition_a=cond_a,
        condition_b=cond_b,
        compatible=int(compatible[i, j]),
        total=int(total[i, j]),
        excluded=int(excluded[i, j]),
    )


@dataclass(frozen=True)
class CompatibilityMap:
    """Symmetric matrix of compatibility cells over ordered conditions.

    ratio holds percentages with NaN marking undefined cells (no usable
    comparisons); comparisons_total counts every ordered (condition,
    condition, feature, case) comparison including the diagonal.
    """

    conditions: tuple[ReconCondition, ...]
    ratio: np.ndarray
    compatible: np.ndarray
    total: np.ndarray
    excluded: np.ndarray
    ordering: str

    @property
    def comparisons_total(self) -> int:
        return int(self.total.sum())

    def cell(self, i: int, j: int) -> CompatibilityCell:
        return CompatibilityCell(
            condition_a=self.conditions[i],
            condition_b=self.conditions[j],
            compatible=int(self.compatible[i, j]),
            total=int(self.total[i, j]),
            excluded=int(self.excluded[i, j]),
        )


def build_map(
    data: CohortFeatureData,
    ordering: str = ORDER_CANONICAL,
    threshold: float = T_THRESHOLD_DEFAULT,
) -> CompatibilityMap:
    """Full condition-pair map, canonically ordered or sorted by row totals."""
    if ordering not in (ORDER_CANONICAL, ORDER_BY_TOTAL):
        raise ValueError(f"unknown ordering mode {ordering!r}")
    compatible, total, excluded = compatibility_counts(data, threshold)
    with np.errstate(invalid="ignore"):
        ratio = np.where(total > 0, 100.0 * compatible / np.maximum(total, 1), np.nan)
    order = np.arange(len(data.conditions))
    if ordering == ORDER_BY_TOTAL:
        row_sums = np.nansum(ratio, axis=1)
        # descending row sum, canonical order breaking ties
        order = np.lexsort((order, -row_sums))
    conditions = tuple(data.conditions[k] for k in order)
    ix = np.ix_(order, order)
    return CompatibilityMap(
        conditions=conditions,
        ratio=ratio[ix],
        compatible=compatible[ix],
        total=total[ix],
        excluded=excluded[ix],
        ordering=ordering,
    )


def _axis_value(c: ReconCondition, axis: str) -> float | int:
    if axis == "dose":
        return c.dose_fraction
    if axis == "kernel":
        return c.kernel_idx
    if axis == "thickness":
        return c.thickness_mm
    raise ValueError(f"unknown axis {axis!r}; expected one of {AXES}")


def _axis_values_sorted(conditions: Sequence[ReconCondition], axis: str) -> list:
    values = sorted({_axis_value(c, axis) for c in conditions})
    if axis != "kernel":
        values.reverse()  # thickness and dose axes read high-to-low
    return values


def _context(c: ReconCondition, axis: str) -> tuple:
    return tuple(_axis_value(c, a) for a in AXES if a != axis)


def marginal_matrix(cmap: CompatibilityMap, axis: str) -> tuple[list, np.ndarray]:
    """Mean compatibility ratio over pairs differing only on one axis.

    Entry (a, b) averages the cells of all condition pairs with axis values
    (a, b) and every other axis equal. Returns (axis values, matrix).
    """
    values = _axis_values_sorted(cmap.conditions, axis)
    value_idx = {v: k for k, v in enumerate(values)}
    k = len(values)
    acc = np.zeros((k, k))
    cnt = np.zeros((k, k), dtype=np.int64)
    conds = cmap.conditions
    for i, ci in enumerate(conds):
        vi = value_idx[_axis_value(ci, axis)]
        ctx_i = _context(ci, axis)
        for j in range(i, len(conds)):
            cj = conds[j]
            if _context(cj, axis) != ctx_i:
                continue
            r = cmap.ratio[i, j]
            if np.isnan(r):
                continue
            vj = value_idx[_axis_value(cj, axis)]
            acc[vi, vj] += r
            cnt[vi, vj] += 1
            if vi != vj:
                acc[vj, vi] += r
                cnt[vj, vi] += 1
    with np.errstate(invalid="ignore"):
        out = np.where(cnt > 0, acc / np.maximum(cnt, 1), np.nan)
    return values, out


def feature_robustness(
    data: CohortFeatureData, threshold: float = T_THRESHOLD_DEFAULT
) -> dict[str, np.ndarray]:
    """Per-feature compatibility percentage per axis, over single-axis changes.

    For each axis, counts (pair, case) comparisons among condition pairs that
    differ only on that axis; returns {axis: (F,) percentages} with NaN where
    no comparison was usable.
    """
    c = data.n_conditions
    num = {a: np.zeros(FEATURE_COUNT) for a in AXES}
    den = {a: np.zeros(FEATURE_COUNT) for a in AXES}
    conds = data.conditions
    for i in range(c):
        diffs_by_axis: dict[str, list[int]] = {a: [] for a in AXES}
        for j in range(i + 1, c):
            differing = [a for a in AXES if _axis_value(conds[i], a) != _axis_value(conds[j], a)]
            if len(differing) == 1:
                diffs_by_axis[differing[0]].append(j)
        for axis, js in diffs_by_axis.items():
            if not js:
                continue
            t, pair_usable = _pair_t(data, i, np.array(js))
            ok = (t < threshold) & pair_usable[:, :, None]
            num[axis] += ok.sum(axis=(0, 1))
            den[axis] += pair_usable.sum() * np.ones(FEATURE_COUNT)
    out = {}
    for axis in AXES:
        with np.errstate(invalid="ignore"):
            out[axis] = np.where(den[axis] > 0, 100.0 * num[axis] / np.maximum(den[axis], 1), np.nan)
    return out


def feature_group_robustness(per_feature: dict[str, np.ndarray]) -> dict[str, dict[str, float]]:
    """Average the per-feature percentages over each feature group."""
    out: dict[str, dict[str, float]] = {}
    for group, start, end in FEATURE_GROUPS:
        out[group] = {
            axis: float(np.nanmean(values[start:end])) for axis, values in per_feature.items()
        }
    return out


def robustness_table(per_feature: dict[str, np.ndarray], axis: str) -> list[tuple[str, float]]:
    """(feature name, percentage) rows for one axis, sorted descending."""
    values = per_feature[axis]
    rows = [(FEATURE_NAMES[k], float(values[k])) for k in range(FEATURE_COUNT)]
    rows.sort(key=lambda kv: (-(kv[1] if not np.isnan(kv[1]) else -np.inf), kv[0]))
    return rows
