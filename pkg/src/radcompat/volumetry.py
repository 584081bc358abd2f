"""Nodule volumetry and the thickness-compatibility statistics.

Volumes are voxel counts times voxel volume. Per-case series over the analyzed
thicknesses are normalized by their own average, and thickness pairs are
compared with the two-sample statistic

    t = |m1 - m2| / sqrt(s1^2/n1 + s2^2/n2)

accepted as compatible when t < 1.96 (strict), i.e. P < 0.05 under the normal
approximation. The normal tail is the default p-value model; Student-t with
Welch degrees of freedom is available behind a config switch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .model import RoiMask

T_THRESHOLD_DEFAULT = 1.96

P_MODEL_NORMAL = "normal"
P_MODEL_STUDENT = "student-t"


@dataclass(frozen=True)
class VolumeSeries:
    """Per-case nodule volume at each analyzed slice thickness, in mm^3."""

    case_id: str
    entries: Mapping[float, float]

    def __post_init__(self) -> None:
        entries = dict(sorted(self.entries.items()))
        if any(v <= 0 for v in entries.values()):
            raise ValueError(f"case {self.case_id!r}: volumes must be > 0, got {entries}")
        object.__setattr__(self, "entries", entries)

    @property
    def thicknesses(self) -> tuple[float, ...]:
        return tuple(self.entries.keys())


@dataclass(frozen=True)
class NormalizedVolumeSeries:
    """Volumes divided by the series mean; entries average to 1 by construction."""

    case_id: str
    entries: Mapping[float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", dict(sorted(self.entries.items())))

    @property
    def thicknesses(self) -> tuple[float, ...]:
        return tuple(self.entries.keys())


def measure_volume(m: RoiMask, spacing: tuple[float, float, float]) -> float:
    """Mask volume in mm^3: set-voxel count times voxel volume."""
    count = m.voxel_count
    if count == 0:
        raise ValueError("cannot measure the volume of an empty mask")
    sx, sy, sz = spacing
    return count * sx * sy * sz


def normalize_series(s: VolumeSeries) -> NormalizedVolumeSeries:
    """Divide each entry by the arithmetic mean of the series."""
    if len(s.entries) < 2:
        raise ValueError(f"case {s.case_id!r}: need >= 2 volumes to normalize, got {len(s.entries)}")
    mean = sum(s.entries.values()) / len(s.entries)
    return NormalizedVolumeSeries(
        case_id=s.case_id,
        entries={t: v / mean for t, v in s.entries.items()},
    )


def t_statistic(m1: float, s1: float, n1: int, m2: float, s2: float, n2: int) -> float:
    """|m1 - m2| / sqrt(s1^2/n1 + s2^2/n2), with the degenerate-variance rule.

    Both spreads zero: equal means give 0, unequal means give +inf (the pair
    can never be compatible).
    """
    if n1 < 2 or n2 < 2:
        raise ValueError(f"need n >= 2 per group, got n1={n1}, n2={n2}")
    if s1 < 0 or s2 < 0:
        raise ValueError(f"standard deviations must be >= 0, got s1={s1}, s2={s2}")
    num = abs(m1 - m2)
    denom = math.sqrt(s1 * s1 / n1 + s2 * s2 / n2)
    if denom == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / denom


def is_compatible(t: float, threshold: float = T_THRESHOLD_DEFAULT) -> bool:
    """Compatible iff t < threshold, strictly (t == threshold is incompatible)."""
    return t < threshold


def welch_df(s1: float, n1: int, s2: float, n2: int) -> float:
    """Welch-Satterthwaite degrees of freedom for the unpooled statistic."""
    a, b = s1 * s1 / n1, s2 * s2 / n2
    denom = a * a / (n1 - 1) + b * b / (n2 - 1)
    if denom == 0.0:
        return float(n1 + n2 - 2)
    return (a + b) ** 2 / denom


def p_from_t(t: float, df: float | None = None, model: str = P_MODEL_NORMAL) -> float:
    """Two-tailed p-value for a nonnegative t (or the +inf sentinel)."""
    if math.isinf(t):
        return 0.0
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if model == P_MODEL_NORMAL:
        return math.erfc(t / math.sqrt(2.0))
    if model == P_MODEL_STUDENT:
        if df is None:
            raise ValueError("Student-t p-values need degrees of freedom")
        from scipy import stats

        return float(2.0 * stats.t.sf(t, df))
    raise ValueError(f"unknown p-value model {model!r}")


def _check_same_thicknesses(cohort: Sequence[NormalizedVolumeSeries]) -> tuple[float, ...]:
    thicknesses = cohort[0].thicknesses
    for series in cohort[1:]:
        if series.thicknesses != thicknesses:
            raise ValueError(
                f"case {series.case_id!r} thicknesses {series.thicknesses} "
                f"differ from {cohort[0].case_id!r}'s {thicknesses}"
            )
    return thicknesses


def thickness_p_matrix(
    cohort: Sequence[NormalizedVolumeSeries],
    model: str = P_MODEL_NORMAL,
) -> tuple[tuple[float, ...], np.ndarray]:
    """Symmetric p-value matrix over thickness pairs, cohort-level statistic.

    Returns (thicknesses in descending order, matrix); the diagonal is 1.0.
    """
    if len(cohort) < 2:
        raise ValueError(f"need >= 2 cases, got {len(cohort)}")
    thicknesses = tuple(sorted(_check_same_thicknesses(cohort), reverse=True))
    n = len(cohort)
    values = np.array([[series.entries[t] for t in thicknesses] for series in cohort])
    means = values.mean(axis=0)
    sds = values.std(axis=0, ddof=1)
    k = len(thicknesses)
    p = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            t_val = t_statistic(means[i], sds[i], n, means[j], sds[j], n)
            df = welch_df(sds[i], n, sds[j], n) if model == P_MODEL_STUDENT else None
            p[i, j] = p[j, i] = p_from_t(t_val, df=df, model=model)
    return thicknesses, p


def volume_trend_report(
    cohort: Sequence[NormalizedVolumeSeries],
) -> list[tuple[float, float, float]]:
    """Per thickness: mean and SD of the percent deviation from average volume.

    Rows are (thickness_mm, mean_pct, sd_pct) sorted by descending thickness.
    """
    if len(cohort) < 2:
        raise ValueError(f"need >= 2 cases, got {len(cohort)}")
    thicknesses = tuple(sorted(_check_same_thicknesses(cohort), reverse=True))
    values = np.array([[series.entries[t] for t in thicknesses] for series in cohort])
    deviation_pct = (values - 1.0) * 100.0
    means = deviation_pct.mean(axis=0)
    sds = deviation_pct.std(axis=0, ddof=1)
    return [(t, float(m), float(s)) for t, m, s in zip(thicknesses, means, sds)]
