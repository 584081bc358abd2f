"""Report emission: CSV tables, P6 PPM heatmaps, JSON documents.

Reports are pure functions of the results store; emitting the same report
twice writes identical bytes. Heatmap pixels ramp linearly from green
(ratio 100) to red (ratio 0); cells with no usable comparison render blue in
PPM and empty in CSV.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .compat import (
    AXES,
    CohortFeatureData,
    CompatibilityMap,
    ORDER_BY_TOTAL,
    ORDER_CANONICAL,
    build_map,
    feature_group_robustness,
    feature_robustness,
    marginal_matrix,
    robustness_table,
)
from .model import (
    KERNEL_NAMES,
    ConditionGridConfig,
    condition_label,
    enumerate_conditions,
    kernel_index,
)
from .store import StoreError, StudyResultsStore, condition_from_doc, condition_to_doc
from .volumetry import (
    NormalizedVolumeSeries,
    P_MODEL_NORMAL,
    T_THRESHOLD_DEFAULT,
    VolumeSeries,
    normalize_series,
    thickness_p_matrix,
    volume_trend_report,
)

MISSING_RGB = (0, 0, 255)  # off the green-red ramp on purpose


def _fmt(x: float) -> str:
    return format(float(x), "g")


# -- store access -----------------------------------------------------------


def grid_from_meta(meta: dict) -> ConditionGridConfig:
    grid = meta["manifest"]["grid"]
    return ConditionGridConfig(
        doses=tuple(grid["doses"]),
        kernel_indices=tuple(kernel_index(k) for k in grid["kernels"]),
        thicknesses_mm=tuple(grid["thicknessesMm"]),
    )


def statistics_from_meta(meta: dict) -> tuple[float, str]:
    stats = meta["manifest"]["analysis"]["statistics"]
    return float(stats["tThreshold"]), str(stats["pValueModel"])


def check_complete(store: StudyResultsStore) -> tuple[list[str], list[str]]:
    """(case ids, condition labels) of a complete store, else StoreError
    listing every missing (case, condition) pair."""
    meta = store.read_meta()
    case_ids = [c["caseId"] for c in meta["manifest"]["cases"]]
    labels = [condition_label(c) for c in enumerate_conditions(grid_from_meta(meta))]
    missing = store.missing_samples(case_ids, labels)
    if missing:
        listing = ", ".join(f"({case}, {label})" for case, label in missing[:20])
        more = f" and {len(missing) - 20} more" if len(missing) > 20 else ""
        raise StoreError(f"store is incomplete; missing samples: {listing}{more}")
    return case_ids, labels


def load_cohort_data(store: StudyResultsStore) -> CohortFeatureData:
    case_ids, labels = check_complete(store)
    samples = [store.read_sample(case_id, label) for case_id in case_ids for label in labels]
    return CohortFeatureData.from_samples(samples)


def load_map(store: StudyResultsStore, ordering: str = ORDER_CANONICAL) -> CompatibilityMap:
    """Compatibility map from the cell cache, computing and caching on demand."""
    threshold, _ = statistics_from_meta(store.read_meta())
    cached = store.read_cells()
    if cached is not None and cached.get("threshold") == threshold:
        cmap = _map_from_cells_doc(cached)
    else:
        data = load_cohort_data(store)
        cmap = build_map(data, ORDER_CANONICAL, threshold)
        store.write_cells(_map_to_cells_doc(cmap, threshold))
    if ordering == ORDER_BY_TOTAL:
        data_order = np.lexsort(
            (np.arange(len(cmap.conditions)), -np.nansum(cmap.ratio, axis=1))
        )
        ix = np.ix_(data_order, data_order)
        return CompatibilityMap(
            conditions=tuple(cmap.conditions[k] for k in data_order),
            ratio=cmap.ratio[ix],
            compatible=cmap.compatible[ix],
            total=cmap.total[ix],
            excluded=cmap.excluded[ix],
            ordering=ORDER_BY_TOTAL,
        )
    if ordering != ORDER_CANONICAL:
        raise ValueError(f"unknown ordering mode {ordering!r}")
    return cmap


def _map_to_cells_doc(cmap: CompatibilityMap, threshold: float) -> dict:
    return {
        "threshold": threshold,
        "conditions": [condition_to_doc(c) for c in cmap.conditions],
        "comparisonsTotal": cmap.comparisons_total,
        "compatible": cmap.compatible.tolist(),
        "total": cmap.total.tolist(),
        "excluded": cmap.excluded.tolist(),
    }


def _map_from_cells_doc(doc: dict) -> CompatibilityMap:
    conditions = tuple(condition_from_doc(d) for d in doc["conditions"])
    compatible = np.array(doc["compatible"], dtype=np.int64)
    total = np.array(doc["total"], dtype=np.int64)
    excluded = np.array(doc["excluded"], dtype=np.int64)
    with np.errstate(invalid="ignore"):
        ratio = np.where(total > 0, 100.0 * compatible / np.maximum(total, 1), np.nan)
    return CompatibilityMap(
        conditions=conditions,
        ratio=ratio,
        compatible=compatible,
        total=total,
        excluded=excluded,
        ordering=ORDER_CANONICAL,
    )


# -- matrix writers -----------------------------------------------------------


def write_matrix_csv(path: Path, labels: list[str], matrix: np.ndarray, decimals: int = 2) -> None:
    rows = ["," + ",".join(labels)]
    for label, row in zip(labels, matrix):
        cells = ["" if np.isnan(v) else f"{v:.{decimals}f}" for v in row]
        rows.append(label + "," + ",".join(cells))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_pvalue_csv(path: Path, labels: list[str], matrix: np.ndarray) -> None:
    rows = ["," + ",".join(labels)]
    for label, row in zip(labels, matrix):
        rows.append(label + "," + ",".join(f"{v:.4g}" for v in row))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def ratio_to_rgb(value: float) -> tuple[int, int, int]:
    if np.isnan(value):
        return MISSING_RGB
    frac = min(100.0, max(0.0, value)) / 100.0
    return (round(255 * (1.0 - frac)), round(255 * frac), 0)


def write_matrix_ppm(path: Path, matrix: np.ndarray) -> None:
    h, w = matrix.shape
    pixels = bytearray()
    for row in matrix:
        for v in row:
            pixels.extend(ratio_to_rgb(v))
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(bytes(pixels))


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- report entry points -------------------------------------------------------


def _nan_to_none(matrix: np.ndarray) -> list:
    return [[None if np.isnan(v) else float(v) for v in row] for row in matrix]


def report_map(store: StudyResultsStore, fmt: str, out_dir: Path, ordering: str = ORDER_CANONICAL) -> list[Path]:
    cmap = load_map(store, ordering)
    labels = [condition_label(c) for c in cmap.conditions]
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path = out_dir / "map.csv"
        write_matrix_csv(path, labels, cmap.ratio)
    elif fmt == "ppm":
        path = out_dir / "map.ppm"
        write_matrix_ppm(path, cmap.ratio)
    elif fmt == "json":
        path = out_dir / "map.json"
        _write_json(
            path,
            {
                "ordering": cmap.ordering,
                "labels": labels,
                "ratioPercent": _nan_to_none(cmap.ratio),
                "compatible": cmap.compatible.tolist(),
                "total": cmap.total.tolist(),
                "excluded": cmap.excluded.tolist(),
                "comparisonsTotal": cmap.comparisons_total,
            },
        )
    else:
        raise ValueError(f"unsupported format {fmt!r} for the map report")
    return [path]


def _marginal_labels(axis: str, values: list) -> list[str]:
    if axis == "kernel":
        return [KERNEL_NAMES[v] for v in values]
    if axis == "dose":
        return [_fmt(v * 100) for v in values]
    return [_fmt(v) for v in values]


def report_marginal(store: StudyResultsStore, axis: str, fmt: str, out_dir: Path) -> list[Path]:
    if axis not in AXES:
        raise ValueError(f"unknown marginal axis {axis!r}")
    cmap = load_map(store, ORDER_CANONICAL)
    values, matrix = marginal_matrix(cmap, axis)
    labels = _marginal_labels(axis, values)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{axis}_matrix"
    if fmt == "csv":
        path = out_dir / f"{stem}.csv"
        write_matrix_csv(path, labels, matrix)
    elif fmt == "ppm":
        path = out_dir / f"{stem}.ppm"
        write_matrix_ppm(path, matrix)
    elif fmt == "json":
        path = out_dir / f"{stem}.json"
        _write_json(path, {"axis": axis, "labels": labels, "ratioPercent": _nan_to_none(matrix)})
    else:
        raise ValueError(f"unsupported format {fmt!r} for the {axis} report")
    return [path]


def _load_normalized_series(store: StudyResultsStore) -> list[NormalizedVolumeSeries]:
    case_ids = store.iter_volume_cases()
    if not case_ids:
        raise StoreError("store has no volume records")
    series = []
    for case_id in case_ids:
        volumes = store.read_volumes(case_id)
        series.append(normalize_series(VolumeSeries(case_id=case_id, entries=volumes)))
    return series


def report_volumes(store: StudyResultsStore, fmt: str, out_dir: Path) -> list[Path]:
    """Per-thickness deviation table plus the thickness p-value matrix."""
    _, p_model = statistics_from_meta(store.read_meta())
    cohort = _load_normalized_series(store)
    trend = volume_trend_report(cohort)
    thicknesses, p_matrix = thickness_p_matrix(cohort, model=p_model)
    labels = [_fmt(t) for t in thicknesses]
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        trend_path = out_dir / "volume_trend.csv"
        rows = ["thicknessMm,meanDeviationPct,sdDeviationPct"]
        rows += [f"{_fmt(t)},{m:.2f},{s:.2f}" for t, m, s in trend]
        trend_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        p_path = out_dir / "volume_p_matrix.csv"
        write_pvalue_csv(p_path, labels, p_matrix)
        return [trend_path, p_path]
    if fmt == "json":
        path = out_dir / "volumes.json"
        _write_json(
            path,
            {
                "pValueModel": p_model,
                "trend": [
                    {"thicknessMm": t, "meanDeviationPct": m, "sdDeviationPct": s}
                    for t, m, s in trend
                ],
                "thicknesses": list(thicknesses),
                "pMatrix": [[float(v) for v in row] for row in p_matrix],
            },
        )
        return [path]
    raise ValueError(f"unsupported format {fmt!r} for the volumes report")


def report_features(store: StudyResultsStore, fmt: str, out_dir: Path) -> list[Path]:
    """Per-feature robustness percentages per axis, plus group averages."""
    threshold, _ = statistics_from_meta(store.read_meta())
    data = load_cohort_data(store)
    per_feature = feature_robustness(data, threshold)
    groups = feature_group_robustness(per_feature)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        paths = []
        for axis in AXES:
            path = out_dir / f"feature_robustness_{axis}.csv"
            rows = ["feature,compatiblePct"]
            for name, pct in robustness_table(per_feature, axis):
                rows.append(f"{name}," + ("" if np.isnan(pct) else f"{pct:.2f}"))
            path.write_text("\n".join(rows) + "\n", encoding="utf-8")
            paths.append(path)
        group_path = out_dir / "feature_group_robustness.csv"
        rows = ["group," + ",".join(AXES)]
        for group, by_axis in groups.items():
            rows.append(group + "," + ",".join(f"{by_axis[a]:.2f}" for a in AXES))
        group_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        paths.append(group_path)
        return paths
    if fmt == "json":
        path = out_dir / "features.json"
        _write_json(
            path,
            {
                "perFeature": {
                    axis: {
                        name: (None if np.isnan(pct) else pct)
                        for name, pct in robustness_table(per_feature, axis)
                    }
                    for axis in AXES
                },
                "groups": groups,
            },
        )
        return [path]
    raise ValueError(f"unsupported format {fmt!r} for the features report")
