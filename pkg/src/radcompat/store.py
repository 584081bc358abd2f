"""On-disk study results: one JSON file per (case, condition) sample.

Layout under the store root:

    meta.json                      run metadata + manifest snapshot
    samples/<caseId>/<label>.json  FeatureSample records
    volumes/<caseId>.json          per-thickness volumes in mm^3
    cells/map.json                 cached compatibility cells (written on report)
    reports/                       default report output directory

Every report is re-derivable from samples/ and volumes/ alone. All JSON is
written with sorted keys so identical runs produce identical bytes; the only
timestamp lives in meta.json.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator

import numpy as np

from . import __version__
from .features import FEATURE_COUNT, FEATURE_NAMES, FeatureSample
from .model import KERNEL_NAMES, ReconCondition, condition_label, kernel_index


class StoreError(RuntimeError):
    """Results store is missing, corrupt, or belongs to a different run."""


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def condition_to_doc(c: ReconCondition) -> dict:
    return {
        "thicknessMm": c.thickness_mm,
        "kernel": KERNEL_NAMES[c.kernel_idx],
        "doseFraction": c.dose_fraction,
    }


def condition_from_doc(doc: dict) -> ReconCondition:
    return ReconCondition(
        thickness_mm=float(doc["thicknessMm"]),
        kernel_idx=kernel_index(doc["kernel"]),
        dose_fraction=float(doc["doseFraction"]),
    )


def sample_to_doc(sample: FeatureSample) -> dict:
    usable = sample.usable
    return {
        "caseId": sample.case_id,
        "condition": condition_to_doc(sample.condition),
        "label": condition_label(sample.condition),
        "usable": usable,
        "reason": sample.reason,
        "sliceCount": sample.slice_count,
        "featureNames": list(FEATURE_NAMES),
        "perSlice": [[float(v) for v in row] for row in sample.per_slice],
        "mean": [float(v) for v in sample.mean] if usable else None,
        "sd": [float(v) for v in sample.sd] if usable else None,
    }


def sample_from_doc(doc: dict) -> FeatureSample:
    usable = bool(doc["usable"])
    per_slice = np.array(doc["perSlice"], dtype=np.float64).reshape(-1, FEATURE_COUNT)
    nan = np.full(FEATURE_COUNT, np.nan)
    return FeatureSample(
        case_id=doc["caseId"],
        condition=condition_from_doc(doc["condition"]),
        per_slice=per_slice,
        mean=np.array(doc["mean"], dtype=np.float64) if usable else nan,
        sd=np.array(doc["sd"], dtype=np.float64) if usable else nan,
        usable=usable,
        reason=doc.get("reason"),
    )


@dataclass(frozen=True)
class StudyResultsStore:
    root: Path

    def __init__(self, root: str | Path) -> None:
        object.__setattr__(self, "root", Path(root))

    # -- paths ------------------------------------------------------------
    @property
    def meta_path(self) -> Path:
        return self.root / "meta.json"

    def sample_path(self, case_id: str, label: str) -> Path:
        return self.root / "samples" / case_id / f"{label}.json"

    def volumes_path(self, case_id: str) -> Path:
        return self.root / "volumes" / f"{case_id}.json"

    @property
    def cells_path(self) -> Path:
        return self.root / "cells" / "map.json"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    # -- metadata ----------------------------------------------------------
    def initialize(self, manifest_doc: dict, study_id: str) -> None:
        """Create the store, or verify an existing one matches this run."""
        if self.meta_path.exists():
            meta = self.read_meta()
            if meta.get("manifest") != manifest_doc:
                raise StoreError(
                    f"{self.root}: store was produced by a different manifest; "
                    "refusing to resume (use a fresh store or --force after clearing it)"
                )
            return
        self.root.mkdir(parents=True, exist_ok=True)
        meta = {
            "studyId": study_id,
            "packageVersion": __version__,
            "createdAt": datetime.now(timezone.utc).isoformat(),
            "manifest": manifest_doc,
        }
        self.meta_path.write_text(_dump(meta), encoding="utf-8")

    def read_meta(self) -> dict:
        if not self.meta_path.exists():
            raise StoreError(f"{self.root}: not a results store (missing meta.json)")
        try:
            return json.loads(self.meta_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise StoreError(f"{self.meta_path}: corrupt metadata: {exc}") from exc

    # -- samples -----------------------------------------------------------
    def has_sample(self, case_id: str, label: str) -> bool:
        return self.sample_path(case_id, label).exists()

    def write_sample(self, sample: FeatureSample) -> None:
        path = self.sample_path(sample.case_id, condition_label(sample.condition))
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(_dump(sample_to_doc(sample)), encoding="utf-8")

    def read_sample(self, case_id: str, label: str) -> FeatureSample:
        path = self.sample_path(case_id, label)
        try:
            return sample_from_doc(json.loads(path.read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise StoreError(f"missing sample record: {path}") from None
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise StoreError(f"corrupt sample record {path}: {exc}") from exc

    def iter_samples(self) -> Iterator[FeatureSample]:
        samples_dir = self.root / "samples"
        if not samples_dir.is_dir():
            return
        for case_dir in sorted(samples_dir.iterdir()):
            if not case_dir.is_dir():
                continue
            for path in sorted(case_dir.glob("*.json")):
                yield self.read_sample(case_dir.name, path.stem)

    # -- volumes -----------------------------------------------------------
    def write_volumes(self, case_id: str, volumes_mm3: dict[float, float]) -> None:
        path = self.volumes_path(case_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = {
            "caseId": case_id,
            "volumesMm3": {format(t, "g"): float(v) for t, v in sorted(volumes_mm3.items())},
        }
        path.write_text(_dump(doc), encoding="utf-8")

    def read_volumes(self, case_id: str) -> dict[float, float]:
        path = self.volumes_path(case_id)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            return {float(t): float(v) for t, v in doc["volumesMm3"].items()}
        except FileNotFoundError:
            raise StoreError(f"missing volume record: {path}") from None
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise StoreError(f"corrupt volume record {path}: {exc}") from exc

    def iter_volume_cases(self) -> list[str]:
        volumes_dir = self.root / "volumes"
        if not volumes_dir.is_dir():
            return []
        return sorted(p.stem for p in volumes_dir.glob("*.json"))

    # -- cell cache ----------------------------------------------------------
    def write_cells(self, doc: dict) -> None:
        self.cells_path.parent.mkdir(parents=True, exist_ok=True)
        self.cells_path.write_text(_dump(doc), encoding="utf-8")

    def read_cells(self) -> dict | None:
        if not self.cells_path.exists():
            return None
        try:
            return json.loads(self.cells_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise StoreError(f"{self.cells_path}: corrupt cell cache: {exc}") from exc

    # -- completeness --------------------------------------------------------
    def missing_samples(
        self, case_ids: list[str], labels: list[str]
    ) -> list[tuple[str, str]]:
        return [
            (case_id, label)
            for case_id in case_ids
            for label in labels
            if not self.has_sample(case_id, label)
        ]
