"""Study orchestration: cases x conditions -> persisted samples and volumes.

Work is chunked per (case, dose, kernel) so the dose noise and kernel pass are
computed once for the 8 thickness variants that share them. Chunks run on a
process pool; every output file's content depends only on (manifest, seed), so
scheduling cannot change results. Re-runs skip already-present samples unless
forced.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureConfig, extract_feature_sample
from .manifest import ManifestCase, StudyManifest, manifest_to_doc
from .model import (
    CaseRecord,
    ConditionGridConfig,
    ReconCondition,
    RoiMask,
    ScalarVolume,
    condition_label,
    enumerate_conditions,
)
from .nrrd import read_nrrd
from .simulate import SimulatorConfig, resample_mask, simulate_dose, simulate_kernel, simulate_thickness
from .store import StudyResultsStore
from .volumetry import measure_volume

THREADS_ENV_VAR = "RADCOMPAT_THREADS"


@dataclass
class RunSummary:
    samples_written: int = 0
    samples_skipped: int = 0
    cases_completed: int = 0
    failures: list[str] = field(default_factory=list)
    failed_case_ids: set[str] = field(default_factory=set)

    @property
    def ok(self) -> bool:
        return not self.failures


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV_VAR, "")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def load_case(case: ManifestCase) -> CaseRecord:
    """Read a manifest case's volume and masks from disk."""
    volume = read_nrrd(case.volume_path)
    if case.spacing_override is not None:
        volume = ScalarVolume(volume.dims, case.spacing_override, volume.voxels)
    masks = {}
    for t, path in case.mask_paths_by_thickness.items():
        masks[t] = read_nrrd(path, as_mask=True)
    if not masks:
        raise ValueError(f"case {case.case_id!r}: no masks given; at least the base-thickness mask is required")
    return CaseRecord(case_id=case.case_id, base_volume=volume, masks_by_thickness=masks)


def prepare_thickness_masks(case: CaseRecord, grid: ConditionGridConfig) -> dict[float, RoiMask]:
    """One mask per grid thickness: supplied ones are validated, the rest are
    derived from the base-thickness mask."""
    spacing = case.base_volume.spacing
    nx, ny, nz = case.base_volume.dims
    sz = spacing[2]
    masks: dict[float, RoiMask] = {}
    for t in grid.thicknesses_mm:
        provided = case.masks_by_thickness.get(t)
        if provided is None:
            base = case.masks_by_thickness.get(sz)
            if base is None:
                raise ValueError(
                    f"case {case.case_id!r}: no mask for thickness {t} mm and no "
                    f"base mask at {sz} mm to derive it from"
                )
            base.check_congruent(case.base_volume)
            derived = resample_mask(base, spacing, t) if t != sz else base
            masks[t] = derived
        else:
            nz_t = int(np.floor(nz * sz / t + 1e-9))
            expected = (nx, ny, nz_t)
            if provided.dims != expected:
                raise ValueError(
                    f"case {case.case_id!r}: mask dims {provided.dims} at thickness {t} mm "
                    f"do not match resampled volume dims {expected}"
                )
            masks[t] = provided
        if masks[t].voxel_count == 0:
            raise ValueError(f"case {case.case_id!r}: mask at thickness {t} mm is empty")
    return masks


@dataclass(frozen=True)
class _Chunk:
    """One (case, dose, kernel) unit of work covering its missing thicknesses."""

    case_id: str
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    voxels: np.ndarray
    masks: dict[float, np.ndarray]
    dose: float
    kernel_idx: int
    thicknesses: tuple[float, ...]
    sim: SimulatorConfig
    features: FeatureConfig
    store_root: str


def _run_chunk(chunk: _Chunk) -> tuple[str, list[str], str | None]:
    """Worker: reconstruct + extract + persist each condition of the chunk.

    Returns (case_id, written labels, error or None).
    """
    try:
        store = StudyResultsStore(chunk.store_root)
        volume = ScalarVolume(chunk.dims, chunk.spacing, chunk.voxels)
        noisy = simulate_dose(volume, chunk.dose, chunk.sim, chunk.case_id)
        sharpened = simulate_kernel(noisy, chunk.kernel_idx, chunk.sim)
        written = []
        for t in chunk.thicknesses:
            condition = ReconCondition(
                thickness_mm=t, kernel_idx=chunk.kernel_idx, dose_fraction=chunk.dose
            )
            resampled = simulate_thickness(sharpened, t, chunk.sim)
            nx, ny, nz_t = resampled.dims
            mask = RoiMask(dims=(nx, ny, nz_t), bits=chunk.masks[t])
            sample = extract_feature_sample(
                resampled, mask, chunk.features, case_id=chunk.case_id, condition=condition
            )
            store.write_sample(sample)
            written.append(condition_label(condition))
        return chunk.case_id, written, None
    except Exception as exc:  # propagated to the summary, run continues
        label = f"{chunk.case_id}/D{chunk.dose}/K{chunk.kernel_idx}"
        return chunk.case_id, [], f"{label}: {type(exc).__name__}: {exc}"


def _case_chunks(
    case: CaseRecord,
    masks: dict[float, RoiMask],
    manifest: StudyManifest,
    store: StudyResultsStore,
    force: bool,
) -> tuple[list[_Chunk], int]:
    """Chunks for the case's missing (dose, kernel, thickness) work."""
    chunks = []
    skipped = 0
    mask_arrays = {t: m.bits for t, m in masks.items()}
    for f in manifest.grid.doses:
        for k in manifest.grid.kernel_indices:
            todo = []
            for t in manifest.grid.thicknesses_mm:
                label = condition_label(ReconCondition(t, k, f))
                if not force and store.has_sample(case.case_id, label):
                    skipped += 1
                else:
                    todo.append(t)
            if todo:
                chunks.append(
                    _Chunk(
                        case_id=case.case_id,
                        dims=case.base_volume.dims,
                        spacing=case.base_volume.spacing,
                        voxels=case.base_volume.voxels,
                        masks={t: mask_arrays[t] for t in todo},
                        dose=f,
                        kernel_idx=k,
                        thicknesses=tuple(todo),
                        sim=manifest.simulator,
                        features=manifest.features,
                        store_root=str(store.root),
                    )
                )
    return chunks, skipped


def run_study(
    manifest: StudyManifest,
    store_root: str,
    threads: int = 1,
    force: bool = False,
    log=None,
) -> RunSummary:
    """Execute the full study described by the manifest into a results store."""
    log = log or (lambda msg: None)
    store = StudyResultsStore(store_root)
    manifest_doc = manifest_to_doc(manifest, store.root)
    store.initialize(manifest_doc, manifest.study_id)
    summary = RunSummary()

    chunks: list[_Chunk] = []
    for mcase in manifest.cases:
        try:
            case = load_case(mcase)
            masks = prepare_thickness_masks(case, manifest.grid)
            volumes = {
                t: measure_volume(m, (case.base_volume.spacing[0], case.base_volume.spacing[1], t))
                for t, m in masks.items()
            }
            if force or not store.volumes_path(case.case_id).exists():
                store.write_volumes(case.case_id, volumes)
            case_chunks, skipped = _case_chunks(case, masks, manifest, store, force)
            chunks.extend(case_chunks)
            summary.samples_skipped += skipped
            log(f"case {case.case_id}: {len(case_chunks)} work chunks, {skipped} samples already present")
        except Exception as exc:
            summary.failures.append(f"{mcase.case_id}: {type(exc).__name__}: {exc}")
            summary.failed_case_ids.add(mcase.case_id)
            log(f"case {mcase.case_id}: FAILED to prepare ({exc})")

    if threads <= 1 or len(chunks) <= 1:
        results = map(_run_chunk, chunks)
        for case_id, written, error in results:
            _absorb(summary, case_id, written, error, log)
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_chunk, chunk) for chunk in chunks]
            for future in as_completed(futures):
                case_id, written, error = future.result()
                _absorb(summary, case_id, written, error, log)

    summary.cases_completed = len(manifest.cases) - len(summary.failed_case_ids)
    return summary


def _absorb(summary: RunSummary, case_id: str, written: list[str], error: str | None, log) -> None:
    summary.samples_written += len(written)
    if error:
        summary.failures.append(error)
        summary.failed_case_ids.add(case_id)
        log(f"chunk failed: {error}")


def grid_labels(grid: ConditionGridConfig) -> list[str]:
    return [condition_label(c) for c in enumerate_conditions(grid)]
