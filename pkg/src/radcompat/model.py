"""Shared domain types: volumes, masks, reconstruction conditions, the condition grid.

Voxel data is stored as numpy arrays of shape (nz, ny, nx) in C order, so the
flat layout is row-major with x fastest. All types are immutable after
construction; arrays are marked read-only so instances can be shared across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

# Reconstruction kernels ordered from softest to sharpest. The index into this
# tuple is the kernel sharpness index used throughout.
KERNEL_NAMES: tuple[str, ...] = (
    "I26f", "I31f", "B31f", "I40f", "B40f", "I50f", "B50f", "I70f", "B60f", "B70f",
)

DEFAULT_DOSES: tuple[float, ...] = (1.0, 0.5, 0.25, 0.125)
DEFAULT_THICKNESSES_MM: tuple[float, ...] = (0.6, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0)


def kernel_index(name: str) -> int:
    """Sharpness index of a kernel name; raises ValueError for unknown names."""
    try:
        return KERNEL_NAMES.index(name)
    except ValueError:
        raise ValueError(f"unknown kernel name {name!r}; expected one of {KERNEL_NAMES}") from None


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ScalarVolume:
    """3-D scalar image with anisotropic voxel spacing.

    dims is (nx, ny, nz); spacing is (sx, sy, sz) in millimeters; voxels is a
    float64 array of shape (nz, ny, nx).
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    voxels: np.ndarray

    def __post_init__(self) -> None:
        nx, ny, nz = self.dims
        if min(nx, ny, nz) < 1:
            raise ValueError(f"dims must be positive, got {self.dims}")
        if len(self.spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in self.spacing):
            raise ValueError(f"spacing components must be finite and > 0, got {self.spacing}")
        arr = np.asarray(self.voxels, dtype=np.float64)
        if arr.size != nx * ny * nz:
            raise ValueError(f"voxel count {arr.size} != nx*ny*nz = {nx * ny * nz}")
        arr = arr.reshape(nz, ny, nx)
        if not np.isfinite(arr).all():
            raise ValueError("volume intensities must all be finite")
        object.__setattr__(self, "dims", (int(nx), int(ny), int(nz)))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "voxels", _as_readonly(arr))

    @property
    def extent_mm(self) -> tuple[float, float, float]:
        return tuple(n * s for n, s in zip(self.dims, self.spacing))

    def with_voxels(self, voxels: np.ndarray) -> "ScalarVolume":
        return ScalarVolume(self.dims, self.spacing, voxels)


@dataclass(frozen=True)
class RoiMask:
    """Binary mask congruent with a companion ScalarVolume.

    bits is a bool array of shape (nz, ny, nx).
    """

    dims: tuple[int, int, int]
    bits: np.ndarray

    def __post_init__(self) -> None:
        nx, ny, nz = self.dims
        if min(nx, ny, nz) < 1:
            raise ValueError(f"dims must be positive, got {self.dims}")
        arr = np.asarray(self.bits)
        if arr.dtype != np.bool_:
            if not np.isin(arr, (0, 1)).all():
                raise ValueError("mask payload must contain only 0/1 values")
            arr = arr.astype(bool)
        if arr.size != nx * ny * nz:
            raise ValueError(f"mask bit count {arr.size} != nx*ny*nz = {nx * ny * nz}")
        object.__setattr__(self, "dims", (int(nx), int(ny), int(nz)))
        object.__setattr__(self, "bits", _as_readonly(arr.reshape(nz, ny, nx)))

    @property
    def voxel_count(self) -> int:
        return int(self.bits.sum())

    def check_congruent(self, volume: ScalarVolume) -> None:
        """Raise unless this mask matches the volume's grid."""
        if self.dims != volume.dims:
            raise ValueError(f"mask dims {self.dims} do not match volume dims {volume.dims}")


@dataclass(frozen=True, order=True)
class ReconCondition:
    """One point of the reconstruction grid: (thickness, kernel, dose).

    Field order matches the canonical sort: thickness descending, kernel
    softest-to-sharpest, dose descending (see sort_key).
    """

    thickness_mm: float
    kernel_idx: int
    dose_fraction: float

    def __post_init__(self) -> None:
        if not 0 < self.dose_fraction <= 1:
            raise ValueError(f"dose fraction must be in (0, 1], got {self.dose_fraction}")
        if not 0 <= self.kernel_idx < len(KERNEL_NAMES):
            raise ValueError(f"kernel index must be in 0..{len(KERNEL_NAMES) - 1}, got {self.kernel_idx}")
        if not self.thickness_mm > 0:
            raise ValueError(f"thickness must be > 0, got {self.thickness_mm}")

    @property
    def kernel_name(self) -> str:
        return KERNEL_NAMES[self.kernel_idx]

    def sort_key(self) -> tuple[float, int, float]:
        return (-self.thickness_mm, self.kernel_idx, -self.dose_fraction)


@dataclass(frozen=True)
class ConditionGridConfig:
    """Admissible values per axis; the grid is their Cartesian product."""

    doses: tuple[float, ...] = DEFAULT_DOSES
    kernel_indices: tuple[int, ...] = tuple(range(len(KERNEL_NAMES)))
    thicknesses_mm: tuple[float, ...] = DEFAULT_THICKNESSES_MM

    def __post_init__(self) -> None:
        for axis, values in (
            ("doses", self.doses),
            ("kernels", self.kernel_indices),
            ("thicknessesMm", self.thicknesses_mm),
        ):
            if len(values) == 0:
                raise ValueError(f"condition grid axis {axis!r} is empty")
            if len(set(values)) != len(values):
                raise ValueError(f"condition grid axis {axis!r} has duplicate values: {values}")
        if not all(0 < f <= 1 for f in self.doses):
            raise ValueError(f"doses must lie in (0, 1], got {self.doses}")
        if not all(0 <= k < len(KERNEL_NAMES) for k in self.kernel_indices):
            raise ValueError(f"kernel indices must lie in 0..{len(KERNEL_NAMES) - 1}, got {self.kernel_indices}")
        if not all(t > 0 for t in self.thicknesses_mm):
            raise ValueError(f"thicknesses must be > 0, got {self.thicknesses_mm}")
        object.__setattr__(self, "doses", tuple(float(f) for f in self.doses))
        object.__setattr__(self, "kernel_indices", tuple(int(k) for k in self.kernel_indices))
        object.__setattr__(self, "thicknesses_mm", tuple(float(t) for t in self.thicknesses_mm))

    @property
    def size(self) -> int:
        return len(self.doses) * len(self.kernel_indices) * len(self.thicknesses_mm)


def enumerate_conditions(grid: ConditionGridConfig) -> list[ReconCondition]:
    """All grid conditions in canonical order.

    The order is thickness-major descending, then kernel from softest to
    sharpest, then dose descending, so the first condition combines the
    thickest slice, softest kernel, and highest dose.
    """
    out = []
    for t in sorted(grid.thicknesses_mm, reverse=True):
        for k in sorted(grid.kernel_indices):
            for f in sorted(grid.doses, reverse=True):
                out.append(ReconCondition(thickness_mm=t, kernel_idx=k, dose_fraction=f))
    return out


def _fmt_num(x: float) -> str:
    return format(float(x), "g")


def condition_label(c: ReconCondition) -> str:
    """Compact unique label, e.g. (1.0, B50f, 100%) -> 'T1_KB50f_D100'."""
    return f"T{_fmt_num(c.thickness_mm)}_K{c.kernel_name}_D{_fmt_num(c.dose_fraction * 100)}"


@dataclass(frozen=True)
class CaseRecord:
    """One case: base image plus the per-thickness reference masks.

    masks_by_thickness maps slice thickness in mm to the mask drawn on (or
    derived for) that thickness. At minimum it holds the mask at the base
    spacing's sz; thicker entries are added by the pipeline.
    """

    case_id: str
    base_volume: ScalarVolume
    masks_by_thickness: Mapping[float, RoiMask] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.case_id:
            raise ValueError("caseId must be nonempty")
        object.__setattr__(
            self, "masks_by_thickness", dict(sorted(self.masks_by_thickness.items()))
        )

    @property
    def base_mask(self) -> RoiMask:
        sz = self.base_volume.spacing[2]
        try:
            return self.masks_by_thickness[sz]
        except KeyError:
            raise KeyError(f"case {self.case_id!r} has no mask at base thickness {sz} mm") from None

    def iter_masks(self) -> Iterator[tuple[float, RoiMask]]:
        return iter(self.masks_by_thickness.items())


def validate_case_masks(case: CaseRecord, expected_dims: Mapping[float, tuple[int, int, int]]) -> None:
    """Check every per-thickness mask against the dims of the matching resampled volume."""
    for t, dims in expected_dims.items():
        mask = case.masks_by_thickness.get(t)
        if mask is None:
            raise ValueError(f"case {case.case_id!r}: missing mask for thickness {t} mm")
        if mask.dims != dims:
            raise ValueError(
                f"case {case.case_id!r}: mask dims {mask.dims} at thickness {t} mm "
                f"do not match resampled volume dims {dims}"
            )


def sort_conditions(conditions: Sequence[ReconCondition]) -> list[ReconCondition]:
    """Sort into canonical order (same total order as enumerate_conditions)."""
    return sorted(conditions, key=ReconCondition.sort_key)
