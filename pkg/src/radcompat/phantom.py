"""Synthetic nodule phantoms so the pipeline runs without clinical data.

A phantom is a background-HU grid with an analytic sphere/ellipsoid nodule.
The mask is the exact inside-test of voxel centers, so it stays a perfect
reference; partial-volume effects enter only through the thickness simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .model import CaseRecord, RoiMask, ScalarVolume
from .rng import derive_rng, derive_seed


@dataclass(frozen=True)
class GaussianFieldTexture:
    """Stationary random texture: white noise filtered to a correlation length,
    rescaled to the requested standard deviation."""

    correlation_length_mm: float = 3.0
    amplitude_hu: float = 40.0

    def __post_init__(self) -> None:
        if not self.correlation_length_mm > 0:
            raise ValueError(f"correlation length must be > 0, got {self.correlation_length_mm}")
        if self.amplitude_hu < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude_hu}")


@dataclass(frozen=True)
class UniformTexture:
    """No texture: the nodule is exactly the peak HU everywhere."""


@dataclass(frozen=True)
class PhantomSpec:
    shape: str = "sphere"  # sphere | ellipsoid
    radii_mm: tuple[float, float, float] = (6.0, 6.0, 6.0)
    center_mm: tuple[float, float, float] | None = None  # None = grid center
    background_hu: float = -800.0
    nodule_peak_hu: float = 40.0
    texture: UniformTexture | GaussianFieldTexture = GaussianFieldTexture()
    base_spacing: tuple[float, float, float] = (0.5, 0.5, 0.5)
    dims: tuple[int, int, int] = (64, 64, 64)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.shape not in ("sphere", "ellipsoid"):
            raise ValueError(f"shape must be 'sphere' or 'ellipsoid', got {self.shape!r}")
        if self.shape == "sphere" and len(set(self.radii_mm)) != 1:
            raise ValueError(f"sphere requires equal radii, got {self.radii_mm}")
        if not all(r > 0 for r in self.radii_mm):
            raise ValueError(f"radii must be > 0, got {self.radii_mm}")
        if not all(s > 0 for s in self.base_spacing):
            raise ValueError(f"spacing must be > 0, got {self.base_spacing}")
        if not all(n >= 1 for n in self.dims):
            raise ValueError(f"dims must be positive, got {self.dims}")

    @property
    def resolved_center_mm(self) -> tuple[float, float, float]:
        if self.center_mm is not None:
            return self.center_mm
        return tuple(n * s / 2 for n, s in zip(self.dims, self.base_spacing))

    def validate_fit(self) -> None:
        """Nodule must sit inside the grid with >= 2 voxels of margin per axis."""
        center = self.resolved_center_mm
        for axis, (c, r, n, s) in enumerate(zip(center, self.radii_mm, self.dims, self.base_spacing)):
            if c - r < 2 * s or c + r > (n - 2) * s:
                raise ValueError(
                    f"nodule exceeds grid on axis {axis}: center {c} mm, radius {r} mm, "
                    f"extent {n * s} mm (needs 2-voxel margin)"
                )


def _voxel_centers(n: int, s: float) -> np.ndarray:
    return (np.arange(n) + 0.5) * s


def _inside(spec: PhantomSpec) -> np.ndarray:
    cx, cy, cz = spec.resolved_center_mm
    rx, ry, rz = spec.radii_mm
    nx, ny, nz = spec.dims
    sx, sy, sz = spec.base_spacing
    x = (_voxel_centers(nx, sx) - cx) / rx
    y = (_voxel_centers(ny, sy) - cy) / ry
    z = (_voxel_centers(nz, sz) - cz) / rz
    return (
        z[:, None, None] ** 2 + y[None, :, None] ** 2 + x[None, None, :] ** 2
    ) <= 1.0


def _gaussian_field(spec: PhantomSpec, texture: GaussianFieldTexture) -> np.ndarray:
    rng = derive_rng(spec.seed, "texture")
    nx, ny, nz = spec.dims
    white = rng.standard_normal((nz, ny, nx))
    sigma_vox = tuple(texture.correlation_length_mm / s for s in reversed(spec.base_spacing))
    field = ndimage.gaussian_filter(white, sigma=sigma_vox, mode="reflect")
    sd = field.std()
    if sd == 0.0:
        return np.zeros_like(field)
    return (field - field.mean()) / sd * texture.amplitude_hu


def generate_phantom(spec: PhantomSpec) -> tuple[ScalarVolume, RoiMask]:
    """Deterministic phantom volume + exact voxel-center mask for one spec."""
    spec.validate_fit()
    inside = _inside(spec)
    values = np.full(inside.shape, spec.background_hu, dtype=np.float64)
    nodule = np.full(inside.shape, spec.nodule_peak_hu, dtype=np.float64)
    if isinstance(spec.texture, GaussianFieldTexture) and spec.texture.amplitude_hu > 0:
        nodule = nodule + _gaussian_field(spec, spec.texture)
    values[inside] = nodule[inside]
    volume = ScalarVolume(dims=spec.dims, spacing=spec.base_spacing, voxels=values)
    mask = RoiMask(dims=spec.dims, bits=inside)
    return volume, mask


@dataclass(frozen=True)
class CohortJitter:
    """Per-case variation ranges applied when generating a cohort."""

    radius_fraction: float = 0.15
    center_mm: float = 2.0
    amplitude_fraction: float = 0.25

    def __post_init__(self) -> None:
        for name in ("radius_fraction", "center_mm", "amplitude_fraction"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


def _jittered_spec(base: PhantomSpec, jitter: CohortJitter, seed: int, index: int) -> PhantomSpec:
    rng = derive_rng(seed, "cohort", index)
    scale = 1.0 + jitter.radius_fraction * rng.uniform(-1.0, 1.0)
    radii = tuple(r * scale for r in base.radii_mm)
    offsets = jitter.center_mm * rng.uniform(-1.0, 1.0, size=3)
    center = tuple(c + o for c, o in zip(base.resolved_center_mm, offsets))
    texture = base.texture
    if isinstance(texture, GaussianFieldTexture):
        amp = texture.amplitude_hu * (1.0 + jitter.amplitude_fraction * rng.uniform(-1.0, 1.0))
        texture = replace(texture, amplitude_hu=amp)
    # One texture realization per cohort: zero jitter must yield identical
    # cases; nonzero center/radius jitter samples different field regions.
    return replace(
        base,
        radii_mm=radii,
        center_mm=center,
        texture=texture,
        seed=derive_seed(seed, "field"),
    )


def generate_cohort(
    n: int,
    base_spec: PhantomSpec,
    jitter: CohortJitter | None = None,
    seed: int = 0,
) -> list[CaseRecord]:
    """n jittered cases, deterministic per (seed, index).

    Each case carries its base mask keyed by the base slice spacing; thicker
    masks are derived later by the pipeline.
    """
    if n < 1:
        raise ValueError(f"cohort size must be >= 1, got {n}")
    jitter = jitter if jitter is not None else CohortJitter()
    cases = []
    for i in range(n):
        spec = _jittered_spec(base_spec, jitter, seed, i)
        try:
            spec.validate_fit()
        except ValueError as exc:
            raise ValueError(f"case index {i}: jitter produced an invalid spec: {exc}") from exc
        volume, mask = generate_phantom(spec)
        case_id = f"case{i + 1:03d}"
        cases.append(
            CaseRecord(
                case_id=case_id,
                base_volume=volume,
                masks_by_thickness={spec.base_spacing[2]: mask},
            )
        )
    return cases
