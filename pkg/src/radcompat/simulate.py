"""Surrogate reconstruction operators: dose noise, kernel sharpness, slice thickness.

The real scanner chain (projection-domain noise insertion, FBP/iterative
kernels) is proprietary, so each stage is replaced by a first-order image-space
surrogate:

* dose: additive zero-mean Gaussian noise so that total image noise scales as
  sigma_ref / sqrt(dose fraction);
* kernel: a blur/unsharp continuum indexed kappa in [-1, +1] over the kernel
  order, negative kappa blurring in-plane and positive kappa sharpening via an
  unsharp mask;
* thickness: a continuous box filter along z with slab-overlap weights.

All stages are deterministic given (config seed, case id, condition).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .model import KERNEL_NAMES, CaseRecord, ReconCondition, RoiMask, ScalarVolume
from .rng import derive_rng


def _default_kappas() -> tuple[float, ...]:
    return tuple(np.linspace(-1.0, 1.0, len(KERNEL_NAMES)))


@dataclass(frozen=True)
class SimulatorConfig:
    """Parameters of the surrogate operators.

    ref_noise_hu is the noise level attributed to the 100%-dose base image.
    kappa_by_index maps kernel sharpness index to kappa in [-1, +1], monotone
    nondecreasing over the soft-to-sharp kernel order.
    """

    ref_noise_hu: float = 10.0
    kappa_by_index: tuple[float, ...] = None  # type: ignore[assignment]
    blur_sigma_max_mm: float = 1.5
    unsharp_amount_max: float = 1.5
    unsharp_sigma_mm: float = 0.8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kappa_by_index is None:
            object.__setattr__(self, "kappa_by_index", _default_kappas())
        kappas = tuple(float(k) for k in self.kappa_by_index)
        object.__setattr__(self, "kappa_by_index", kappas)
        if len(kappas) != len(KERNEL_NAMES):
            raise ValueError(f"kappa_by_index must have {len(KERNEL_NAMES)} entries, got {len(kappas)}")
        if any(b < a for a, b in zip(kappas, kappas[1:])):
            raise ValueError(f"kappa sequence must be monotone nondecreasing: {kappas}")
        if any(not -1.0 <= k <= 1.0 for k in kappas):
            raise ValueError(f"kappa values must lie in [-1, +1]: {kappas}")
        if not self.ref_noise_hu > 0:
            raise ValueError(f"ref_noise_hu must be > 0, got {self.ref_noise_hu}")
        for name in ("blur_sigma_max_mm", "unsharp_amount_max", "unsharp_sigma_mm"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")


def simulate_dose(v: ScalarVolume, f: float, cfg: SimulatorConfig, case_id: str) -> ScalarVolume:
    """Add the extra noise a dose fraction f would have produced.

    f = 1 is the identity. Otherwise zero-mean Gaussian noise with
    sigma_add = ref_noise * sqrt(1/f - 1) is added, so total noise becomes
    ref_noise / sqrt(f). The noise stream is keyed by (seed, case_id, f) only,
    mirroring a single low-dose acquisition feeding every downstream
    reconstruction.
    """
    if not 0 < f <= 1:
        raise ValueError(f"dose fraction must be in (0, 1], got {f}")
    if f == 1.0:
        return v
    sigma_add = cfg.ref_noise_hu * np.sqrt(1.0 / f - 1.0)
    rng = derive_rng(cfg.seed, "dose", case_id, float(f))
    noisy = v.voxels + rng.normal(0.0, sigma_add, size=v.voxels.shape)
    return v.with_voxels(noisy)


def _inplane_gaussian(values: np.ndarray, sigma_mm: float, spacing: tuple[float, float, float]) -> np.ndarray:
    sx, sy, _ = spacing
    # arrays are (z, y, x); blur acts in-plane only
    return ndimage.gaussian_filter(values, sigma=(0.0, sigma_mm / sy, sigma_mm / sx), mode="reflect")


def simulate_kernel(v: ScalarVolume, kernel_idx: int, cfg: SimulatorConfig) -> ScalarVolume:
    """Apply the blur/unsharp surrogate for one reconstruction kernel.

    kappa < 0 blurs in-plane with sigma = |kappa| * blur_sigma_max_mm;
    kappa > 0 sharpens: out = in + kappa * amount_max * (in - blur(in));
    kappa = 0 is the identity.
    """
    if not 0 <= kernel_idx < len(KERNEL_NAMES):
        raise ValueError(f"kernel index must be in 0..{len(KERNEL_NAMES) - 1}, got {kernel_idx}")
    kappa = cfg.kappa_by_index[kernel_idx]
    if kappa == 0.0:
        return v
    if kappa < 0:
        out = _inplane_gaussian(v.voxels, -kappa * cfg.blur_sigma_max_mm, v.spacing)
    else:
        blurred = _inplane_gaussian(v.voxels, cfg.unsharp_sigma_mm, v.spacing)
        out = v.voxels + kappa * cfg.unsharp_amount_max * (v.voxels - blurred)
    return v.with_voxels(out)


# tolerance for slab-count and slab-overlap arithmetic on floats
_SLAB_EPS = 1e-9


def _slab_weights(nz: int, sz: float, t_mm: float) -> tuple[int, np.ndarray]:
    """Overlap weights of output slabs [j*t, (j+1)*t) against input slices.

    Returns (nz_out, weights) with weights shaped (nz_out, nz), each row
    summing to t_mm.
    """
    if t_mm < sz - _SLAB_EPS:
        raise ValueError(f"cannot resample to {t_mm} mm: thinner than source slices ({sz} mm)")
    extent = nz * sz
    if t_mm > extent + _SLAB_EPS:
        raise ValueError(f"cannot resample to {t_mm} mm: exceeds volume extent ({extent} mm)")
    nz_out = int(np.floor(extent / t_mm + _SLAB_EPS))
    starts = np.arange(nz) * sz
    ends = starts + sz
    weights = np.zeros((nz_out, nz))
    for j in range(nz_out):
        lo, hi = j * t_mm, (j + 1) * t_mm
        overlap = np.minimum(ends, hi) - np.maximum(starts, lo)
        weights[j] = np.clip(overlap, 0.0, None)
    return nz_out, weights


def simulate_thickness(v: ScalarVolume, t_mm: float, cfg: SimulatorConfig | None = None) -> ScalarVolume:
    """Rebuild the volume at slice thickness t_mm (continuous box filter in z).

    Output slice j is the slab average over [j*t, (j+1)*t) with weights
    proportional to geometric overlap; nz_out = floor(nz * sz / t).
    """
    nx, ny, nz = v.dims
    sz = v.spacing[2]
    nz_out, weights = _slab_weights(nz, sz, t_mm)
    flat = v.voxels.reshape(nz, ny * nx)
    out = (weights @ flat) / t_mm
    return ScalarVolume(
        dims=(nx, ny, nz_out),
        spacing=(v.spacing[0], v.spacing[1], float(t_mm)),
        voxels=out.reshape(nz_out, ny, nx),
    )


def resample_mask(m: RoiMask, from_spacing: tuple[float, float, float], t_mm: float) -> RoiMask:
    """Derive the thickness-t mask: slab set iff >= 50% of it overlaps set voxels.

    Ties at exactly 0.5 are broken toward inclusion.
    """
    nx, ny, nz = m.dims
    sz = from_spacing[2]
    nz_out, weights = _slab_weights(nz, sz, t_mm)
    flat = m.bits.reshape(nz, ny * nx).astype(np.float64)
    coverage = (weights @ flat) / t_mm
    bits = coverage >= 0.5 - _SLAB_EPS
    return RoiMask(dims=(nx, ny, nz_out), bits=bits.reshape(nz_out, ny, nx))


def reconstruct(case: CaseRecord, c: ReconCondition, cfg: SimulatorConfig) -> ScalarVolume:
    """Produce the image for one grid condition: dose -> kernel -> thickness."""
    noisy = simulate_dose(case.base_volume, c.dose_fraction, cfg, case.case_id)
    sharpened = simulate_kernel(noisy, c.kernel_idx, cfg)
    return simulate_thickness(sharpened, c.thickness_mm, cfg)
