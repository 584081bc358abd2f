"""Study manifests: JSON description of cases, grid, and analysis parameters.

The schema is strict: unknown keys are rejected (silent config typos corrupt
studies) and errors carry the JSON pointer of the offending field. Relative
paths resolve against the manifest's directory.

Schema (all analysis fields optional, defaults below):

    {
      "studyId": "...",
      "cases": [
        {"caseId": "...", "volumePath": "...",
         "maskPathsByThickness": {"0.5": "..."},
         "spacingOverride": [sx, sy, sz]}
      ],
      "grid": {"doses": [...], "kernels": ["I26f", ...], "thicknessesMm": [...]},
      "analysis": {
        "features": {"ng": 32, "minSliceVoxels": 5, "directionMode": "2d-per-slice"},
        "simulator": {"refNoiseHu": 10.0, "kernelKappa": [10 values],
                      "blurSigmaMaxMm": 1.5, "unsharpAmountMax": 1.5,
                      "unsharpSigmaMm": 0.8, "seed": 0},
        "statistics": {"tThreshold": 1.96, "pValueModel": "normal"}
      }
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .features import MODE_2D, MODE_3D, FeatureConfig
from .model import ConditionGridConfig, kernel_index, KERNEL_NAMES
from .simulate import SimulatorConfig
from .volumetry import P_MODEL_NORMAL, P_MODEL_STUDENT, T_THRESHOLD_DEFAULT


class ManifestError(ValueError):
    """Manifest violates the documented schema; message carries a JSON pointer."""


@dataclass(frozen=True)
class StatisticsConfig:
    t_threshold: float = T_THRESHOLD_DEFAULT
    p_value_model: str = P_MODEL_NORMAL

    def __post_init__(self) -> None:
        if not self.t_threshold > 0:
            raise ValueError(f"t threshold must be > 0, got {self.t_threshold}")
        if self.p_value_model not in (P_MODEL_NORMAL, P_MODEL_STUDENT):
            raise ValueError(f"p-value model must be normal or student-t, got {self.p_value_model!r}")


@dataclass(frozen=True)
class ManifestCase:
    case_id: str
    volume_path: Path
    mask_paths_by_thickness: dict[float, Path] = field(default_factory=dict)
    spacing_override: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class StudyManifest:
    study_id: str
    cases: tuple[ManifestCase, ...]
    grid: ConditionGridConfig
    features: FeatureConfig
    simulator: SimulatorConfig
    statistics: StatisticsConfig


def _check_keys(obj: dict, ptr: str, required: tuple[str, ...], optional: tuple[str, ...] = ()) -> None:
    for key in obj:
        if key not in required and key not in optional:
            raise ManifestError(f"{ptr}/{key}: unknown key")
    for key in required:
        if key not in obj:
            raise ManifestError(f"{ptr}: missing required key {key!r}")


def _expect(cond: bool, ptr: str, msg: str) -> None:
    if not cond:
        raise ManifestError(f"{ptr}: {msg}")


def _number(obj, ptr: str) -> float:
    _expect(isinstance(obj, (int, float)) and not isinstance(obj, bool), ptr, "expected a number")
    return float(obj)


def _number_list(obj, ptr: str) -> list[float]:
    _expect(isinstance(obj, list) and obj, ptr, "expected a nonempty array of numbers")
    return [_number(v, f"{ptr}/{k}") for k, v in enumerate(obj)]


def _string(obj, ptr: str) -> str:
    _expect(isinstance(obj, str) and obj, ptr, "expected a nonempty string")
    return obj


def _parse_grid(obj, ptr: str) -> ConditionGridConfig:
    _expect(isinstance(obj, dict), ptr, "expected an object")
    _check_keys(obj, ptr, required=(), optional=("doses", "kernels", "thicknessesMm"))
    kwargs = {}
    if "doses" in obj:
        kwargs["doses"] = tuple(_number_list(obj["doses"], f"{ptr}/doses"))
    if "kernels" in obj:
        names = obj["kernels"]
        _expect(isinstance(names, list) and names, f"{ptr}/kernels", "expected a nonempty array")
        indices = []
        for k, name in enumerate(names):
            try:
                indices.append(kernel_index(_string(name, f"{ptr}/kernels/{k}")))
            except ValueError as exc:
                raise ManifestError(f"{ptr}/kernels/{k}: {exc}") from None
        kwargs["kernel_indices"] = tuple(indices)
    if "thicknessesMm" in obj:
        kwargs["thicknesses_mm"] = tuple(_number_list(obj["thicknessesMm"], f"{ptr}/thicknessesMm"))
    try:
        return ConditionGridConfig(**kwargs)
    except ValueError as exc:
        raise ManifestError(f"{ptr}: {exc}") from None


def _parse_case(obj, ptr: str, base_dir: Path) -> ManifestCase:
    _expect(isinstance(obj, dict), ptr, "expected an object")
    _check_keys(
        obj,
        ptr,
        required=("caseId", "volumePath"),
        optional=("maskPathsByThickness", "spacingOverride"),
    )
    case_id = _string(obj["caseId"], f"{ptr}/caseId")
    volume_path = (base_dir / _string(obj["volumePath"], f"{ptr}/volumePath")).resolve()
    _expect(volume_path.is_file(), f"{ptr}/volumePath", f"file not found: {volume_path}")
    masks: dict[float, Path] = {}
    if "maskPathsByThickness" in obj:
        raw = obj["maskPathsByThickness"]
        _expect(isinstance(raw, dict) and raw, f"{ptr}/maskPathsByThickness", "expected a nonempty object")
        for key, rel in raw.items():
            mask_ptr = f"{ptr}/maskPathsByThickness/{key}"
            try:
                t = float(key)
            except ValueError:
                raise ManifestError(f"{mask_ptr}: key must be a thickness in mm") from None
            _expect(t > 0, mask_ptr, "thickness must be > 0")
            mask_path = (base_dir / _string(rel, mask_ptr)).resolve()
            _expect(mask_path.is_file(), mask_ptr, f"file not found: {mask_path}")
            masks[t] = mask_path
    spacing = None
    if "spacingOverride" in obj:
        values = _number_list(obj["spacingOverride"], f"{ptr}/spacingOverride")
        _expect(len(values) == 3 and all(v > 0 for v in values), f"{ptr}/spacingOverride",
                "expected three positive numbers")
        spacing = tuple(values)
    return ManifestCase(case_id, volume_path, masks, spacing)


def _parse_features(obj, ptr: str) -> FeatureConfig:
    _check_keys(obj, ptr, required=(), optional=("ng", "minSliceVoxels", "directionMode"))
    kwargs = {}
    if "ng" in obj:
        ng = _number(obj["ng"], f"{ptr}/ng")
        _expect(ng == int(ng), f"{ptr}/ng", "expected an integer")
        kwargs["ng"] = int(ng)
    if "minSliceVoxels" in obj:
        v = _number(obj["minSliceVoxels"], f"{ptr}/minSliceVoxels")
        _expect(v == int(v), f"{ptr}/minSliceVoxels", "expected an integer")
        kwargs["min_slice_voxels"] = int(v)
    if "directionMode" in obj:
        mode = _string(obj["directionMode"], f"{ptr}/directionMode")
        _expect(mode in (MODE_2D, MODE_3D), f"{ptr}/directionMode",
                f"expected {MODE_2D!r} or {MODE_3D!r}")
        kwargs["direction_mode"] = mode
    try:
        return FeatureConfig(**kwargs)
    except ValueError as exc:
        raise ManifestError(f"{ptr}: {exc}") from None


def _parse_simulator(obj, ptr: str) -> SimulatorConfig:
    _check_keys(
        obj,
        ptr,
        required=(),
        optional=("refNoiseHu", "kernelKappa", "blurSigmaMaxMm", "unsharpAmountMax",
                  "unsharpSigmaMm", "seed"),
    )
    kwargs = {}
    if "refNoiseHu" in obj:
        kwargs["ref_noise_hu"] = _number(obj["refNoiseHu"], f"{ptr}/refNoiseHu")
    if "kernelKappa" in obj:
        values = _number_list(obj["kernelKappa"], f"{ptr}/kernelKappa")
        _expect(len(values) == len(KERNEL_NAMES), f"{ptr}/kernelKappa",
                f"expected {len(KERNEL_NAMES)} values")
        kwargs["kappa_by_index"] = tuple(values)
    if "blurSigmaMaxMm" in obj:
        kwargs["blur_sigma_max_mm"] = _number(obj["blurSigmaMaxMm"], f"{ptr}/blurSigmaMaxMm")
    if "unsharpAmountMax" in obj:
        kwargs["unsharp_amount_max"] = _number(obj["unsharpAmountMax"], f"{ptr}/unsharpAmountMax")
    if "unsharpSigmaMm" in obj:
        kwargs["unsharp_sigma_mm"] = _number(obj["unsharpSigmaMm"], f"{ptr}/unsharpSigmaMm")
    if "seed" in obj:
        seed = _number(obj["seed"], f"{ptr}/seed")
        _expect(seed == int(seed), f"{ptr}/seed", "expected an integer")
        kwargs["seed"] = int(seed)
    try:
        return SimulatorConfig(**kwargs)
    except ValueError as exc:
        raise ManifestError(f"{ptr}: {exc}") from None


def _parse_statistics(obj, ptr: str) -> StatisticsConfig:
    _check_keys(obj, ptr, required=(), optional=("tThreshold", "pValueModel"))
    kwargs = {}
    if "tThreshold" in obj:
        kwargs["t_threshold"] = _number(obj["tThreshold"], f"{ptr}/tThreshold")
    if "pValueModel" in obj:
        kwargs["p_value_model"] = _string(obj["pValueModel"], f"{ptr}/pValueModel")
    try:
        return StatisticsConfig(**kwargs)
    except ValueError as exc:
        raise ManifestError(f"{ptr}: {exc}") from None


def parse_manifest(doc: dict, base_dir: Path) -> StudyManifest:
    _expect(isinstance(doc, dict), "", "manifest must be a JSON object")
    _check_keys(doc, "", required=("studyId", "cases"), optional=("grid", "analysis"))
    study_id = _string(doc["studyId"], "/studyId")
    _expect(isinstance(doc["cases"], list) and doc["cases"], "/cases", "expected a nonempty array")
    cases = [
        _parse_case(obj, f"/cases/{k}", base_dir) for k, obj in enumerate(doc["cases"])
    ]
    seen: dict[str, int] = {}
    for k, case in enumerate(cases):
        if case.case_id in seen:
            raise ManifestError(
                f"/cases/{k}/caseId: duplicate caseId {case.case_id!r} (first at /cases/{seen[case.case_id]})"
            )
        seen[case.case_id] = k
    grid = _parse_grid(doc.get("grid", {}), "/grid")
    analysis = doc.get("analysis", {})
    _expect(isinstance(analysis, dict), "/analysis", "expected an object")
    _check_keys(analysis, "/analysis", required=(), optional=("features", "simulator", "statistics"))
    features = _parse_features(analysis.get("features", {}), "/analysis/features")
    simulator = _parse_simulator(analysis.get("simulator", {}), "/analysis/simulator")
    statistics = _parse_statistics(analysis.get("statistics", {}), "/analysis/statistics")
    return StudyManifest(
        study_id=study_id,
        cases=tuple(cases),
        grid=grid,
        features=features,
        simulator=simulator,
        statistics=statistics,
    )


def load_manifest(path: str | Path) -> StudyManifest:
    """Parse and fully validate a manifest file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON: {exc}") from exc
    return parse_manifest(doc, path.parent)


def manifest_to_doc(manifest: StudyManifest, base_dir: Path) -> dict:
    """Manifest as a JSON document with paths relative to base_dir."""
    def rel(p: Path) -> str:
        try:
            return str(p.relative_to(base_dir))
        except ValueError:
            return str(p)

    return {
        "studyId": manifest.study_id,
        "cases": [
            {
                "caseId": c.case_id,
                "volumePath": rel(c.volume_path),
                **(
                    {
                        "maskPathsByThickness": {
                            format(t, "g"): rel(p) for t, p in sorted(c.mask_paths_by_thickness.items())
                        }
                    }
                    if c.mask_paths_by_thickness
                    else {}
                ),
                **(
                    {"spacingOverride": list(c.spacing_override)}
                    if c.spacing_override
                    else {}
                ),
            }
            for c in manifest.cases
        ],
        "grid": {
            "doses": list(manifest.grid.doses),
            "kernels": [KERNEL_NAMES[k] for k in manifest.grid.kernel_indices],
            "thicknessesMm": list(manifest.grid.thicknesses_mm),
        },
        "analysis": {
            "features": {
                "ng": manifest.features.ng,
                "minSliceVoxels": manifest.features.min_slice_voxels,
                "directionMode": manifest.features.direction_mode,
            },
            "simulator": {
                "refNoiseHu": manifest.simulator.ref_noise_hu,
                "kernelKappa": list(manifest.simulator.kappa_by_index),
                "blurSigmaMaxMm": manifest.simulator.blur_sigma_max_mm,
                "unsharpAmountMax": manifest.simulator.unsharp_amount_max,
                "unsharpSigmaMm": manifest.simulator.unsharp_sigma_mm,
                "seed": manifest.simulator.seed,
            },
            "statistics": {
                "tThreshold": manifest.statistics.t_threshold,
                "pValueModel": manifest.statistics.p_value_model,
            },
        },
    }


def save_manifest(manifest: StudyManifest, path: str | Path) -> None:
    path = Path(path)
    doc = manifest_to_doc(manifest, path.parent.resolve())
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
