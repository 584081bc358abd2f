"""Command-line entry point: phantom generation, study runs, report emission.

Exit codes: 0 success, 1 partial failure (some cases/chunks failed), 2 usage
or configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .manifest import (
    ManifestCase,
    ManifestError,
    StatisticsConfig,
    StudyManifest,
    load_manifest,
    save_manifest,
)
from .features import FeatureConfig
from .model import ConditionGridConfig, kernel_index
from .nrrd import NrrdFormatError, write_nrrd
from .phantom import CohortJitter, GaussianFieldTexture, PhantomSpec, UniformTexture, generate_cohort
from .pipeline import default_threads, run_study
from .reports import report_features, report_map, report_marginal, report_volumes
from .simulate import SimulatorConfig
from .store import StoreError, StudyResultsStore

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return n


def _float_list(value: str) -> tuple[float, ...]:
    return tuple(float(v) for v in value.split(","))


def _str_list(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radcompat",
        description="Reconstruction-condition compatibility studies on synthetic or exported CT nodules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_phantom = sub.add_parser("phantom", help="generate a synthetic cohort plus a ready-to-run manifest")
    p_phantom.add_argument("--out", required=True, type=Path, help="output directory")
    p_phantom.add_argument("--cohort", type=_positive_int, default=23, help="number of cases (default 23)")
    p_phantom.add_argument("--seed", type=int, default=0, help="cohort seed (default 0)")
    p_phantom.add_argument("--dims", type=_positive_int, nargs=3, default=(64, 64, 64),
                           metavar=("NX", "NY", "NZ"), help="grid size (default 64 64 64)")
    p_phantom.add_argument("--spacing", type=float, nargs=3, default=(0.5, 0.5, 0.5),
                           metavar=("SX", "SY", "SZ"), help="voxel spacing in mm (default 0.5)")
    p_phantom.add_argument("--shape", choices=("sphere", "ellipsoid"), default="sphere")
    p_phantom.add_argument("--radii-mm", type=float, nargs=3, default=(6.0, 6.0, 6.0),
                           metavar=("RX", "RY", "RZ"), help="nodule radii in mm (default 6)")
    p_phantom.add_argument("--background-hu", type=float, default=-800.0)
    p_phantom.add_argument("--peak-hu", type=float, default=40.0)
    p_phantom.add_argument("--texture", choices=("uniform", "gaussian"), default="gaussian")
    p_phantom.add_argument("--correlation-mm", type=float, default=3.0, help="texture correlation length")
    p_phantom.add_argument("--amplitude-hu", type=float, default=40.0, help="texture standard deviation")
    p_phantom.add_argument("--radius-jitter", type=float, default=0.15, help="per-case radius fraction")
    p_phantom.add_argument("--center-jitter-mm", type=float, default=2.0)
    p_phantom.add_argument("--amplitude-jitter", type=float, default=0.25)

    p_run = sub.add_parser("run", help="run the full study described by a manifest")
    p_run.add_argument("manifest", type=Path)
    p_run.add_argument("--store", required=True, type=Path, help="results store directory")
    p_run.add_argument("--threads", type=_positive_int, default=None,
                       help=f"worker processes (default: $RADCOMPAT_THREADS or 1)")
    p_run.add_argument("--force", action="store_true", help="recompute samples already in the store")
    p_run.add_argument("--grid-doses", type=_float_list, default=None,
                       help="override grid doses, e.g. 1.0,0.5")
    p_run.add_argument("--grid-kernels", type=_str_list, default=None,
                       help="override grid kernels, e.g. I26f,B50f")
    p_run.add_argument("--grid-thicknesses", type=_float_list, default=None,
                       help="override grid thicknesses in mm, e.g. 5,1,0.6")

    p_report = sub.add_parser("report", help="emit reports from a completed store")
    p_report.add_argument("store", type=Path)
    p_report.add_argument("which", choices=("map", "kernel", "thickness", "dose", "volumes", "features"))
    p_report.add_argument("--format", dest="fmt", choices=("csv", "ppm", "json"), default="csv")
    p_report.add_argument("--out", type=Path, default=None,
                          help="output directory (default: <store>/reports)")
    p_report.add_argument("--order", choices=("canonical", "by-total"), default="canonical",
                          help="map condition ordering (map report only)")
    return parser


def _cmd_phantom(args) -> int:
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.texture == "uniform":
        texture = UniformTexture()
    else:
        texture = GaussianFieldTexture(
            correlation_length_mm=args.correlation_mm, amplitude_hu=args.amplitude_hu
        )
    spec = PhantomSpec(
        shape=args.shape,
        radii_mm=tuple(args.radii_mm) if args.shape == "ellipsoid" else (args.radii_mm[0],) * 3,
        background_hu=args.background_hu,
        nodule_peak_hu=args.peak_hu,
        texture=texture,
        base_spacing=tuple(args.spacing),
        dims=tuple(args.dims),
        seed=args.seed,
    )
    jitter = CohortJitter(
        radius_fraction=args.radius_jitter,
        center_mm=args.center_jitter_mm,
        amplitude_fraction=args.amplitude_jitter,
    )
    cases = generate_cohort(args.cohort, spec, jitter, seed=args.seed)
    manifest_cases = []
    sz = spec.base_spacing[2]
    for case in cases:
        volume_path = out / f"{case.case_id}_volume.nrrd"
        mask_path = out / f"{case.case_id}_mask.nrrd"
        write_nrrd(case.base_volume, volume_path)
        write_nrrd(case.masks_by_thickness[sz], mask_path, mask_spacing=spec.base_spacing)
        manifest_cases.append(
            ManifestCase(
                case_id=case.case_id,
                volume_path=volume_path.resolve(),
                mask_paths_by_thickness={sz: mask_path.resolve()},
            )
        )
    manifest = StudyManifest(
        study_id=f"phantom-cohort-{args.cohort}-seed-{args.seed}",
        cases=tuple(manifest_cases),
        grid=ConditionGridConfig(),
        features=FeatureConfig(),
        simulator=SimulatorConfig(seed=args.seed),
        statistics=StatisticsConfig(),
    )
    manifest_path = out / "manifest.json"
    save_manifest(manifest, manifest_path)
    print(f"wrote {len(cases)} cases and {manifest_path}")
    return EXIT_OK


def _apply_grid_overrides(manifest: StudyManifest, args) -> StudyManifest:
    if args.grid_doses is None and args.grid_kernels is None and args.grid_thicknesses is None:
        return manifest
    grid = manifest.grid
    doses = args.grid_doses if args.grid_doses is not None else grid.doses
    kernels = (
        tuple(kernel_index(k) for k in args.grid_kernels)
        if args.grid_kernels is not None
        else grid.kernel_indices
    )
    thicknesses = (
        args.grid_thicknesses if args.grid_thicknesses is not None else grid.thicknesses_mm
    )
    new_grid = ConditionGridConfig(doses=doses, kernel_indices=kernels, thicknesses_mm=thicknesses)
    return StudyManifest(
        study_id=manifest.study_id,
        cases=manifest.cases,
        grid=new_grid,
        features=manifest.features,
        simulator=manifest.simulator,
        statistics=manifest.statistics,
    )


def _cmd_run(args) -> int:
    manifest = load_manifest(args.manifest)
    manifest = _apply_grid_overrides(manifest, args)
    threads = args.threads if args.threads is not None else default_threads()
    summary = run_study(
        manifest,
        str(args.store),
        threads=threads,
        force=args.force,
        log=lambda msg: print(msg, file=sys.stderr),
    )
    print(
        f"study complete: {summary.samples_written} samples written, "
        f"{summary.samples_skipped} skipped, {len(summary.failures)} failures"
    )
    if summary.failures:
        for failure in summary.failures:
            print(f"  FAILED {failure}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_report(args) -> int:
    store = StudyResultsStore(args.store)
    out_dir = args.out if args.out is not None else store.reports_dir
    ordering = "byTotalCompatibility" if args.order == "by-total" else "canonical"
    if args.which == "map":
        paths = report_map(store, args.fmt, out_dir, ordering)
    elif args.which in ("kernel", "thickness", "dose"):
        paths = report_marginal(store, args.which, args.fmt, out_dir)
    elif args.which == "volumes":
        paths = report_volumes(store, args.fmt, out_dir)
    else:
        paths = report_features(store, args.fmt, out_dir)
    for path in paths:
        print(path)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "phantom":
            return _cmd_phantom(args)
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_report(args)
    except (ManifestError, NrrdFormatError, StoreError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
