"""radcompat: reconstruction-condition compatibility analysis for lung-nodule
volumetry and texture features.

The package simulates a dose x kernel x slice-thickness reconstruction grid
with surrogate operators, extracts 28 intensity/texture features per ROI
slice, and scores condition pairs by the fraction of (feature, case)
comparisons that pass a two-sample t-test.
"""

__version__ = "0.1.0"

from .compat import CohortFeatureData, CompatibilityCell, CompatibilityMap, build_map
from .features import FEATURE_NAMES, FeatureConfig, FeatureSample, extract_feature_sample
from .manifest import StudyManifest, load_manifest
from .model import (
    KERNEL_NAMES,
    CaseRecord,
    ConditionGridConfig,
    ReconCondition,
    RoiMask,
    ScalarVolume,
    condition_label,
    enumerate_conditions,
)
from .nrrd import read_nrrd, write_nrrd
from .phantom import PhantomSpec, generate_cohort, generate_phantom
from .pipeline import run_study
from .simulate import SimulatorConfig, reconstruct, resample_mask
from .store import StudyResultsStore
from .volumetry import measure_volume, normalize_series, t_statistic

__all__ = [
    "KERNEL_NAMES",
    "FEATURE_NAMES",
    "CaseRecord",
    "CohortFeatureData",
    "CompatibilityCell",
    "CompatibilityMap",
    "ConditionGridConfig",
    "FeatureConfig",
    "FeatureSample",
    "PhantomSpec",
    "ReconCondition",
    "RoiMask",
    "ScalarVolume",
    "SimulatorConfig",
    "StudyManifest",
    "StudyResultsStore",
    "build_map",
    "condition_label",
    "enumerate_conditions",
    "extract_feature_sample",
    "generate_cohort",
    "generate_phantom",
    "load_manifest",
    "measure_volume",
    "normalize_series",
    "read_nrrd",
    "reconstruct",
    "resample_mask",
    "run_study",
    "t_statistic",
    "write_nrrd",
    "__version__",
]
