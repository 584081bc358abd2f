from __future__ import annotations

import numpy as np
import pytest

from radcompat.model import (
    KERNEL_NAMES,
    ConditionGridConfig,
    ReconCondition,
    RoiMask,
    ScalarVolume,
    condition_label,
    enumerate_conditions,
    kernel_index,
    sort_conditions,
)


def test_default_grid_has_320_conditions():
    conditions = enumerate_conditions(ConditionGridConfig())
    assert len(conditions) == 320
    assert len(set(conditions)) == 320


def test_singleton_grid():
    grid = ConditionGridConfig(doses=(0.5,), kernel_indices=(3,), thicknesses_mm=(2.0,))
    assert enumerate_conditions(grid) == [ReconCondition(2.0, 3, 0.5)]


def test_small_grid_enumeration_order():
    grid = ConditionGridConfig(
        doses=(0.25, 1.0), kernel_indices=(0, 6, 9), thicknesses_mm=(0.6, 5.0)
    )
    conditions = enumerate_conditions(grid)
    assert len(conditions) == 12
    # first combines the thickest slice, softest kernel, highest dose
    assert conditions[0] == ReconCondition(5.0, 0, 1.0)
    # hand-enumerated Cartesian product in canonical order
    expected = [
        ReconCondition(t, k, f)
        for t in (5.0, 0.6)
        for k in (0, 6, 9)
        for f in (1.0, 0.25)
    ]
    assert conditions == expected


def test_canonical_order_is_total():
    conditions = enumerate_conditions(ConditionGridConfig())
    shuffled = list(conditions)
    rng = np.random.default_rng(3)
    rng.shuffle(shuffled)
    assert sort_conditions(shuffled) == conditions


def test_empty_axis_rejected():
    with pytest.raises(ValueError, match="empty"):
        ConditionGridConfig(doses=())


def test_duplicate_axis_value_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        ConditionGridConfig(doses=(1.0, 1.0))


@pytest.mark.parametrize(
    "condition,label",
    [
        (ReconCondition(1.0, kernel_index("B50f"), 1.0), "T1_KB50f_D100"),
        (ReconCondition(0.6, kernel_index("B70f"), 0.125), "T0.6_KB70f_D12.5"),
        (ReconCondition(5.0, kernel_index("I26f"), 1.0), "T5_KI26f_D100"),
        (ReconCondition(0.75, kernel_index("B50f"), 1.0), "T0.75_KB50f_D100"),
    ],
)
def test_condition_labels(condition, label):
    assert condition_label(condition) == label


def test_labels_injective_over_default_grid():
    conditions = enumerate_conditions(ConditionGridConfig())
    labels = {condition_label(c) for c in conditions}
    assert len(labels) == len(conditions)


def test_kernel_order_matches_sharpness_axis():
    assert KERNEL_NAMES == ("I26f", "I31f", "B31f", "I40f", "B40f", "I50f", "B50f", "I70f", "B60f", "B70f")
    assert kernel_index("I26f") == 0
    assert kernel_index("B70f") == 9
    with pytest.raises(ValueError, match="unknown kernel"):
        kernel_index("B80f")


def test_scalar_volume_validation():
    vol = ScalarVolume((2, 2, 2), (1.0, 1.0, 1.0), np.arange(8, dtype=float))
    assert vol.voxels[1, 1, 1] == 7.0
    assert not vol.voxels.flags.writeable
    with pytest.raises(ValueError, match="voxel count"):
        ScalarVolume((2, 2, 2), (1.0, 1.0, 1.0), np.arange(7, dtype=float))
    with pytest.raises(ValueError, match="finite"):
        ScalarVolume((2, 2, 2), (1.0, 1.0, 1.0), np.array([np.nan] + [0.0] * 7))
    with pytest.raises(ValueError, match="spacing"):
        ScalarVolume((2, 2, 2), (1.0, 0.0, 1.0), np.arange(8, dtype=float))


def test_roi_mask_validation_and_congruence():
    mask = RoiMask((3, 3, 1), np.array([1, 1, 1, 1, 0, 0, 0, 0, 0]))
    assert mask.voxel_count == 4
    vol = ScalarVolume((3, 3, 1), (1.0, 1.0, 1.0), np.zeros(9))
    mask.check_congruent(vol)
    other = ScalarVolume((3, 3, 2), (1.0, 1.0, 1.0), np.zeros(18))
    with pytest.raises(ValueError, match="dims"):
        mask.check_congruent(other)
    with pytest.raises(ValueError, match="0/1"):
        RoiMask((3, 1, 1), np.array([0, 1, 2]))


def test_condition_validation():
    with pytest.raises(ValueError, match="dose"):
        ReconCondition(1.0, 0, 0.0)
    with pytest.raises(ValueError, match="kernel"):
        ReconCondition(1.0, 10, 1.0)
    with pytest.raises(ValueError, match="thickness"):
        ReconCondition(0.0, 0, 1.0)
