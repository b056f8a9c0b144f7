import numpy as np
import pytest

from detmon.errors import EmptyInput
from detmon.labeling import LabelingConfig, assign_labels, percentile
from detmon.model import FAILURE, SUCCESS


TEN = [round(0.1 * i, 1) for i in range(1, 11)]  # 0.1 .. 1.0


def test_percentile_nearest_rank_fixture():
    # ceil(0.2 * 10) = 2nd sorted value
    assert percentile(TEN, 20) == 0.2


def test_percentile_single_value():
    for k in (1, 25, 50, 99):
        assert percentile([0.37], k) == 0.37


def test_percentile_constant_list():
    assert percentile([0.4] * 7, 33) == 0.4


def test_percentile_unsorted_input():
    assert percentile([0.9, 0.1, 0.5], 34) == 0.5  # ceil(1.02) = 2nd smallest


def test_percentile_empty():
    with pytest.raises(EmptyInput):
        percentile([], 20)


def test_percentile_rank_never_overflows():
    assert percentile(TEN, 99.9999) == 1.0
    assert percentile(TEN, 0.0001) == 0.1


def test_config_needs_exactly_one_mode():
    with pytest.raises(ValueError):
        LabelingConfig()
    with pytest.raises(ValueError):
        LabelingConfig(percentile=20, absolute=0.5)
    LabelingConfig(percentile=20)
    LabelingConfig(absolute=0.5)


def test_absolute_labels_and_strict_boundary():
    maps = [("a", 0.3), ("b", 0.5), ("c", 0.7)]
    lam, labels = assign_labels(maps, LabelingConfig(absolute=0.5))
    assert lam == 0.5
    assert [l.label for l in labels] == [FAILURE, SUCCESS, SUCCESS]


def test_percentile_labels_fixture():
    maps = [(f"f{i}", m) for i, m in enumerate(TEN)]
    lam, labels = assign_labels(maps, LabelingConfig(percentile=20))
    assert lam == 0.2
    failures = [l.frame_id for l in labels if l.is_failure]
    assert failures == ["f0"]  # only the 0.1 frame sits strictly below 0.2


def test_labels_preserve_input_order(rng):
    maps = [(f"f{i}", float(rng.random())) for i in range(50)]
    _, labels = assign_labels(maps, LabelingConfig(absolute=0.5))
    assert [l.frame_id for l in labels] == [fid for fid, _ in maps]


def test_permutation_invariance(rng):
    maps = [(f"f{i}", float(rng.random())) for i in range(40)]
    lam1, labels1 = assign_labels(maps, LabelingConfig(percentile=30))
    perm = list(rng.permutation(len(maps)))
    lam2, labels2 = assign_labels([maps[i] for i in perm], LabelingConfig(percentile=30))
    assert lam1 == lam2
    by_id1 = {l.frame_id: l.label for l in labels1}
    by_id2 = {l.frame_id: l.label for l in labels2}
    assert by_id1 == by_id2


def test_failure_fraction_bound(rng):
    for k in (10, 25, 50, 80):
        for n in (3, 10, 37, 100):
            maps = [(f"f{i}", float(rng.random())) for i in range(n)]
            _, labels = assign_labels(maps, LabelingConfig(percentile=k))
            frac = sum(l.is_failure for l in labels) / n
            assert 0.0 <= frac <= k / 100 + 1.0 / n


def test_monotonicity_in_lambda(rng):
    maps = [(f"f{i}", float(rng.random())) for i in range(60)]
    lams = sorted(rng.random(5).tolist())
    previous = set()
    for lam in lams:
        _, labels = assign_labels(maps, LabelingConfig(absolute=lam))
        failures = {l.frame_id for l in labels if l.is_failure}
        assert previous <= failures  # raising lambda never un-fails a frame
        previous = failures


def test_assign_labels_empty():
    with pytest.raises(EmptyInput):
        assign_labels([], LabelingConfig(absolute=0.5))
