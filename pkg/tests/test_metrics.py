import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mpikit.metrics import (ConfusionMatrix, IouMeter, accumulate, evaluate_pair, is_undefined,
                            mean_iou, per_class_iou)

GT4 = np.array([[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 2, 2], [2, 2, 2, 2]], dtype=np.uint8)
HOLE4 = np.ones((4, 4), dtype=np.uint8)
HOLE4[1:3, 1:3] = 0


def test_accumulate_examples():
    cm = accumulate(ConfusionMatrix(2), np.ones(10, int), np.ones(10, int))
    np.testing.assert_array_equal(cm.counts, [[0, 0], [0, 10]])
    cm = accumulate(ConfusionMatrix(2), np.array([0, 1, 1, 1]), np.array([0, 0, 1, 1]))
    np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 2]])
    same = accumulate(cm, GT4 % 2, GT4 % 2, region=np.ones((4, 4)))
    assert same == cm


def test_accumulate_rejects_out_of_range():
    with pytest.raises(ValueError):
        accumulate(ConfusionMatrix(2), np.array([0, 2]), np.array([0, 1]))
    # out-of-range labels outside the counted region are fine
    cm = accumulate(ConfusionMatrix(2), np.array([[0, 7]]), np.array([[0, 9]]), region=np.array([[0, 1]]))
    assert cm.total() == 1


def test_mean_iou_examples():
    assert mean_iou(ConfusionMatrix(2, np.array([[1, 1], [0, 2]]))) == pytest.approx(7 / 12, abs=1e-12)
    assert mean_iou(ConfusionMatrix(3, np.diag([3, 0, 5]))) == 1.0
    assert is_undefined(mean_iou(ConfusionMatrix(3)))
    ious = per_class_iou(ConfusionMatrix(3, np.diag([3, 0, 5])))
    assert is_undefined(ious[1])


def test_evaluate_pair_golden():
    pred = GT4.copy()
    pred[1, 1] = 1
    iou_all, iou_fg = evaluate_pair(pred, GT4, HOLE4)
    assert iou_all == pytest.approx((3 / 4 + 4 / 5 + 1) / 3, abs=1e-12)
    assert iou_fg == pytest.approx((0 + 1 / 2 + 1) / 3, abs=1e-12)


def test_evaluate_pair_trivial():
    assert evaluate_pair(GT4, GT4, HOLE4) == (1.0, 1.0)
    iou_all, iou_fg = evaluate_pair(GT4, GT4, np.ones((4, 4)))
    assert iou_all == 1.0 and is_undefined(iou_fg)


label_pairs = st.integers(1, 30).flatmap(lambda n: st.tuples(
    arrays(np.int64, (1, n), elements=st.integers(0, 3)), arrays(np.int64, (1, n), elements=st.integers(0, 3)),
    arrays(np.uint8, (1, n), elements=st.integers(0, 1))))


@settings(max_examples=80, deadline=None)
@given(st.lists(label_pairs, min_size=1, max_size=4))
def test_accumulation_properties(images):
    cms = [accumulate(ConfusionMatrix(4), p, g) for p, g, _ in images]
    total = sum(cms[1:], cms[0])
    rev = sum(cms[-2::-1], cms[-1]) if len(cms) > 1 else cms[0]
    assert total == rev
    v = mean_iou(total)
    assert is_undefined(v) or 0.0 <= v <= 1.0
    for p, g, r in images:
        assert accumulate(ConfusionMatrix(4), p, g, region=r).total() <= accumulate(ConfusionMatrix(4), p, g).total()
        a, f = evaluate_pair(g, g, r, n_classes=4)
        assert a == 1.0 and (is_undefined(f) or f == 1.0)


def test_meter_is_global_not_per_image():
    meter = IouMeter(2)
    meter.update(np.array([[0, 0]]), np.array([[0, 1]]), np.array([[1, 1]]))
    meter.update(np.array([[1, 1]]), np.array([[1, 1]]), np.array([[1, 1]]))
    iou_all, iou_fg = meter.result()
    # global counts [[1, 0], [1, 2]] -> IoU0 1/2, IoU1 2/3
    assert iou_all == pytest.approx(7 / 12)
    assert is_undefined(iou_fg)
