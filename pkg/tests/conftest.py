import numpy as np
import pytest

from detmon.model import BoundingBox, Detection, FrameRecord, GroundTruthObject


def random_frame(
    rng: np.random.Generator,
    frame_id: str,
    categories=("person", "car"),
    max_gt: int = 5,
    max_det: int = 5,
    min_gt: int = 0,
) -> FrameRecord:
    """Frame with random boxes; detections overlap ground truth often enough
    for matching to be non-trivial."""

    def rand_box():
        x1 = rng.uniform(0, 80)
        y1 = rng.uniform(0, 80)
        return BoundingBox(x1, y1, x1 + rng.uniform(2, 30), y1 + rng.uniform(2, 30))

    gt = [
        GroundTruthObject(rand_box(), categories[rng.integers(len(categories))])
        for _ in range(rng.integers(min_gt, max_gt + 1))
    ]
    det = []
    for _ in range(rng.integers(0, max_det + 1)):
        if gt and rng.random() < 0.7:
            src = gt[rng.integers(len(gt))]
            jitter = rng.uniform(-4, 4, size=4)
            box = BoundingBox(
                src.box.x1 + jitter[0],
                src.box.y1 + jitter[1],
                max(src.box.x2 + jitter[2], src.box.x1 + jitter[0] + 1.0),
                max(src.box.y2 + jitter[3], src.box.y1 + jitter[1] + 1.0),
            )
            category = src.category
        else:
            box = rand_box()
            category = categories[rng.integers(len(categories))]
        det.append(Detection(box, category, float(rng.uniform(0, 1))))
    return FrameRecord(frame_id, tuple(gt), tuple(det))


@pytest.fixture
def rng():
    return np.random.default_rng(20240810)
