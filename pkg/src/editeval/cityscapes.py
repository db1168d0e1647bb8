"""Cityscapes label spaces: the 19 train classes and the 7 coarse categories."""

from __future__ import annotations

import numpy as np

from editeval.core import IGNORE_ID, LabelClass, LabelSpace

# (train id, name, standard Cityscapes display color)
_TRAIN_CLASSES = [
    (0, "road", (128, 64, 128)),
    (1, "sidewalk", (244, 35, 232)),
    (2, "building", (70, 70, 70)),
    (3, "wall", (102, 102, 156)),
    (4, "fence", (190, 153, 153)),
    (5, "pole", (153, 153, 153)),
    (6, "traffic light", (250, 170, 30)),
    (7, "traffic sign", (220, 220, 0)),
    (8, "vegetation", (107, 142, 35)),
    (9, "terrain", (152, 251, 152)),
    (10, "sky", (70, 130, 180)),
    (11, "person", (220, 20, 60)),
    (12, "rider", (255, 0, 0)),
    (13, "car", (0, 0, 142)),
    (14, "truck", (0, 0, 70)),
    (15, "bus", (0, 60, 100)),
    (16, "train", (0, 80, 100)),
    (17, "motorcycle", (0, 0, 230)),
    (18, "bicycle", (119, 11, 32)),
]

# Coarse categories in Cityscapes category-id order, renumbered from 0.
_CATEGORIES = [
    (0, "flat", (128, 64, 128)),
    (1, "construction", (70, 70, 70)),
    (2, "object", (153, 153, 153)),
    (3, "nature", (107, 142, 35)),
    (4, "sky", (70, 130, 180)),
    (5, "human", (220, 20, 60)),
    (6, "vehicle", (0, 0, 142)),
]

TRAIN_TO_CATEGORY = {
    0: 0, 1: 0,
    2: 1, 3: 1, 4: 1,
    5: 2, 6: 2, 7: 2,
    8: 3, 9: 3,
    10: 4,
    11: 5, 12: 5,
    13: 6, 14: 6, 15: 6, 16: 6, 17: 6, 18: 6,
}

# labelId -> trainId for the 34 annotated Cityscapes ids; anything else is void.
LABEL_TO_TRAIN = {
    0: IGNORE_ID, 1: IGNORE_ID, 2: IGNORE_ID, 3: IGNORE_ID, 4: IGNORE_ID, 5: IGNORE_ID, 6: IGNORE_ID,
    7: 0, 8: 1, 9: IGNORE_ID, 10: IGNORE_ID,
    11: 2, 12: 3, 13: 4, 14: IGNORE_ID, 15: IGNORE_ID, 16: IGNORE_ID,
    17: 5, 18: IGNORE_ID, 19: 6, 20: 7,
    21: 8, 22: 9, 23: 10, 24: 11, 25: 12,
    26: 13, 27: 14, 28: 15, 29: IGNORE_ID, 30: IGNORE_ID,
    31: 16, 32: 17, 33: 18,
}

CATEGORIES7 = LabelSpace(
    name="cityscapes-categories7",
    classes=tuple(LabelClass(i, n, c) for i, n, c in _CATEGORIES),
)

CLASSES19 = LabelSpace(
    name="cityscapes-classes19",
    classes=tuple(LabelClass(i, n, c) for i, n, c in _TRAIN_CLASSES),
    grouping=dict(TRAIN_TO_CATEGORY),
    group_space=CATEGORIES7,
)


def label_ids_to_train_ids(label_ids: np.ndarray) -> tuple[np.ndarray, int]:
    """Remap a Cityscapes labelId array to train ids.

    Returns the remapped array and the number of pixels whose labelId is not
    in the standard table (those become ``IGNORE_ID``).
    """
    label_ids = np.asarray(label_ids).astype(np.int64)
    lut = np.full(256, IGNORE_ID, dtype=np.int64)
    for lid, tid in LABEL_TO_TRAIN.items():
        lut[lid] = tid
    in_range = (label_ids >= 0) & (label_ids < 256)
    unknown = ~np.isin(label_ids, list(LABEL_TO_TRAIN))
    out = np.full(label_ids.shape, IGNORE_ID, dtype=np.int64)
    out[in_range] = lut[label_ids[in_range]]
    return out, int(np.count_nonzero(unknown))
