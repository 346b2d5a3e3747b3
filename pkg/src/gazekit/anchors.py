"""Anchor grids and IoU-based target assignment for the detection head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .losses import IGNORE, NEGATIVE, POSITIVE, TargetSet

DEFAULT_STRIDES = (8, 16, 32)
DEFAULT_SCALES = (4.0, 8.0)


@dataclass
class AnchorSet:
    centers: np.ndarray  # (m, 2) pixel centers
    sizes: np.ndarray    # (m, 2) width, height
    strides: np.ndarray  # (m,)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        self.sizes = np.asarray(self.sizes, dtype=np.float64)
        self.strides = np.asarray(self.strides, dtype=np.float64)
        if np.any(self.sizes <= 0):
            raise InvalidArgument("anchor sizes must be positive")

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def boxes(self) -> np.ndarray:
        """(m, 4) corner boxes (x1, y1, x2, y2)."""
        half = self.sizes / 2.0
        return np.hstack([self.centers - half, self.centers + half])


def generate_anchors(image_size, strides=DEFAULT_STRIDES, scales=DEFAULT_SCALES) -> AnchorSet:
    """Square anchors tiling the image: one per cell and scale per stride level."""
    h, w = (int(image_size), int(image_size)) if np.isscalar(image_size) else map(int, image_size)
    centers, sizes, strs = [], [], []
    for stride in strides:
        ys = (np.arange(max(1, h // stride)) + 0.5) * stride
        xs = (np.arange(max(1, w // stride)) + 0.5) * stride
        grid = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
        for scale in scales:
            side = stride * scale
            centers.append(grid)
            sizes.append(np.full((len(grid), 2), side))
            strs.append(np.full(len(grid), stride))
    return AnchorSet(np.vstack(centers), np.vstack(sizes), np.concatenate(strs))


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (a, 4) and (b, 4) corner boxes."""
    a = np.asarray(boxes_a, dtype=np.float64)[:, None, :]
    b = np.asarray(boxes_b, dtype=np.float64)[None, :, :]
    ix = np.maximum(0.0, np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0]))
    iy = np.maximum(0.0, np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1]))
    inter = ix * iy
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    union = area_a + area_b - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def assign_anchors(gt_boxes, gt_gazes, anchors: AnchorSet, gt_landmarks=None,
                   iou_pos: float = 0.5, iou_neg: float = 0.3) -> TargetSet:
    """IoU assignment with best-anchor forcing and standard offset targets.

    Positive: IoU >= iou_pos with some face, or the face's single best anchor.
    Negative: max IoU < iou_neg. Anything between is ignored. Box targets are
    center offsets over anchor size and log size ratios; landmark targets are
    center offsets; the gaze target is the owning face's (pitch, yaw).
    """
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    gt_gazes = np.asarray(gt_gazes, dtype=np.float64).reshape(-1, 2)
    n_faces = len(gt_boxes)
    if len(gt_gazes) != n_faces:
        raise InvalidArgument("one gaze per face is required")
    if gt_landmarks is None:
        gt_landmarks = np.zeros((n_faces, 10))
    gt_landmarks = np.asarray(gt_landmarks, dtype=np.float64).reshape(-1, 10)

    m = len(anchors)
    labels = np.full(m, IGNORE, dtype=np.int64)
    box_t = np.zeros((m, 4))
    lmk_t = np.zeros((m, 10))
    gaze_t = np.zeros((m, 2))
    if n_faces == 0:
        labels[:] = NEGATIVE
        return TargetSet(labels, box_t, lmk_t, gaze_t)

    iou = iou_matrix(anchors.boxes, gt_boxes)  # (m, f)
    best_iou = iou.max(axis=1)
    owner = iou.argmax(axis=1)

    labels[best_iou < iou_neg] = NEGATIVE
    labels[best_iou >= iou_pos] = POSITIVE
    for f in range(n_faces):
        best_anchor = int(iou[:, f].argmax())
        labels[best_anchor] = POSITIVE
        owner[best_anchor] = f

    pos = labels == POSITIVE
    faces = owner[pos]
    ac = anchors.centers[pos]
    asz = anchors.sizes[pos]
    gb = gt_boxes[faces]
    g_center = (gb[:, :2] + gb[:, 2:]) / 2.0
    g_size = gb[:, 2:] - gb[:, :2]
    box_t[pos, 0:2] = (g_center - ac) / asz
    box_t[pos, 2:4] = np.log(g_size / asz)
    pts = gt_landmarks[faces].reshape(-1, 5, 2)
    lmk_t[pos] = ((pts - ac[:, None, :]) / asz[:, None, :]).reshape(-1, 10)
    gaze_t[pos] = gt_gazes[faces]
    return TargetSet(labels, box_t, lmk_t, gaze_t)
