"""Gaze swapping: render a matched normalized face back into a target image,
blend it in, and carry the gaze label through the inverse normalization
rotation so it stays ground truth in the target camera frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .blending import mask_interior, poisson_blend
from .errors import InvalidArgument
from .matching import EYES, FULL, MatchResult
from .normalization import NormalizationResult, warp_image

#: 68-point layout groups used for the eye-region mask
EYE_INDICES = np.arange(36, 48)
BROW_INDICES = np.arange(17, 27)

MIN_FACE_WIDTH = 30.0
MAX_LANDMARKS_OUTSIDE_FRAC = 0.3


@dataclass
class RegionMask:
    mask: np.ndarray  # HxW bool
    mode: str

    def __post_init__(self):
        if not mask_interior(self.mask).any():
            raise InvalidArgument("region mask has an empty interior")


@dataclass
class WiderFace:
    """A face in a full target image: pixels, 68 landmarks and a (x, y, w, h) box."""

    face_id: str
    image: np.ndarray
    landmarks: np.ndarray
    bbox: tuple


@dataclass
class NormalizedFace:
    """A normalized source crop with its unit gaze vector (normalized frame)."""

    face_id: str
    image: np.ndarray
    gaze: np.ndarray


@dataclass
class SwapResult:
    image: np.ndarray
    gaze: np.ndarray          # unit vector in the target camera frame
    bbox: tuple
    landmarks: np.ndarray
    mode: str
    wider_id: str
    xgaze_id: str


def interocular_distance(landmarks68: np.ndarray) -> float:
    lmk = np.asarray(landmarks68, dtype=np.float64)
    return float(np.linalg.norm(lmk[36:42].mean(axis=0) - lmk[42:48].mean(axis=0)))


def build_mask(landmarks68, mode: str, shape, dilation_frac: float = 0.15) -> RegionMask:
    """Convex-hull mask for the eye region (dilated) or the whole face.

    The eye mask covers the hull of the eye and brow landmarks grown by
    ``dilation_frac`` of the interocular distance; the full mask is the hull
    of all 68 points. Either is clipped one pixel inside the image border.
    """
    lmk = np.asarray(landmarks68, dtype=np.float64)
    if lmk.shape != (68, 2):
        raise InvalidArgument(f"expected (68, 2) landmarks, got {lmk.shape}")
    h, w = int(shape[0]), int(shape[1])
    if mode == EYES:
        points = lmk[np.concatenate([EYE_INDICES, BROW_INDICES])]
    elif mode == FULL:
        points = lmk
    else:
        raise InvalidArgument(f"unknown swap mode {mode!r}")
    if np.any(points[:, 0] < 0) or np.any(points[:, 0] > w - 1) \
            or np.any(points[:, 1] < 0) or np.any(points[:, 1] > h - 1):
        raise InvalidArgument("mask landmarks must lie inside the image")

    hull = cv2.convexHull(points.astype(np.float32))
    if cv2.contourArea(hull) <= 0:
        raise InvalidArgument("degenerate landmark hull (zero area)")
    canvas = np.zeros((h, w), dtype=np.uint8)
    cv2.fillConvexPoly(canvas, np.round(hull).astype(np.int32), 1)
    if mode == EYES:
        if dilation_frac > 0:
            radius = max(1, int(round(dilation_frac * interocular_distance(lmk))))
            kernel = cv2.getStructuringElement(cv2.MORPH_ELLIPSE,
                                               (2 * radius + 1, 2 * radius + 1))
            canvas = cv2.dilate(canvas, kernel)
        # the grown eye region must stay within the face: clip to the 68-hull
        face = np.zeros((h, w), dtype=np.uint8)
        face_hull = cv2.convexHull(lmk.astype(np.float32))
        cv2.fillConvexPoly(face, np.round(face_hull).astype(np.int32), 1)
        canvas &= face
    canvas[0, :] = canvas[-1, :] = 0
    canvas[:, 0] = canvas[:, -1] = 0
    return RegionMask(canvas.astype(bool), mode)


def backwarp_source(normalized_image: np.ndarray, norm: NormalizationResult,
                    target_size) -> np.ndarray:
    """Render a normalized crop back into the original image frame via the
    inverse warp; pixels with no source coverage are zero."""
    return warp_image(normalized_image, np.linalg.inv(norm.warp), target_size)


def transfer_gaze_label(gaze: np.ndarray, norm: NormalizationResult) -> np.ndarray:
    """Rotate a normalized-frame gaze label into the target camera frame."""
    gaze = np.asarray(gaze, dtype=np.float64)
    if abs(np.linalg.norm(gaze) - 1.0) > 1e-6:
        raise InvalidArgument("gaze label must be a unit vector")
    return norm.rotation.T @ gaze


def qualify_face(bbox, landmarks68, image_shape=None,
                 min_width: float = MIN_FACE_WIDTH,
                 max_outside_frac: float = MAX_LANDMARKS_OUTSIDE_FRAC):
    """Size/landmark gate for swap candidates; returns (ok, reason)."""
    x, y, w, h = (float(v) for v in bbox)
    if w < min_width:
        return False, "too_small"
    lmk = np.asarray(landmarks68, dtype=np.float64)
    outside = (lmk[:, 0] < x) | (lmk[:, 0] > x + w) | (lmk[:, 1] < y) | (lmk[:, 1] > y + h)
    if float(np.mean(outside)) > max_outside_frac:
        return False, "landmarks_outside_box"
    if image_shape is not None:
        ih, iw = image_shape[:2]
        if np.any(lmk < 0) or np.any(lmk[:, 0] > iw - 1) or np.any(lmk[:, 1] > ih - 1):
            return False, "landmarks_outside_image"
    return True, None


def swap_face(wider: WiderFace, source: NormalizedFace, match: MatchResult) -> SwapResult:
    """Full swap for one matched pair: backwarp, mask, blend, transfer label."""
    if match.norm is None:
        raise InvalidArgument("match result carries no normalization (warp/rotation)")
    if match.wider_id != wider.face_id or match.xgaze_id != source.face_id:
        raise InvalidArgument(
            f"match ({match.wider_id}, {match.xgaze_id}) does not reference faces "
            f"({wider.face_id}, {source.face_id})")
    image = np.asarray(wider.image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InvalidArgument("target image must be HxWx3")

    rendered = backwarp_source(source.image, match.norm, image.shape[:2])
    region = build_mask(wider.landmarks, match.mode, image.shape[:2])
    blended = poisson_blend(image, rendered, region.mask)
    gaze = transfer_gaze_label(source.gaze, match.norm)

    ih, iw = image.shape[:2]
    x, y, w, h = (float(v) for v in wider.bbox)
    x0, y0 = max(0.0, x), max(0.0, y)
    bbox = (x0, y0, min(iw - x0, w), min(ih - y0, h))
    return SwapResult(image=blended, gaze=gaze, bbox=bbox,
                      landmarks=np.asarray(wider.landmarks, dtype=np.float64),
                      mode=match.mode, wider_id=wider.face_id, xgaze_id=source.face_id)
