"""Deterministic synthetic faces for tests, demos and desk-scale fixtures.

Nothing here aims for realism: the layouts only have to satisfy the 68-point
indexing conventions and produce smooth textures that warping and blending
can be measured on.
"""

from __future__ import annotations

import numpy as np

from .normalization import (MODEL_LANDMARK_INDEX, CameraIntrinsics, FaceModel,
                            default_face_model, project_points)


def stylized_landmarks_from_anchors(anchors: dict) -> np.ndarray:
    """Expand the six pose anchors into a full stylized 68-point layout.

    ``anchors`` maps the model point names (right_eye_outer, right_eye_inner,
    left_eye_inner, left_eye_outer, mouth_right, mouth_left) to (x, y). The
    anchor positions are kept exactly at their canonical indices.
    """
    reo = np.asarray(anchors["right_eye_outer"], dtype=np.float64)
    rei = np.asarray(anchors["right_eye_inner"], dtype=np.float64)
    lei = np.asarray(anchors["left_eye_inner"], dtype=np.float64)
    leo = np.asarray(anchors["left_eye_outer"], dtype=np.float64)
    mouth_r = np.asarray(anchors["mouth_right"], dtype=np.float64)
    mouth_l = np.asarray(anchors["mouth_left"], dtype=np.float64)

    right_eye = (reo + rei) / 2.0
    left_eye = (lei + leo) / 2.0
    iod = float(np.linalg.norm(left_eye - right_eye))
    center = (right_eye + left_eye) / 2.0
    down = np.array([0.0, 1.0])

    lmk = np.zeros((68, 2))

    # jaw 0-16: lower half-ellipse from the right-eye side around the chin
    jaw_center = center + down * 0.9 * iod
    thetas = np.linspace(np.pi, 2 * np.pi, 17)
    lmk[0:17, 0] = jaw_center[0] + 1.45 * iod * np.cos(thetas)
    lmk[0:17, 1] = jaw_center[1] - 1.55 * iod * np.sin(thetas)

    # brows 17-26: arcs above each eye
    for k in range(5):
        f = k / 4.0
        arc = 0.18 * iod * np.sin(np.pi * f)
        lmk[17 + k] = reo + (rei - reo) * f + down * (-0.45 * iod - arc)
        lmk[22 + k] = lei + (leo - lei) * f + down * (-0.45 * iod - arc)

    # nose 27-35: bridge + nostril row
    for k in range(4):
        lmk[27 + k] = center + down * (0.15 + 0.2 * k) * iod
    base = center + down * 0.78 * iod
    for k in range(5):
        lmk[31 + k] = base + np.array([(k - 2) * 0.12 * iod, 0.0])

    # eyes 36-47: corners exact, lids offset vertically
    def eye(points_out, corner_a, corner_b):
        lid = 0.13 * iod
        points_out[0] = corner_a
        points_out[1] = corner_a + (corner_b - corner_a) / 3.0 - down * lid
        points_out[2] = corner_a + 2.0 * (corner_b - corner_a) / 3.0 - down * lid
        points_out[3] = corner_b
        points_out[4] = corner_a + 2.0 * (corner_b - corner_a) / 3.0 + down * lid
        points_out[5] = corner_a + (corner_b - corner_a) / 3.0 + down * lid

    eye(lmk[36:42], reo, rei)
    eye(lmk[42:48], lei, leo)

    # mouth 48-67: outer ring of 12 then inner ring of 8
    mouth_center = (mouth_r + mouth_l) / 2.0
    half = float(np.linalg.norm(mouth_l - mouth_r)) / 2.0
    ring = np.linspace(0, 2 * np.pi, 13)[:-1]
    lmk[48:60, 0] = mouth_center[0] - half * np.cos(ring)
    lmk[48:60, 1] = mouth_center[1] + 0.45 * half * np.sin(ring)
    lmk[48] = mouth_r
    lmk[54] = mouth_l
    inner = np.linspace(0, 2 * np.pi, 9)[:-1]
    lmk[60:68, 0] = mouth_center[0] - 0.55 * half * np.cos(inner)
    lmk[60:68, 1] = mouth_center[1] + 0.25 * half * np.sin(inner)
    return lmk


def synthetic_face_landmarks(rotation, translation, cam: CameraIntrinsics,
                             model: FaceModel | None = None) -> np.ndarray:
    """Project the 6-point model at a pose and grow the stylized 68 layout."""
    model = model or default_face_model()
    pts = project_points(model.points, rotation, translation, cam)
    anchors = dict(zip(model.names, pts))
    lmk = stylized_landmarks_from_anchors(anchors)
    for name, p in anchors.items():
        lmk[MODEL_LANDMARK_INDEX[name]] = p
    return lmk


def face_texture(height: int, width: int, landmarks68: np.ndarray | None = None,
                 seed: int = 0) -> np.ndarray:
    """Smooth HxWx3 float image in [0, 1]; eyes/mouth get darker blobs."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    phase = rng.uniform(0, 2 * np.pi, 6)
    base = 0.55 + 0.18 * np.sin(2 * np.pi * xx / width + phase[0]) \
        * np.cos(2 * np.pi * yy / height + phase[1])
    img = np.stack([base, base * 0.92 + 0.04, base * 0.85 + 0.02], axis=-1)

    def blob(cx, cy, radius, depth):
        d2 = (xx - cx) ** 2 + (yy - cy) ** 2
        img[...] -= depth * np.exp(-d2 / (2 * radius ** 2))[..., None]

    if landmarks68 is not None:
        lmk = np.asarray(landmarks68)
        right_eye = lmk[36:42].mean(axis=0)
        left_eye = lmk[42:48].mean(axis=0)
        mouth = lmk[48:60].mean(axis=0)
        iod = max(2.0, float(np.linalg.norm(left_eye - right_eye)))
        blob(right_eye[0], right_eye[1], 0.18 * iod, 0.35)
        blob(left_eye[0], left_eye[1], 0.18 * iod, 0.35)
        blob(mouth[0], mouth[1], 0.25 * iod, 0.2)
    return np.clip(img, 0.0, 1.0)


def bbox_from_landmarks(landmarks68: np.ndarray, margin: float = 0.1) -> tuple:
    """Tight (x, y, w, h) box around the landmarks, padded by ``margin``."""
    lmk = np.asarray(landmarks68, dtype=np.float64)
    x0, y0 = lmk.min(axis=0)
    x1, y1 = lmk.max(axis=0)
    pad_x = margin * (x1 - x0)
    pad_y = margin * (y1 - y0)
    return (x0 - pad_x, y0 - pad_y, (x1 - x0) + 2 * pad_x, (y1 - y0) + 2 * pad_y)
