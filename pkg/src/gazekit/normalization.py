"""Face normalization: head pose from landmarks, warp/rotation construction.

Normalization maps a face seen by an arbitrary camera into a virtual camera
that looks straight at the face center with the head's x-axis parallel to the
image x-axis, at a fixed distance and focal length. The image warp is

    W = C_n @ S @ R @ inv(C)

with C the real intrinsics, C_n the virtual intrinsics, R the virtual-camera
rotation and S = diag(1, 1, d_norm / ||t||) the depth rescale. Gaze labels
rotate by R into the normalized frame and by R^T back out.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from . import _kernels
from .errors import EstimationFailed, InvalidArgument

#: 68-point landmark indices of the six model points, keyed by model name
MODEL_LANDMARK_INDEX = {
    "right_eye_outer": 36,
    "right_eye_inner": 39,
    "left_eye_inner": 42,
    "left_eye_outer": 45,
    "mouth_right": 48,
    "mouth_left": 54,
}

GN_MAX_ITERATIONS = 100
GN_STEP_TOLERANCE = 1e-10


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidArgument("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


def default_intrinsics(image_width: int, image_height: int) -> CameraIntrinsics:
    """Fallback intrinsics for uncalibrated images: f = 1.2 * max side, centered."""
    f = 1.2 * max(image_width, image_height)
    return CameraIntrinsics(f, f, image_width / 2.0, image_height / 2.0)


def _check_rotation(r, tol=1e-6):
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise InvalidArgument(f"rotation must be 3x3, got {r.shape}")
    if not np.allclose(r.T @ r, np.eye(3), atol=tol) or np.linalg.det(r) < 0:
        raise InvalidArgument("matrix is not a proper rotation")
    return r


@dataclass(frozen=True)
class HeadPose:
    rotation: np.ndarray      # 3x3, camera frame
    translation: np.ndarray   # millimeters, face-center position
    rmse: float | None = None  # reprojection RMSE in pixels, when estimated

    def __post_init__(self):
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if t[2] <= 0:
            raise InvalidArgument("face must be in front of the camera (translation z > 0)")
        object.__setattr__(self, "translation", t)


@dataclass(frozen=True)
class NormalizationResult:
    warp: np.ndarray       # 3x3 pixel homography, original -> normalized
    rotation: np.ndarray   # 3x3 virtual-camera rotation
    crop_size: int

    def __post_init__(self):
        w = np.asarray(self.warp, dtype=np.float64)
        if w.shape != (3, 3) or abs(np.linalg.det(w)) < 1e-12:
            raise InvalidArgument("warp must be an invertible 3x3 matrix")
        object.__setattr__(self, "warp", w)
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))


@dataclass(frozen=True)
class NormParams:
    distance_mm: float = 600.0
    focal_px: float = 960.0
    crop_px: int = 224

    @property
    def virtual_intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.focal_px, self.focal_px,
                                self.crop_px / 2.0, self.crop_px / 2.0)


@dataclass(frozen=True)
class FaceModel:
    names: tuple
    points: np.ndarray        # (n, 3) millimeters
    landmark_indices: np.ndarray = field(default=None)  # indices into the 68-point layout

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        object.__setattr__(self, "points", pts)
        if self.landmark_indices is None:
            idx = np.array([MODEL_LANDMARK_INDEX[n] for n in self.names])
            object.__setattr__(self, "landmark_indices", idx)


def load_face_model(path=None) -> FaceModel:
    """Read a `name x y z` table (mm); defaults to the packaged 6-point model."""
    if path is None:
        text = (importlib.resources.files("gazekit") / "data/face_model_6pt.txt").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    names, rows = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise InvalidArgument(f"face model rows need 'name x y z', got {line!r}")
        names.append(parts[0])
        rows.append([float(p) for p in parts[1:]])
    return FaceModel(tuple(names), np.array(rows))


_DEFAULT_MODEL = None


def default_face_model() -> FaceModel:
    global _DEFAULT_MODEL
    if _DEFAULT_MODEL is None:
        _DEFAULT_MODEL = load_face_model()
    return _DEFAULT_MODEL


def project_points(points3d, rotation, translation, cam: CameraIntrinsics) -> np.ndarray:
    """Pinhole projection of (n, 3) model points at a pose; returns (n, 2) pixels."""
    pts = np.asarray(points3d, dtype=np.float64) @ np.asarray(rotation).T + np.asarray(translation)
    return np.column_stack([cam.fx * pts[:, 0] / pts[:, 2] + cam.cx,
                            cam.fy * pts[:, 1] / pts[:, 2] + cam.cy])


def _dlt_pose(obj: np.ndarray, img_norm: np.ndarray):
    """Linear init of [R|t] from normalized image coords; raises on degeneracy."""
    n = len(obj)
    scale = float(np.sqrt(np.mean(np.sum(obj ** 2, axis=1))))
    obj_s = obj / scale
    a = np.zeros((2 * n, 12))
    for i in range(n):
        X = np.append(obj_s[i], 1.0)
        x, y = img_norm[i]
        a[2 * i, 0:4] = X
        a[2 * i, 8:12] = -x * X
        a[2 * i + 1, 4:8] = X
        a[2 * i + 1, 8:12] = -y * X
    _, sv, vt = np.linalg.svd(a)
    if sv[-2] < 1e-9 * sv[0]:
        raise EstimationFailed("degenerate landmark configuration (ambiguous pose)")
    m = vt[-1].reshape(3, 4)
    # undo the object scaling and fix the projective sign (points in front)
    m[:, :3] /= scale
    if np.mean(obj @ m[:, :3].T + m[:, 3], axis=0)[2] < 0:
        m = -m
    b = m[:, :3]
    u, s, vt2 = np.linalg.svd(b)
    rot = u @ np.diag([1.0, 1.0, np.linalg.det(u @ vt2)]) @ vt2
    t = m[:, 3] / np.mean(s)
    return rot, t


def estimate_head_pose(landmarks68, cam: CameraIntrinsics, model: FaceModel | None = None) -> HeadPose:
    """Head pose from 68-point landmarks via linear init + Gauss-Newton refinement.

    Only the model's landmark subset is used (eye and mouth corners by
    default). The returned pose carries the final reprojection RMSE in pixels.
    """
    if model is None:
        model = default_face_model()
    lmk = np.asarray(landmarks68, dtype=np.float64)
    if lmk.ndim != 2 or lmk.shape[1] != 2 or lmk.shape[0] < int(model.landmark_indices.max()) + 1:
        raise InvalidArgument(f"landmarks must be (68, 2)-like, got {lmk.shape}")
    obs = lmk[model.landmark_indices]
    if not np.all(np.isfinite(obs)):
        raise InvalidArgument("the six pose landmarks must be finite")

    k_inv = np.linalg.inv(cam.matrix)
    img_norm = (np.column_stack([obs, np.ones(len(obs))]) @ k_inv.T)[:, :2]
    rot, t = _dlt_pose(model.points, img_norm)

    obj = model.points
    converged = False
    for _ in range(GN_MAX_ITERATIONS):
        cam_pts = obj @ rot.T + t
        z = cam_pts[:, 2]
        if np.any(z <= 1e-9):
            raise EstimationFailed("pose iteration moved points behind the camera")
        proj = np.column_stack([cam.fx * cam_pts[:, 0] / z + cam.cx,
                                cam.fy * cam_pts[:, 1] / z + cam.cy])
        res = (proj - obs).ravel()
        jac = np.zeros((2 * len(obj), 6))
        for i, pc in enumerate(cam_pts):
            x, y, zz = pc
            dproj = np.array([[cam.fx / zz, 0.0, -cam.fx * x / zz ** 2],
                              [0.0, cam.fy / zz, -cam.fy * y / zz ** 2]])
            rx = pc - t  # rotated model point; left-multiplied update R <- exp(w) R
            dcam = np.zeros((3, 6))
            dcam[:, :3] = -_skew(rx)
            dcam[:, 3:] = np.eye(3)
            jac[2 * i:2 * i + 2] = dproj @ dcam
        jtj = jac.T @ jac
        try:
            step = np.linalg.solve(jtj, -jac.T @ res)
        except np.linalg.LinAlgError as exc:
            raise EstimationFailed("normal equations singular during refinement") from exc
        rot = Rotation.from_rotvec(step[:3]).as_matrix() @ rot
        t = t + step[3:]
        if np.linalg.norm(step) < GN_STEP_TOLERANCE:
            converged = True
            break
    if not converged:
        raise EstimationFailed(f"pose refinement did not converge in {GN_MAX_ITERATIONS} iterations")

    cam_pts = obj @ rot.T + t
    proj = np.column_stack([cam.fx * cam_pts[:, 0] / cam_pts[:, 2] + cam.cx,
                            cam.fy * cam_pts[:, 1] / cam_pts[:, 2] + cam.cy])
    rmse = float(np.sqrt(np.mean(np.sum((proj - obs) ** 2, axis=1))))
    return HeadPose(rot, t, rmse=rmse)


def _skew(v):
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def compute_normalization(pose: HeadPose, cam: CameraIntrinsics,
                          params: NormParams = NormParams()) -> NormalizationResult:
    """Rotation + warp that centers the face in the virtual camera."""
    center = pose.translation
    distance = float(np.linalg.norm(center))
    forward = center / distance
    head_x = pose.rotation[:, 0]
    down = np.cross(forward, head_x)
    down = down / np.linalg.norm(down)
    right = np.cross(down, forward)
    right = right / np.linalg.norm(right)
    rot = np.stack([right, down, forward])

    scale = np.diag([1.0, 1.0, params.distance_mm / distance])
    warp = params.virtual_intrinsics.matrix @ scale @ rot @ np.linalg.inv(cam.matrix)
    return NormalizationResult(warp, rot, params.crop_px)


def warp_image(img: np.ndarray, warp: np.ndarray, out_size) -> np.ndarray:
    """Apply a pixel homography by backward mapping with bilinear sampling.

    ``warp`` maps input pixel coordinates to output coordinates; out-of-bounds
    source taps contribute zero. ``out_size`` is (height, width).
    """
    warp = np.asarray(warp, dtype=np.float64)
    if warp.shape != (3, 3):
        raise InvalidArgument(f"warp must be 3x3, got {warp.shape}")
    det = np.linalg.det(warp)
    if not np.isfinite(det) or abs(det) < 1e-12:
        raise InvalidArgument("warp matrix is singular")
    out_h, out_w = (int(out_size), int(out_size)) if np.isscalar(out_size) else map(int, out_size)
    img = np.asarray(img, dtype=np.float64)
    if img.ndim not in (2, 3):
        raise InvalidArgument("image must be HxW or HxWxC")
    return _kernels.warp_bilinear(img, np.linalg.inv(warp), out_h, out_w)


def warp_points(points: np.ndarray, warp: np.ndarray) -> np.ndarray:
    """Apply a pixel homography to (n, 2) points."""
    pts = np.asarray(points, dtype=np.float64)
    homog = np.column_stack([pts, np.ones(len(pts))]) @ np.asarray(warp).T
    return homog[:, :2] / homog[:, 2:3]


def rotate_gaze(rotation, gaze):
    """Rotate a unit gaze vector into the normalized frame."""
    rotation = _check_rotation(rotation)
    gaze = np.asarray(gaze, dtype=np.float64)
    if abs(np.linalg.norm(gaze) - 1.0) > 1e-6:
        raise InvalidArgument("gaze must be a unit vector")
    return rotation @ gaze


def denormalize_gaze(rotation, gaze):
    """Inverse of :func:`rotate_gaze`: bring a normalized-frame gaze back out."""
    rotation = _check_rotation(rotation)
    gaze = np.asarray(gaze, dtype=np.float64)
    if abs(np.linalg.norm(gaze) - 1.0) > 1e-6:
        raise InvalidArgument("gaze must be a unit vector")
    return rotation.T @ gaze
