"""Multi-task detection/gaze losses with analytic gradients.

The face head combines binary cross-entropy over anchors with smooth-L1 box
and landmark regression gated by the positive label. The gaze head combines
an L1 pull of the predicted angles toward ground truth, an L1 pull of the
three predicted plane points toward the projections of the ground-truth
angles, and a self-consistency term that compares each predicted plane point
with the projection of the *predicted* angles, weighted by a learned
per-plane log-variance ``p`` (residual * exp(-p) + p).

Everything returns (scalar loss, gradients) so descent and gradient checks
need no autodiff. Classification is averaged over non-ignored anchors;
regression and gaze terms are averaged over positive anchors, keeping the
lambda weights comparable as anchor counts change. L1 subgradients use
sign(0) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

BCE_EPS = 1e-7
SMOOTH_L1_BETA = 1.0

POSITIVE = 1
NEGATIVE = 0
IGNORE = -1

PLANE_ORDER = ("front", "top", "side")


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0              # face task weight
    beta: float = 1.0               # gaze task weight
    lambda_box: float = 1.0         # box regression weight inside the face loss
    lambda_landmark: float = 1.0    # landmark regression weight inside the face loss
    lambda_self: float = 1.0        # self-consistency weight inside the gaze loss
    lambda_angles: float = 1.0      # angle L1 weight inside the gaze loss
    lambda_projection: float = 1.0  # ground-truth projection L1 weight
    radius: float = 1.0             # plane radius used in loss space

    def __post_init__(self):
        for name in ("alpha", "beta", "lambda_box", "lambda_landmark", "lambda_self",
                     "lambda_angles", "lambda_projection"):
            if getattr(self, name) < 0:
                raise InvalidArgument(f"{name} must be >= 0")
        if self.radius <= 0:
            raise InvalidArgument("radius must be positive")


@dataclass
class PredictionSet:
    prob: np.ndarray   # (n,) face probability per anchor
    box: np.ndarray    # (n, 4) box offsets
    lmk: np.ndarray    # (n, 10) five-point landmark offsets
    gaze: np.ndarray   # (n, 2) pitch, yaw radians
    front: np.ndarray  # (n, 2) plane points
    top: np.ndarray
    side: np.ndarray

    def __post_init__(self):
        n = len(self.prob)
        shapes = {"prob": (n,), "box": (n, 4), "lmk": (n, 10), "gaze": (n, 2),
                  "front": (n, 2), "top": (n, 2), "side": (n, 2)}
        for name, shape in shapes.items():
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise InvalidArgument(f"{name}: expected {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidArgument(f"{name}: non-finite values")
            setattr(self, name, arr)
        if np.any(self.prob < 0) or np.any(self.prob > 1):
            raise InvalidArgument("prob must lie in [0, 1]")

    @property
    def n_anchors(self) -> int:
        return len(self.prob)

    def planes(self) -> np.ndarray:
        """Plane points stacked (n, 3, 2) in (front, top, side) order."""
        return np.stack([self.front, self.top, self.side], axis=1)


@dataclass
class TargetSet:
    labels: np.ndarray  # (n,) 1 positive / 0 negative / -1 ignored
    box: np.ndarray     # (n, 4), meaningful on positives
    lmk: np.ndarray     # (n, 10)
    gaze: np.ndarray    # (n, 2)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not np.all(np.isin(self.labels, (POSITIVE, NEGATIVE, IGNORE))):
            raise InvalidArgument("labels must be 1, 0 or -1")
        n = len(self.labels)
        for name, shape in (("box", (n, 4)), ("lmk", (n, 10)), ("gaze", (n, 2))):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise InvalidArgument(f"{name}: expected {shape}, got {arr.shape}")
            setattr(self, name, arr)

    @property
    def positive(self) -> np.ndarray:
        return self.labels == POSITIVE

    @property
    def valid(self) -> np.ndarray:
        return self.labels != IGNORE


@dataclass
class Gradients:
    """Partials with respect to every prediction block plus the plane weights."""

    prob: np.ndarray
    box: np.ndarray
    lmk: np.ndarray
    gaze: np.ndarray
    front: np.ndarray
    top: np.ndarray
    side: np.ndarray
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def zeros(cls, n: int) -> "Gradients":
        return cls(prob=np.zeros(n), box=np.zeros((n, 4)), lmk=np.zeros((n, 10)),
                   gaze=np.zeros((n, 2)), front=np.zeros((n, 2)), top=np.zeros((n, 2)),
                   side=np.zeros((n, 2)), p=np.zeros(3))

    def scaled_add(self, other: "Gradients", factor: float) -> "Gradients":
        for name in ("prob", "box", "lmk", "gaze", "front", "top", "side", "p"):
            getattr(self, name)[...] += factor * getattr(other, name)
        return self


def project_planes(gaze: np.ndarray, radius: float) -> np.ndarray:
    """Plane projections of (n, 2) pitch/yaw, stacked (n, 3, 2); no domain checks."""
    pitch = gaze[..., 0]
    yaw = gaze[..., 1]
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    r = radius
    out = np.empty(gaze.shape[:-1] + (3, 2))
    out[..., 0, 0] = -r * sy * cp
    out[..., 0, 1] = -r * sp
    out[..., 1, 0] = r * cy * cp
    out[..., 1, 1] = -r * sy * cp
    out[..., 2, 0] = -r * cy * cp
    out[..., 2, 1] = -r * sp
    return out


def project_planes_jacobian(gaze: np.ndarray, radius: float) -> np.ndarray:
    """d(plane uv)/d(pitch, yaw): shape (n, 3, 2, 2)."""
    pitch = gaze[..., 0]
    yaw = gaze[..., 1]
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    r = radius
    jac = np.zeros(gaze.shape[:-1] + (3, 2, 2))
    jac[..., 0, 0, 0] = r * sy * sp
    jac[..., 0, 0, 1] = -r * cy * cp
    jac[..., 0, 1, 0] = -r * cp
    jac[..., 1, 0, 0] = -r * cy * sp
    jac[..., 1, 0, 1] = -r * sy * cp
    jac[..., 1, 1, 0] = r * sy * sp
    jac[..., 1, 1, 1] = -r * cy * cp
    jac[..., 2, 0, 0] = r * cy * sp
    jac[..., 2, 0, 1] = r * sy * cp
    jac[..., 2, 1, 0] = -r * cp
    return jac


def _smooth_l1(x: np.ndarray):
    absx = np.abs(x)
    quad = absx < SMOOTH_L1_BETA
    value = np.where(quad, 0.5 * x * x / SMOOTH_L1_BETA, absx - 0.5 * SMOOTH_L1_BETA)
    grad = np.where(quad, x / SMOOTH_L1_BETA, np.sign(x))
    return value, grad


def loss_face(pred: PredictionSet, target: TargetSet, cfg: LossConfig = LossConfig()):
    """Classification + gated box/landmark regression; returns (loss, Gradients)."""
    n = pred.n_anchors
    if len(target.labels) != n:
        raise InvalidArgument("prediction and target sets have different anchor counts")
    grads = Gradients.zeros(n)

    valid = target.valid
    n_valid = max(1, int(valid.sum()))
    y = (target.labels == POSITIVE).astype(np.float64)
    p_hat = np.clip(pred.prob, BCE_EPS, 1.0 - BCE_EPS)
    bce = -(y * np.log(p_hat) + (1.0 - y) * np.log(1.0 - p_hat))
    l_class = float(bce[valid].sum()) / n_valid
    inside_clip = (pred.prob > BCE_EPS) & (pred.prob < 1.0 - BCE_EPS)
    dprob = (p_hat - y) / (p_hat * (1.0 - p_hat)) / n_valid
    grads.prob[...] = np.where(valid & inside_clip, dprob, 0.0)

    pos = target.positive
    n_pos = max(1, int(pos.sum()))
    box_val, box_grad = _smooth_l1(pred.box[pos] - target.box[pos])
    l_box = float(box_val.sum()) / n_pos
    grads.box[pos] = cfg.lambda_box * box_grad / n_pos
    lmk_val, lmk_grad = _smooth_l1(pred.lmk[pos] - target.lmk[pos])
    l_lmk = float(lmk_val.sum()) / n_pos
    grads.lmk[pos] = cfg.lambda_landmark * lmk_grad / n_pos

    loss = l_class + cfg.lambda_box * l_box + cfg.lambda_landmark * l_lmk
    return loss, grads


def loss_self(front, top, side, gaze, p, radius: float = 1.0):
    """Single-instance self-consistency loss.

    ``front``/``top``/``side`` are 2-vectors, ``gaze`` is (pitch, yaw) and
    ``p`` the three plane log-variances. Returns the loss and a dict of
    gradients keyed like the arguments.
    """
    gaze = np.asarray(gaze, dtype=np.float64).reshape(1, 2)
    planes = np.stack([np.asarray(v, dtype=np.float64).reshape(2) for v in (front, top, side)])
    p = np.asarray(p, dtype=np.float64).reshape(3)
    proj = project_planes(gaze, radius)[0]
    jac = project_planes_jacobian(gaze, radius)[0]

    resid = planes - proj
    s = np.abs(resid).sum(axis=1)
    weights = np.exp(-p)
    loss = float((s * weights + p).sum())

    sign = np.sign(resid)
    grad_planes = sign * weights[:, None]
    grad_gaze = -np.einsum("tc,tcg->g", sign * weights[:, None], jac)
    grad_p = 1.0 - s * weights
    return loss, {"front": grad_planes[0], "top": grad_planes[1], "side": grad_planes[2],
                  "gaze": grad_gaze, "p": grad_p, "residuals": s}


def loss_gaze(pred: PredictionSet, target: TargetSet, p, cfg: LossConfig = LossConfig()):
    """Gaze branch: self-consistency + angle L1 + ground-truth projection L1."""
    n = pred.n_anchors
    if len(target.labels) != n:
        raise InvalidArgument("prediction and target sets have different anchor counts")
    p = np.asarray(p, dtype=np.float64).reshape(3)
    grads = Gradients.zeros(n)
    pos = target.positive
    n_pos = max(1, int(pos.sum()))
    weights = np.exp(-p)

    planes = pred.planes()[pos]          # (q, 3, 2)
    gaze_pred = pred.gaze[pos]
    proj_pred = project_planes(gaze_pred, cfg.radius)
    jac_pred = project_planes_jacobian(gaze_pred, cfg.radius)

    # self-consistency vs the *predicted* gaze
    resid_self = planes - proj_pred
    s_mean = np.abs(resid_self).sum(axis=2).mean(axis=0) if pos.any() else np.zeros(3)
    l_self = float((s_mean * weights + p).sum())
    sign_self = np.sign(resid_self)
    grad_planes = cfg.lambda_self * sign_self * weights[None, :, None] / n_pos
    grad_gaze_self = -cfg.lambda_self / n_pos * np.einsum(
        "qtc,qtcg->qg", sign_self * weights[None, :, None], jac_pred)
    grads.p[...] = cfg.lambda_self * (1.0 - s_mean * weights)

    # direct L1 on angles
    resid_gaze = gaze_pred - target.gaze[pos]
    l_angles = float(np.abs(resid_gaze).sum()) / n_pos
    grad_gaze_l1 = cfg.lambda_angles * np.sign(resid_gaze) / n_pos

    # plane points vs projections of the ground-truth gaze
    proj_gt = project_planes(target.gaze[pos], cfg.radius)
    resid_gt = planes - proj_gt
    l_proj = float(np.abs(resid_gt).sum()) / n_pos
    grad_planes = grad_planes + cfg.lambda_projection * np.sign(resid_gt) / n_pos

    for t, name in enumerate(PLANE_ORDER):
        getattr(grads, name)[pos] = grad_planes[:, t, :]
    grads.gaze[pos] = grad_gaze_self + grad_gaze_l1

    loss = cfg.lambda_self * l_self + cfg.lambda_angles * l_angles + cfg.lambda_projection * l_proj
    return loss, grads


def loss_total(pred: PredictionSet, target: TargetSet, p, cfg: LossConfig = LossConfig()):
    """Weighted sum of the face and gaze branches."""
    l_face, g_face = loss_face(pred, target, cfg)
    l_gaze, g_gaze = loss_gaze(pred, target, p, cfg)
    grads = Gradients.zeros(pred.n_anchors)
    grads.scaled_add(g_face, cfg.alpha)
    grads.scaled_add(g_gaze, cfg.beta)
    return cfg.alpha * l_face + cfg.beta * l_gaze, grads


# --------------------------------------------------------------------------
# finite-difference verification

GRAD_BLOCKS = ("prob", "box", "lmk", "gaze", "front", "top", "side", "p")


def gradient_check(pred: PredictionSet, target: TargetSet, p, cfg: LossConfig = LossConfig(),
                   h: float = 1e-5, loss_fn=loss_total) -> dict:
    """Max relative error of every analytic gradient block vs central differences."""
    p = np.asarray(p, dtype=np.float64)
    _, grads = loss_fn(pred, target, p, cfg)
    errors = {}
    for block in GRAD_BLOCKS:
        arr = p if block == "p" else getattr(pred, block)
        analytic = getattr(grads, block)
        worst = 0.0
        for i in range(arr.size):
            orig = arr.flat[i]
            arr.flat[i] = orig + h
            up, _ = loss_fn(pred, target, p, cfg)
            arr.flat[i] = orig - h
            down, _ = loss_fn(pred, target, p, cfg)
            arr.flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            a = analytic.flat[i]
            scale = max(abs(a), abs(numeric))
            err = abs(a - numeric) if scale < 1e-6 else abs(a - numeric) / scale
            worst = max(worst, err)
        errors[block] = worst
    return errors


def random_instance(seed: int, n_anchors: int = 8, kink_margin: float = 5e-3):
    """Random (pred, target, p) with every L1/smooth-L1 residual pushed off its kink."""
    rng = np.random.default_rng(seed)
    labels = rng.choice([POSITIVE, NEGATIVE, IGNORE], size=n_anchors, p=[0.5, 0.3, 0.2])
    if not (labels == POSITIVE).any():
        labels[0] = POSITIVE

    def offset(shape, lo=kink_margin * 10, hi=0.6):
        return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(lo, hi, shape)

    t_box = rng.uniform(-0.5, 0.5, (n_anchors, 4))
    t_lmk = rng.uniform(-0.5, 0.5, (n_anchors, 10))
    t_gaze = rng.uniform(-1.0, 1.0, (n_anchors, 2))
    target = TargetSet(labels=labels, box=t_box, lmk=t_lmk, gaze=t_gaze)

    gaze = t_gaze + offset((n_anchors, 2), lo=0.05, hi=0.4)
    proj = project_planes(gaze, 1.0)
    planes = proj + offset((n_anchors, 3, 2), lo=0.05, hi=0.4)
    # keep the ground-truth-projection residual off its kink too
    resid_gt = planes - project_planes(t_gaze, 1.0)
    bump = np.where(np.abs(resid_gt) < kink_margin, kink_margin * 3, 0.0)
    planes = planes + bump

    pred = PredictionSet(
        prob=rng.uniform(0.05, 0.95, n_anchors),
        box=t_box + offset((n_anchors, 4)),
        lmk=t_lmk + offset((n_anchors, 10)),
        gaze=gaze,
        front=planes[:, 0], top=planes[:, 1], side=planes[:, 2],
    )
    p = rng.uniform(-0.5, 0.5, 3)
    return pred, target, p
