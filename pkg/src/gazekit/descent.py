"""Desk-scale gradient descent on the full multi-task loss.

An affine head maps fixed per-anchor feature vectors to the whole prediction
set (the face probability goes through a sigmoid, everything else is linear).
Full-batch descent on the head parameters and the plane log-variances then
demonstrates the self-supervision mechanism end to end: on a realizable
instance the consistency residuals collapse and the log-variances chase the
log of the mean residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DescentDiverged, InvalidArgument
from .losses import (LossConfig, PredictionSet, TargetSet, loss_total,
                     project_planes)

#: affine head output layout
N_OUTPUTS = 23
SLICE_LOGIT = 0
SLICE_BOX = slice(1, 5)
SLICE_LMK = slice(5, 15)
SLICE_GAZE = slice(15, 17)
SLICE_FRONT = slice(17, 19)
SLICE_TOP = slice(19, 21)
SLICE_SIDE = slice(21, 23)


def head_forward(features: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> PredictionSet:
    z = features @ weights + bias
    return PredictionSet(
        prob=expit(z[:, SLICE_LOGIT]),
        box=z[:, SLICE_BOX],
        lmk=z[:, SLICE_LMK],
        gaze=z[:, SLICE_GAZE],
        front=z[:, SLICE_FRONT],
        top=z[:, SLICE_TOP],
        side=z[:, SLICE_SIDE],
    )


@dataclass
class DescentTrace:
    losses: np.ndarray       # (steps + 1,) loss before each update plus the final value
    p_history: np.ndarray    # (steps + 1, 3)
    weights: np.ndarray
    bias: np.ndarray
    p: np.ndarray
    predictions: PredictionSet

    def consistency_residuals(self, radius: float = 1.0) -> np.ndarray:
        """Per-anchor per-plane L1 gap between plane points and projected gaze."""
        proj = project_planes(self.predictions.gaze, radius)
        return np.abs(self.predictions.planes() - proj).sum(axis=2)


def toy_descent(features, weights, bias, targets: TargetSet, cfg: LossConfig,
                steps: int, lr: float, p0=(0.0, 0.0, 0.0)) -> DescentTrace:
    """Full-batch gradient descent; deterministic, raises on divergence."""
    if steps < 1:
        raise InvalidArgument("steps must be >= 1")
    features = np.asarray(features, dtype=np.float64)
    w = np.array(weights, dtype=np.float64)
    b = np.array(bias, dtype=np.float64)
    p = np.array(p0, dtype=np.float64).reshape(3)
    if w.shape != (features.shape[1], N_OUTPUTS) or b.shape != (N_OUTPUTS,):
        raise InvalidArgument(f"head must be ({features.shape[1]}, {N_OUTPUTS}) + ({N_OUTPUTS},)")

    losses = np.empty(steps + 1)
    p_hist = np.empty((steps + 1, 3))
    pred = head_forward(features, w, b)
    for step in range(steps):
        # overflow here is the divergence signal, not an error
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = loss_total(pred, targets, p, cfg)
        if not np.isfinite(loss):
            raise DescentDiverged(f"loss became non-finite at step {step}", step)
        losses[step] = loss
        p_hist[step] = p

        dz = np.empty((features.shape[0], N_OUTPUTS))
        dz[:, SLICE_LOGIT] = grads.prob * pred.prob * (1.0 - pred.prob)
        dz[:, SLICE_BOX] = grads.box
        dz[:, SLICE_LMK] = grads.lmk
        dz[:, SLICE_GAZE] = grads.gaze
        dz[:, SLICE_FRONT] = grads.front
        dz[:, SLICE_TOP] = grads.top
        dz[:, SLICE_SIDE] = grads.side

        w -= lr * (features.T @ dz)
        b -= lr * dz.sum(axis=0)
        p -= lr * grads.p
        try:
            pred = head_forward(features, w, b)
        except InvalidArgument as exc:
            raise DescentDiverged(f"parameters became non-finite at step {step + 1}",
                                  step + 1) from exc

    with np.errstate(over="ignore", invalid="ignore"):
        final_loss, _ = loss_total(pred, targets, p, cfg)
    if not np.isfinite(final_loss):
        raise DescentDiverged(f"loss became non-finite at step {steps}", steps)
    losses[steps] = final_loss
    p_hist[steps] = p
    return DescentTrace(losses, p_hist, w, b, p, pred)


@dataclass
class ToyInstance:
    features: np.ndarray
    weights: np.ndarray
    bias: np.ndarray
    targets: TargetSet
    cfg: LossConfig = field(default_factory=LossConfig)
    lr: float = 3e-4
    steps: int = 5000


def make_toy_instance(seed: int = 0, n_anchors: int = 8, n_negative: int = 2,
                      init_noise: float = 0.2) -> ToyInstance:
    """Realizable fit problem: targets are exact outputs of a hidden head.

    Features are orthonormal rows, so the affine head can interpolate any
    target values, including the nonlinear plane projections; the
    classification column starts confident so the cross-entropy floor does
    not mask the regression convergence.
    """
    rng = np.random.default_rng(seed)
    dim = n_anchors
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    features = q[:n_anchors]

    labels = np.ones(n_anchors, dtype=np.int64)
    labels[rng.permutation(n_anchors)[:n_negative]] = 0

    box_t = rng.uniform(-0.4, 0.4, (n_anchors, 4))
    lmk_t = rng.uniform(-0.5, 0.5, (n_anchors, 10))
    gaze_t = rng.uniform(-0.5, 0.5, (n_anchors, 2))
    targets = TargetSet(labels=labels, box=box_t, lmk=lmk_t, gaze=gaze_t)

    z_true = np.zeros((n_anchors, N_OUTPUTS))
    z_true[:, SLICE_LOGIT] = np.where(labels == 1, 8.0, -8.0)
    z_true[:, SLICE_BOX] = box_t
    z_true[:, SLICE_LMK] = lmk_t
    z_true[:, SLICE_GAZE] = gaze_t
    proj = project_planes(gaze_t, 1.0)
    z_true[:, SLICE_FRONT] = proj[:, 0]
    z_true[:, SLICE_TOP] = proj[:, 1]
    z_true[:, SLICE_SIDE] = proj[:, 2]

    w_true = features.T @ z_true  # features rows orthonormal: exact interpolation
    noise = rng.normal(0.0, init_noise, w_true.shape)
    return ToyInstance(features=features, weights=w_true + noise,
                       bias=np.zeros(N_OUTPUTS), targets=targets)
