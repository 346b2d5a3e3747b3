import math

import numpy as np
import pytest

from gazekit import losses
from gazekit.errors import InvalidArgument
from gazekit.losses import (BCE_EPS, Gradients, LossConfig, PredictionSet,
                            TargetSet, gradient_check, loss_face, loss_gaze,
                            loss_self, loss_total, project_planes,
                            random_instance)


def perfect_instance(n=4, n_neg=1, seed=0):
    """Predictions that exactly hit their targets (probabilities near-saturated)."""
    rng = np.random.default_rng(seed)
    labels = np.ones(n, dtype=np.int64)
    labels[:n_neg] = 0
    gaze = rng.uniform(-0.8, 0.8, (n, 2))
    box = rng.uniform(-0.5, 0.5, (n, 4))
    lmk = rng.uniform(-0.5, 0.5, (n, 10))
    target = TargetSet(labels=labels, box=box, lmk=lmk, gaze=gaze)
    proj = project_planes(gaze, 1.0)
    prob = np.where(labels == 1, 1.0 - 1e-9, 1e-9)
    pred = PredictionSet(prob=prob, box=box.copy(), lmk=lmk.copy(), gaze=gaze.copy(),
                         front=proj[:, 0].copy(), top=proj[:, 1].copy(),
                         side=proj[:, 2].copy())
    return pred, target


class TestLossFace:
    def test_perfect_predictions(self):
        pred, target = perfect_instance()
        loss, grads = loss_face(pred, target)
        # only the clipped cross-entropy floor remains
        assert loss < -math.log(1.0 - 2 * BCE_EPS) + 1e-6
        assert np.allclose(grads.box, 0.0) and np.allclose(grads.lmk, 0.0)

    def test_negative_anchor_regression_gated(self):
        pred, target = perfect_instance(n=3, n_neg=1)
        pred.box[target.labels == 0] += 100.0  # garbage on a negative anchor
        loss_clean, grads = loss_face(pred, target)
        assert np.allclose(grads.box[target.labels == 0], 0.0)
        pred2, target2 = perfect_instance(n=3, n_neg=1)
        base, _ = loss_face(pred2, target2)
        assert math.isclose(loss_clean, base, rel_tol=1e-12)

    def test_single_positive_box_residual_half(self):
        pred, target = perfect_instance(n=1, n_neg=0)
        pred.box[0] = target.box[0] + 0.5
        cfg = LossConfig(lambda_box=1.0, lambda_landmark=0.0)
        loss, _ = loss_face(pred, target, cfg)
        bce = -math.log(1.0 - 1e-9 if False else float(np.clip(pred.prob[0], BCE_EPS, 1 - BCE_EPS)))
        # smooth-L1 of 0.5 per coordinate, four coordinates: 4 * 0.125 = 0.5
        assert math.isclose(loss - (-math.log(1.0 - BCE_EPS)), 0.5, abs_tol=1e-6)

    def test_ignored_anchor_contributes_nothing(self):
        pred, target = perfect_instance(n=4, n_neg=1)
        target.labels[1] = losses.IGNORE
        pred.prob[1] = 0.123
        _, grads = loss_face(pred, target)
        assert grads.prob[1] == 0.0


class TestLossSelf:
    def test_zero_at_consistency_with_zero_p(self):
        gaze = np.array([0.2, -0.3])
        proj = project_planes(gaze[None, :], 1.0)[0]
        loss, grads = loss_self(proj[0], proj[1], proj[2], gaze, np.zeros(3))
        assert loss == 0.0
        assert np.allclose(grads["gaze"], 0.0)

    def test_single_plane_arithmetic(self):
        # residual L1 sum equal to e with p = 1 gives e*e^-1 + 1 = 2
        gaze = np.array([0.0, 0.0])
        proj = project_planes(gaze[None, :], 1.0)[0]
        front = proj[0] + np.array([math.e, 0.0])
        loss, _ = loss_self(front, proj[1], proj[2], gaze, np.array([1.0, 0.0, 0.0]))
        assert math.isclose(loss, 2.0, rel_tol=1e-12)

    def test_stationary_point_of_p(self):
        rng = np.random.default_rng(0)
        gaze = rng.uniform(-0.5, 0.5, 2)
        proj = project_planes(gaze[None, :], 1.0)[0]
        planes = proj + rng.uniform(0.05, 0.4, (3, 2)) * rng.choice([-1, 1], (3, 2))
        s = np.abs(planes - proj).sum(axis=1)
        p_star = np.log(s)
        _, grads = loss_self(planes[0], planes[1], planes[2], gaze, p_star)
        assert np.max(np.abs(grads["p"])) < 1e-8
        # second difference along each p is positive: it is a minimum
        h = 1e-4
        for t in range(3):
            for delta, sign in ((h, 1.0), (-h, 1.0)):
                p_shift = p_star.copy()
                p_shift[t] += delta
                up, _ = loss_self(planes[0], planes[1], planes[2], gaze, p_shift)
                base, _ = loss_self(planes[0], planes[1], planes[2], gaze, p_star)
                assert up > base

    def test_envelope_lower_bound(self):
        rng = np.random.default_rng(1)
        gaze = rng.uniform(-0.5, 0.5, 2)
        proj = project_planes(gaze[None, :], 1.0)[0]
        planes = proj + rng.uniform(0.05, 0.4, (3, 2))
        s = np.abs(planes - proj).sum(axis=1)
        floor = float((1.0 + np.log(s)).sum())
        for trial in range(200):
            p = rng.uniform(-6, 6, 3)
            val, _ = loss_self(planes[0], planes[1], planes[2], gaze, p)
            assert val >= floor - 1e-9


class TestLossGaze:
    def test_zero_when_perfect_with_zero_p(self):
        pred, target = perfect_instance()
        loss, grads = loss_gaze(pred, target, np.zeros(3))
        assert loss == 0.0
        assert np.allclose(grads.gaze, 0.0)

    def test_reduces_to_angle_l1(self):
        pred, target = perfect_instance(n=1, n_neg=0)
        pred.gaze[0, 0] = target.gaze[0, 0] + 0.1
        cfg = LossConfig(lambda_self=0.0, lambda_projection=0.0, lambda_angles=1.0)
        loss, _ = loss_gaze(pred, target, np.zeros(3), cfg)
        assert math.isclose(loss, 0.1, rel_tol=1e-9)

    def test_negative_anchors_get_no_gaze_gradient(self):
        pred, target = perfect_instance(n=4, n_neg=2)
        pred.gaze[target.labels == 0] += 5.0
        _, grads = loss_gaze(pred, target, np.zeros(3))
        assert np.allclose(grads.gaze[target.labels == 0], 0.0)
        assert np.allclose(grads.front[target.labels == 0], 0.0)


class TestLossTotal:
    def test_alpha_zero_silences_face_gradients(self):
        pred, target, p = random_instance(0)
        cfg = LossConfig(alpha=0.0)
        _, grads = loss_total(pred, target, p, cfg)
        assert np.allclose(grads.prob, 0.0)
        assert np.allclose(grads.box, 0.0)
        assert np.allclose(grads.lmk, 0.0)

    def test_beta_scales_gaze_gradients_linearly(self):
        pred, target, p = random_instance(1)
        _, g1 = loss_total(pred, target, p, LossConfig(beta=1.0))
        _, g2 = loss_total(pred, target, p, LossConfig(beta=2.0))
        assert np.allclose(g2.gaze, 2.0 * g1.gaze)
        assert np.allclose(g2.p, 2.0 * g1.p)

    def test_non_negative_face_and_projection_terms(self):
        for seed in range(10):
            pred, target, p = random_instance(seed)
            l_face, _ = loss_face(pred, target)
            assert l_face >= 0.0
            cfg = LossConfig(lambda_self=0.0)
            l_gz, _ = loss_gaze(pred, target, p, cfg)
            assert l_gz >= 0.0


class TestGradientCheck:
    def test_random_instances(self):
        # the acceptance suite runs the full 100-instance sweep
        worst = 0.0
        for seed in range(30):
            pred, target, p = random_instance(seed)
            errs = gradient_check(pred, target, p)
            worst = max(worst, max(errs.values()))
        assert worst < 1e-4

    def test_mismatched_sets_rejected(self):
        pred, target, p = random_instance(0, n_anchors=4)
        _, target_bad, _ = random_instance(0, n_anchors=6)
        with pytest.raises(InvalidArgument):
            loss_total(pred, target_bad, p)


def test_gradients_container_scaled_add():
    a = Gradients.zeros(2)
    b = Gradients.zeros(2)
    b.gaze[...] = 1.0
    b.p[...] = 2.0
    a.scaled_add(b, 0.5)
    assert np.allclose(a.gaze, 0.5)
    assert np.allclose(a.p, 1.0)


def test_config_validation():
    with pytest.raises(InvalidArgument):
        LossConfig(alpha=-1.0)
    with pytest.raises(InvalidArgument):
        LossConfig(radius=0.0)
