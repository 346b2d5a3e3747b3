import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from gazekit import geometry as geo
from gazekit import normalization as norm
from gazekit.errors import EstimationFailed, InvalidArgument

CAM = norm.CameraIntrinsics(800.0, 800.0, 320.0, 240.0)


def synth_landmarks(rotation, translation, cam=CAM, model=None):
    model = model or norm.default_face_model()
    lmk = np.full((68, 2), np.nan)
    lmk[model.landmark_indices] = norm.project_points(model.points, rotation, translation, cam)
    return lmk


def rot_error_deg(r1, r2):
    return Rotation.from_matrix(r1.T @ r2).magnitude() * 180.0 / math.pi


class TestHeadPose:
    def test_identity_recovery(self):
        pose = norm.estimate_head_pose(synth_landmarks(np.eye(3), [0, 0, 600]), CAM)
        assert rot_error_deg(pose.rotation, np.eye(3)) < 0.1
        assert np.allclose(pose.translation, [0, 0, 600], atol=1e-6)
        assert pose.rmse < 1e-6

    def test_known_yaw_recovery(self):
        r = Rotation.from_euler("y", 20, degrees=True).as_matrix()
        pose = norm.estimate_head_pose(synth_landmarks(r, [40, -20, 700]), CAM)
        assert rot_error_deg(pose.rotation, r) < 0.5

    def test_collinear_landmarks_fail(self):
        lmk = np.zeros((68, 2))
        lmk[:, 0] = np.arange(68.0)
        lmk[:, 1] = 2.0 * np.arange(68.0)
        with pytest.raises(EstimationFailed):
            norm.estimate_head_pose(lmk, CAM)

    def test_missing_pnp_points_rejected(self):
        lmk = synth_landmarks(np.eye(3), [0, 0, 600])
        lmk[36] = np.nan
        with pytest.raises(InvalidArgument):
            norm.estimate_head_pose(lmk, CAM)

    def test_pose_invariants(self):
        with pytest.raises(InvalidArgument):
            norm.HeadPose(np.eye(3) * 2.0, [0, 0, 500])
        with pytest.raises(InvalidArgument):
            norm.HeadPose(np.eye(3), [0, 0, -500])


class TestNormalization:
    def test_on_axis_frontal_is_identity_rotation(self):
        pose = norm.HeadPose(np.eye(3), [0, 0, 600])
        params = norm.NormParams(distance_mm=600.0, focal_px=500.0, crop_px=128)
        res = norm.compute_normalization(pose, CAM, params)
        assert np.allclose(res.rotation, np.eye(3), atol=1e-12)
        expected = params.virtual_intrinsics.matrix @ np.linalg.inv(CAM.matrix)
        assert np.allclose(res.warp, expected, atol=1e-12)

    def test_halving_distance_doubles_scale(self):
        params = norm.NormParams()
        w1 = norm.compute_normalization(norm.HeadPose(np.eye(3), [0, 0, 800]), CAM, params).warp
        w2 = norm.compute_normalization(norm.HeadPose(np.eye(3), [0, 0, 400]), CAM, params).warp
        s1 = np.linalg.det(w1)
        s2 = np.linalg.det(w2)
        # det scales linearly with the depth rescale factor
        assert math.isclose(s2 / s1, 2.0, rel_tol=1e-9)

    def test_warp_invertible_across_depths(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            r = Rotation.from_euler("xyz", rng.uniform(-40, 40, 3), degrees=True).as_matrix()
            t = [rng.uniform(-200, 200), rng.uniform(-150, 150), rng.uniform(300, 1200)]
            res = norm.compute_normalization(norm.HeadPose(r, t), CAM)
            inv = np.linalg.inv(res.warp)
            assert np.allclose(res.warp @ inv, np.eye(3), atol=1e-9)

    def test_synthetic_closure(self):
        # estimated pose -> warp must land landmarks where direct 3D
        # reprojection through the virtual camera puts them
        rng = np.random.default_rng(1)
        model = norm.default_face_model()
        params = norm.NormParams(distance_mm=600.0, focal_px=960.0, crop_px=224)
        for _ in range(100):
            r = Rotation.from_euler("xyz", rng.uniform(-40, 40, 3), degrees=True).as_matrix()
            t = np.array([rng.uniform(-150, 150), rng.uniform(-100, 100), rng.uniform(350, 1100)])
            lmk = synth_landmarks(r, t)
            pose = norm.estimate_head_pose(lmk, CAM)
            res = norm.compute_normalization(pose, CAM, params)

            warped = norm.warp_points(lmk[model.landmark_indices], res.warp)

            cam_pts = model.points @ r.T + t
            virt = cam_pts @ res.rotation.T
            virt[:, 2] *= params.distance_mm / np.linalg.norm(t)
            k_n = params.virtual_intrinsics.matrix
            direct = (virt @ k_n.T)
            direct = direct[:, :2] / direct[:, 2:3]
            assert np.max(np.linalg.norm(warped - direct, axis=1)) < 2.0


class TestWarpImage:
    def test_identity(self):
        rng = np.random.default_rng(2)
        img = rng.random((16, 20, 3))
        out = norm.warp_image(img, np.eye(3), (16, 20))
        assert np.allclose(out, img)

    def test_integer_translation_matches_roll(self):
        h, w = 24, 32
        yy, xx = np.mgrid[0:h, 0:w]
        img = ((xx + yy) / (h + w)).astype(np.float64)
        warp = np.array([[1.0, 0.0, 5.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        out = norm.warp_image(img, warp, (h, w))
        shifted = np.zeros_like(img)
        shifted[:, 5:] = img[:, :-5]
        assert np.max(np.abs(out - shifted)) <= 1.0 / 255.0

    def test_scale_of_constant_image(self):
        img = np.full((20, 20), 0.6)
        warp = np.diag([2.0, 2.0, 1.0])
        out = norm.warp_image(img, warp, (20, 20))
        # every output pixel samples inside the (scaled) constant source
        assert np.allclose(out, 0.6)

    def test_out_of_bounds_zero(self):
        img = np.ones((8, 8))
        warp = np.array([[1.0, 0.0, 100.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        out = norm.warp_image(img, warp, (8, 8))
        assert np.allclose(out, 0.0)

    def test_singular_warp_rejected(self):
        with pytest.raises(InvalidArgument):
            norm.warp_image(np.ones((4, 4)), np.zeros((3, 3)), (4, 4))


class TestGazeRotation:
    def test_identity(self):
        g = geo.angles_to_vector(0.2, -0.4)
        assert np.allclose(norm.rotate_gaze(np.eye(3), g), g)

    def test_rotation_about_y(self):
        r = Rotation.from_euler("y", 90, degrees=True).as_matrix()
        out = norm.rotate_gaze(r, [0.0, 0.0, -1.0])
        assert np.allclose(out, [-1.0, 0.0, 0.0], atol=1e-12)
        back = norm.denormalize_gaze(r, out)
        assert np.allclose(back, [0.0, 0.0, -1.0], atol=1e-12)

    def test_mutually_inverse(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            r = Rotation.random(random_state=int(rng.integers(1 << 31))).as_matrix()
            g = geo.angles_to_vector(*rng.uniform(-1.2, 1.2, 2))
            assert np.allclose(norm.denormalize_gaze(r, norm.rotate_gaze(r, g)), g, atol=1e-9)

    def test_preserves_angular_error(self):
        rng = np.random.default_rng(4)
        r = Rotation.random(random_state=7).as_matrix()
        g1 = geo.angles_to_vector(*rng.uniform(-1.0, 1.0, 2))
        g2 = geo.angles_to_vector(*rng.uniform(-1.0, 1.0, 2))
        e1 = geo.angular_error(g1, g2)
        e2 = geo.angular_error(norm.rotate_gaze(r, g1), norm.rotate_gaze(r, g2))
        assert math.isclose(e1, e2, abs_tol=1e-9)

    def test_rejects_bad_rotation(self):
        with pytest.raises(InvalidArgument):
            norm.rotate_gaze(np.eye(3) * 1.1, [0, 0, -1.0])


def test_face_model_roundtrip(tmp_path):
    model = norm.default_face_model()
    path = tmp_path / "model.txt"
    lines = ["# test copy"]
    for name, p in zip(model.names, model.points):
        lines.append(f"{name} {p[0]} {p[1]} {p[2]}")
    path.write_text("\n".join(lines), encoding="utf-8")
    again = norm.load_face_model(path)
    assert again.names == model.names
    assert np.allclose(again.points, model.points)
    assert np.array_equal(again.landmark_indices, model.landmark_indices)


def test_default_intrinsics():
    cam = norm.default_intrinsics(640, 480)
    assert cam.fx == cam.fy == 1.2 * 640
    assert cam.cx == 320 and cam.cy == 240
