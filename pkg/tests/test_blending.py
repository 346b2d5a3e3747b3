import numpy as np
import pytest

from gazekit import blending
from gazekit.errors import BlendFailed, InvalidArgument


def dense_poisson_oracle(target, source, mask):
    """Independent direct solve of the blend system (dense assembly)."""
    target = np.asarray(target, dtype=np.float64)
    source = np.asarray(source, dtype=np.float64)
    interior = blending.mask_interior(mask)
    ys, xs = np.nonzero(interior)
    n = len(ys)
    index = {(y, x): i for i, (y, x) in enumerate(zip(ys, xs))}
    squeeze = target.ndim == 2
    tgt = target[..., None] if squeeze else target
    src = source[..., None] if squeeze else source
    out = tgt.copy()
    for c in range(tgt.shape[2]):
        a = np.zeros((n, n))
        b = np.zeros(n)
        for i, (y, x) in enumerate(zip(ys, xs)):
            a[i, i] = 4.0
            b[i] += 4.0 * src[y, x, c]
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                q = (y + dy, x + dx)
                b[i] -= src[q[0], q[1], c]
                if q in index:
                    a[i, index[q]] = -1.0
                else:
                    b[i] += tgt[q[0], q[1], c]
        x_sol = np.linalg.solve(a, b)
        out[ys, xs, c] = x_sol
    return out[..., 0] if squeeze else out


def box_mask(shape, y0, y1, x0, x1):
    mask = np.zeros(shape, dtype=bool)
    mask[y0:y1, x0:x1] = True
    return mask


class TestPoissonBlend:
    def test_source_equals_target_returns_target(self):
        rng = np.random.default_rng(0)
        target = rng.random((16, 16, 3))
        mask = box_mask((16, 16), 4, 12, 3, 13)
        out = blending.poisson_blend(target, target.copy(), mask)
        assert np.max(np.abs(out - target)) < 1e-6

    def test_constant_offset_inside_mask_returns_target(self):
        rng = np.random.default_rng(1)
        target = rng.random((16, 16))
        mask = box_mask((16, 16), 3, 13, 4, 12)
        source = target.copy()
        source[mask] += 0.25
        out = blending.poisson_blend(target, source, mask)
        assert np.max(np.abs(out - target)) < 1e-6

    def test_matches_dense_oracle_on_crafted_gradients(self):
        rng = np.random.default_rng(2)
        target = rng.random((16, 16, 3))
        source = rng.random((16, 16, 3))
        yy, xx = np.mgrid[0:16, 0:16].astype(np.float64)
        source[..., 0] += 0.3 * np.sin(xx) * np.cos(yy)
        mask = box_mask((16, 16), 5, 11, 5, 11)  # 6x6 mask, 4x4 interior
        out = blending.poisson_blend(target, source, mask, rel_tol=1e-12)
        oracle = dense_poisson_oracle(target, source, mask)
        assert np.max(np.abs(out - oracle)) < 1e-8

    def test_matches_dense_oracle_irregular_mask(self):
        rng = np.random.default_rng(3)
        target = rng.random((16, 16))
        source = rng.random((16, 16))
        mask = box_mask((16, 16), 2, 14, 2, 14)
        mask[6:9, 6:9] = False  # carve a hole: non-convex region
        out = blending.poisson_blend(target, source, mask, rel_tol=1e-12)
        oracle = dense_poisson_oracle(target, source, mask)
        assert np.max(np.abs(out - oracle)) < 1e-8

    def test_outside_mask_bit_identical(self):
        rng = np.random.default_rng(4)
        target = rng.random((20, 18, 3))
        source = rng.random((20, 18, 3))
        mask = box_mask((20, 18), 6, 14, 5, 13)
        out = blending.poisson_blend(target, source, mask)
        np.testing.assert_array_equal(out[~mask], target[~mask])

    def test_level_shift_invariance(self):
        rng = np.random.default_rng(5)
        target = rng.random((18, 18))
        source = rng.random((18, 18))
        mask = box_mask((18, 18), 4, 14, 4, 14)
        a = blending.poisson_blend(target, source, mask, rel_tol=1e-11)
        shifted = source.copy()
        shifted[mask] += 0.8
        b = blending.poisson_blend(target, shifted, mask, rel_tol=1e-11)
        assert np.max(np.abs(a - b)) < 1e-6

    def test_interior_poisson_residual_small(self):
        rng = np.random.default_rng(6)
        target = rng.random((32, 32, 3))
        source = rng.random((32, 32, 3))
        mask = box_mask((32, 32), 4, 28, 4, 28)
        out = blending.poisson_blend(target, source, mask)
        assert blending.blend_residual(out, source, mask) <= 1e-4

    def test_jacobi_option_matches(self):
        rng = np.random.default_rng(7)
        target = rng.random((16, 16))
        source = rng.random((16, 16))
        mask = box_mask((16, 16), 4, 12, 4, 12)
        a = blending.poisson_blend(target, source, mask, rel_tol=1e-11)
        b = blending.poisson_blend(target, source, mask, rel_tol=1e-11, jacobi=True)
        assert np.max(np.abs(a - b)) < 1e-8

    def test_non_convergence_raises_with_residual(self):
        rng = np.random.default_rng(8)
        target = rng.random((24, 24))
        source = rng.random((24, 24))
        mask = box_mask((24, 24), 2, 22, 2, 22)
        with pytest.raises(BlendFailed) as err:
            blending.poisson_blend(target, source, mask, rel_tol=1e-14, max_iter=2)
        assert err.value.residual > 0

    def test_mask_touching_border_rejected(self):
        target = np.zeros((8, 8))
        mask = np.zeros((8, 8), dtype=bool)
        mask[0:5, 2:6] = True
        with pytest.raises(InvalidArgument):
            blending.poisson_blend(target, target, mask)

    def test_empty_interior_rejected(self):
        target = np.zeros((8, 8))
        mask = np.zeros((8, 8), dtype=bool)
        mask[3, 3:6] = True  # a line has no interior
        with pytest.raises(InvalidArgument):
            blending.poisson_blend(target, target, mask)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidArgument):
            blending.poisson_blend(np.zeros((8, 8)), np.zeros((9, 8)),
                                   np.zeros((8, 8), dtype=bool))


def test_mask_interior_definition():
    mask = box_mask((10, 10), 2, 8, 3, 9)
    interior = blending.mask_interior(mask)
    assert interior[3:7, 4:8].all()
    assert not interior[2, :].any() and not interior[:, 3].any()
    assert interior.sum() == (8 - 2 - 2) * (9 - 3 - 2)
