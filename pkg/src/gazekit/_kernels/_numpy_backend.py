"""Pure-numpy implementations of the hot kernels.

These mirror the Cython kernels in ``_native.pyx`` operation for operation
(same evaluation order inside each expression), so both backends agree to
floating-point rounding and the test suite can run against either.
"""

import numpy as np

BACKEND_NAME = "python"

PLANE_FRONT = 0
PLANE_TOP = 1
PLANE_SIDE = 2


def warp_bilinear(img: np.ndarray, m_inv: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Backward-map ``img`` through the homography whose inverse is ``m_inv``.

    ``m_inv`` sends homogeneous output pixel coordinates (x, y, 1) to source
    coordinates. Samples are bilinear; taps outside the source are zero.
    """
    squeeze = img.ndim == 2
    chans = img[..., None] if squeeze else img
    chans = np.ascontiguousarray(chans, dtype=np.float64)
    src_h, src_w = chans.shape[:2]

    xs, ys = np.meshgrid(np.arange(out_w, dtype=np.float64),
                         np.arange(out_h, dtype=np.float64))
    denom = m_inv[2, 0] * xs + m_inv[2, 1] * ys + m_inv[2, 2]
    safe = np.abs(denom) > 1e-12
    denom_safe = np.where(safe, denom, 1.0)
    sx = (m_inv[0, 0] * xs + m_inv[0, 1] * ys + m_inv[0, 2]) / denom_safe
    sy = (m_inv[1, 0] * xs + m_inv[1, 1] * ys + m_inv[1, 2]) / denom_safe

    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    def tap(yi, xi):
        valid = (yi >= 0) & (yi < src_h) & (xi >= 0) & (xi < src_w)
        vals = chans[np.clip(yi, 0, src_h - 1), np.clip(xi, 0, src_w - 1)]
        return np.where(valid[..., None], vals, 0.0)

    v00 = tap(y0, x0)
    v01 = tap(y0, x0 + 1)
    v10 = tap(y0 + 1, x0)
    v11 = tap(y0 + 1, x0 + 1)
    fx3 = fx[..., None]
    fy3 = fy[..., None]
    top = (1.0 - fx3) * v00 + fx3 * v01
    bottom = (1.0 - fx3) * v10 + fx3 * v11
    out = (1.0 - fy3) * top + fy3 * bottom
    out = np.where(safe[..., None], out, 0.0)
    return out[..., 0] if squeeze else out


def poisson_matvec(x: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """Apply the 5-point Laplacian restricted to the unknowns.

    ``neighbors`` is (n, 4) int64; entry -1 marks a Dirichlet neighbor whose
    contribution is already folded into the right-hand side.
    """
    padded = np.concatenate([x, [0.0]])
    acc = 4.0 * x
    acc = acc - padded[neighbors[:, 0]]
    acc = acc - padded[neighbors[:, 1]]
    acc = acc - padded[neighbors[:, 2]]
    acc = acc - padded[neighbors[:, 3]]
    return acc


def mc_unproject_errors(plane: int, u: np.ndarray, v: np.ndarray, r: float,
                        gx: float, gy: float, gz: float, sign_hint: float) -> np.ndarray:
    """Angular error (degrees) of unprojecting noisy plane points (u, v).

    Points are first clamped into the disc of radius ``r`` (the image of the
    unit sphere on every plane); the component normal to the plane is
    recovered from unit norm, with ``sign_hint`` resolving the branch on the
    top/side planes (the front plane always takes the camera-facing branch).
    """
    lim = r * (1.0 - 1e-12)
    rho = np.hypot(u, v)
    scale = np.where(rho > lim, lim / np.where(rho > lim, rho, 1.0), 1.0)
    u = u * scale
    v = v * scale
    if plane == PLANE_FRONT:
        rx = u / r
        ry = v / r
        rz = -np.sqrt(np.maximum(0.0, 1.0 - rx * rx - ry * ry))
    elif plane == PLANE_TOP:
        rz = -u / r
        rx = v / r
        ry = sign_hint * np.sqrt(np.maximum(0.0, 1.0 - rz * rz - rx * rx))
    elif plane == PLANE_SIDE:
        rz = u / r
        ry = v / r
        rx = sign_hint * np.sqrt(np.maximum(0.0, 1.0 - rz * rz - ry * ry))
    else:
        raise ValueError(f"unknown plane code {plane}")
    dot = np.clip(gx * rx + gy * ry + gz * rz, -1.0, 1.0)
    return np.degrees(np.arccos(dot))
