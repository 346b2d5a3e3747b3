"""Seamless cloning by solving the discrete Poisson equation.

Unknowns are the mask's interior pixels (masked pixels whose four neighbours
are also masked). The right-hand side carries the 5-point Laplacian of the
source restricted to the mask, so every gradient it uses joins two masked
pixels: adding a constant to the source inside the mask leaves the solution
unchanged, and the Dirichlet ring (the mask's own border, pinned to the
target) fixes the level. Everything outside the interior is returned
untouched from the target.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import BlendFailed, InvalidArgument

CG_REL_TOL = 1e-6
CG_MAX_ITER = 10_000

_SHIFTS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def mask_interior(mask: np.ndarray) -> np.ndarray:
    """Masked pixels whose four neighbours are masked too."""
    m = mask.astype(bool)
    interior = m.copy()
    interior[0, :] = interior[-1, :] = False
    interior[:, 0] = interior[:, -1] = False
    interior[1:-1, 1:-1] &= m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
    return interior


def _check_mask(mask: np.ndarray, shape) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.shape != shape:
        raise InvalidArgument(f"mask shape {mask.shape} does not match image {shape}")
    mask = mask.astype(bool)
    if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
        raise InvalidArgument("mask must keep a 1-pixel margin from the image border")
    return mask


def _build_system(mask: np.ndarray):
    """Index map, (n, 4) neighbour table and the interior coordinate arrays."""
    interior = mask_interior(mask)
    ys, xs = np.nonzero(interior)
    n = len(ys)
    if n == 0:
        raise InvalidArgument("mask has no interior pixels to blend")
    index = np.full(mask.shape, -1, dtype=np.int64)
    index[ys, xs] = np.arange(n)
    neighbors = np.empty((n, 4), dtype=np.int64)
    for k, (dy, dx) in enumerate(_SHIFTS):
        neighbors[:, k] = index[ys + dy, xs + dx]
    return interior, ys, xs, neighbors


def _conjugate_gradient(matvec, b, x0, rel_tol, max_iter, jacobi=False):
    """Plain CG with a periodic true-residual refresh. Returns (x, rel_residual, iters)."""
    x = x0.astype(np.float64).copy()
    b = b.astype(np.float64)
    scale = float(np.linalg.norm(b))
    denom = scale if scale > 0 else 1.0
    r = b - matvec(x)
    if np.linalg.norm(r) / denom <= rel_tol:
        return x, float(np.linalg.norm(r) / denom), 0
    z = r / 4.0 if jacobi else r
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, max_iter + 1):
        ap = matvec(p)
        alpha = rz / float(p @ ap)
        x += alpha * p
        if k % 50 == 0:
            r = b - matvec(x)
        else:
            r -= alpha * ap
        if np.linalg.norm(r) / denom <= rel_tol:
            return x, float(np.linalg.norm(r) / denom), k
        z = r / 4.0 if jacobi else r
        rz_next = float(r @ z)
        p = z + (rz_next / rz) * p
        rz = rz_next
    return None, float(np.linalg.norm(b - matvec(x)) / denom), max_iter


def poisson_blend(target: np.ndarray, source: np.ndarray, mask: np.ndarray,
                  rel_tol: float = CG_REL_TOL, max_iter: int = CG_MAX_ITER,
                  jacobi: bool = False) -> np.ndarray:
    """Clone the source's gradients into the target inside the mask.

    Solved per channel by conjugate gradient to a relative residual of
    ``rel_tol`` (or :class:`BlendFailed` after ``max_iter`` iterations).
    Pixels outside the mask interior are returned bit-identical to the target.
    """
    target = np.asarray(target, dtype=np.float64)
    source = np.asarray(source, dtype=np.float64)
    if target.shape != source.shape:
        raise InvalidArgument(f"target {target.shape} and source {source.shape} differ")
    mask = _check_mask(mask, target.shape[:2])

    squeeze = target.ndim == 2
    tgt = target[..., None] if squeeze else target
    src = source[..., None] if squeeze else source

    interior, ys, xs, neighbors = _build_system(mask)
    known = neighbors < 0

    out = tgt.copy()
    for c in range(tgt.shape[2]):
        t = tgt[..., c]
        s = src[..., c]
        guidance = 4.0 * s[ys, xs]
        for dy, dx in _SHIFTS:
            guidance -= s[ys + dy, xs + dx]
        dirichlet = np.zeros(len(ys))
        for k, (dy, dx) in enumerate(_SHIFTS):
            contrib = t[ys + dy, xs + dx]
            dirichlet += np.where(known[:, k], contrib, 0.0)
        b = guidance + dirichlet

        matvec = lambda v: _kernels.poisson_matvec(v, neighbors)  # noqa: E731
        x, residual, iters = _conjugate_gradient(matvec, b, t[ys, xs], rel_tol, max_iter,
                                                 jacobi=jacobi)
        if x is None:
            raise BlendFailed(
                f"conjugate gradient stalled at relative residual {residual:.3e} "
                f"after {max_iter} iterations (channel {c})", residual)
        out[ys, xs, c] = x
    return out[..., 0] if squeeze else out


def blend_residual(result: np.ndarray, source: np.ndarray, mask: np.ndarray) -> float:
    """Max abs defect of the Poisson equation on the interior (diagnostic)."""
    result = np.asarray(result, dtype=np.float64)
    source = np.asarray(source, dtype=np.float64)
    squeeze = result.ndim == 2
    res = result[..., None] if squeeze else result
    src = source[..., None] if squeeze else source
    interior = mask_interior(np.asarray(mask).astype(bool))
    ys, xs = np.nonzero(interior)
    worst = 0.0
    for c in range(res.shape[2]):
        lap_f = 4.0 * res[ys, xs, c]
        lap_s = 4.0 * src[ys, xs, c]
        for dy, dx in _SHIFTS:
            lap_f -= res[ys + dy, xs + dx, c]
            lap_s -= src[ys + dy, xs + dx, c]
        worst = max(worst, float(np.max(np.abs(lap_f - lap_s))) if len(ys) else 0.0)
    return worst
