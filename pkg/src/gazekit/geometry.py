"""Closed-form 3D gaze representations and their three plane projections.

Conventions
-----------
A gaze direction is described either by angles ``(pitch, yaw)`` in radians or
by a unit 3-vector in the camera frame (x right, y down, z into the scene).
The two are tied together by

    g = (-cos(pitch) * sin(yaw), -sin(pitch), -cos(pitch) * cos(yaw))

so that frontal gaze ``(0, 0)`` is ``(0, 0, -1)`` (looking straight at the
camera), positive pitch looks up (negative image y) and positive yaw looks to
the camera's left (negative image x).

Under this convention the three plane projections of a gaze at face radius
``r`` reduce to coordinate-plane projections of ``r * g``:

    front: (-r sin(yaw) cos(pitch), -r sin(pitch))            = (r gx, r gy)
    top:   ( r cos(yaw) cos(pitch), -r sin(yaw) cos(pitch))   = (-r gz, r gx)
    side:  (-r cos(yaw) cos(pitch), -r sin(pitch))            = (r gz, r gy)

This is the unique angle-to-vector convention with that property: matching
the front plane's two coordinates forces gx = -sin(yaw)cos(pitch) and
gy = -sin(pitch), and the top plane's first coordinate forces
gz = -cos(yaw)cos(pitch); unit norm then holds identically. Note the side
plane shares its second coordinate with the front plane by definition, so it
is not the mirror image of the top plane.

The sensitivity of the gaze angle to a unit change of a (radial) plane
coordinate ``x`` is ``r / sqrt(r**2 - x**2)``: with psi the angle between the
gaze and the plane normal, ``x = r sin(psi)``, hence
``d(psi)/d(x/r) = r / sqrt(r**2 - x**2)``. It is 1 at the plane origin and
diverges toward the disc rim, which is why keeping all three projections
guarantees at least one well-conditioned observation of the gaze: the three
rim distances cannot all be large at once (min over planes <= sqrt(3)).

All operations are pure; arrays broadcast in the usual numpy way.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .errors import InvalidArgument, OutOfDomain

FRONT = "front"
TOP = "top"
SIDE = "side"
PLANES = (FRONT, TOP, SIDE)

_PLANE_CODE = {FRONT: _kernels.PLANE_FRONT, TOP: _kernels.PLANE_TOP, SIDE: _kernels.PLANE_SIDE}

#: max |pitch|, |yaw| for projection work: gaze must face the camera hemisphere
HALF_PI = math.pi / 2.0

UNIT_TOL = 1e-6


def _as_float(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} must be finite")
    return arr


def _check_projection_angles(pitch, yaw):
    if np.any(np.abs(pitch) >= HALF_PI) or np.any(np.abs(yaw) >= HALF_PI):
        raise InvalidArgument("pitch and yaw must satisfy |angle| < pi/2 for plane projections")


def _check_radius(r):
    if not np.isfinite(r) or r <= 0:
        raise InvalidArgument(f"face radius must be positive, got {r!r}")
    return float(r)


def _check_unit(g, name="gaze vector"):
    g = _as_float(g, name)
    if g.shape[-1] != 3:
        raise InvalidArgument(f"{name} must have 3 components, got shape {g.shape}")
    norms = np.linalg.norm(g, axis=-1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise InvalidArgument(f"{name} must be unit length (|norm - 1| <= {UNIT_TOL})")
    return g


def angles_to_vector(pitch, yaw) -> np.ndarray:
    """Unit gaze vector for pitch/yaw in radians. Broadcasts; stacks on the last axis."""
    pitch = _as_float(pitch, "pitch")
    yaw = _as_float(yaw, "yaw")
    cp = np.cos(pitch)
    return np.stack(np.broadcast_arrays(-cp * np.sin(yaw), -np.sin(pitch), -cp * np.cos(yaw)),
                    axis=-1)


def vector_to_angles(g) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`angles_to_vector`. Requires unit input; returns (pitch, yaw)."""
    g = _check_unit(g)
    pitch = -np.arcsin(np.clip(g[..., 1], -1.0, 1.0))
    yaw = np.arctan2(-g[..., 0], -g[..., 2])
    return pitch, yaw


def project(plane: str, pitch, yaw, r) -> tuple[np.ndarray, np.ndarray]:
    """Project a gaze onto one of the three planes; returns plane coords (u, v)."""
    if plane not in _PLANE_CODE:
        raise InvalidArgument(f"unknown plane {plane!r}, expected one of {PLANES}")
    r = _check_radius(r)
    pitch = _as_float(pitch, "pitch")
    yaw = _as_float(yaw, "yaw")
    _check_projection_angles(pitch, yaw)
    cp = np.cos(pitch)
    if plane == FRONT:
        return -r * np.sin(yaw) * cp, -r * np.sin(pitch)
    if plane == TOP:
        return r * np.cos(yaw) * cp, -r * np.sin(yaw) * cp
    return -r * np.cos(yaw) * cp, -r * np.sin(pitch)


def project_all(pitch, yaw, r) -> np.ndarray:
    """All three projections stacked as (..., 3, 2) in (front, top, side) order."""
    uv = [np.stack(np.broadcast_arrays(*project(p, pitch, yaw, r)), axis=-1) for p in PLANES]
    return np.stack(uv, axis=-2)


def unproject_front(u, v, r) -> tuple[np.ndarray, np.ndarray]:
    """Recover (pitch, yaw) from a front-plane point, camera-facing branch.

    The front projection is one-to-one on the open disc u**2 + v**2 < r**2;
    points outside it are rejected as out of domain.
    """
    r = _check_radius(r)
    u = _as_float(u, "u")
    v = _as_float(v, "v")
    if np.any(np.abs(v) >= r):
        raise OutOfDomain(f"|v| must be < r={r}")
    pitch = -np.arcsin(v / r)
    cp = np.cos(pitch)
    if np.any(np.abs(u) >= r * cp):
        raise OutOfDomain("|u| must be < r*cos(pitch); point is outside the projection disc")
    yaw = np.arcsin(-u / (r * cp))
    return pitch, yaw


def gaze_sensitivity(x, r):
    """Degrees-per-unit-coordinate conditioning factor r / sqrt(r**2 - x**2).

    ``x`` is a (radial) coordinate on a projection plane; the value is the
    derivative of the gaze angle with respect to the normalized coordinate
    x/r. Always >= 1, strictly increasing in |x|, unbounded as |x| -> r.
    """
    r = _check_radius(r)
    x = _as_float(x, "x")
    if np.any(np.abs(x) >= r):
        raise OutOfDomain(f"|x| must be < r={r}")
    return r / np.sqrt(r * r - x * x)


def plane_sensitivity(plane: str, pitch: float, yaw: float) -> float:
    """Sensitivity of one plane's projection at the true gaze.

    Equals :func:`gaze_sensitivity` evaluated at the projection's radial
    distance: 1 - (u**2 + v**2)/r**2 collapses to the squared gaze component
    along the plane normal, so the value is 1/|g . n| (inf when the gaze lies
    in the plane).
    """
    g = angles_to_vector(pitch, yaw)
    comp = {FRONT: g[2], TOP: g[1], SIDE: g[0]}[plane]
    if comp == 0.0:
        return math.inf
    return 1.0 / abs(float(comp))


def angular_error(g1, g2):
    """Angle between two unit gaze vectors, in degrees, in [0, 180]."""
    g1 = _check_unit(g1, "g1")
    g2 = _check_unit(g2, "g2")
    dot = np.clip(np.sum(g1 * g2, axis=-1), -1.0, 1.0)
    return np.degrees(np.arccos(dot))


def quantization_error_mc(pitch: float, yaw: float, r: float, pixel: float,
                          planes=PLANES, samples: int = 100_000, seed: int = 0) -> float:
    """Mean angular error (degrees) from quantization noise on plane points.

    Each sample perturbs the true projection by uniform noise in
    [-pixel/2, pixel/2]^2 and unprojects it back to a gaze direction. With
    several planes the one with the lowest sensitivity at the true projection
    is used (a geometric best case: plane choice uses the ground truth, so the
    result isolates the conditioning of the planes themselves). Deterministic
    for a fixed seed.
    """
    planes = tuple(planes)
    if not planes:
        raise InvalidArgument("at least one projection plane is required")
    for p in planes:
        if p not in _PLANE_CODE:
            raise InvalidArgument(f"unknown plane {p!r}")
    if samples < 1:
        raise InvalidArgument("samples must be >= 1")
    if pixel < 0:
        raise InvalidArgument("pixel size must be >= 0")
    r = _check_radius(r)

    plane = min(planes, key=lambda p: (plane_sensitivity(p, pitch, yaw), PLANES.index(p)))
    u0, v0 = project(plane, pitch, yaw, r)
    g = angles_to_vector(pitch, yaw)
    if plane == TOP:
        sign_hint = 1.0 if g[1] >= 0 else -1.0
    elif plane == SIDE:
        sign_hint = 1.0 if g[0] >= 0 else -1.0
    else:
        sign_hint = -1.0  # camera-facing branch

    rng = np.random.default_rng(seed)
    noise = rng.uniform(-pixel / 2.0, pixel / 2.0, size=(2, samples))
    errors = _kernels.mc_unproject_errors(
        _PLANE_CODE[plane], float(u0) + noise[0], float(v0) + noise[1], r,
        float(g[0]), float(g[1]), float(g[2]), sign_hint)
    return float(np.mean(errors))
