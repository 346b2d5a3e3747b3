"""Evaluation protocol: angular error binned by face width or gaze angle,
plus the arithmetic running-time model for per-face vs one-stage pipelines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .geometry import angular_error

FRONTAL = np.array([0.0, 0.0, -1.0])

#: face-width bin edges (pixels); the last bin is open-ended
WIDTH_BIN_EDGES = (30.0, 60.0, 90.0, 120.0, 150.0, 180.0, 210.0, 240.0, math.inf)
#: gaze angle-from-frontal bin edges (degrees)
ANGLE_BIN_EDGES = (0.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0)


@dataclass(frozen=True)
class BinSpec:
    edges: tuple
    unit: str = ""

    def __post_init__(self):
        if len(self.edges) < 2:
            raise InvalidArgument("a bin spec needs at least two edges")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise InvalidArgument("bin edges must be strictly increasing")

    @property
    def labels(self) -> tuple:
        out = []
        for lo, hi in zip(self.edges, self.edges[1:]):
            if math.isinf(hi):
                out.append(f">{lo:g}")
            else:
                out.append(f"{lo:g}-{hi:g}")
        return tuple(out)

    def assign(self, value: float):
        """Half-open bins [lo, hi); returns a label or None when out of range."""
        for lo, hi, label in zip(self.edges, self.edges[1:], self.labels):
            if lo <= value < hi:
                return label
        return None


WIDTH_BINS = BinSpec(WIDTH_BIN_EDGES, unit="px")
ANGLE_BINS = BinSpec(ANGLE_BIN_EDGES, unit="deg")


@dataclass
class FaceEvalRecord:
    face_id: str
    face_width: float
    gt_gaze: np.ndarray    # unit vector
    pred_gaze: np.ndarray  # unit vector

    def __post_init__(self):
        if self.face_width <= 0:
            raise InvalidArgument("face width must be positive")
        for name in ("gt_gaze", "pred_gaze"):
            g = np.asarray(getattr(self, name), dtype=np.float64).reshape(3)
            if abs(np.linalg.norm(g) - 1.0) > 1e-6:
                raise InvalidArgument(f"{name} must be a unit vector")
            setattr(self, name, g)

    @property
    def error_deg(self) -> float:
        return float(angular_error(self.gt_gaze, self.pred_gaze))

    @property
    def angle_from_frontal_deg(self) -> float:
        return float(angle_from_frontal(self.gt_gaze))


def angle_from_frontal(gaze) -> float:
    """Angular distance (degrees) from the straight-at-camera direction."""
    return angular_error(gaze, FRONTAL)


@dataclass
class BinnedErrors:
    spec: BinSpec
    mean_error: dict = field(default_factory=dict)  # label -> mean degrees
    counts: dict = field(default_factory=dict)      # label -> n records
    out_of_range: int = 0

    def rows(self):
        """(label, mean, count) for non-empty bins, in edge order."""
        return [(label, self.mean_error[label], self.counts[label])
                for label in self.spec.labels if label in self.counts]


def binned_error(records, spec: BinSpec, key: str = "width") -> BinnedErrors:
    """Mean angular error per half-open bin; empty bins stay absent.

    ``key`` selects the binning axis: "width" uses the face width in pixels,
    "angle" the ground-truth gaze angle from frontal in degrees. Records below
    the first edge or above the last are counted as out of range.
    """
    if key not in ("width", "angle"):
        raise InvalidArgument(f"unknown binning key {key!r}")
    sums: dict = {}
    counts: dict = {}
    out = 0
    for rec in records:
        value = rec.face_width if key == "width" else rec.angle_from_frontal_deg
        label = spec.assign(value)
        if label is None:
            out += 1
            continue
        sums[label] = sums.get(label, 0.0) + rec.error_deg
        counts[label] = counts.get(label, 0) + 1
    means = {label: sums[label] / counts[label] for label in counts}
    return BinnedErrors(spec=spec, mean_error=means, counts=counts, out_of_range=out)


# --------------------------------------------------------------------------
# running-time cost model

@dataclass(frozen=True)
class CostModel:
    name: str
    base_ms: float
    per_face_ms: float

    def __post_init__(self):
        if self.base_ms < 0 or self.per_face_ms < 0:
            raise InvalidArgument("cost model terms must be >= 0")


#: detector-then-crop pipelines pay the detector (~25 ms) plus a per-face cost;
#: the one-stage pipeline is a single constant pass
DETECTOR_MS = 25.0
ONE_STAGE_MS = 24.93

COST_MODELS = {
    "one_stage": CostModel("one_stage", ONE_STAGE_MS, 0.0),
    "full_face": CostModel("full_face", DETECTOR_MS, 1.21),
    "eth18": CostModel("eth18", DETECTOR_MS, 3.15),
    "eth50": CostModel("eth50", DETECTOR_MS, 6.64),
    "gazetr": CostModel("gazetr", DETECTOR_MS, 9.98),
}


def cost_time(model: CostModel, n_faces: int) -> float:
    """Milliseconds per image with ``n_faces`` faces."""
    if n_faces < 0:
        raise InvalidArgument("face count must be >= 0")
    return model.base_ms + model.per_face_ms * n_faces


def fps(model: CostModel, n_faces: int) -> float:
    return 1000.0 / cost_time(model, n_faces)


def crossover_faces(baseline: CostModel, reference: CostModel = COST_MODELS["one_stage"]):
    """Smallest face count n >= 1 where the baseline is slower than the
    constant-cost reference; None if the baseline never crosses."""
    if baseline.per_face_ms <= 0:
        return 1 if baseline.base_ms > cost_time(reference, 1) else None
    n = max(1, math.floor((reference.base_ms - baseline.base_ms) / baseline.per_face_ms) + 1)
    while cost_time(baseline, n) <= cost_time(reference, n):
        n += 1
    return n
