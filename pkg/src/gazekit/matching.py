"""Cross-dataset face retrieval by landmark/pose similarity.

Candidates pass an essential-attribute gender filter, are ranked by a
weighted mean-absolute-difference score over landmarks and head pose, and the
top-n survivors are re-ranked with an age/race distribution penalty. The
winning candidate's distance against a threshold decides whether only the eye
region or the whole face gets swapped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, NoMatch
from .normalization import NormalizationResult

WIDER = "wider"
XGAZE = "xgaze"

EYES = "eyes"
FULL = "full"


@dataclass
class AttributeRecord:
    """Per-face attribute tuple: landmarks, pose and soft demographic scores."""

    face_id: str
    source: str
    a_lmk: np.ndarray     # (68, 2) pixels in the normalized frame
    a_pose: np.ndarray    # (pitch, yaw) degrees
    a_age: np.ndarray     # 9 class probabilities
    a_race: np.ndarray    # 7 class probabilities
    a_gender: np.ndarray  # 2 class probabilities

    def __post_init__(self):
        for name in ("a_lmk", "a_pose", "a_age", "a_race", "a_gender"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, np.asarray(value, dtype=np.float64))

    def validation_issues(self) -> list[str]:
        issues = []
        expected = {"a_lmk": (68, 2), "a_pose": (2,), "a_age": (9,), "a_race": (7,),
                    "a_gender": (2,)}
        for name, shape in expected.items():
            value = getattr(self, name)
            if value is None:
                issues.append(f"{name}: missing")
                continue
            if value.shape != shape:
                issues.append(f"{name}: expected shape {shape}, got {value.shape}")
                continue
            if not np.all(np.isfinite(value)):
                issues.append(f"{name}: non-finite values")
        for name in ("a_age", "a_race", "a_gender"):
            value = getattr(self, name)
            if value is None or value.shape != expected[name]:
                continue
            if np.any(value < 0):
                issues.append(f"{name}: negative probability")
            elif abs(float(value.sum()) - 1.0) > 1e-3:
                issues.append(f"{name}: probabilities sum to {float(value.sum()):.4f}, not 1")
        if self.source not in (WIDER, XGAZE):
            issues.append(f"source: must be '{WIDER}' or '{XGAZE}', got {self.source!r}")
        return issues


@dataclass(frozen=True)
class MatchConfig:
    alpha_lmk: float = 1.0
    alpha_pose: float = 1.0
    top_n: int = 50
    beta_age: float = 0.5
    beta_race: float = 0.5
    eye_swap_threshold: float = 2.0

    def __post_init__(self):
        if self.top_n < 1:
            raise InvalidArgument("top_n must be >= 1")
        for name in ("alpha_lmk", "alpha_pose", "beta_age", "beta_race"):
            if getattr(self, name) < 0:
                raise InvalidArgument(f"{name} must be >= 0")


@dataclass
class MatchResult:
    wider_id: str
    xgaze_id: str
    score: float        # negated distance; higher = more similar
    distance: float
    mode: str           # eyes | full
    norm: NormalizationResult | None = None
    gender_fallback: bool = False


def gender_filter(query: AttributeRecord, candidates) -> tuple[list, bool]:
    """Keep candidates whose argmax gender class matches the query's.

    An empty result falls back to the full pool with a flag instead of
    failing: retrieval must always produce a candidate. Argmax ties break
    toward the lowest class index.
    """
    want = int(np.argmax(query.a_gender))
    kept = [c for c in candidates if int(np.argmax(c.a_gender)) == want]
    if kept:
        return kept, False
    return list(candidates), True


def _require(record: AttributeRecord, name: str) -> np.ndarray:
    value = getattr(record, name)
    if value is None or not np.all(np.isfinite(value)):
        raise InvalidArgument(f"record {record.face_id}: attribute {name} missing or non-finite")
    return value


def matching_distance(f_w: AttributeRecord, f_e: AttributeRecord, cfg: MatchConfig) -> float:
    """Weighted mean absolute difference over landmarks and pose.

    Per-attribute means keep the two terms commensurate so the alpha weights
    compare like for like. The matching score is the negation.
    """
    lmk_term = float(np.mean(np.abs(_require(f_w, "a_lmk") - _require(f_e, "a_lmk"))))
    pose_term = float(np.mean(np.abs(_require(f_w, "a_pose") - _require(f_e, "a_pose"))))
    return cfg.alpha_lmk * lmk_term + cfg.alpha_pose * pose_term


def matching_score(f_w: AttributeRecord, f_e: AttributeRecord, cfg: MatchConfig) -> float:
    return -matching_distance(f_w, f_e, cfg)


def auxiliary_penalty(f_w: AttributeRecord, f_e: AttributeRecord, cfg: MatchConfig) -> float:
    """L1 distance between age and race distributions, beta-weighted."""
    age = float(np.sum(np.abs(_require(f_w, "a_age") - _require(f_e, "a_age"))))
    race = float(np.sum(np.abs(_require(f_w, "a_race") - _require(f_e, "a_race"))))
    return cfg.beta_age * age + cfg.beta_race * race


def retrieve(f_w: AttributeRecord, candidates, cfg: MatchConfig = MatchConfig(),
             norm: NormalizationResult | None = None) -> MatchResult:
    """Best candidate for ``f_w``: filter, rank, keep top-n, penalize, argmax.

    Ties break by candidate id at both the top-n cut and the final argmax, so
    results are deterministic regardless of input order.
    """
    candidates = list(candidates)
    if not candidates:
        raise NoMatch(f"no candidates for face {f_w.face_id}")
    pool, fallback = gender_filter(f_w, candidates)
    ranked = sorted(((matching_distance(f_w, c, cfg), c) for c in pool),
                    key=lambda item: (item[0], item[1].face_id))
    shortlist = ranked[:cfg.top_n]
    best_dist, best = min(shortlist,
                          key=lambda item: (item[0] + auxiliary_penalty(f_w, item[1], cfg),
                                            item[1].face_id))
    mode = EYES if best_dist < cfg.eye_swap_threshold else FULL
    return MatchResult(wider_id=f_w.face_id, xgaze_id=best.face_id, score=-best_dist,
                       distance=best_dist, mode=mode, norm=norm, gender_fallback=fallback)
