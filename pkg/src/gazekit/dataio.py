"""JSON-lines schemas: attributes, matches, annotations, gaze labels.

Every loader is total: it returns the records it could parse plus a list of
:class:`Issue` entries carrying line numbers, and never raises on file
content. Writers emit one record per line, UTF-8, with a fixed field order
per schema. Angles live in degrees inside files and in radians/vectors in
memory; the conversion happens here and only here.

See ``docs/formats.md`` for a worked example of each record type.
"""

from __future__ import annotations

import fcntl
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from PIL import Image as PILImage

from .errors import InvalidArgument
from .evaluation import WIDTH_BINS
from .matching import EYES, FULL, AttributeRecord, MatchResult
from .normalization import NormalizationResult

STAGES = ("preliminary", "crop_adjusted", "context_adjusted")
STAGE_RANK = {name: rank for rank, name in enumerate(STAGES)}


@dataclass(frozen=True)
class Issue:
    line: int
    field: str
    message: str

    def __str__(self):
        return f"line {self.line}: {self.field}: {self.message}"


@dataclass
class FaceAnnotation:
    face_id: str
    bbox: tuple                     # (x, y, w, h) pixels
    landmarks: np.ndarray | None    # (68, 2) or (5, 2)
    gaze_pitch_deg: float | None
    gaze_yaw_deg: float | None
    wider_id: str | None = None
    xgaze_id: str | None = None
    mode: str | None = None         # eyes | full
    skip_reason: str | None = None
    stage: str | None = None        # set on human-annotation exports

    @property
    def swapped(self) -> bool:
        return self.skip_reason is None and self.mode is not None


@dataclass
class ImageAnnotation:
    image: str                      # path relative to the manifest directory
    faces: list


@dataclass
class GazeLabel:
    face_id: str
    pitch_deg: float
    yaw_deg: float
    face_width: float | None = None


@dataclass
class SourceFace:
    """A normalized source crop on disk plus its gaze label (normalized frame)."""

    face_id: str
    crop: str            # image path relative to the manifest directory
    pitch_deg: float
    yaw_deg: float


@dataclass
class AnnotationEvent:
    """One staged human edit of a face's gaze label (append-only log entry)."""

    face_id: str
    pitch_deg: float
    yaw_deg: float
    stage: str
    editor: str
    timestamp: float

    def __post_init__(self):
        if self.stage not in STAGES:
            raise InvalidArgument(f"unknown stage {self.stage!r}")
        if not (math.isfinite(self.pitch_deg) and math.isfinite(self.yaw_deg)):
            raise InvalidArgument("angles must be finite")


# --------------------------------------------------------------------------
# generic json-lines plumbing

def _iter_lines(lines):
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            yield line_no, json.loads(stripped), None
        except json.JSONDecodeError as exc:
            yield line_no, None, Issue(line_no, "-", f"malformed JSON: {exc.msg}")


def _iter_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        yield from _iter_lines(fh)


def _write_jsonl(path, dicts: Iterable[dict]):
    with open(path, "w", encoding="utf-8") as fh:
        for d in dicts:
            fh.write(json.dumps(d, ensure_ascii=False) + "\n")


def append_jsonl(path, record: dict):
    """Append one record under an exclusive file lock (whole-line write)."""
    line = json.dumps(record, ensure_ascii=False) + "\n"
    with open(path, "a", encoding="utf-8") as fh:
        fcntl.flock(fh.fileno(), fcntl.LOCK_EX)
        try:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())
        finally:
            fcntl.flock(fh.fileno(), fcntl.LOCK_UN)


def _get(obj, key, line, issues, required=True):
    if key not in obj:
        if required:
            issues.append(Issue(line, key, "missing field"))
        return None
    return obj[key]


def _finite_number(obj, key, line, issues, required=True, positive=False):
    if key not in obj:
        if required:
            issues.append(Issue(line, key, "missing field"))
        return None
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) \
            or not math.isfinite(value):
        issues.append(Issue(line, key, "must be a finite number"))
        return None
    if positive and value <= 0:
        issues.append(Issue(line, key, "must be positive"))
        return None
    return float(value)


def _finite_floats(value, shape, key, line, issues):
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        issues.append(Issue(line, key, "not a numeric array"))
        return None
    if shape is not None and arr.shape != shape:
        issues.append(Issue(line, key, f"expected shape {shape}, got {arr.shape}"))
        return None
    if not np.all(np.isfinite(arr)):
        issues.append(Issue(line, key, "non-finite values"))
        return None
    return arr


# --------------------------------------------------------------------------
# attribute records

def load_attributes(path):
    records, issues = [], []
    for line_no, obj, issue in _iter_jsonl(path):
        if issue is not None:
            issues.append(issue)
            continue
        local: list[Issue] = []
        face_id = _get(obj, "face_id", line_no, local)
        source = _get(obj, "source", line_no, local)
        fields = {}
        for key, shape in (("a_lmk", (68, 2)), ("a_pose", (2,)), ("a_age", (9,)),
                           ("a_race", (7,)), ("a_gender", (2,))):
            raw = _get(obj, key, line_no, local)
            fields[key] = None if raw is None else _finite_floats(raw, shape, key, line_no, local)
        if local or face_id is None or any(v is None for v in fields.values()):
            issues.extend(local)
            continue
        record = AttributeRecord(face_id=str(face_id), source=str(source), **fields)
        problems = record.validation_issues()
        if problems:
            issues.extend(Issue(line_no, p.split(":")[0], p) for p in problems)
            continue
        records.append(record)
    return records, issues


def write_attributes(path, records):
    def serialize(r: AttributeRecord) -> dict:
        return {
            "face_id": r.face_id,
            "source": r.source,
            "a_lmk": np.asarray(r.a_lmk).tolist(),
            "a_pose": np.asarray(r.a_pose).tolist(),
            "a_age": np.asarray(r.a_age).tolist(),
            "a_race": np.asarray(r.a_race).tolist(),
            "a_gender": np.asarray(r.a_gender).tolist(),
        }
    _write_jsonl(path, (serialize(r) for r in records))


# --------------------------------------------------------------------------
# match results

def load_matches(path):
    records, issues = [], []
    for line_no, obj, issue in _iter_jsonl(path):
        if issue is not None:
            issues.append(issue)
            continue
        local: list[Issue] = []
        wider_id = _get(obj, "wider_id", line_no, local)
        xgaze_id = _get(obj, "xgaze_id", line_no, local)
        score = _get(obj, "score", line_no, local)
        distance = _get(obj, "distance", line_no, local)
        mode = _get(obj, "mode", line_no, local)
        if mode not in (EYES, FULL, None):
            local.append(Issue(line_no, "mode", f"must be '{EYES}' or '{FULL}'"))
        norm = None
        if obj.get("warp") is not None:
            warp = _finite_floats(obj.get("warp"), (3, 3), "warp", line_no, local)
            rot = _finite_floats(obj.get("rotation"), (3, 3), "rotation", line_no, local)
            crop = obj.get("crop_size")
            if warp is not None and rot is not None and crop is not None:
                try:
                    norm = NormalizationResult(warp, rot, int(crop))
                except InvalidArgument as exc:
                    local.append(Issue(line_no, "warp", str(exc)))
        if local or None in (wider_id, xgaze_id, score, distance, mode):
            issues.extend(local)
            continue
        records.append(MatchResult(wider_id=str(wider_id), xgaze_id=str(xgaze_id),
                                   score=float(score), distance=float(distance),
                                   mode=str(mode), norm=norm,
                                   gender_fallback=bool(obj.get("gender_fallback", False))))
    return records, issues


def write_matches(path, results):
    def serialize(m: MatchResult) -> dict:
        out = {
            "wider_id": m.wider_id,
            "xgaze_id": m.xgaze_id,
            "score": m.score,
            "distance": m.distance,
            "mode": m.mode,
            "gender_fallback": m.gender_fallback,
            "warp": None,
            "rotation": None,
            "crop_size": None,
        }
        if m.norm is not None:
            out["warp"] = m.norm.warp.tolist()
            out["rotation"] = m.norm.rotation.tolist()
            out["crop_size"] = m.norm.crop_size
        return out
    _write_jsonl(path, (serialize(m) for m in results))


# --------------------------------------------------------------------------
# image annotations (the swapped-dataset manifest)

def _parse_face(obj, line_no, issues):
    local: list[Issue] = []
    face_id = _get(obj, "face_id", line_no, local)
    bbox = _finite_floats(_get(obj, "bbox", line_no, local), (4,), "bbox", line_no, local)
    if bbox is not None and (bbox[2] <= 0 or bbox[3] <= 0):
        local.append(Issue(line_no, "bbox", "width and height must be positive"))
        bbox = None
    landmarks = None
    if obj.get("landmarks") is not None:
        landmarks = _finite_floats(obj["landmarks"], None, "landmarks", line_no, local)
        if landmarks is not None and landmarks.shape not in ((68, 2), (5, 2)):
            local.append(Issue(line_no, "landmarks",
                               f"expected (68, 2) or (5, 2), got {landmarks.shape}"))
            landmarks = None
    gaze = obj.get("gaze")
    pitch = yaw = None
    if gaze is not None:
        pitch = gaze.get("pitch_deg")
        yaw = gaze.get("yaw_deg")
        if pitch is None or yaw is None or not (math.isfinite(pitch) and math.isfinite(yaw)):
            local.append(Issue(line_no, "gaze", "needs finite pitch_deg and yaw_deg"))
            pitch = yaw = None
    mode = obj.get("mode")
    if mode not in (EYES, FULL, None):
        local.append(Issue(line_no, "mode", f"must be '{EYES}' or '{FULL}'"))
    stage = obj.get("stage")
    if stage is not None and stage not in STAGES:
        local.append(Issue(line_no, "stage", f"must be one of {STAGES}"))
    provenance = obj.get("provenance") or {}
    if local or face_id is None or bbox is None:
        issues.extend(local)
        return None
    return FaceAnnotation(face_id=str(face_id), bbox=tuple(bbox), landmarks=landmarks,
                          gaze_pitch_deg=pitch, gaze_yaw_deg=yaw,
                          wider_id=provenance.get("wider_id"),
                          xgaze_id=provenance.get("xgaze_id"),
                          mode=mode, skip_reason=obj.get("skip_reason"), stage=stage)


def load_annotations(path):
    images, issues = [], []
    for line_no, obj, issue in _iter_jsonl(path):
        if issue is not None:
            issues.append(issue)
            continue
        local: list[Issue] = []
        image = _get(obj, "image", line_no, local)
        faces_raw = _get(obj, "faces", line_no, local)
        if local or not isinstance(faces_raw, list):
            issues.extend(local)
            if image is not None and not isinstance(faces_raw, list):
                issues.append(Issue(line_no, "faces", "must be a list"))
            continue
        faces = []
        for raw in faces_raw:
            face = _parse_face(raw, line_no, issues)
            if face is not None:
                faces.append(face)
        images.append(ImageAnnotation(image=str(image), faces=faces))
    return images, issues


def write_annotations(path, images):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(annotations_to_text(images))


def annotations_to_text(images) -> str:
    def face_dict(f: FaceAnnotation) -> dict:
        gaze = None
        if f.gaze_pitch_deg is not None and f.gaze_yaw_deg is not None:
            gaze = {"pitch_deg": f.gaze_pitch_deg, "yaw_deg": f.gaze_yaw_deg}
        provenance = None
        if f.wider_id is not None or f.xgaze_id is not None:
            provenance = {"wider_id": f.wider_id, "xgaze_id": f.xgaze_id}
        out = {
            "face_id": f.face_id,
            "bbox": list(f.bbox),
            "landmarks": None if f.landmarks is None else np.asarray(f.landmarks).tolist(),
            "gaze": gaze,
            "provenance": provenance,
            "mode": f.mode,
            "skip_reason": f.skip_reason,
        }
        if f.stage is not None:
            out["stage"] = f.stage
        return out

    return "".join(
        json.dumps({"image": im.image, "faces": [face_dict(f) for f in im.faces]},
                   ensure_ascii=False) + "\n"
        for im in images)


# --------------------------------------------------------------------------
# flat gaze labels (predictions, preliminary labels)

def load_gaze_labels(path):
    return _parse_gaze_labels(_iter_jsonl(path))


def parse_gaze_labels(text: str):
    """Like :func:`load_gaze_labels` but over in-memory JSONL text."""
    return _parse_gaze_labels(_iter_lines(text.splitlines()))


def _parse_gaze_labels(stream):
    records, issues = [], []
    for line_no, obj, issue in stream:
        if issue is not None:
            issues.append(issue)
            continue
        local: list[Issue] = []
        face_id = _get(obj, "face_id", line_no, local)
        pitch = _finite_number(obj, "pitch_deg", line_no, local)
        yaw = _finite_number(obj, "yaw_deg", line_no, local)
        width = None
        if obj.get("face_width") is not None:
            width = _finite_number(obj, "face_width", line_no, local, positive=True)
        if local or None in (face_id, pitch, yaw):
            issues.extend(local)
            continue
        records.append(GazeLabel(face_id=str(face_id), pitch_deg=pitch, yaw_deg=yaw,
                                 face_width=width))
    return records, issues


def write_gaze_labels(path, labels):
    def serialize(r: GazeLabel) -> dict:
        out = {"face_id": r.face_id, "pitch_deg": r.pitch_deg, "yaw_deg": r.yaw_deg}
        if r.face_width is not None:
            out["face_width"] = r.face_width
        return out
    _write_jsonl(path, (serialize(r) for r in labels))


# --------------------------------------------------------------------------
# normalized source crops

def load_source_faces(path):
    records, issues = [], []
    for line_no, obj, issue in _iter_jsonl(path):
        if issue is not None:
            issues.append(issue)
            continue
        local: list[Issue] = []
        face_id = _get(obj, "face_id", line_no, local)
        crop = _get(obj, "crop", line_no, local)
        pitch = _finite_number(obj, "pitch_deg", line_no, local)
        yaw = _finite_number(obj, "yaw_deg", line_no, local)
        if local or None in (face_id, crop, pitch, yaw):
            issues.extend(local)
            continue
        records.append(SourceFace(face_id=str(face_id), crop=str(crop),
                                  pitch_deg=pitch, yaw_deg=yaw))
    return records, issues


def write_source_faces(path, records):
    _write_jsonl(path, ({"face_id": r.face_id, "crop": r.crop,
                         "pitch_deg": r.pitch_deg, "yaw_deg": r.yaw_deg}
                        for r in records))


# --------------------------------------------------------------------------
# annotation event log

def load_annotation_events(path):
    records, issues = [], []
    for line_no, obj, issue in _iter_jsonl(path):
        if issue is not None:
            issues.append(issue)
            continue
        local: list[Issue] = []
        face_id = _get(obj, "face_id", line_no, local)
        pitch = _get(obj, "pitch_deg", line_no, local)
        yaw = _get(obj, "yaw_deg", line_no, local)
        stage = _get(obj, "stage", line_no, local)
        editor = _get(obj, "editor", line_no, local)
        timestamp = _get(obj, "timestamp", line_no, local)
        if stage is not None and stage not in STAGES:
            local.append(Issue(line_no, "stage", f"must be one of {STAGES}"))
        if local or None in (face_id, pitch, yaw, stage, editor, timestamp):
            issues.extend(local)
            continue
        try:
            records.append(AnnotationEvent(face_id=str(face_id), pitch_deg=float(pitch),
                                           yaw_deg=float(yaw), stage=str(stage),
                                           editor=str(editor), timestamp=float(timestamp)))
        except InvalidArgument as exc:
            issues.append(Issue(line_no, "-", str(exc)))
    return records, issues


def annotation_event_dict(e: AnnotationEvent) -> dict:
    return {"face_id": e.face_id, "pitch_deg": e.pitch_deg, "yaw_deg": e.yaw_deg,
            "stage": e.stage, "editor": e.editor, "timestamp": e.timestamp}


def write_annotation_events(path, events):
    _write_jsonl(path, (annotation_event_dict(e) for e in events))


# --------------------------------------------------------------------------
# dataset statistics

@dataclass
class DatasetStats:
    images: int = 0
    faces: int = 0
    swapped: int = 0
    skipped: int = 0
    skip_reasons: dict = field(default_factory=dict)
    mode_counts: dict = field(default_factory=dict)
    width_histogram: dict = field(default_factory=dict)
    width_below_range: int = 0
    min_faces_per_image: int = 0
    max_faces_per_image: int = 0


def dataset_stats(images) -> DatasetStats:
    stats = DatasetStats()
    per_image = []
    for im in images:
        stats.images += 1
        per_image.append(len(im.faces))
        for f in im.faces:
            stats.faces += 1
            if f.swapped:
                stats.swapped += 1
                stats.mode_counts[f.mode] = stats.mode_counts.get(f.mode, 0) + 1
            else:
                stats.skipped += 1
                reason = f.skip_reason or "unspecified"
                stats.skip_reasons[reason] = stats.skip_reasons.get(reason, 0) + 1
            label = WIDTH_BINS.assign(float(f.bbox[2]))
            if label is None:
                stats.width_below_range += 1
            else:
                stats.width_histogram[label] = stats.width_histogram.get(label, 0) + 1
    stats.min_faces_per_image = min(per_image) if per_image else 0
    stats.max_faces_per_image = max(per_image) if per_image else 0
    return stats


# --------------------------------------------------------------------------
# image files

def load_image(path) -> np.ndarray:
    """PNG (or any PIL-readable) file as float64 HxWx3 in [0, 1]."""
    with PILImage.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


def save_image(path, image: np.ndarray):
    """Write HxWx3 floats in [0, 1]; 8-bit quantization happens only here."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    PILImage.fromarray((arr * 255.0).round().astype(np.uint8)).save(path)
