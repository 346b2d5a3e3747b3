"""Batch orchestration: match whole attribute files, swap whole manifests.

Work is parallelized with an ordered thread map, so outputs are identical for
any ``--jobs`` value; candidate lists are shared read-only.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio
from . import geometry as geo
from . import normalization as norm
from .errors import EstimationFailed, GazeKitError, InvalidArgument
from .matching import MatchConfig, MatchResult, retrieve
from .swap import NormalizedFace, WiderFace, qualify_face, swap_face

log = logging.getLogger(__name__)


def _ordered_map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_matching(wider_attrs, xgaze_attrs, cfg: MatchConfig, faces=None,
                 image_root=None, params: norm.NormParams = norm.NormParams(),
                 jobs: int = 1) -> list[MatchResult]:
    """Retrieve the best source for every query record, in id order.

    When a face manifest is supplied, each query face is pose-estimated and
    its normalization (warp + rotation) embedded in the result, which the
    swap stage later needs.
    """
    candidates = sorted(xgaze_attrs, key=lambda r: r.face_id)
    queries = sorted(wider_attrs, key=lambda r: r.face_id)

    face_index = {}
    if faces is not None:
        for im in faces:
            for f in im.faces:
                face_index[f.face_id] = (im.image, f)

    def norm_for(face_id: str):
        if face_id not in face_index:
            return None
        image_rel, face = face_index[face_id]
        if face.landmarks is None or face.landmarks.shape != (68, 2):
            return None
        from PIL import Image as PILImage
        with PILImage.open(Path(image_root or ".") / image_rel) as img:
            width, height = img.size
        cam = norm.default_intrinsics(width, height)
        try:
            pose = norm.estimate_head_pose(face.landmarks, cam)
            return norm.compute_normalization(pose, cam, params)
        except (EstimationFailed, InvalidArgument) as exc:
            log.warning("normalization failed for %s: %s", face_id, exc)
            return None

    def one(query):
        result = retrieve(query, candidates, cfg)
        result.norm = norm_for(query.face_id)
        return result

    return _ordered_map(one, queries, jobs)


@dataclass
class SwapOutcome:
    annotations: list          # ImageAnnotation rows for the output manifest
    stats: dataio.DatasetStats


def run_swapping(images, image_root, sources, source_root, matches, out_dir,
                 jobs: int = 1) -> SwapOutcome:
    """Swap every qualified, matched face of every manifest image.

    Writes composited PNGs under ``out_dir/images`` and returns the output
    manifest rows plus dataset statistics. Faces that cannot be swapped stay
    in the manifest with a ``skip_reason``. Crop paths resolve against
    ``source_root`` (the sources manifest's directory).
    """
    image_root = Path(image_root)
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    match_by_wider = {m.wider_id: m for m in matches}
    source_by_id = {s.face_id: s for s in sources}

    def process(entry: dataio.ImageAnnotation) -> dataio.ImageAnnotation:
        canvas = dataio.load_image(image_root / entry.image)
        out_faces = []
        for face in sorted(entry.faces, key=lambda f: f.face_id):
            out_faces.append(_swap_one(face, canvas, source_root, match_by_wider,
                                       source_by_id))
        name = Path(entry.image).name
        dataio.save_image(out_dir / "images" / name, canvas)
        return dataio.ImageAnnotation(image=f"images/{name}", faces=out_faces)

    annotations = _ordered_map(process, sorted(images, key=lambda im: im.image), jobs)
    return SwapOutcome(annotations=annotations, stats=dataio.dataset_stats(annotations))


def _skip(face: dataio.FaceAnnotation, reason: str) -> dataio.FaceAnnotation:
    log.info("skipping %s: %s", face.face_id, reason)
    return dataio.FaceAnnotation(face_id=face.face_id, bbox=face.bbox,
                                 landmarks=face.landmarks, gaze_pitch_deg=None,
                                 gaze_yaw_deg=None, skip_reason=reason)


def _swap_one(face, canvas, source_root, match_by_wider, source_by_id):
    if face.landmarks is None or face.landmarks.shape != (68, 2):
        return _skip(face, "no_landmarks")
    ok, reason = qualify_face(face.bbox, face.landmarks, canvas.shape)
    if not ok:
        return _skip(face, reason)
    match = match_by_wider.get(face.face_id)
    if match is None:
        return _skip(face, "no_match")
    if match.norm is None:
        return _skip(face, "no_normalization")
    source_rec = source_by_id.get(match.xgaze_id)
    if source_rec is None:
        return _skip(face, "no_source_crop")

    crop = dataio.load_image(Path(source_root) / source_rec.crop)
    if crop.shape[0] != match.norm.crop_size or crop.shape[1] != match.norm.crop_size:
        # a crop rendered for a different normalization would composite garbage
        return _skip(face, "crop_size_mismatch")
    gaze = geo.angles_to_vector(np.radians(source_rec.pitch_deg),
                                np.radians(source_rec.yaw_deg))
    wider = WiderFace(face.face_id, canvas, face.landmarks, face.bbox)
    source = NormalizedFace(match.xgaze_id, crop, gaze)
    try:
        result = swap_face(wider, source, match)
    except GazeKitError as exc:
        return _skip(face, f"swap_failed:{type(exc).__name__}")
    canvas[...] = result.image
    pitch, yaw = geo.vector_to_angles(result.gaze)
    return dataio.FaceAnnotation(
        face_id=face.face_id, bbox=result.bbox, landmarks=face.landmarks,
        gaze_pitch_deg=float(np.degrees(pitch)), gaze_yaw_deg=float(np.degrees(yaw)),
        wider_id=result.wider_id, xgaze_id=result.xgaze_id, mode=result.mode)
