"""HTTP backend for staged human gaze annotation.

Faces come from a dataset manifest (``annotations.jsonl`` + image files in a
data directory). Label edits land in an append-only JSON-lines log; replaying
the log from empty reproduces the current state, and the in-memory index is
just the last event per face. Stages only move forward: preliminary ->
crop_adjusted -> context_adjusted.

The server also owns the projection geometry for the UI: every face payload
carries the front-plane arrow endpoint of its current label at the face
radius, so clients never reimplement the math.
"""

from __future__ import annotations

import io
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image as PILImage

from . import dataio
from . import geometry as geo
from . import normalization as norm
from .dataio import STAGE_RANK, STAGES, AnnotationEvent
from .errors import EstimationFailed, GazeKitError, InvalidArgument

DEFAULT_CROP = 224


class AnnotationStore:
    """Append-only event log with a last-event-per-face index."""

    def __init__(self, log_path):
        self.log_path = Path(log_path)
        self._lock = threading.Lock()
        self._current: dict[str, AnnotationEvent] = {}
        if self.log_path.exists():
            events, issues = dataio.load_annotation_events(self.log_path)
            if issues:
                raise InvalidArgument(
                    f"annotation log {self.log_path} is corrupt: {issues[0]}")
            for event in events:
                self._current[event.face_id] = event

    def current(self, face_id: str) -> AnnotationEvent | None:
        return self._current.get(face_id)

    def put(self, face_id: str, pitch_deg: float, yaw_deg: float, stage: str,
            editor: str) -> AnnotationEvent:
        event = AnnotationEvent(face_id=face_id, pitch_deg=float(pitch_deg),
                                yaw_deg=float(yaw_deg), stage=stage, editor=editor,
                                timestamp=time.time())
        with self._lock:
            existing = self._current.get(face_id)
            if existing is not None and STAGE_RANK[stage] < STAGE_RANK[existing.stage]:
                raise StageConflict(
                    f"stage {stage} cannot follow {existing.stage} for face {face_id}")
            dataio.append_jsonl(self.log_path, dataio.annotation_event_dict(event))
            self._current[face_id] = event
        return event


class StageConflict(GazeKitError):
    pass


class Dataset:
    """Read-only face/image index over a data directory."""

    def __init__(self, data_dir, manifest_name="annotations.jsonl"):
        self.root = Path(data_dir)
        manifest = self.root / manifest_name
        if not manifest.exists():
            raise InvalidArgument(f"no manifest at {manifest}")
        images, issues = dataio.load_annotations(manifest)
        if issues:
            raise InvalidArgument(f"manifest {manifest} has problems: {issues[0]}")
        self.images: dict[str, dataio.ImageAnnotation] = {}
        self.faces: dict[str, tuple[str, dataio.FaceAnnotation]] = {}
        for im in images:
            image_id = Path(im.image).stem
            if image_id in self.images:
                raise InvalidArgument(f"duplicate image id {image_id}")
            self.images[image_id] = im
            for face in im.faces:
                if face.face_id in self.faces:
                    raise InvalidArgument(f"duplicate face id {face.face_id}")
                self.faces[face.face_id] = (image_id, face)

    def image_path(self, image_id: str) -> Path:
        return self.root / self.images[image_id].image

    def load_pixels(self, image_id: str) -> np.ndarray:
        return dataio.load_image(self.image_path(image_id))


def _face_payload(face: dataio.FaceAnnotation, image_id: str,
                  event: AnnotationEvent | None) -> dict:
    radius = face.bbox[2] / 2.0
    payload = {
        "face_id": face.face_id,
        "image_id": image_id,
        "bbox": list(face.bbox),
        "r": radius,
        "has_landmarks": face.landmarks is not None and face.landmarks.shape == (68, 2),
        "gaze": None,
        "stage": None,
        "editor": None,
        "arrow": None,
    }
    if event is not None:
        u, v = geo.project(geo.FRONT, np.radians(event.pitch_deg),
                           np.radians(event.yaw_deg), radius)
        payload.update({
            "gaze": {"pitch_deg": event.pitch_deg, "yaw_deg": event.yaw_deg},
            "stage": event.stage,
            "editor": event.editor,
            "arrow": {"u": float(u), "v": float(v)},
        })
    return payload


def create_app(data_dir, log_name: str = "gaze_log.jsonl", crop_size: int = DEFAULT_CROP,
               static_dir=None) -> FastAPI:
    dataset = Dataset(data_dir)
    store = AnnotationStore(Path(data_dir) / log_name)
    app = FastAPI(title="gazekit annotation service")
    app.state.dataset = dataset
    app.state.store = store

    def get_face(face_id: str):
        entry = dataset.faces.get(face_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown face {face_id}")
        return entry

    @app.get("/images")
    def list_images():
        out = []
        for image_id in sorted(dataset.images):
            im = dataset.images[image_id]
            out.append({"image_id": image_id, "path": im.image, "n_faces": len(im.faces)})
        return out

    @app.get("/images/{image_id}/faces")
    def image_faces(image_id: str):
        if image_id not in dataset.images:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id}")
        im = dataset.images[image_id]
        faces = sorted(im.faces, key=lambda f: f.face_id)
        return [_face_payload(f, image_id, store.current(f.face_id)) for f in faces]

    @app.get("/images/{image_id}/pixels")
    def image_pixels(image_id: str):
        if image_id not in dataset.images:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id}")
        return Response(content=dataset.image_path(image_id).read_bytes(),
                        media_type="image/png")

    @app.get("/faces/{face_id}")
    def face_detail(face_id: str):
        image_id, face = get_face(face_id)
        payload = _face_payload(face, image_id, store.current(face_id))
        payload["crop_size"] = crop_size
        geometry = _crop_geometry(dataset, image_id, face, crop_size)
        payload.update(geometry)
        return payload

    @app.get("/faces/{face_id}/crop")
    def face_crop(face_id: str):
        image_id, face = get_face(face_id)
        try:
            crop = _render_crop(dataset, image_id, face, crop_size)
        except (EstimationFailed, InvalidArgument) as exc:
            raise HTTPException(status_code=422,
                                detail=f"normalization failed: {exc}") from exc
        buf = io.BytesIO()
        arr = (np.clip(crop, 0.0, 1.0) * 255.0).round().astype(np.uint8)
        PILImage.fromarray(arr).save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.put("/faces/{face_id}/gaze")
    async def put_gaze(face_id: str, request: Request):
        get_face(face_id)
        body = await request.json()
        for key in ("pitch_deg", "yaw_deg", "stage", "editor"):
            if key not in body:
                raise HTTPException(status_code=400, detail=f"missing field {key}")
        if body["stage"] not in STAGES:
            raise HTTPException(status_code=400,
                                detail=f"stage must be one of {list(STAGES)}")
        try:
            event = store.put(face_id, body["pitch_deg"], body["yaw_deg"],
                              body["stage"], str(body["editor"]))
        except StageConflict as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except InvalidArgument as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return dataio.annotation_event_dict(event)

    @app.post("/import")
    async def import_labels(request: Request):
        text = (await request.body()).decode("utf-8")
        labels, issues = dataio.parse_gaze_labels(text)
        imported, unknown = 0, []
        for label in labels:
            if label.face_id not in dataset.faces:
                unknown.append(label.face_id)
                continue
            store.put(label.face_id, label.pitch_deg, label.yaw_deg,
                      "preliminary", "import")
            imported += 1
        return {"imported": imported, "unknown": unknown,
                "issues": [str(i) for i in issues]}

    @app.get("/export")
    def export():
        images = []
        for image_id in sorted(dataset.images):
            im = dataset.images[image_id]
            faces = []
            for face in sorted(im.faces, key=lambda f: f.face_id):
                event = store.current(face.face_id)
                faces.append(dataio.FaceAnnotation(
                    face_id=face.face_id, bbox=face.bbox, landmarks=face.landmarks,
                    gaze_pitch_deg=event.pitch_deg if event else face.gaze_pitch_deg,
                    gaze_yaw_deg=event.yaw_deg if event else face.gaze_yaw_deg,
                    wider_id=face.wider_id, xgaze_id=face.xgaze_id, mode=face.mode,
                    skip_reason=face.skip_reason,
                    stage=event.stage if event else None))
            images.append(dataio.ImageAnnotation(image=im.image, faces=faces))
        return PlainTextResponse(dataio.annotations_to_text(images),
                                 media_type="application/x-ndjson")

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def _crop_geometry(dataset: Dataset, image_id: str, face: dataio.FaceAnnotation,
                   crop_size: int) -> dict:
    """Where the face center lands in the crop and the local display scale."""
    x, y, w, h = face.bbox
    center = np.array([x + w / 2.0, y + h / 2.0])
    if face.landmarks is not None and face.landmarks.shape == (68, 2):
        try:
            result = _normalization_for(dataset, image_id, face, crop_size)
            mapped = norm.warp_points(np.array([center, center + [w / 2.0, 0.0]]),
                                      result.warp)
            scale = float(np.linalg.norm(mapped[1] - mapped[0]) / (w / 2.0))
            return {"crop_center": mapped[0].tolist(), "crop_scale": scale,
                    "crop_kind": "normalized"}
        except (EstimationFailed, InvalidArgument):
            pass
    scale = crop_size / max(w, h)
    cx = (center[0] - x) * scale
    cy = (center[1] - y) * scale
    return {"crop_center": [cx, cy], "crop_scale": scale, "crop_kind": "bbox"}


def _normalization_for(dataset: Dataset, image_id: str, face: dataio.FaceAnnotation,
                       crop_size: int) -> norm.NormalizationResult:
    with PILImage.open(dataset.image_path(image_id)) as img:
        width, height = img.size
    cam = norm.default_intrinsics(width, height)
    pose = norm.estimate_head_pose(face.landmarks, cam)
    params = norm.NormParams(crop_px=crop_size,
                             focal_px=crop_size * 960.0 / 224.0)
    return norm.compute_normalization(pose, cam, params)


def _render_crop(dataset: Dataset, image_id: str, face: dataio.FaceAnnotation,
                 crop_size: int) -> np.ndarray:
    pixels = dataset.load_pixels(image_id)
    if face.landmarks is not None and face.landmarks.shape == (68, 2):
        result = _normalization_for(dataset, image_id, face, crop_size)
        return norm.warp_image(pixels, result.warp, crop_size)
    x, y, w, h = (int(round(v)) for v in face.bbox)
    ih, iw = pixels.shape[:2]
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(iw, x + w), min(ih, y + h)
    if x1 <= x0 or y1 <= y0:
        raise InvalidArgument("bbox lies outside the image")
    patch = pixels[y0:y1, x0:x1]
    side = max(patch.shape[:2])
    scale = crop_size / side
    m = np.array([[scale, 0.0, 0.0], [0.0, scale, 0.0], [0.0, 0.0, 1.0]])
    return norm.warp_image(patch, m, crop_size)
