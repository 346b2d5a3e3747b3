import numpy as np

from gazekit import dataio
from gazekit import geometry as geo
from gazekit import normalization as norm
from gazekit import synthetic
from gazekit.matching import FULL, AttributeRecord, MatchResult
from gazekit.swap import NormalizedFace, WiderFace


def random_attribute_record(rng, face_id, source="xgaze"):
    def simplex(n):
        v = rng.random(n)
        return v / v.sum()

    return AttributeRecord(
        face_id=face_id,
        source=source,
        a_lmk=rng.uniform(0, 224, (68, 2)),
        a_pose=rng.uniform(-40, 40, 2),
        a_age=simplex(9),
        a_race=simplex(7),
        a_gender=simplex(2),
    )


def random_attribute_records(seed, n, source="xgaze", prefix="c"):
    rng = np.random.default_rng(seed)
    return [random_attribute_record(rng, f"{prefix}{i:04d}", source) for i in range(n)]


def make_swap_scene(seed=0, size=96, crop=64, mode=FULL, gaze_deg=(10.0, -20.0)):
    """Synthetic matched pair: a target face plus a normalized source crop."""
    cam = norm.default_intrinsics(size, size)
    translation = np.array([0.0, 0.0, 400.0])
    lmk = synthetic.synthetic_face_landmarks(np.eye(3), translation, cam)
    wider_img = synthetic.face_texture(size, size, lmk, seed=seed)
    bbox = synthetic.bbox_from_landmarks(lmk)

    pose = norm.estimate_head_pose(lmk, cam)
    params = norm.NormParams(distance_mm=600.0, focal_px=120.0, crop_px=crop)
    result = norm.compute_normalization(pose, cam, params)

    lmk_norm = norm.warp_points(lmk, result.warp)
    source_img = synthetic.face_texture(crop, crop, lmk_norm, seed=seed + 1)
    gaze = geo.angles_to_vector(np.radians(gaze_deg[0]), np.radians(gaze_deg[1]))

    wider = WiderFace("w0000", wider_img, lmk, bbox)
    source = NormalizedFace("x0000", source_img, gaze)
    match = MatchResult(wider_id="w0000", xgaze_id="x0000", score=-1.0, distance=1.0,
                        mode=mode, norm=result)
    return wider, source, match


def write_pipeline_fixture(root, n_pairs=3, n_extra_candidates=3, seed=100):
    """End-to-end CLI fixture: target images + manifests + attribute files.

    Each query face w000i gets an attribute twin x000i (distance zero), so
    retrieval should pair them; extra candidates have random attributes.
    """
    rng = np.random.default_rng(seed)
    wider_dir = root / "wider"
    xgaze_dir = root / "xgaze"
    (wider_dir / "images").mkdir(parents=True, exist_ok=True)
    (xgaze_dir / "crops").mkdir(parents=True, exist_ok=True)

    images, wider_attrs, xgaze_attrs, sources = [], [], [], []
    for i in range(n_pairs):
        wider, source, match = make_swap_scene(seed=seed + i,
                                               gaze_deg=(5.0 * i, -10.0 + 4.0 * i))
        wid, xid = f"w{i:04d}", f"x{i:04d}"
        dataio.save_image(wider_dir / "images" / f"{wid}.png", wider.image)
        dataio.save_image(xgaze_dir / "crops" / f"{xid}.png", source.image)
        images.append(dataio.ImageAnnotation(
            image=f"images/{wid}.png",
            faces=[dataio.FaceAnnotation(wid, wider.bbox, wider.landmarks,
                                         gaze_pitch_deg=None, gaze_yaw_deg=None)]))
        twin = random_attribute_record(rng, wid, "wider")
        wider_attrs.append(twin)
        xgaze_attrs.append(AttributeRecord(
            face_id=xid, source="xgaze", a_lmk=twin.a_lmk.copy(),
            a_pose=twin.a_pose.copy(), a_age=twin.a_age.copy(),
            a_race=twin.a_race.copy(), a_gender=twin.a_gender.copy()))
        pitch, yaw = geo.vector_to_angles(source.gaze)
        sources.append(dataio.SourceFace(face_id=xid, crop=f"crops/{xid}.png",
                                         pitch_deg=float(np.degrees(pitch)),
                                         yaw_deg=float(np.degrees(yaw))))
    for k in range(n_extra_candidates):
        xgaze_attrs.append(random_attribute_record(rng, f"xz{k:03d}", "xgaze"))

    dataio.write_annotations(wider_dir / "faces.jsonl", images)
    dataio.write_attributes(wider_dir / "attrs.jsonl", wider_attrs)
    dataio.write_attributes(xgaze_dir / "attrs.jsonl", xgaze_attrs)
    dataio.write_source_faces(xgaze_dir / "sources.jsonl", sources)
    return wider_dir, xgaze_dir


def write_service_dataset(root):
    """Two-image annotation dataset on disk: one face with 68 landmarks
    (normalizable) and one bare-bbox face."""
    img_dir = root / "images"
    img_dir.mkdir(parents=True, exist_ok=True)

    wider, _, _ = make_swap_scene(seed=3)
    dataio.save_image(img_dir / "scene_a.png", wider.image)
    faces_a = [dataio.FaceAnnotation("face_a", wider.bbox, wider.landmarks,
                                     gaze_pitch_deg=None, gaze_yaw_deg=None,
                                     wider_id="w0000", xgaze_id="x0000", mode="full")]

    img_b = synthetic.face_texture(80, 80, None, seed=9)
    dataio.save_image(img_dir / "scene_b.png", img_b)
    faces_b = [dataio.FaceAnnotation("face_b", (20.0, 20.0, 40.0, 40.0), None,
                                     gaze_pitch_deg=None, gaze_yaw_deg=None)]

    annotations = [dataio.ImageAnnotation("images/scene_a.png", faces_a),
                   dataio.ImageAnnotation("images/scene_b.png", faces_b)]
    dataio.write_annotations(root / "annotations.jsonl", annotations)
    return annotations
