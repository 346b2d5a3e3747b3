/** Typed client for the annotation service's HTTP/JSON API. */

export type Stage = "preliminary" | "crop_adjusted" | "context_adjusted";

export interface ImageEntry {
  image_id: string;
  path: string;
  n_faces: number;
}

export interface GazeDeg {
  pitch_deg: number;
  yaw_deg: number;
}

export interface FaceEntry {
  face_id: string;
  image_id: string;
  bbox: [number, number, number, number];
  r: number;
  has_landmarks: boolean;
  gaze: GazeDeg | null;
  stage: Stage | null;
  editor: string | null;
  arrow: { u: number; v: number } | null;
}

export interface FaceDetail extends FaceEntry {
  crop_size: number;
  crop_center: [number, number];
  crop_scale: number;
  crop_kind: "normalized" | "bbox";
}

export interface StoredEvent {
  face_id: string;
  pitch_deg: number;
  yaw_deg: number;
  stage: Stage;
  editor: string;
  timestamp: number;
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      /* keep the status text */
    }
    throw new Error(`${response.status}: ${detail}`);
  }
  return response.json() as Promise<T>;
}

export class AnnotationApi {
  constructor(private base = "") {}

  listImages(): Promise<ImageEntry[]> {
    return fetch(`${this.base}/images`).then((r) => asJson<ImageEntry[]>(r));
  }

  imageFaces(imageId: string): Promise<FaceEntry[]> {
    return fetch(`${this.base}/images/${encodeURIComponent(imageId)}/faces`)
      .then((r) => asJson<FaceEntry[]>(r));
  }

  faceDetail(faceId: string): Promise<FaceDetail> {
    return fetch(`${this.base}/faces/${encodeURIComponent(faceId)}`)
      .then((r) => asJson<FaceDetail>(r));
  }

  imageUrl(imageId: string): string {
    return `${this.base}/images/${encodeURIComponent(imageId)}/pixels`;
  }

  cropUrl(faceId: string): string {
    return `${this.base}/faces/${encodeURIComponent(faceId)}/crop`;
  }

  exportUrl(): string {
    return `${this.base}/export`;
  }

  putGaze(faceId: string, pitchDeg: number, yawDeg: number, stage: Stage,
          editor: string): Promise<StoredEvent> {
    return fetch(`${this.base}/faces/${encodeURIComponent(faceId)}/gaze`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        pitch_deg: pitchDeg,
        yaw_deg: yawDeg,
        stage,
        editor,
      }),
    }).then((r) => asJson<StoredEvent>(r));
  }
}
