/**
 * Context-stage editor: the whole image with every face's gaze arrow.
 *
 * Arrows are drawn at each face's box center with length proportional to its
 * radius. Clicking near a center selects that face; dragging the selected
 * face's endpoint edits the draft with the same front-plane math as the crop
 * editor, just at full-image scale.
 */

import type { FaceEntry } from "./api.js";
import { clampToDisc, degToRad, frontProject, frontUnproject, radToDeg } from "./geometry.js";
import type { Draft } from "./state.js";
import { canvasPoint, distance, drawArrow, drawHandle, type Point } from "./overlay.js";

const MAX_SIDE = 720;

export class ContextEditor {
  private image = new Image();
  private faces: FaceEntry[] = [];
  private selected: string | null = null;
  private draft: Draft | null = null;
  private scale = 1.0;
  private dragging = false;
  private loaded = false;

  constructor(private canvas: HTMLCanvasElement,
              private onSelect: (face: FaceEntry) => void,
              private onDraft: (pitchDeg: number, yawDeg: number) => void) {
    this.image.onload = () => {
      this.loaded = true;
      this.scale = Math.min(1.0, MAX_SIDE / Math.max(this.image.width, this.image.height));
      this.canvas.width = Math.round(this.image.width * this.scale);
      this.canvas.height = Math.round(this.image.height * this.scale);
      this.render();
    };
    canvas.addEventListener("mousedown", (e) => {
      const p = canvasPoint(canvas, e);
      const endpoint = this.selectedEndpoint();
      if (endpoint !== null && distance(p, endpoint) < 12) {
        this.dragging = true;
        this.dragTo(p);
        return;
      }
      const hit = this.faceAt(p);
      if (hit !== null) this.onSelect(hit);
    });
    canvas.addEventListener("mousemove", (e) => {
      if (this.dragging) this.dragTo(canvasPoint(canvas, e));
    });
    window.addEventListener("mouseup", () => {
      this.dragging = false;
    });
  }

  show(imageUrl: string, faces: FaceEntry[]): void {
    this.faces = faces;
    this.loaded = false;
    this.image.src = imageUrl;
    this.render();
  }

  setFaces(faces: FaceEntry[]): void {
    this.faces = faces;
    this.render();
  }

  select(faceId: string | null, draft: Draft | null): void {
    this.selected = faceId;
    this.draft = draft;
    this.render();
  }

  setDraft(draft: Draft | null): void {
    this.draft = draft;
    this.render();
  }

  private center(face: FaceEntry): Point {
    const [x, y, w, h] = face.bbox;
    return { x: (x + w / 2) * this.scale, y: (y + h / 2) * this.scale };
  }

  private faceAt(p: Point): FaceEntry | null {
    let best: FaceEntry | null = null;
    let bestDist = Infinity;
    for (const face of this.faces) {
      const d = distance(p, this.center(face));
      const reach = Math.max(16, face.r * this.scale);
      if (d < reach && d < bestDist) {
        best = face;
        bestDist = d;
      }
    }
    return best;
  }

  private endpointFor(face: FaceEntry, draft: Draft | null): Point | null {
    const angles = draft ?? (face.gaze === null
      ? null
      : { pitchDeg: face.gaze.pitch_deg, yawDeg: face.gaze.yaw_deg });
    if (angles === null) return null;
    const { u, v } = frontProject(degToRad(angles.pitchDeg), degToRad(angles.yawDeg),
                                  face.r);
    const c = this.center(face);
    return { x: c.x + u * this.scale, y: c.y + v * this.scale };
  }

  private selectedEndpoint(): Point | null {
    const face = this.faces.find((f) => f.face_id === this.selected);
    if (face === undefined) return null;
    return this.endpointFor(face, this.draft);
  }

  private dragTo(p: Point): void {
    const face = this.faces.find((f) => f.face_id === this.selected);
    if (face === undefined) return;
    const c = this.center(face);
    const raw = { u: (p.x - c.x) / this.scale, v: (p.y - c.y) / this.scale };
    const inside = clampToDisc(raw.u, raw.v, face.r);
    const angles = frontUnproject(inside.u, inside.v, face.r);
    this.onDraft(radToDeg(angles.pitchRad), radToDeg(angles.yawRad));
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (ctx === null) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.loaded) {
      ctx.drawImage(this.image, 0, 0, this.canvas.width, this.canvas.height);
    }
    for (const face of this.faces) {
      const isSelected = face.face_id === this.selected;
      const color = isSelected ? "#ff4d4d"
        : face.stage === "context_adjusted" ? "#2ecc71"
        : face.stage === null ? "#aaaaaa" : "#3498db";
      const c = this.center(face);
      ctx.strokeStyle = color;
      ctx.lineWidth = isSelected ? 2 : 1;
      const [x, y, w, h] = face.bbox;
      ctx.strokeRect(x * this.scale, y * this.scale, w * this.scale, h * this.scale);
      const end = this.endpointFor(face, isSelected ? this.draft : null);
      if (end !== null) {
        drawArrow(ctx, c, end, color, isSelected ? 2.5 : 1.5);
        if (isSelected) drawHandle(ctx, end, color);
      }
    }
  }
}
