/**
 * Crop-stage editor: the normalized face crop with one draggable gaze arrow.
 *
 * The arrow starts at the face center reported by the server and ends at the
 * front projection of the draft angles at the face radius, converted to crop
 * pixels with the server's local scale. Dragging (or clicking) moves the
 * endpoint; the draft angles are always the unprojection of the endpoint,
 * clamped inside 0.99 r.
 */

import type { FaceDetail } from "./api.js";
import { clampToDisc, degToRad, frontProject, frontUnproject, radToDeg } from "./geometry.js";
import type { Draft } from "./state.js";
import { canvasPoint, drawArrow, drawHandle, type Point } from "./overlay.js";

export class CropEditor {
  private image = new Image();
  private detail: FaceDetail | null = null;
  private draft: Draft | null = null;
  private dragging = false;
  private loaded = false;

  constructor(private canvas: HTMLCanvasElement,
              private onDraft: (pitchDeg: number, yawDeg: number) => void) {
    this.image.onload = () => {
      this.loaded = true;
      this.render();
    };
    canvas.addEventListener("mousedown", (e) => {
      if (this.detail === null) return;
      this.dragging = true;
      this.dragTo(canvasPoint(canvas, e));
    });
    canvas.addEventListener("mousemove", (e) => {
      if (this.dragging) this.dragTo(canvasPoint(canvas, e));
    });
    window.addEventListener("mouseup", () => {
      this.dragging = false;
    });
  }

  show(detail: FaceDetail, cropUrl: string, draft: Draft | null): void {
    this.detail = detail;
    this.draft = draft;
    this.loaded = false;
    this.canvas.width = detail.crop_size;
    this.canvas.height = detail.crop_size;
    this.image.src = cropUrl;
    this.render();
  }

  setDraft(draft: Draft | null): void {
    this.draft = draft;
    this.render();
  }

  clear(): void {
    this.detail = null;
    this.draft = null;
    this.render();
  }

  /** Draft endpoint in crop pixels; null without a label. */
  endpoint(): Point | null {
    if (this.detail === null || this.draft === null) return null;
    const { u, v } = frontProject(degToRad(this.draft.pitchDeg),
                                  degToRad(this.draft.yawDeg), this.detail.r);
    const [cx, cy] = this.detail.crop_center;
    const s = this.detail.crop_scale;
    return { x: cx + u * s, y: cy + v * s };
  }

  private dragTo(p: Point): void {
    if (this.detail === null) return;
    const [cx, cy] = this.detail.crop_center;
    const s = this.detail.crop_scale;
    const raw = { u: (p.x - cx) / s, v: (p.y - cy) / s };
    const inside = clampToDisc(raw.u, raw.v, this.detail.r);
    const angles = frontUnproject(inside.u, inside.v, this.detail.r);
    this.onDraft(radToDeg(angles.pitchRad), radToDeg(angles.yawRad));
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (ctx === null) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.detail === null) return;
    if (this.loaded) ctx.drawImage(this.image, 0, 0, this.canvas.width, this.canvas.height);

    const [cx, cy] = this.detail.crop_center;
    const end = this.endpoint();
    if (end !== null) {
      drawArrow(ctx, { x: cx, y: cy }, end, "#ff4d4d", 2.5);
      drawHandle(ctx, end, "#ff4d4d");
    } else {
      drawHandle(ctx, { x: cx, y: cy }, "#888888");
    }
  }
}
