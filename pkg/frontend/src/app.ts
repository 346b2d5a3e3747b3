/** Application shell: image list, crop editor, context editor, save flow. */

import { AnnotationApi, type FaceEntry } from "./api.js";
import { ContextEditor } from "./context_editor.js";
import { CropEditor } from "./crop_editor.js";
import { nudgeDeg } from "./geometry.js";
import {
  EMPTY_STATE,
  applySaved,
  contextProgress,
  discardDraft,
  nextStage,
  selectFace,
  setDraft,
  type EditorState,
} from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

class App {
  private api = new AnnotationApi();
  private state: EditorState = EMPTY_STATE;
  private faces: FaceEntry[] = [];
  private crop: CropEditor;
  private context: ContextEditor;

  constructor() {
    this.crop = new CropEditor(el<HTMLCanvasElement>("crop-canvas"),
                               (p, y) => this.updateDraft(p, y));
    this.context = new ContextEditor(el<HTMLCanvasElement>("context-canvas"),
                                     (face) => void this.pickFace(face),
                                     (p, y) => this.updateDraft(p, y));
    el<HTMLButtonElement>("save-crop").addEventListener(
      "click", () => void this.save("crop"));
    el<HTMLButtonElement>("confirm-context").addEventListener(
      "click", () => void this.save("context"));
    el<HTMLButtonElement>("discard").addEventListener("click", () => {
      this.state = discardDraft(this.state);
      this.syncEditors();
    });
    el<HTMLAnchorElement>("export-link").href = this.api.exportUrl();
    const editorInput = el<HTMLInputElement>("editor-id");
    editorInput.value = localStorage.getItem("gazekit-editor") ?? "";
    editorInput.addEventListener("change", () => {
      localStorage.setItem("gazekit-editor", editorInput.value);
    });
    window.addEventListener("keydown", (e) => this.onKey(e));
  }

  async start(): Promise<void> {
    const images = await this.api.listImages();
    const list = el<HTMLUListElement>("image-list");
    list.textContent = "";
    for (const image of images) {
      const item = document.createElement("li");
      item.textContent = `${image.image_id} (${image.n_faces})`;
      item.addEventListener("click", () => void this.openImage(image.image_id));
      list.appendChild(item);
    }
    if (images.length > 0) await this.openImage(images[0].image_id);
  }

  private async openImage(imageId: string): Promise<void> {
    this.faces = await this.api.imageFaces(imageId);
    this.state = { ...EMPTY_STATE, imageId };
    this.context.show(this.api.imageUrl(imageId), this.faces);
    this.context.select(null, null);
    this.crop.clear();
    this.renderStatus();
    const first = this.faces[0];
    if (first !== undefined) await this.pickFace(first);
  }

  private async pickFace(face: FaceEntry): Promise<void> {
    this.state = selectFace(this.state, face);
    const detail = await this.api.faceDetail(face.face_id);
    this.crop.show(detail, this.api.cropUrl(face.face_id), this.state.draft);
    this.context.select(face.face_id, this.state.draft);
    this.renderStatus();
  }

  private updateDraft(pitchDeg: number, yawDeg: number): void {
    this.state = setDraft(this.state, pitchDeg, yawDeg);
    this.syncEditors();
  }

  private syncEditors(): void {
    this.crop.setDraft(this.state.draft);
    this.context.setDraft(this.state.draft);
    this.renderStatus();
  }

  private onKey(event: KeyboardEvent): void {
    if (this.state.draft === null) return;
    const { pitchDeg, yawDeg } = this.state.draft;
    switch (event.key) {
      case "ArrowUp": this.updateDraft(nudgeDeg(pitchDeg, 1), yawDeg); break;
      case "ArrowDown": this.updateDraft(nudgeDeg(pitchDeg, -1), yawDeg); break;
      case "ArrowLeft": this.updateDraft(pitchDeg, nudgeDeg(yawDeg, 1)); break;
      case "ArrowRight": this.updateDraft(pitchDeg, nudgeDeg(yawDeg, -1)); break;
      default: return;
    }
    event.preventDefault();
  }

  private async save(surface: "crop" | "context"): Promise<void> {
    const { faceId, draft } = this.state;
    if (faceId === null || draft === null) return;
    const editor = el<HTMLInputElement>("editor-id").value || "anonymous";
    const stage = nextStage(surface);
    try {
      const stored = await this.api.putGaze(faceId, draft.pitchDeg, draft.yawDeg,
                                            stage, editor);
      this.state = applySaved(this.state, stored.pitch_deg, stored.yaw_deg,
                              stored.stage);
      if (this.state.imageId !== null) {
        this.faces = await this.api.imageFaces(this.state.imageId);
        this.context.setFaces(this.faces);
        this.context.select(faceId, this.state.draft);
      }
      this.showError("");
    } catch (err) {
      // the draft (and the dirty flag) survive a failed save
      this.showError(err instanceof Error ? err.message : String(err));
    }
    this.syncEditors();
  }

  private showError(message: string): void {
    el<HTMLSpanElement>("error").textContent = message;
  }

  private renderStatus(): void {
    const draft = this.state.draft;
    el<HTMLSpanElement>("angles").textContent = draft === null
      ? "no label"
      : `pitch ${draft.pitchDeg.toFixed(1)} deg, yaw ${draft.yawDeg.toFixed(1)} deg`
        + (this.state.dirty ? " (unsaved)" : "");
    el<HTMLSpanElement>("stage").textContent = this.state.serverStage ?? "unlabeled";
    const progress = Math.round(contextProgress(this.faces) * 100);
    el<HTMLSpanElement>("progress").textContent = `${progress}% confirmed`;
  }
}

new App().start().catch((err) => {
  el<HTMLSpanElement>("error").textContent = String(err);
});
