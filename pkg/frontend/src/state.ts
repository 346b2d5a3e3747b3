/**
 * Editor state transitions, kept pure so they are trivially testable.
 *
 * The dirty flag is an invariant, never a free field: it is true exactly
 * when the draft differs from the last server-confirmed value.
 */

import type { FaceEntry, GazeDeg, Stage } from "./api.js";

export interface Draft {
  pitchDeg: number;
  yawDeg: number;
}

export interface EditorState {
  imageId: string | null;
  faceId: string | null;
  serverGaze: Draft | null;
  serverStage: Stage | null;
  draft: Draft | null;
  dirty: boolean;
}

export const EMPTY_STATE: EditorState = {
  imageId: null,
  faceId: null,
  serverGaze: null,
  serverStage: null,
  draft: null,
  dirty: false,
};

const EPS = 1e-9;

function sameGaze(a: Draft | null, b: Draft | null): boolean {
  if (a === null || b === null) return a === b;
  return Math.abs(a.pitchDeg - b.pitchDeg) < EPS && Math.abs(a.yawDeg - b.yawDeg) < EPS;
}

function fromServer(gaze: GazeDeg | null): Draft | null {
  return gaze === null ? null : { pitchDeg: gaze.pitch_deg, yawDeg: gaze.yaw_deg };
}

/** Select a face: the draft resets to the server value, nothing is dirty. */
export function selectFace(state: EditorState, face: FaceEntry): EditorState {
  const server = fromServer(face.gaze);
  return {
    ...state,
    imageId: face.image_id,
    faceId: face.face_id,
    serverGaze: server,
    serverStage: face.stage,
    draft: server === null ? null : { ...server },
    dirty: false,
  };
}

/** Update the draft (from a drag or a keyboard nudge). */
export function setDraft(state: EditorState, pitchDeg: number, yawDeg: number): EditorState {
  if (state.faceId === null) return state;
  if (!Number.isFinite(pitchDeg) || !Number.isFinite(yawDeg)) {
    throw new Error("draft angles must be finite");
  }
  const draft = { pitchDeg, yawDeg };
  return { ...state, draft, dirty: !sameGaze(draft, state.serverGaze) };
}

/** A successful save: the server value catches up with the draft. */
export function applySaved(state: EditorState, pitchDeg: number, yawDeg: number,
                           stage: Stage): EditorState {
  const server = { pitchDeg, yawDeg };
  return {
    ...state,
    serverGaze: server,
    serverStage: stage,
    draft: { ...server },
    dirty: false,
  };
}

/** A failed save keeps the draft (and therefore the dirty flag). */
export function keepDraftOnError(state: EditorState): EditorState {
  return state;
}

/** Throw away the draft and return to the server value. */
export function discardDraft(state: EditorState): EditorState {
  const server = state.serverGaze;
  return { ...state, draft: server === null ? null : { ...server }, dirty: false };
}

/** Stage to submit from each editor surface. */
export function nextStage(surface: "crop" | "context"): Stage {
  return surface === "crop" ? "crop_adjusted" : "context_adjusted";
}

/** Fraction of faces whose label has been confirmed in context. */
export function contextProgress(faces: { stage: Stage | null }[]): number {
  if (faces.length === 0) return 1;
  const done = faces.filter((f) => f.stage === "context_adjusted").length;
  return done / faces.length;
}
