/** Studio state and its pure transitions.
 *
 * The preview carries the sequence number of the request that produced it;
 * a response is accepted only if its number is newer, so out-of-order arrivals
 * can never regress the preview. Slider values are clamped to [-1, 1] at the
 * single entry point that writes them.
 */

export type Source =
  | { kind: "upload"; image: string; z: number[] }
  | { kind: "generated"; z: number[]; seed: number };

export interface StudioState {
  attributeNames: string[];
  source: Source | null;
  sliders: Record<string, number>;
  sourceSliders: Record<string, number>;
  preview: string | null;
  previewSeq: number;
  strip: string[];
  inFlight: number;
  error: string | null;
}

export function initialState(attributeNames: string[]): StudioState {
  const sliders: Record<string, number> = {};
  for (const name of attributeNames) sliders[name] = 0;
  return {
    attributeNames,
    source: null,
    sliders,
    sourceSliders: { ...sliders },
    preview: null,
    previewSeq: 0,
    strip: [],
    inFlight: 0,
    error: null,
  };
}

export function clamp(value: number): number {
  return Math.min(1, Math.max(-1, value));
}

export function setSlider(state: StudioState, name: string, value: number): StudioState {
  if (!(name in state.sliders)) return state;
  return { ...state, sliders: { ...state.sliders, [name]: clamp(value) } };
}

export function setSource(
  state: StudioState,
  source: Source,
  sliders: Record<string, number>,
): StudioState {
  const clamped: Record<string, number> = {};
  for (const name of state.attributeNames) clamped[name] = clamp(sliders[name] ?? 0);
  return {
    ...state,
    source,
    sliders: clamped,
    sourceSliders: { ...clamped },
    strip: [],
    error: null,
  };
}

/** Accept a preview only if it is newer than the one on screen. */
export function acceptPreview(state: StudioState, seq: number, image: string): StudioState {
  if (seq <= state.previewSeq) return state;
  return { ...state, preview: image, previewSeq: seq, error: null };
}

export function setStrip(state: StudioState, frames: string[]): StudioState {
  return { ...state, strip: frames, error: null };
}

export function setError(state: StudioState, message: string): StudioState {
  return { ...state, error: message };
}

export function trackRequest(state: StudioState, delta: 1 | -1): StudioState {
  return { ...state, inFlight: Math.max(0, state.inFlight + delta) };
}
