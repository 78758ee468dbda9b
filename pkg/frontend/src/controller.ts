import { ApiClient, ApiError } from "./api.js";
import { debounce, type Debounced } from "./debounce.js";
import {
  acceptPreview,
  initialState,
  setError,
  setSlider,
  setSource,
  setStrip,
  trackRequest,
  type StudioState,
} from "./state.js";

export const SLIDER_DEBOUNCE_MS = 150;

/** Wires state transitions to API calls; all mutations funnel through update(). */
export class StudioController {
  private state: StudioState;
  private nextSeq = 0;
  private readonly debouncedEdit: Debounced<[]>;
  private readonly listeners = new Set<(s: StudioState) => void>();

  constructor(
    private readonly api: ApiClient,
    attributeNames: string[],
    debounceMs: number = SLIDER_DEBOUNCE_MS,
  ) {
    this.state = initialState(attributeNames);
    this.debouncedEdit = debounce(() => void this.issueEdit(), debounceMs);
  }

  getState(): StudioState {
    return this.state;
  }

  subscribe(listener: (s: StudioState) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private update(next: StudioState): void {
    this.state = next;
    for (const listener of this.listeners) listener(next);
  }

  /** Upload path: invert, seed the sliders from the prediction, show the reconstruction. */
  async loadUpload(imageBase64: string): Promise<void> {
    this.update(trackRequest(this.state, 1));
    try {
      const inverted = await this.api.invert(imageBase64);
      this.update(
        setSource(
          this.state,
          { kind: "upload", image: imageBase64, z: inverted.z },
          inverted.predicted_attributes,
        ),
      );
      await this.issueEdit();
    } catch (err) {
      this.update(setError(this.state, describe(err)));
    } finally {
      this.update(trackRequest(this.state, -1));
    }
  }

  /** Generate path: draw a novel sample at the current slider values. */
  async loadGenerated(seed?: number): Promise<void> {
    this.update(trackRequest(this.state, 1));
    try {
      const result = await this.api.generate({ ...this.state.sliders }, seed);
      const seq = ++this.nextSeq;
      this.update(
        setSource(this.state, { kind: "generated", z: result.z, seed: result.seed }, this.state.sliders),
      );
      this.update(acceptPreview(this.state, seq, result.image));
    } catch (err) {
      this.update(setError(this.state, describe(err)));
    } finally {
      this.update(trackRequest(this.state, -1));
    }
  }

  /** Slider move: clamp, record, and schedule one edit per debounce window. */
  onSliderChange(name: string, value: number): void {
    this.update(setSlider(this.state, name, value));
    if (this.state.source !== null) this.debouncedEdit();
  }

  /** Force the pending debounced edit out immediately (for tests and blur events). */
  flushPendingEdit(): void {
    this.debouncedEdit.flush();
  }

  private async issueEdit(): Promise<void> {
    const source = this.state.source;
    if (source === null) return;
    const seq = ++this.nextSeq;
    const attributes = { ...this.state.sliders };
    this.update(trackRequest(this.state, 1));
    try {
      const image =
        source.kind === "upload"
          ? await this.api.editImage(source.image, attributes)
          : await this.api.editLatent(source.z, attributes);
      this.update(acceptPreview(this.state, seq, image));
    } catch (err) {
      this.update(setError(this.state, describe(err)));
    } finally {
      this.update(trackRequest(this.state, -1));
    }
  }

  /** Filmstrip: pose walk on the uploaded image, or attribute morph source -> sliders. */
  async runStrip(mode: "interpolate" | "pose", steps: number): Promise<void> {
    const source = this.state.source;
    if (source === null) {
      this.update(setError(this.state, "load or generate a source first"));
      return;
    }
    this.update(trackRequest(this.state, 1));
    try {
      let frames: string[];
      if (mode === "pose") {
        if (source.kind !== "upload") throw new ApiError(0, "pose_needs_image", "pose walk needs an uploaded image");
        frames = await this.api.interpolate({ a: { image: source.image }, steps, mode: "pose" });
      } else {
        const a =
          source.kind === "upload"
            ? { image: source.image, attributes: { ...this.state.sourceSliders } }
            : { z: source.z, attributes: { ...this.state.sourceSliders } };
        const b =
          source.kind === "upload"
            ? { image: source.image, attributes: { ...this.state.sliders } }
            : { z: source.z, attributes: { ...this.state.sliders } };
        frames = await this.api.interpolate({ a, b, steps, mode: "latent" });
      }
      this.update(setStrip(this.state, frames));
    } catch (err) {
      this.update(setError(this.state, describe(err)));
    } finally {
      this.update(trackRequest(this.state, -1));
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}
