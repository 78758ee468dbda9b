import { describe, expect, it } from "vitest";
import { acceptPreview, clamp, initialState, setSlider, setSource } from "../src/state.js";

const NAMES = ["red_tint", "large_shape", "border", "bright_background"];

describe("slider clamping", () => {
  it("clamps writes into [-1, 1]", () => {
    let state = initialState(NAMES);
    state = setSlider(state, "red_tint", 3);
    expect(state.sliders["red_tint"]).toBe(1);
    state = setSlider(state, "red_tint", -42);
    expect(state.sliders["red_tint"]).toBe(-1);
    state = setSlider(state, "red_tint", 0.25);
    expect(state.sliders["red_tint"]).toBe(0.25);
  });

  it("ignores unknown names", () => {
    const state = initialState(NAMES);
    expect(setSlider(state, "sparkles", 1)).toBe(state);
  });

  it("clamp is the identity inside the range", () => {
    expect(clamp(-1)).toBe(-1);
    expect(clamp(1)).toBe(1);
    expect(clamp(0)).toBe(0);
  });

  it("setSource clamps incoming predictions too", () => {
    let state = initialState(NAMES);
    state = setSource(state, { kind: "upload", image: "x", z: [0] }, { red_tint: 2, border: -0.5 });
    expect(state.sliders["red_tint"]).toBe(1);
    expect(state.sliders["border"]).toBe(-0.5);
    expect(state.sliders["large_shape"]).toBe(0);
  });
});

describe("sequence guard", () => {
  it("accepts newer previews", () => {
    let state = initialState(NAMES);
    state = acceptPreview(state, 1, "first");
    expect(state.preview).toBe("first");
    state = acceptPreview(state, 2, "second");
    expect(state.preview).toBe("second");
  });

  it("discards stale previews so the preview timestamp is monotone", () => {
    let state = initialState(NAMES);
    state = acceptPreview(state, 5, "newer");
    const before = state;
    state = acceptPreview(state, 3, "older");
    expect(state).toBe(before);
    expect(state.preview).toBe("newer");
    expect(state.previewSeq).toBe(5);
  });
});
