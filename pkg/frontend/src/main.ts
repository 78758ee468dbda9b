import { ApiClient } from "./api.js";
import { StudioController } from "./controller.js";

const DEFAULT_BASE_URL = "http://127.0.0.1:8000";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function fileToBase64(file: File): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => {
      const url = reader.result as string;
      resolve(url.slice(url.indexOf(",") + 1)); // strip the data: prefix
    };
    reader.onerror = () => reject(reader.error);
    reader.readAsDataURL(file);
  });
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const baseUrl = params.get("api") ?? DEFAULT_BASE_URL;
  const api = new ApiClient(baseUrl);
  const info = await api.attributes();
  const controller = new StudioController(api, info.names);

  const sliderBox = el<HTMLDivElement>("sliders");
  const sliderInputs = new Map<string, HTMLInputElement>();
  for (const name of info.names) {
    const row = document.createElement("label");
    row.className = "slider-row";
    const text = document.createElement("span");
    text.textContent = name;
    const input = document.createElement("input");
    input.type = "range";
    input.min = "-1";
    input.max = "1";
    input.step = "0.05";
    input.value = "0";
    input.addEventListener("input", () => controller.onSliderChange(name, Number(input.value)));
    const value = document.createElement("code");
    value.textContent = "0.00";
    row.append(text, input, value);
    sliderBox.append(row);
    sliderInputs.set(name, input);
  }

  el<HTMLInputElement>("upload").addEventListener("change", async (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (!file) return;
    if (file.size > 4 * 1024 * 1024) {
      el<HTMLDivElement>("toast").textContent = "file too large (4 MB cap)";
      return;
    }
    await controller.loadUpload(await fileToBase64(file));
  });
  el<HTMLButtonElement>("generate").addEventListener("click", () => void controller.loadGenerated());
  el<HTMLButtonElement>("strip-pose").addEventListener("click", () => void controller.runStrip("pose", 8));
  el<HTMLButtonElement>("strip-interp").addEventListener(
    "click",
    () => void controller.runStrip("interpolate", 8),
  );

  controller.subscribe((state) => {
    const preview = el<HTMLImageElement>("preview");
    if (state.preview) preview.src = `data:image/png;base64,${state.preview}`;
    for (const [name, input] of sliderInputs) {
      const value = state.sliders[name] ?? 0;
      if (Number(input.value) !== value) input.value = String(value);
      (input.parentElement!.lastElementChild as HTMLElement).textContent = value.toFixed(2);
    }
    const strip = el<HTMLDivElement>("strip");
    strip.replaceChildren(
      ...state.strip.map((frame, i) => {
        const img = document.createElement("img");
        img.src = `data:image/png;base64,${frame}`;
        img.title = i === 0 ? "start" : i === state.strip.length - 1 ? "end" : `frame ${i}`;
        if (i === 0 || i === state.strip.length - 1) img.className = "endpoint";
        return img;
      }),
    );
    el<HTMLDivElement>("toast").textContent = state.error ?? "";
    el<HTMLDivElement>("busy").style.visibility = state.inFlight > 0 ? "visible" : "hidden";
  });
}

boot().catch((err) => {
  document.body.insertAdjacentText("afterbegin", `failed to reach the API: ${err}`);
});
