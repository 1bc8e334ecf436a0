/** DOM wiring for the exploration UI. */

import { Client, Provenance, RenderRequest, ServiceError } from "./api.js";
import { orbitToCamera } from "./camera.js";
import { pointCounts, renderChart, Series, seriesColor } from "./chart.js";
import { LatestWins } from "./debounce.js";
import { Session } from "./state.js";
import { TfEditor } from "./tfeditor.js";

const PREVIEW_SIZE = 256;
const SENSITIVITY_SAMPLES = 7;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function toast(message: string): void {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.classList.add("visible");
  setTimeout(() => box.classList.remove("visible"), 4000);
}

async function boot(): Promise<void> {
  const client = new Client();
  const meta = await client.meta();
  const session = new Session(meta);

  const preview = el<HTMLImageElement>("preview");
  const caption = el<HTMLDivElement>("caption");
  const badge = el<HTMLSpanElement>("range-badge");
  // Every displayed image keeps the exact request body that produced it.
  const requestLog: string[] = [];

  const renderer = new LatestWins<RenderRequest>(async (request) => {
    try {
      const result = await client.render(request);
      const url = URL.createObjectURL(result.blob);
      const previous = preview.src;
      preview.src = url;
      if (previous.startsWith("blob:")) URL.revokeObjectURL(previous);
      requestLog.push(result.requestBody);
      updateCaption(result.provenance, request.params);
    } catch (err) {
      const detail = err instanceof ServiceError && err.diagnosticId
        ? ` (diagnostic ${err.diagnosticId})`
        : "";
      toast(`render failed: ${(err as Error).message}${detail}`);
    }
  });

  function updateCaption(provenance: Provenance | null,
                         params: number[]): void {
    const values = params.map((v) => v.toPrecision(4)).join(", ");
    const ids = provenance
      ? Object.values(provenance.predictor_ids).map((s) => s.slice(0, 8))
          .join(" ")
      : "?";
    caption.textContent = `params [${values}]  predictors ${ids}`;
    const outside = provenance?.out_of_range ?? session.outOfRangeNames();
    badge.textContent = outside.length
      ? `extrapolating: ${outside.join(", ")}`
      : "";
  }

  function requestRender(): void {
    renderer.request({
      params: [...session.values],
      camera: orbitToCamera(session.orbit, PREVIEW_SIZE, PREVIEW_SIZE),
      tf: session.tfSpec(),
    });
  }

  // -- parameter sliders ----------------------------------------------------

  const sliderBox = el<HTMLDivElement>("sliders");
  const sliderInputs: HTMLInputElement[] = [];
  const sliderLabels: HTMLSpanElement[] = [];
  meta.parameters.forEach((info, index) => {
    const row = document.createElement("div");
    row.className = "slider-row";
    const name = document.createElement("label");
    name.textContent = info.name;
    const value = document.createElement("span");
    value.className = "slider-value";
    const input = document.createElement("input");
    input.type = "range";
    input.min = String(info.min);
    input.max = String(info.max);
    input.step = String((info.max - info.min) / 200);
    input.value = String(session.values[index]);
    input.addEventListener("input", () => {
      session.setValue(index, parseFloat(input.value));
      value.textContent = session.values[index].toPrecision(4);
      badge.textContent = session.outOfRangeNames().length
        ? `extrapolating: ${session.outOfRangeNames().join(", ")}`
        : "";
      requestRender();
    });
    value.textContent = session.values[index].toPrecision(4);
    row.append(name, input, value);
    sliderBox.append(row);
    sliderInputs.push(input);
    sliderLabels.push(value);
  });

  const extrapolate = el<HTMLInputElement>("extrapolate");
  extrapolate.addEventListener("change", () => {
    session.extrapolate = extrapolate.checked;
    const margin = 0.5;
    meta.parameters.forEach((info, index) => {
      const span = info.max - info.min;
      sliderInputs[index].min = String(
        session.extrapolate ? info.min - margin * span : info.min);
      sliderInputs[index].max = String(
        session.extrapolate ? info.max + margin * span : info.max);
      session.setValue(index, parseFloat(sliderInputs[index].value));
      sliderLabels[index].textContent = session.values[index].toPrecision(4);
    });
    requestRender();
  });

  // -- orbit camera ---------------------------------------------------------

  for (const [id, key] of [["azimuth", "azimuthDeg"],
                           ["elevation", "elevationDeg"],
                           ["distance", "distance"],
                           ["fov", "fovDeg"]] as const) {
    const input = el<HTMLInputElement>(id);
    input.addEventListener("input", () => {
      session.orbit = { ...session.orbit, [key]: parseFloat(input.value) };
      requestRender();
    });
  }

  // -- transfer function ----------------------------------------------------

  const editor = new TfEditor(el<HTMLCanvasElement>("tf-canvas"), session,
                              () => requestRender());
  el<HTMLInputElement>("tf-color").addEventListener("input", (e) => {
    editor.setSelectedColor((e.target as HTMLInputElement).value);
  });

  // -- sensitivity panel ----------------------------------------------------

  const chartBox = el<HTMLDivElement>("chart");
  const toggles = el<HTMLDivElement>("series-toggles");
  const seriesData = new Map<string, Series>();
  const enabled = new Set<string>();

  meta.parameters.forEach((info, index) => {
    const label = document.createElement("label");
    label.className = "series-toggle";
    const box = document.createElement("input");
    box.type = "checkbox";
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.background = seriesColor(index);
    label.append(box, swatch, info.name);
    toggles.append(label);
    box.addEventListener("change", async () => {
      if (!box.checked) {
        enabled.delete(info.name);
        redrawChart();
        return;
      }
      enabled.add(info.name);
      try {
        const result = await client.sensitivity([...session.values], index,
                                                SENSITIVITY_SAMPLES);
        seriesData.set(info.name, {
          label: info.name,
          rows: result.rows,
          color: seriesColor(index),
        });
        redrawChart();
      } catch (err) {
        enabled.delete(info.name);
        box.checked = false;
        toast(`sensitivity failed: ${(err as Error).message}`);
        redrawChart();
      }
    });
  });

  function redrawChart(): void {
    const active = [...seriesData.values()].filter((s) => enabled.has(s.label));
    if (active.length === 0) {
      chartBox.innerHTML =
        '<div class="empty">toggle a parameter to probe its sensitivity</div>';
      return;
    }
    chartBox.innerHTML = renderChart(active);
    const counts = pointCounts(active);
    el<HTMLDivElement>("chart-caption").textContent = Object.entries(counts)
      .map(([k, v]) => `${k}: ${v} samples`)
      .join("  ");
  }

  redrawChart();
  updateCaption(null, session.values);
  requestRender();
}

boot().catch((err) => {
  document.body.innerHTML =
    `<p class="fatal">failed to reach the service: ${err}</p>`;
});
