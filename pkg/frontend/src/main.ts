/**
 * Editor assembly: per-attribute slider groups, randomize buttons, the 3D
 * view with its displacement overlay, and shift-click direct manipulation
 * with a residual mini-chart.
 */

import { ApiClient } from "./api.js";
import { DisplacementColormap } from "./colormap.js";
import { EditorController, EditorState } from "./state.js";
import { MeshViewer } from "./viewer.js";

interface DragSelection {
  vertexIds: number[];
  targets: [number, number, number][];
}

async function boot(): Promise<void> {
  const client = new ApiClient("");
  const info = await client.info();
  const template = await client.template();

  const state = new EditorState(info);
  const controller = new EditorController(state, client);

  const viewer = new MeshViewer(document.getElementById("view")!);
  viewer.setTemplate(template);

  // fixed colormap scale per session: a fraction of the bounding box
  const bbox = boundingBoxDiagonal(template.positions);
  const colormap = new DisplacementColormap(0.05 * bbox);
  let overlayEnabled = true;

  const sliders: HTMLInputElement[] = [];
  const readouts: HTMLSpanElement[] = [];
  const selection: DragSelection = { vertexIds: [], targets: [] };

  const toast = document.getElementById("toast")!;
  controller.onError = (message) => {
    toast.textContent = `request failed: ${message}`;
    toast.classList.add("visible");
    setTimeout(() => toast.classList.remove("visible"), 3200);
  };

  controller.onUpdate = () => {
    state.latent.forEach((v, i) => {
      sliders[i].value = String(v);
      readouts[i].textContent = v.toFixed(2);
    });
    if (state.vertices) viewer.updateVertices(state.vertices);
    if (state.displacement && overlayEnabled) {
      viewer.updateColors(colormap.colorize(state.displacement));
    }
    drawResiduals(state.residuals);
  };

  buildSliderPanel(info, state, controller, sliders, readouts);
  bindToolbar(controller, state, viewer, selection, () => {
    overlayEnabled = !overlayEnabled;
    if (!overlayEnabled) {
      viewer.updateColors(colormap.colorize(new Array(info.vertex_count).fill(0)));
    } else if (state.displacement) {
      viewer.updateColors(colormap.colorize(state.displacement));
    }
    return overlayEnabled;
  });
  bindPicking(viewer, selection);

  await controller.startSession();
}

function boundingBoxDiagonal(positions: Float32Array): number {
  const lo = [Infinity, Infinity, Infinity];
  const hi = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < positions.length; i += 3) {
    for (let k = 0; k < 3; k++) {
      lo[k] = Math.min(lo[k], positions[i + k]);
      hi[k] = Math.max(hi[k], positions[i + k]);
    }
  }
  return Math.hypot(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]);
}

function buildSliderPanel(
  info: { attribute_count: number; kappa: number; attribute_names: string[]; traversal_range: [number, number] },
  state: EditorState,
  controller: EditorController,
  sliders: HTMLInputElement[],
  readouts: HTMLSpanElement[],
): void {
  const panel = document.getElementById("sliders")!;
  for (let w = 0; w < info.attribute_count; w++) {
    const group = document.createElement("fieldset");
    group.className = "attribute-group";
    const legend = document.createElement("legend");
    legend.textContent = info.attribute_names[w];
    group.appendChild(legend);

    const randomize = document.createElement("button");
    randomize.textContent = "randomize";
    randomize.addEventListener("click", () => void controller.randomizeAttribute(w));
    group.appendChild(randomize);

    for (let j = 0; j < info.kappa; j++) {
      const dim = w * info.kappa + j;
      const row = document.createElement("label");
      row.className = "slider-row";
      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = String(info.traversal_range[0]);
      slider.max = String(info.traversal_range[1]);
      slider.step = "0.01";
      slider.value = "0";
      const readout = document.createElement("span");
      readout.textContent = "0.00";
      slider.addEventListener("input", () => {
        const value = state.clamp(Number(slider.value));
        readout.textContent = value.toFixed(2);
        controller.setSlider(dim, value);
      });
      row.append(`z${dim}`, slider, readout);
      group.appendChild(row);
      sliders.push(slider);
      readouts.push(readout);
    }
    panel.appendChild(group);
  }
}

function bindToolbar(
  controller: EditorController,
  state: EditorState,
  viewer: MeshViewer,
  selection: DragSelection,
  toggleOverlay: () => boolean,
): void {
  document.getElementById("new-subject")!.addEventListener("click", () => {
    void controller.startSession(Math.floor(Math.random() * 1e9));
  });
  document.getElementById("toggle-overlay")!.addEventListener("click", (e) => {
    (e.target as HTMLButtonElement).textContent = toggleOverlay()
      ? "overlay: on"
      : "overlay: off";
  });
  document.getElementById("apply-manipulation")!.addEventListener("click", () => {
    if (!selection.vertexIds.length) return;
    void controller
      .manipulate(selection.vertexIds, selection.targets.map((t) => [...t]))
      .then(() => {
        selection.vertexIds = [];
        selection.targets = [];
        viewer.setMarkers([], []);
      });
  });
  document.getElementById("clear-selection")!.addEventListener("click", () => {
    selection.vertexIds = [];
    selection.targets = [];
    viewer.setMarkers([], []);
  });
}

function bindPicking(viewer: MeshViewer, selection: DragSelection): void {
  const view = document.getElementById("view")!;
  let dragging: { index: number; startY: number } | null = null;

  view.addEventListener("pointerdown", (e) => {
    if (!e.shiftKey) return;
    const vertexId = viewer.pickAtPointer(e.clientX, e.clientY);
    if (vertexId === null) return;
    const at = selection.vertexIds.indexOf(vertexId);
    const index = at >= 0 ? at : selection.vertexIds.length;
    if (at < 0) {
      selection.vertexIds.push(vertexId);
      selection.targets.push(viewer.vertexPosition(vertexId));
    }
    dragging = { index, startY: e.clientY };
    e.preventDefault();
  });
  window.addEventListener("pointermove", (e) => {
    if (!dragging) return;
    // drag up/down moves the target along the vertex normal proxy (view y)
    const delta = (dragging.startY - e.clientY) * 0.002;
    const id = selection.vertexIds[dragging.index];
    const base = viewer.vertexPosition(id);
    selection.targets[dragging.index] = [base[0], base[1] + delta, base[2]];
    viewer.setMarkers(
      selection.vertexIds.map((v) => viewer.vertexPosition(v)),
      selection.targets,
    );
  });
  window.addEventListener("pointerup", () => (dragging = null));
}

function drawResiduals(residuals: number[] | null): void {
  const canvas = document.getElementById("residuals") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!residuals || residuals.length < 2) return;
  const max = Math.max(...residuals, 1e-12);
  ctx.strokeStyle = "#6fa8ff";
  ctx.beginPath();
  residuals.forEach((r, i) => {
    const x = (i / (residuals.length - 1)) * canvas.width;
    const y = canvas.height - (r / max) * (canvas.height - 4) - 2;
    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  });
  ctx.stroke();
}

void boot();
