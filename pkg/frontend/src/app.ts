// The map application: a pannable, zoomable SVG canvas of tinted density
// tiles with label, filter, selection and search controls on top. All map
// semantics come from the server; this file only wires views together.

import { ApiClient } from "./api";
import type { LayerInfo, SearchMatch } from "./api";
import { el, svg } from "./dom";
import { FilterOverlay } from "./overlay";
import { FetchQueue } from "./net";
import type { FetchLike } from "./net";
import { LabelsOverlay } from "./labels";
import { SearchBox } from "./search";
import { Selection } from "./selection";
import { TileLayer } from "./tiles";
import { LAYER_TINTS, tintMatrixValues } from "./tint";
import { clampZoom, screenToMap, worldSize } from "./view";
import type { ViewState } from "./view";

export interface AppOptions {
  width?: number;
  height?: number;
  fetchFn?: FetchLike;
  maxTileFetches?: number;
  retryDelays?: number[];
}

export class MapApp {
  readonly api: ApiClient;
  readonly queue: FetchQueue;
  readonly ready: Promise<void>;
  view: ViewState;
  layers: LayerInfo[] = [];
  tileLayers = new Map<string, TileLayer>();
  readonly overlay: FilterOverlay;
  readonly labels: LabelsOverlay;
  readonly selection: Selection;
  readonly search: SearchBox;
  readonly mapSvg: SVGElement;
  readonly baseGroup: SVGElement;
  readonly progressBar: HTMLElement;
  private inflight = new Set<Promise<unknown>>();
  private retryDelays: number[];

  constructor(root: HTMLElement, base: string, opts: AppOptions = {}) {
    const fetchFn: FetchLike = opts.fetchFn ?? ((u, i) => fetch(u, i));
    this.api = new ApiClient(base, fetchFn);
    this.queue = new FetchQueue(fetchFn, opts.maxTileFetches ?? 8);
    this.retryDelays = opts.retryDelays ?? [250, 1000];
    const width = opts.width ?? 800;
    const height = opts.height ?? 600;
    this.view = { centerX: 0.5, centerY: 0.5, zoom: 0, width, height, zmax: 0 };

    const container = el("div", {}, "cartomap");
    root.appendChild(container);

    // thin red bar across the top: filter render progress
    this.progressBar = el("div", {}, "filter-progress");
    Object.assign(this.progressBar.style, {
      position: "absolute",
      top: "0",
      left: "0",
      height: "3px",
      background: "red",
      width: "0%",
      display: "none",
    });
    container.appendChild(this.progressBar);

    const toolbar = el("div", {}, "toolbar");
    container.appendChild(toolbar);

    this.mapSvg = svg("svg", {
      class: "map",
      width: String(width),
      height: String(height),
      viewBox: `0 0 ${width} ${height}`,
    });
    container.appendChild(this.mapSvg);

    const defs = svg("defs");
    for (const [etype, color] of Object.entries(LAYER_TINTS)) {
      const filter = svg("filter", { id: `tint-${etype}` });
      filter.appendChild(svg("feColorMatrix", { type: "matrix", values: tintMatrixValues(color) }));
      defs.appendChild(filter);
    }
    this.mapSvg.appendChild(defs);

    this.baseGroup = svg("g", { class: "base" });
    const overlayGroup = svg("g", { class: "overlay" });
    const labelsGroup = svg("g", { class: "labels" });
    const dotsGroup = svg("g", { class: "dots" });
    this.mapSvg.append(this.baseGroup, overlayGroup, labelsGroup, dotsGroup);

    const errorBox = el("div", {}, "filter-error");
    const panel = el("div", {}, "detail-panel");
    container.append(errorBox, panel);

    this.overlay = new FilterOverlay(
      overlayGroup,
      this.progressBar,
      errorBox,
      this.api,
      this.queue,
      (layer) => `tint-${layer.entity_type}`,
      (p) => this.track(p),
    );
    this.labels = new LabelsOverlay(labelsGroup, this.api, (p) => this.track(p));
    this.selection = new Selection(dotsGroup, panel, this.api, (p) => this.track(p));
    this.search = new SearchBox(toolbar, this.api, (m) => this.goTo(m), (p) => this.track(p));

    const filterInput = el("input", { type: "text", placeholder: "facet:value;..." }, "filter-input") as HTMLInputElement;
    const applyBtn = el("button", {}, "filter-apply");
    applyBtn.textContent = "filter";
    applyBtn.addEventListener("click", () => this.applyFilter(filterInput.value));
    const clearBtn = el("button", {}, "filter-clear");
    clearBtn.textContent = "clear";
    clearBtn.addEventListener("click", () => {
      filterInput.value = "";
      this.clearFilter();
    });
    toolbar.append(filterInput, applyBtn, clearBtn);
    this.attachPointerControls();

    this.ready = this.track(this.boot(toolbar));
    // keep an unobserved boot failure from surfacing as an unhandled rejection
    this.ready.catch(() => {});
  }

  private async boot(toolbar: HTMLElement): Promise<void> {
    this.layers = await this.api.layers();
    this.view.zmax = Math.max(0, ...this.layers.map((l) => l.zmax));
    for (const layer of this.layers) {
      const tl = new TileLayer(
        this.baseGroup,
        layer,
        this.api,
        this.queue,
        `tint-${layer.entity_type}`,
        this.retryDelays,
        (p) => this.track(p),
      );
      this.tileLayers.set(layer.name, tl);
      const label = el("label", {}, `layer-toggle layer-toggle-${layer.name}`);
      const box = el("input", { type: "checkbox" }) as HTMLInputElement;
      box.checked = true;
      box.addEventListener("change", () => this.toggleLayer(layer.name, box.checked));
      label.append(box, document.createTextNode(layer.name));
      toolbar.appendChild(label);
    }
    this.renderAll();
  }

  private visibleLayers(): LayerInfo[] {
    return this.layers.filter((l) => this.tileLayers.get(l.name)?.visible);
  }

  private renderAll(): void {
    for (const tl of this.tileLayers.values()) tl.render(this.view);
    this.overlay.render(this.visibleLayers(), this.view);
    void this.labels.render(this.view);
    this.selection.reposition(this.view);
  }

  setView(patch: Partial<Pick<ViewState, "centerX" | "centerY" | "zoom">>): void {
    if (patch.zoom !== undefined) this.view.zoom = clampZoom(patch.zoom, this.view.zmax);
    if (patch.centerX !== undefined) this.view.centerX = Math.min(1, Math.max(0, patch.centerX));
    if (patch.centerY !== undefined) this.view.centerY = Math.min(1, Math.max(0, patch.centerY));
    this.renderAll();
  }

  panBy(dxPx: number, dyPx: number): void {
    const w = worldSize(this.view);
    this.setView({
      centerX: this.view.centerX + dxPx / w,
      centerY: this.view.centerY + dyPx / w,
    });
  }

  zoomBy(delta: number, anchorX?: number, anchorY?: number): void {
    const before =
      anchorX !== undefined && anchorY !== undefined
        ? screenToMap(this.view, anchorX, anchorY)
        : null;
    const zoom = clampZoom(this.view.zoom + delta, this.view.zmax);
    this.view.zoom = zoom;
    if (before && anchorX !== undefined && anchorY !== undefined) {
      // keep the point under the cursor fixed
      const after = screenToMap(this.view, anchorX, anchorY);
      this.view.centerX += before.x - after.x;
      this.view.centerY += before.y - after.y;
    }
    this.setView({});
  }

  toggleLayer(name: string, on: boolean): void {
    this.tileLayers.get(name)?.setVisible(on, this.view);
    this.overlay.render(this.visibleLayers(), this.view);
  }

  applyFilter(expr: string): void {
    this.overlay.setFilter(expr, this.visibleLayers(), this.view);
    this.baseGroup.classList.add("dimmed");
    this.baseGroup.setAttribute("opacity", "0.25");
  }

  clearFilter(): void {
    this.overlay.setFilter(null, this.visibleLayers(), this.view);
    this.baseGroup.classList.remove("dimmed");
    this.baseGroup.removeAttribute("opacity");
  }

  select(id: string): Promise<void> {
    return this.selection.select(id, this.view);
  }

  clearSelection(): void {
    this.selection.clear();
  }

  goTo(m: SearchMatch): void {
    this.setView({ centerX: m.x, centerY: m.y });
    this.select(`${m.type}:${m.id}`).catch(() => {
      // a failed detail fetch leaves the panel as it was
    });
  }

  // resolves once every tracked network task has settled
  async idle(): Promise<void> {
    while (this.inflight.size > 0) {
      await Promise.allSettled([...this.inflight]);
    }
  }

  private track<T>(p: Promise<T>): Promise<T> {
    this.inflight.add(p);
    const done = () => void this.inflight.delete(p);
    p.then(done, done);
    return p;
  }

  private attachPointerControls(): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.mapSvg.addEventListener("pointerdown", (e) => {
      dragging = true;
      lastX = (e as PointerEvent).clientX;
      lastY = (e as PointerEvent).clientY;
    });
    this.mapSvg.addEventListener("pointermove", (e) => {
      if (!dragging) return;
      const pe = e as PointerEvent;
      this.panBy(lastX - pe.clientX, lastY - pe.clientY);
      lastX = pe.clientX;
      lastY = pe.clientY;
    });
    this.mapSvg.addEventListener("pointerup", () => {
      dragging = false;
    });
    this.mapSvg.addEventListener("wheel", (e) => {
      const we = e as WheelEvent;
      we.preventDefault();
      this.zoomBy(we.deltaY < 0 ? 0.5 : -0.5, we.offsetX, we.offsetY);
    });
  }
}
