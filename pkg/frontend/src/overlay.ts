// Progressive filter overlay. While a filter is active the base map is
// greyed out and filtered tiles are fetched center-first, composited as each
// arrives. A thin red bar across the top tracks completion of the visible
// tile set; any view or filter change cancels what is still outstanding.

import { ApiClient, ApiError, pngDataUrl } from "./api";
import type { LayerInfo } from "./api";
import { FetchQueue, isAbort } from "./net";
import { svg } from "./dom";
import { TILE, centerOut, tileCover, tileKey, tileLevel, worldSize } from "./view";
import type { TileAddr, ViewState } from "./view";

export class FilterOverlay {
  expr: string | null = null;
  error: string | null = null;
  outstanding = 0;
  private total = 0;
  private done = 0;
  private epoch = 0;
  private ctrl: AbortController | null = null;
  private groups = new Map<string, SVGElement>();
  private images = new Map<string, SVGElement>();

  constructor(
    private root: SVGElement,
    private bar: HTMLElement,
    private errorBox: HTMLElement,
    private api: ApiClient,
    private queue: FetchQueue,
    private layerFilterId: (layer: LayerInfo) => string,
    private track: <T>(p: Promise<T>) => Promise<T>,
  ) {
    this.bar.style.display = "none";
  }

  get active(): boolean {
    return this.expr !== null;
  }

  setFilter(expr: string | null, layers: LayerInfo[], view: ViewState): void {
    this.expr = expr;
    this.error = null;
    this.errorBox.textContent = "";
    this.cancel();
    this.groups.forEach((g) => g.remove());
    this.groups.clear();
    this.images.clear();
    if (expr === null) {
      this.updateBar();
      return;
    }
    this.render(layers, view);
  }

  // view changed or filter applied: supersede everything still in flight
  render(layers: LayerInfo[], view: ViewState): void {
    if (this.expr === null) return;
    this.cancel();
    const epoch = ++this.epoch;
    this.ctrl = new AbortController();

    const jobs: Array<{ layer: LayerInfo; addr: TileAddr }> = [];
    const wanted = new Set<string>();
    for (const layer of layers) {
      const group = this.layerGroup(layer);
      this.positionGroup(group, view, Math.min(tileLevel(view), layer.zmax));
      const cover = centerOut(tileCover({ ...view, zmax: layer.zmax }), view);
      for (const addr of cover) {
        const key = `${layer.name}:${tileKey(addr)}`;
        wanted.add(key);
        if (!this.images.has(key)) jobs.push({ layer, addr });
      }
    }
    for (const [key, img] of this.images) {
      if (!wanted.has(key)) {
        img.remove();
        this.images.delete(key);
      }
    }
    // interleave layers so the screen center fills in for all of them first
    jobs.sort((a, b) => {
      const da = distToCenter(a.addr, view);
      const db = distToCenter(b.addr, view);
      return da - db;
    });

    this.total = jobs.length;
    this.done = 0;
    this.outstanding = jobs.length;
    this.updateBar();
    for (const job of jobs) {
      void this.track(this.loadTile(job.layer, job.addr, epoch, this.ctrl.signal));
    }
  }

  private async loadTile(layer: LayerInfo, addr: TileAddr, epoch: number, signal: AbortSignal): Promise<void> {
    const url = this.api.filteredUrl(layer.name, addr, this.expr ?? "");
    try {
      const resp = await this.queue.request(url, { signal });
      if (epoch !== this.epoch) return;
      if (!resp.ok) {
        let detail = `filter failed (${resp.status})`;
        try {
          const body = (await resp.json()) as { detail?: unknown };
          if (typeof body.detail === "string") detail = body.detail;
        } catch {
          // keep the generic message
        }
        throw new ApiError(resp.status, detail);
      }
      const bytes = new Uint8Array(await resp.arrayBuffer());
      if (epoch !== this.epoch) return;
      this.place(layer, addr, pngDataUrl(bytes));
    } catch (err) {
      if (isAbort(err) || epoch !== this.epoch) return;
      if (err instanceof ApiError && err.status === 400) {
        // bad facet or value: surface the server's message inline, drop the overlay
        this.error = err.message;
        this.errorBox.textContent = err.message;
        this.cancel();
        this.updateBar();
        return;
      }
    } finally {
      if (epoch === this.epoch && this.outstanding > 0) {
        this.outstanding -= 1;
        this.done += 1;
        this.updateBar();
      }
    }
  }

  private place(layer: LayerInfo, addr: TileAddr, href: string): void {
    const key = `${layer.name}:${tileKey(addr)}`;
    let img = this.images.get(key);
    if (!img) {
      img = svg("image", {
        x: String(addr.x * TILE),
        y: String(addr.y * TILE),
        width: String(TILE),
        height: String(TILE),
        "data-filtered-tile": key,
      });
      this.layerGroup(layer).appendChild(img);
      this.images.set(key, img);
    }
    img.setAttribute("href", href);
  }

  private layerGroup(layer: LayerInfo): SVGElement {
    let g = this.groups.get(layer.name);
    if (!g) {
      g = svg("g", {
        class: `overlay-layer overlay-layer-${layer.name}`,
        filter: `url(#${this.layerFilterId(layer)})`,
      });
      this.root.appendChild(g);
      this.groups.set(layer.name, g);
    }
    return g;
  }

  private positionGroup(group: SVGElement, view: ViewState, z: number): void {
    const scale = worldSize(view) / (TILE * (1 << z));
    const originX = view.width / 2 - view.centerX * worldSize(view);
    const originY = view.height / 2 - view.centerY * worldSize(view);
    group.setAttribute("transform", `translate(${originX} ${originY}) scale(${scale})`);
  }

  private cancel(): void {
    this.ctrl?.abort();
    this.ctrl = null;
    this.outstanding = 0;
  }

  // progress bar visible exactly while overlay tiles are outstanding
  private updateBar(): void {
    if (this.outstanding > 0) {
      this.bar.style.display = "block";
      this.bar.style.width = `${this.total ? (100 * this.done) / this.total : 0}%`;
    } else {
      this.bar.style.display = "none";
      this.bar.style.width = "0%";
    }
  }
}

function distToCenter(addr: TileAddr, view: ViewState): number {
  const n = 1 << addr.z;
  const cx = (addr.x + 0.5) / n;
  const cy = (addr.y + 0.5) / n;
  return (cx - view.centerX) ** 2 + (cy - view.centerY) ** 2;
}
