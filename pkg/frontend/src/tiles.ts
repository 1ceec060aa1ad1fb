// Base density tiles for one layer: fetch the visible cover plus margin,
// tint through the layer's color filter, keep what is already drawn, retry
// failures with backoff (the stale image stays up while retrying).

import { ApiClient, pngDataUrl } from "./api";
import type { LayerInfo } from "./api";
import { FetchQueue, delay, isAbort } from "./net";
import { svg } from "./dom";
import { TILE, tileCover, tileKey, tileLevel, worldSize } from "./view";
import type { TileAddr, ViewState } from "./view";

interface TileEntry {
  addr: TileAddr;
  image?: SVGElement;
  ctrl?: AbortController;
  state: "pending" | "ok" | "failed";
}

export class TileLayer {
  readonly group: SVGElement;
  visible = true;
  private tiles = new Map<string, TileEntry>();
  private level = -1;

  constructor(
    parent: SVGElement,
    readonly info: LayerInfo,
    private api: ApiClient,
    private queue: FetchQueue,
    private filterId: string,
    private retryDelays: number[],
    private track: <T>(p: Promise<T>) => Promise<T>,
  ) {
    this.group = svg("g", { class: `tile-layer tile-layer-${info.name}`, filter: `url(#${filterId})` });
    parent.appendChild(this.group);
  }

  setVisible(on: boolean, view: ViewState): void {
    this.visible = on;
    this.group.setAttribute("display", on ? "inline" : "none");
    if (on) this.render(view);
    else this.abandonPending();
  }

  render(view: ViewState): void {
    const z = Math.min(tileLevel(view), this.info.zmax);
    if (z !== this.level) {
      // level switch: drop the old grid outright
      this.abandonPending();
      this.tiles.clear();
      this.group.replaceChildren();
      this.level = z;
    }
    this.positionGroup(view, z);
    if (!this.visible) return;

    const cover = tileCover({ ...view, zmax: this.info.zmax });
    const wanted = new Set(cover.map(tileKey));
    for (const [key, entry] of this.tiles) {
      if (wanted.has(key)) continue;
      entry.ctrl?.abort();
      entry.image?.remove();
      this.tiles.delete(key);
    }
    for (const addr of cover) {
      if (!this.tiles.has(tileKey(addr))) this.fetchTile(addr);
    }
  }

  private positionGroup(view: ViewState, z: number): void {
    const scale = worldSize(view) / (TILE * (1 << z));
    const originX = view.width / 2 - view.centerX * worldSize(view);
    const originY = view.height / 2 - view.centerY * worldSize(view);
    this.group.setAttribute("transform", `translate(${originX} ${originY}) scale(${scale})`);
  }

  private fetchTile(addr: TileAddr): void {
    const entry: TileEntry = { addr, state: "pending", ctrl: new AbortController() };
    this.tiles.set(tileKey(addr), entry);
    void this.track(this.load(entry));
  }

  private async load(entry: TileEntry): Promise<void> {
    const url = this.api.tileUrl(this.info.name, entry.addr);
    for (let attempt = 0; ; attempt++) {
      try {
        const resp = await this.queue.request(url, { signal: entry.ctrl!.signal });
        if (!resp.ok) throw new Error(`tile ${resp.status}`);
        const bytes = new Uint8Array(await resp.arrayBuffer());
        this.place(entry, pngDataUrl(bytes));
        entry.state = "ok";
        return;
      } catch (err) {
        if (isAbort(err) || entry.ctrl!.signal.aborted) return;
        const wait = this.retryDelays[attempt];
        if (wait === undefined) {
          entry.state = "failed";
          return;
        }
        await delay(wait);
      }
    }
  }

  private place(entry: TileEntry, href: string): void {
    const { addr } = entry;
    if (!entry.image) {
      entry.image = svg("image", {
        x: String(addr.x * TILE),
        y: String(addr.y * TILE),
        width: String(TILE),
        height: String(TILE),
        "data-tile": tileKey(addr),
      });
      this.group.appendChild(entry.image);
    }
    entry.image.setAttribute("href", href);
  }

  private abandonPending(): void {
    for (const [key, entry] of this.tiles) {
      if (entry.state !== "pending") continue;
      entry.ctrl?.abort();
      entry.image?.remove();
      this.tiles.delete(key);
    }
  }
}
