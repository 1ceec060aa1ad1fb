// Map/screen geometry. The map lives in the unit square; at zoom z the whole
// square is TILE * 2^z css pixels wide. Tiles are fetched at the nearest
// integer level and scaled for fractional zoom.

export const TILE = 256;

export interface ViewState {
  centerX: number;
  centerY: number;
  zoom: number;
  width: number;
  height: number;
  zmax: number;
}

export interface TileAddr {
  z: number;
  x: number;
  y: number;
}

export function tileKey(a: TileAddr): string {
  return `${a.z}/${a.x}/${a.y}`;
}

export function clampZoom(zoom: number, zmax: number): number {
  return Math.min(Math.max(zoom, 0), zmax);
}

// fractional zoom renders the nearest integer level scaled
export function tileLevel(view: ViewState): number {
  return Math.min(Math.max(Math.round(view.zoom), 0), view.zmax);
}

export function worldSize(view: ViewState): number {
  return TILE * 2 ** view.zoom;
}

export function mapToScreen(view: ViewState, mx: number, my: number): { x: number; y: number } {
  const w = worldSize(view);
  return {
    x: view.width / 2 + (mx - view.centerX) * w,
    y: view.height / 2 + (my - view.centerY) * w,
  };
}

export function screenToMap(view: ViewState, sx: number, sy: number): { x: number; y: number } {
  const w = worldSize(view);
  return {
    x: view.centerX + (sx - view.width / 2) / w,
    y: view.centerY + (sy - view.height / 2) / w,
  };
}

export interface Bounds {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export function visibleBounds(view: ViewState): Bounds {
  const tl = screenToMap(view, 0, 0);
  const br = screenToMap(view, view.width, view.height);
  return {
    x0: Math.max(0, tl.x),
    y0: Math.max(0, tl.y),
    x1: Math.min(1, br.x),
    y1: Math.min(1, br.y),
  };
}

// visible tile cover plus a fixed margin ring, clamped to the level grid
export function tileCover(view: ViewState, margin = 1): TileAddr[] {
  const z = tileLevel(view);
  const n = 1 << z;
  const tl = screenToMap(view, 0, 0);
  const br = screenToMap(view, view.width, view.height);
  const x0 = Math.max(0, Math.floor(tl.x * n) - margin);
  const y0 = Math.max(0, Math.floor(tl.y * n) - margin);
  // a point exactly on the far edge belongs to the last tile
  const x1 = Math.min(n - 1, Math.floor(Math.min(br.x * n, n - 1e-9)) + margin);
  const y1 = Math.min(n - 1, Math.floor(Math.min(br.y * n, n - 1e-9)) + margin);
  const tiles: TileAddr[] = [];
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      tiles.push({ z, x, y });
    }
  }
  return tiles;
}

// filtered tiles arrive nicest when the center renders first
export function centerOut(tiles: TileAddr[], view: ViewState): TileAddr[] {
  const scored = tiles.map((t) => {
    const n = 1 << t.z;
    const cx = (t.x + 0.5) / n;
    const cy = (t.y + 0.5) / n;
    const d = (cx - view.centerX) ** 2 + (cy - view.centerY) ** 2;
    return { t, d };
  });
  scored.sort((a, b) => a.d - b.d || a.t.y - b.t.y || a.t.x - b.t.x);
  return scored.map((s) => s.t);
}

export function bboxParam(view: ViewState): string {
  const b = visibleBounds(view);
  return `${b.x0},${b.y0},${b.x1},${b.y1}`;
}
