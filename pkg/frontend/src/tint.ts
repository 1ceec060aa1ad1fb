// Color assignments. Density tiles come down greyscale; the client colors
// them with an SVG color matrix whose alpha channel is the source luminance,
// so empty regions stay transparent and hot spots saturate.

export const LAYER_TINTS: Record<string, string> = {
  article: "#2979ff",
  author: "#e53935",
  lab: "#43a047",
  team: "#795548",
  word: "#8e24aa",
};

export const CLUSTER_LABEL_COLOR = "yellow";
export const ENTITY_LABEL_COLOR = "white";
export const NEIGHBOR_STROKE = "cyan";

export function entityTint(entityType: string): string {
  return LAYER_TINTS[entityType] ?? "#9e9e9e";
}

export function hexToRgb(hex: string): [number, number, number] {
  const m = /^#([0-9a-f]{6})$/i.exec(hex);
  if (!m) throw new Error(`bad color ${hex}`);
  const v = parseInt(m[1]!, 16);
  return [((v >> 16) & 255) / 255, ((v >> 8) & 255) / 255, (v & 255) / 255];
}

// feColorMatrix values: constant RGB = tint, alpha = luminance of the grey
export function tintMatrixValues(hex: string): string {
  const [r, g, b] = hexToRgb(hex);
  return [
    `0 0 0 0 ${r}`,
    `0 0 0 0 ${g}`,
    `0 0 0 0 ${b}`,
    "0.2126 0.7152 0.0722 0 0",
  ].join(" ");
}
