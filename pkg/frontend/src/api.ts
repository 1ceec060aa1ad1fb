// Typed client for the map server. The UI never computes map semantics:
// labels, clusters, neighbors and filter results all come from here.

import type { FetchLike } from "./net";
import type { TileAddr } from "./view";

export interface LayerInfo {
  name: string;
  entity_type: string;
  zmax: number;
  sigma: number;
  scales?: Record<string, number>;
}

export interface LabelEntry {
  type: string;
  id: number;
  label: string;
  score: number;
  x: number;
  y: number;
}

export interface ClusterEntry {
  cluster: number;
  name: string[];
  x: number;
  y: number;
  coverage: number | null;
}

export interface ClustersResponse {
  level: number | null;
  k?: number;
  clusters: ClusterEntry[];
}

export interface SearchMatch {
  type: string;
  id: number;
  label: string;
  score: number;
  x: number;
  y: number;
}

export interface NeighborEntry {
  id: number;
  label: string;
  dist: number;
  x: number;
  y: number;
}

export interface EntityDetail {
  type: string;
  id: number;
  label: string;
  score: number;
  x: number;
  y: number;
  meta: Record<string, unknown>;
  neighbors: Record<string, NeighborEntry[]>;
  related: Record<string, number[]>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = `${resp.status}`;
    try {
      const body = (await resp.json()) as { detail?: unknown };
      if (typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(
    readonly base: string,
    readonly fetchFn: FetchLike,
  ) {}

  private async get<T>(path: string): Promise<T> {
    return asJson<T>(await this.fetchFn(this.base + path));
  }

  async layers(): Promise<LayerInfo[]> {
    const body = await this.get<{ layers: LayerInfo[] }>("/layers");
    return body.layers;
  }

  async labels(bbox: string, zoom: number, limit: number, types = ""): Promise<LabelEntry[]> {
    const q = new URLSearchParams({ bbox, zoom: String(zoom), limit: String(limit) });
    if (types) q.set("types", types);
    const body = await this.get<{ labels: LabelEntry[] }>(`/labels?${q}`);
    return body.labels;
  }

  async clusters(bbox: string, zoom: number): Promise<ClustersResponse> {
    const q = new URLSearchParams({ bbox, zoom: String(zoom) });
    return this.get<ClustersResponse>(`/clusters?${q}`);
  }

  async search(query: string, type = ""): Promise<SearchMatch[]> {
    const q = new URLSearchParams({ q: query });
    if (type) q.set("type", type);
    const body = await this.get<{ matches: SearchMatch[] }>(`/search?${q}`);
    return body.matches;
  }

  async entity(id: string): Promise<EntityDetail> {
    return this.get<EntityDetail>(`/entity/${id}`);
  }

  tileUrl(layer: string, a: TileAddr): string {
    return `${this.base}/tiles/${layer}/${a.z}/${a.x}/${a.y}.png`;
  }

  filteredUrl(layer: string, a: TileAddr, expr: string): string {
    const q = new URLSearchParams({ f: expr });
    return `${this.base}/filtered/${layer}/${a.z}/${a.x}/${a.y}.png?${q}`;
  }
}

// png bytes -> data: url; avoids URL.createObjectURL and image loading,
// neither of which the test dom implements
const B64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

export function pngDataUrl(bytes: Uint8Array): string {
  let out = "";
  for (let i = 0; i < bytes.length; i += 3) {
    const a = bytes[i]!;
    const b = i + 1 < bytes.length ? bytes[i + 1]! : 0;
    const c = i + 2 < bytes.length ? bytes[i + 2]! : 0;
    out += B64[a >> 2]! + B64[((a & 3) << 4) | (b >> 4)]!;
    out += i + 1 < bytes.length ? B64[((b & 15) << 2) | (c >> 6)]! : "=";
    out += i + 2 < bytes.length ? B64[c & 63]! : "=";
  }
  return `data:image/png;base64,${out}`;
}
