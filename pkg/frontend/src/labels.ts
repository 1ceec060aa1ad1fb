// Zoom-dependent labels: yellow cluster landmarks (centroid-anchored) and
// white entity labels with a colored corner wedge at the entity position.
// Density caps: 10 entity labels, 12 cluster labels; past the cap the
// lowest-scored go first.

import { ApiClient } from "./api";
import type { ClusterEntry, LabelEntry } from "./api";
import { svg } from "./dom";
import { CLUSTER_LABEL_COLOR, ENTITY_LABEL_COLOR, entityTint } from "./tint";
import { bboxParam, mapToScreen } from "./view";
import type { ViewState } from "./view";

export const MAX_ENTITY_LABELS = 10;
export const MAX_CLUSTER_LABELS = 12;

export class LabelsOverlay {
  private seq = 0;
  lastEntities: LabelEntry[] = [];
  lastClusters: ClusterEntry[] = [];

  constructor(
    private group: SVGElement,
    private api: ApiClient,
    private track: <T>(p: Promise<T>) => Promise<T>,
  ) {}

  render(view: ViewState): Promise<void> {
    const seq = ++this.seq;
    return this.track(
      (async () => {
        const bbox = bboxParam(view);
        const [entities, clusters] = await Promise.all([
          this.api.labels(bbox, view.zoom, MAX_ENTITY_LABELS),
          this.api.clusters(bbox, view.zoom),
        ]);
        if (seq !== this.seq) return; // a newer viewport superseded this one
        this.draw(view, entities, clusters.clusters);
      })().catch(() => {
        // label fetch failures leave the previous labels up
      }),
    );
  }

  private draw(view: ViewState, entities: LabelEntry[], clusters: ClusterEntry[]): void {
    // server ranks labels by score already; enforce the caps client-side too
    const ents = entities.slice(0, MAX_ENTITY_LABELS);
    const clus = [...clusters]
      .sort((a, b) => (b.coverage ?? 0) - (a.coverage ?? 0))
      .slice(0, MAX_CLUSTER_LABELS);
    this.lastEntities = ents;
    this.lastClusters = clus;

    this.group.replaceChildren();
    for (const c of clus) {
      const p = mapToScreen(view, c.x, c.y);
      const text = svg("text", {
        x: String(p.x),
        y: String(p.y),
        fill: CLUSTER_LABEL_COLOR,
        class: "cluster-label",
        "text-anchor": "middle",
        "data-cluster": String(c.cluster),
      });
      text.textContent = c.name.join(" / ");
      this.group.appendChild(text);
    }
    for (const e of ents) {
      const p = mapToScreen(view, e.x, e.y);
      const wedge = svg("path", {
        d: `M ${p.x} ${p.y} l 8 -10 l -8 -3 z`,
        fill: entityTint(e.type),
        class: "label-wedge",
        "data-entity": `${e.type}:${e.id}`,
      });
      const text = svg("text", {
        x: String(p.x + 10),
        y: String(p.y - 10),
        fill: ENTITY_LABEL_COLOR,
        class: "entity-label",
        "data-entity": `${e.type}:${e.id}`,
      });
      text.textContent = e.label;
      this.group.appendChild(wedge);
      this.group.appendChild(text);
    }
  }
}
