// Entity selection: a detail panel fed by /entity, plus the neighbors drawn
// as dots with cyan borders at their map positions (at most 10 per type).

import { ApiClient, ApiError } from "./api";
import type { EntityDetail } from "./api";
import { el, svg } from "./dom";
import { NEIGHBOR_STROKE, entityTint } from "./tint";
import { mapToScreen } from "./view";
import type { ViewState } from "./view";

export const MAX_NEIGHBOR_DOTS = 10;

export class Selection {
  current: EntityDetail | null = null;

  constructor(
    private dotsGroup: SVGElement,
    private panel: HTMLElement,
    private api: ApiClient,
    private track: <T>(p: Promise<T>) => Promise<T>,
  ) {}

  async select(id: string, view: ViewState): Promise<void> {
    await this.track(
      (async () => {
        try {
          this.current = await this.api.entity(id);
        } catch (err) {
          if (err instanceof ApiError && err.status === 404) {
            this.current = null;
            this.dotsGroup.replaceChildren();
            this.panel.replaceChildren(el("p", {}, "notice"));
            this.panel.firstChild!.textContent = `${id}: not found`;
            return;
          }
          throw err;
        }
        this.renderPanel();
        this.renderDots(view);
      })(),
    );
  }

  clear(): void {
    this.current = null;
    this.dotsGroup.replaceChildren();
    this.panel.replaceChildren();
  }

  reposition(view: ViewState): void {
    if (this.current) this.renderDots(view);
  }

  private renderPanel(): void {
    const d = this.current!;
    this.panel.replaceChildren();
    const title = el("h3", {}, "entity-title");
    title.textContent = d.label;
    const kind = el("p", {}, "entity-kind");
    kind.textContent = `${d.type} #${d.id}, score ${d.score}`;
    this.panel.append(title, kind);

    const metaKeys = Object.keys(d.meta);
    if (metaKeys.length) {
      const dl = el("dl", {}, "entity-meta");
      for (const k of metaKeys) {
        const dt = el("dt");
        dt.textContent = k;
        const dd = el("dd");
        dd.textContent = String(d.meta[k]);
        dl.append(dt, dd);
      }
      this.panel.append(dl);
    }

    for (const [target, list] of Object.entries(d.neighbors)) {
      const h = el("h4");
      h.textContent = `nearest ${target}s`;
      const ul = el("ul", {}, `neighbors neighbors-${target}`);
      for (const n of list.slice(0, MAX_NEIGHBOR_DOTS)) {
        const li = el("li", { "data-entity": `${target}:${n.id}` });
        li.textContent = `${n.label} (${n.dist.toFixed(3)})`;
        ul.appendChild(li);
      }
      this.panel.append(h, ul);
    }
  }

  private renderDots(view: ViewState): void {
    const d = this.current!;
    this.dotsGroup.replaceChildren();
    const here = mapToScreen(view, d.x, d.y);
    this.dotsGroup.appendChild(
      svg("circle", {
        cx: String(here.x),
        cy: String(here.y),
        r: "6",
        fill: "none",
        stroke: ENTITY_SELECTED_STROKE,
        "stroke-width": "2",
        class: "selected-dot",
      }),
    );
    for (const [target, list] of Object.entries(d.neighbors)) {
      for (const n of list.slice(0, MAX_NEIGHBOR_DOTS)) {
        const p = mapToScreen(view, n.x, n.y);
        this.dotsGroup.appendChild(
          svg("circle", {
            cx: String(p.x),
            cy: String(p.y),
            r: "4",
            fill: entityTint(target),
            stroke: NEIGHBOR_STROKE,
            "stroke-width": "2",
            class: `neighbor-dot neighbor-dot-${target}`,
            "data-entity": `${target}:${n.id}`,
          }),
        );
      }
    }
  }
}

const ENTITY_SELECTED_STROKE = "white";
