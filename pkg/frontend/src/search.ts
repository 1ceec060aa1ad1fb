// Prefix search with a suggestion list; picking a match recenters the map
// on the entity and selects it.

import { ApiClient } from "./api";
import type { SearchMatch } from "./api";
import { el } from "./dom";

export class SearchBox {
  readonly input: HTMLInputElement;
  readonly list: HTMLUListElement;
  matches: SearchMatch[] = [];
  private seq = 0;

  constructor(
    container: HTMLElement,
    private api: ApiClient,
    private onPick: (m: SearchMatch) => void,
    private track: <T>(p: Promise<T>) => Promise<T>,
  ) {
    this.input = el("input", { type: "search", placeholder: "search entities" }, "search-input");
    this.list = el("ul", {}, "search-suggestions") as HTMLUListElement;
    container.append(this.input, this.list);
    this.input.addEventListener("input", () => void this.query(this.input.value));
  }

  query(q: string): Promise<void> {
    const seq = ++this.seq;
    if (q.trim().length < 2) {
      this.matches = [];
      this.list.replaceChildren();
      return Promise.resolve();
    }
    return this.track(
      (async () => {
        const matches = await this.api.search(q.trim());
        if (seq !== this.seq) return;
        this.matches = matches;
        this.list.replaceChildren();
        for (const m of matches) {
          const li = el("li", { "data-entity": `${m.type}:${m.id}` });
          li.textContent = `${m.label} (${m.type})`;
          li.addEventListener("click", () => this.pick(m));
          this.list.appendChild(li);
        }
      })().catch(() => {
        // a failed lookup leaves the previous suggestions
      }),
    );
  }

  pick(m: SearchMatch): void {
    this.list.replaceChildren();
    this.input.value = m.label;
    this.onPick(m);
  }
}
