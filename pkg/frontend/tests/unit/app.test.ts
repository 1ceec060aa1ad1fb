import { describe, expect, it } from "vitest";

import type { EntityDetail, SearchMatch } from "../../src/api";
import { MapApp } from "../../src/app";
import { TILE } from "../../src/view";
import { FakeServer, layerInfo } from "../helpers/fake";
import type { FakeOptions } from "../helpers/fake";

const MATCH: SearchMatch = { type: "article", id: 7, label: "transformer", score: 5, x: 0.9, y: 0.2 };

const DETAIL: EntityDetail = {
  type: "article",
  id: 7,
  label: "transformer",
  score: 5,
  x: 0.9,
  y: 0.2,
  meta: { year: 2017 },
  neighbors: { article: [{ id: 8, label: "close by", dist: 0.05, x: 0.88, y: 0.21 }] },
  related: {},
};

function boot(opts: FakeOptions = {}) {
  const fake = new FakeServer({
    layers: [layerInfo("articles", "article", 3), layerInfo("words", "word", 3)],
    matches: [MATCH],
    entities: { "article:7": DETAIL },
    ...opts,
  });
  const root = document.createElement("div");
  const app = new MapApp(root, "", { fetchFn: fake.fetchFn, width: 800, height: 600 });
  return { fake, root, app };
}

describe("MapApp", () => {
  it("boots at zoom 0 with exactly one tile request per layer", async () => {
    const { fake, root, app } = boot();
    await app.ready;
    await app.idle();

    expect(fake.log.filter((u) => u.includes("/layers"))).toHaveLength(1);
    expect(fake.tileRequests().sort()).toEqual([
      "/tiles/articles/0/0/0.png",
      "/tiles/words/0/0/0.png",
    ]);
    const groups = root.querySelectorAll("g.tile-layer");
    expect(groups).toHaveLength(2);
    expect(groups[0]!.getAttribute("filter")).toBe("url(#tint-article)");
    expect(groups[1]!.getAttribute("filter")).toBe("url(#tint-word)");
    expect(root.querySelector("filter#tint-article")).not.toBeNull();
    expect(root.querySelectorAll("image")).toHaveLength(2);
  });

  it("panning one tile width fetches exactly one new column per layer", async () => {
    const { fake, app } = boot();
    await app.ready;
    await app.idle();
    app.setView({ zoom: 3 });
    await app.idle();
    const before = fake.tileRequests().length;

    app.panBy(TILE, 0);
    await app.idle();
    const fresh = fake.tileRequests().slice(before);
    const byLayer = new Map<string, string[]>();
    for (const u of fresh) {
      const layer = u.split("/")[2]!;
      byLayer.set(layer, [...(byLayer.get(layer) ?? []), u]);
    }
    expect([...byLayer.keys()].sort()).toEqual(["articles", "words"]);
    for (const urls of byLayer.values()) {
      const xs = new Set(urls.map((u) => u.split("/")[4]));
      expect(xs.size).toBe(1);
      const ys = new Set(urls.map((u) => u.split("/")[5]));
      expect(ys.size).toBe(urls.length);
    }
  });

  it("applyFilter greys the base, composites the overlay, then clears cleanly", async () => {
    const { fake, root, app } = boot();
    await app.ready;
    await app.idle();

    app.applyFilter("year:2015");
    expect(app.baseGroup.getAttribute("opacity")).toBe("0.25");
    await app.idle();
    expect(root.querySelectorAll("image[data-filtered-tile]")).toHaveLength(2);
    expect(app.progressBar.style.display).toBe("none");
    for (const u of fake.filteredRequests()) expect(u).toContain("f=year%3A2015");

    app.clearFilter();
    expect(app.baseGroup.getAttribute("opacity")).toBeNull();
    expect(root.querySelectorAll("image[data-filtered-tile]")).toHaveLength(0);
  });

  it("toggling a layer off hides its tiles and drops it from filtered rendering", async () => {
    const { fake, root, app } = boot();
    await app.ready;
    await app.idle();

    app.toggleLayer("words", false);
    const wordsGroup = root.querySelector("g.tile-layer-words")!;
    expect(wordsGroup.getAttribute("display")).toBe("none");

    app.applyFilter("year:2015");
    await app.idle();
    const filtered = fake.filteredRequests();
    expect(filtered.length).toBeGreaterThan(0);
    for (const u of filtered) expect(u).toContain("/filtered/articles/");
  });

  it("picking a search match recenters the view and selects the entity", async () => {
    const { root, app } = boot();
    await app.ready;
    await app.idle();

    await app.search.query("tra");
    expect(root.querySelectorAll(".search-suggestions li")).toHaveLength(1);
    app.search.pick(MATCH);
    await app.idle();

    expect(app.view.centerX).toBe(0.9);
    expect(app.view.centerY).toBe(0.2);
    expect(root.querySelector(".detail-panel h3")!.textContent).toBe("transformer");
    expect(root.querySelectorAll("circle.neighbor-dot")).toHaveLength(1);

    app.clearSelection();
    expect(root.querySelectorAll("circle")).toHaveLength(0);
  });

  it("zoom changes swap tile levels", async () => {
    const { fake, root, app } = boot();
    await app.ready;
    await app.idle();
    app.zoomBy(1);
    await app.idle();

    const z1 = fake.tileRequests().filter((u) => u.includes("/1/"));
    expect(z1.length).toBeGreaterThan(0);
    for (const img of root.querySelectorAll("image[data-tile]")) {
      expect(img.getAttribute("data-tile")!.startsWith("1/")).toBe(true);
    }
  });
});
