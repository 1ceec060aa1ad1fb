// End-to-end checks against a real map server built by the pipeline.
// The app runs in the test dom with network over plain node http.

import { beforeEach, describe, expect, inject, it } from "vitest";

import { MapApp } from "../../src/app";
import { nodeFetch } from "../helpers/nodefetch";

const BASE = inject("serverUrl");

function boot(width = 600, height = 400): { app: MapApp; root: HTMLElement } {
  const root = document.createElement("div");
  const app = new MapApp(root, BASE, { fetchFn: nodeFetch(), width, height });
  return { app, root };
}

async function firstArticle(app: MapApp) {
  const labels = await app.api.labels("0,0,1,1", 0, 10, "article");
  const article = labels.find((l) => l.type === "article");
  expect(article).toBeDefined();
  return article!;
}

describe("webui against a live server", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("boots at zoom 0 with exactly one tile request per layer, all drawn", async () => {
    const { app, root } = boot();
    await app.ready;
    await app.idle();

    expect(app.layers.length).toBeGreaterThanOrEqual(2);
    const tileUrls = app.queue.urls.filter((u) => u.includes("/tiles/"));
    expect(tileUrls).toHaveLength(app.layers.length);
    for (const layer of app.layers) {
      const mine = tileUrls.filter((u) => u.includes(`/tiles/${layer.name}/`));
      expect(mine).toEqual([`${BASE}/tiles/${layer.name}/0/0/0.png`]);
    }
    const images = root.querySelectorAll("image[data-tile]");
    expect(images).toHaveLength(app.layers.length);
    for (const img of images) {
      expect(img.getAttribute("href")).toMatch(/^data:image\/png;base64,/);
    }
  });

  it("requests exactly the visible cover plus margin at the deepest level", async () => {
    const { app } = boot();
    await app.ready;
    await app.idle();
    const zmax = Math.max(...app.layers.map((l) => l.zmax));
    app.setView({ zoom: zmax });
    await app.idle();

    // 600x400 at zoom 2 covers the whole 4x4 grid once margins clamp
    for (const layer of app.layers) {
      const mine = app.queue.urls.filter((u) => u.includes(`/tiles/${layer.name}/${zmax}/`));
      expect(new Set(mine).size).toBe(mine.length);
      expect(mine).toHaveLength((1 << zmax) * (1 << zmax));
    }
  });

  it("applies a filter with a progress bar and composites the overlay", async () => {
    const { app, root } = boot();
    await app.ready;
    await app.idle();

    const article = await firstArticle(app);
    const detail = await app.api.entity(`article:${article.id}`);
    const year = detail.meta["year"];
    expect(year).toBeDefined();

    app.applyFilter(`year:${year}`);
    expect(app.progressBar.style.display).toBe("block");
    expect(app.baseGroup.getAttribute("opacity")).toBe("0.25");
    await app.idle();

    expect(app.progressBar.style.display).toBe("none");
    expect(app.overlay.error).toBeNull();
    const overlayTiles = root.querySelectorAll("image[data-filtered-tile]");
    expect(overlayTiles).toHaveLength(app.layers.length);
    for (const img of overlayTiles) {
      expect(img.getAttribute("href")).toMatch(/^data:image\/png;base64,/);
    }

    app.clearFilter();
    expect(app.baseGroup.getAttribute("opacity")).toBeNull();
    expect(root.querySelectorAll("image[data-filtered-tile]")).toHaveLength(0);
  });

  it("reports an unknown facet inline instead of crashing", async () => {
    const { app } = boot();
    await app.ready;
    await app.idle();

    app.applyFilter("nosuchfacet:1");
    await app.idle();
    expect(app.overlay.error).toBeTruthy();
    expect(app.progressBar.style.display).toBe("none");
  });

  it("selects an entity: panel metadata plus at most 10 cyan dots per type", async () => {
    const { app, root } = boot();
    await app.ready;
    await app.idle();

    const article = await firstArticle(app);
    await app.select(`article:${article.id}`);

    expect(root.querySelector(".detail-panel h3")!.textContent).toBe(article.label);
    const dots = root.querySelectorAll("circle.neighbor-dot");
    expect(dots.length).toBeGreaterThan(0);
    const byType = new Map<string, number>();
    for (const dot of dots) {
      expect(dot.getAttribute("stroke")).toBe("cyan");
      const t = dot.getAttribute("data-entity")!.split(":")[0]!;
      byType.set(t, (byType.get(t) ?? 0) + 1);
    }
    for (const count of byType.values()) {
      expect(count).toBeLessThanOrEqual(10);
    }

    app.clearSelection();
    expect(root.querySelectorAll("circle")).toHaveLength(0);
  });

  it("search suggests prefix matches and picking one recenters the view", async () => {
    const { app, root } = boot();
    await app.ready;
    await app.idle();

    const article = await firstArticle(app);
    const prefix = article.label.slice(0, 3);
    await app.search.query(prefix);
    expect(app.search.matches.length).toBeGreaterThan(0);
    const match = app.search.matches[0]!;

    app.search.pick(match);
    await app.idle();
    expect(app.view.centerX).toBeCloseTo(match.x, 12);
    expect(app.view.centerY).toBeCloseTo(match.y, 12);
    expect(root.querySelector(".detail-panel h3")!.textContent).toBe(match.label);
  });

  it("renders viewport labels from the server", async () => {
    const { app, root } = boot();
    await app.ready;
    await app.idle();

    const clusterTexts = root.querySelectorAll("text.cluster-label");
    expect(clusterTexts.length).toBeGreaterThan(0);
    expect(clusterTexts.length).toBeLessThanOrEqual(12);
    const entityTexts = root.querySelectorAll("text.entity-label");
    expect(entityTexts.length).toBeGreaterThan(0);
    expect(entityTexts.length).toBeLessThanOrEqual(10);
  });
});
