// @vitest-environment happy-dom
import { describe, expect, it } from "vitest";

import type { ClusterEntry, LabelEntry } from "../../src/api";
import { ApiClient } from "../../src/api";
import { svg } from "../../src/dom";
import { LabelsOverlay, MAX_CLUSTER_LABELS, MAX_ENTITY_LABELS } from "../../src/labels";
import { FakeServer, makeView } from "../helpers/fake";

function entityRows(n: number): LabelEntry[] {
  return Array.from({ length: n }, (_, i) => ({
    type: i % 2 ? "author" : "article",
    id: i,
    label: `entity ${i}`,
    score: n - i,
    x: 0.1 + (0.8 * i) / n,
    y: 0.5,
  }));
}

function clusterRows(n: number): ClusterEntry[] {
  return Array.from({ length: n }, (_, i) => ({
    cluster: i,
    name: [`topic${i}`],
    x: 0.5,
    y: 0.1 + (0.8 * i) / n,
    coverage: (i + 1) / n,
  }));
}

function setup(labels: LabelEntry[], clusters: ClusterEntry[]) {
  const fake = new FakeServer({ labels, clusters });
  const group = svg("g");
  const overlay = new LabelsOverlay(group, new ApiClient("", fake.fetchFn), (p) => p);
  return { fake, group, overlay };
}

describe("LabelsOverlay", () => {
  it("caps entity labels at 10 and cluster labels at 12, dropping low scores", async () => {
    const { group, overlay } = setup(entityRows(15), clusterRows(30));
    await overlay.render(makeView());

    const entityTexts = group.querySelectorAll("text.entity-label");
    expect(entityTexts).toHaveLength(MAX_ENTITY_LABELS);
    expect(group.querySelectorAll("path.label-wedge")).toHaveLength(MAX_ENTITY_LABELS);

    const clusterTexts = group.querySelectorAll("text.cluster-label");
    expect(clusterTexts).toHaveLength(MAX_CLUSTER_LABELS);
    // the survivors are the 12 highest-coverage clusters: 18..29
    const kept = [...clusterTexts].map((t) => Number(t.getAttribute("data-cluster")));
    expect(Math.min(...kept)).toBe(18);
  });

  it("renders cluster labels yellow and entity labels white with a tinted wedge", async () => {
    const { group, overlay } = setup(entityRows(2), clusterRows(1));
    await overlay.render(makeView());

    const cluster = group.querySelector("text.cluster-label")!;
    expect(cluster.getAttribute("fill")).toBe("yellow");
    expect(cluster.textContent).toBe("topic0");

    const entity = group.querySelector("text.entity-label")!;
    expect(entity.getAttribute("fill")).toBe("white");
    const wedge = group.querySelector("path.label-wedge")!;
    expect(wedge.getAttribute("fill")).toBe("#2979ff");
    expect(wedge.getAttribute("data-entity")).toBe("article:0");
  });

  it("keeps the previous labels when a refresh fails", async () => {
    const { group, overlay } = setup(entityRows(3), clusterRows(2));
    await overlay.render(makeView());
    expect(group.querySelectorAll("text")).toHaveLength(5);

    const broken = new LabelsOverlay(
      group,
      new ApiClient("", () => Promise.reject(new Error("network down"))),
      (p) => p,
    );
    await broken.render(makeView());
    expect(group.querySelectorAll("text")).toHaveLength(5);
  });
});
