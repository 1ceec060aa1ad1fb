"""Shared fixtures: synthetic corpora, snapshots, and one built map directory."""

from __future__ import annotations

import numpy as np
import pytest

from cartomap.corpus import synth_corpus, write_corpus_csv
from cartomap.landmarks import ClusterLevel
from cartomap.pipeline import Pipeline, PipelineConfig
from cartomap.score_export import EntityTable, MapSnapshot, validate_snapshot


def make_snapshot(
    n_articles: int = 40,
    n_words: int = 20,
    n_authors: int = 8,
    n_labs: int = 3,
    seed: int = 0,
    k: int = 3,
    with_level: bool = True,
) -> MapSnapshot:
    """A structurally valid random snapshot for index/server tests."""
    rng = np.random.default_rng(seed)
    counts = {"article": n_articles, "word": n_words, "author": n_authors, "lab": n_labs}
    tables = {}
    for t, n in counts.items():
        if n == 0:
            continue
        coords = rng.random((n, 2))
        scores = np.round(rng.random(n) * 100, 1)
        k_eff = min(k, counts["article"])
        nbr = np.sort(rng.integers(0, counts["article"], size=(n, k_eff)), axis=1)
        dists = np.sort(rng.random((n, k_eff)), axis=1)
        meta: list[dict] = [{} for _ in range(n)]
        if t == "article":
            years = rng.integers(2015, 2021, size=n)
            meta = [{"year": int(y), "domain": f"dom{int(y) % 2}"} for y in years]
        tables[t] = EntityTable(
            entity_type=t,
            labels=[f"{t}-{i}" for i in range(n)],
            scores=scores,
            coords=coords,
            neighbors={"article": nbr},
            neighbor_dists={"article": dists},
            metadata=meta,
        )
    levels = []
    if with_level and n_articles >= 2:
        k_lvl = 2
        centroids = rng.random((k_lvl, 2))
        levels = [
            ClusterLevel(
                level=0,
                k=k_lvl,
                centroids=centroids,
                article_assignment=rng.integers(0, k_lvl, size=n_articles),
                word_assignment=rng.integers(0, k_lvl, size=n_words),
                names=[("alpha",), ("beta", "gamma")],
                coverage=np.array([0.8, 0.4]),
            )
        ]
    related = {}
    if n_labs:
        related["lab"] = []
        for _ in range(n_labs):
            arts = sorted(set(rng.integers(0, n_articles, size=3).tolist()))
            auths = sorted(set(rng.integers(0, n_authors, size=2).tolist())) if n_authors else []
            related["lab"].append({"article": arts, "author": auths})
    snap = MapSnapshot(tables=tables, levels=levels, related=related)
    validate_snapshot(snap)
    return snap


@pytest.fixture(scope="session")
def built_map(tmp_path_factory):
    """One small corpus run through every pipeline stage; reused read-only."""
    root = tmp_path_factory.mktemp("builtmap")
    records, truth = synth_corpus(3, 60, 30, 40, seed=7)
    write_corpus_csv(records, root / "corpus.csv")
    cfg = PipelineConfig(
        input_csv=str(root / "corpus.csv"),
        out_dir=str(root / "map"),
        m_min=5,
        min_docs=3,
        d=32,
        k=5,
        epochs=60,
        ks=(3, 6),
        zmax=2,
        seed=7,
    )
    pipeline = Pipeline(cfg)
    pipeline.run_all()
    return {"dir": root / "map", "cfg": cfg, "truth": truth, "records": records}
