"""Pipeline stages over one output directory, with manifests and skip logic.

Every stage reads its predecessors' artifacts from the output directory,
writes its own artifacts plus a JSON manifest (input hashes, params,
output hashes, timing), and is skipped on rerun when the recorded hashes
and params still match. All artifact formats are deterministic, so a
rerun with identical inputs reproduces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
import yaml

from .corpus import (
    CorpusRecord,
    EntityCatalog,
    RECORD_FIELDS,
    build_catalog,
    load_corpus,
)
from .embed import (
    LatentEmbedding,
    embed_aggregates,
    embed_articles,
    embed_terms,
    fit_lsa,
    load_embedding,
    save_embedding,
)
from .facets import build_facet_index, build_tile_index, save_facet_index, save_tile_index
from .landmarks import ClusterLevel, build_levels
from .neighbors import knn_exact, knn_typed
from .project2d import (
    Projection2D,
    fit_layout,
    fuzzy_graph,
    layout_init,
    normalize_coords,
    transform,
)
from .raster import build_pyramid, write_pyramid
from .score_export import (
    EntityTable,
    MapSnapshot,
    TYPE_ORDER,
    export_map,
    load_map,
    score_entities,
)
from .stopwords import for_language
from .vectorize import Vocabulary, build_vocab, incidence_matrix, ngram_docs, tfidf_matrix

MANIFEST_DIR = "manifests"
SNAPSHOT_DIR = "snapshot"
INDEX_DIR = "index"
LAYERS_FILE = "layers.json"
# below this many targets an exact scan beats building a graph index
APPROX_MIN_TARGETS = 4096

STAGE_ORDER = (
    "ingest",
    "vectorize",
    "embed",
    "knn",
    "project",
    "cluster",
    "export",
    "raster",
    "index",
)

# report labels for the run-all timing table
STAGE_LABELS = {
    "vectorize": "term extraction",
    "embed": "LSA",
    "knn": "nearest neighbors",
    "project": "projection",
    "cluster": "clustering",
}


class PipelineError(Exception):
    """User-facing pipeline problem: bad config or missing artifacts."""


@dataclass
class PipelineConfig:
    input_csv: str | None = None
    mapping: dict[str, str] | None = None  # record field -> CSV column; None = identity
    out_dir: str = "map_out"
    language: str = "en"
    m_min: int = 25
    n_max: int = 5
    v_cap: int = 64_000
    min_docs: int = 3
    d: int = 300
    seed: int = 0
    k: int = 10
    approx_knn: bool = True
    epochs: int = 200
    subset_fraction: float = 1.0
    min_dist: float = 0.1
    spread: float = 1.0
    learning_rate: float = 1.0
    refine_epochs: int = 30
    ks: tuple[int, ...] = (8, 24, 72, 216)
    zmax: int = 4
    sigma: float = 1.5
    layers: tuple[str, ...] = ("article", "author")
    facets: tuple[str, ...] = ("lab", "year", "type")
    port: int = 8000
    cache_tiles: int = 512
    workers: int | None = None
    zoom_bands: tuple[int, ...] = (1, 3, 5)

    def resolved_mapping(self) -> dict[str, str]:
        return dict(self.mapping) if self.mapping else {f: f for f in RECORD_FIELDS}


_TUPLE_FIELDS = {"ks", "layers", "facets", "zoom_bands"}


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Config from an optional YAML file plus overrides (override wins)."""
    valid = {f.name for f in fields(PipelineConfig)}
    data: dict = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise PipelineError(f"config file {path} must hold a key-value mapping")
        data.update(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    unknown = sorted(set(data) - valid)
    if unknown:
        raise PipelineError(f"unknown config keys: {', '.join(unknown)}")
    for name in _TUPLE_FIELDS & set(data):
        value = data[name]
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        try:
            data[name] = tuple(int(v) for v in value) if name in ("ks", "zoom_bands") else tuple(value)
        except (TypeError, ValueError) as exc:
            raise PipelineError(f"config key {name} must be a list: {exc}") from exc
    try:
        return PipelineConfig(**data)
    except TypeError as exc:
        raise PipelineError(f"bad config: {exc}") from exc


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_sha256(path: Path) -> str:
    """Hash of a directory: file names and contents, order-independent."""
    h = hashlib.sha256()
    for p in sorted(path.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(path)).encode())
            h.update(file_sha256(p).encode())
    return h.hexdigest()


def _hash_any(path: Path) -> str:
    return tree_sha256(path) if path.is_dir() else file_sha256(path)


@dataclass
class StageResult:
    stage: str
    skipped: bool
    elapsed_s: float


def _json_write(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )


def _json_read(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def _save_csr(out: Path, stem: str, mat: sp.csr_matrix) -> None:
    np.save(out / f"{stem}.data.npy", mat.data)
    np.save(out / f"{stem}.indices.npy", mat.indices)
    np.save(out / f"{stem}.indptr.npy", mat.indptr)


def _load_csr(out: Path, stem: str, shape: tuple[int, int]) -> sp.csr_matrix:
    return sp.csr_matrix(
        (
            np.load(out / f"{stem}.data.npy"),
            np.load(out / f"{stem}.indices.npy"),
            np.load(out / f"{stem}.indptr.npy"),
        ),
        shape=tuple(shape),
    )


def _load_vocab_tsv(path: Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    terms: list[str] = []
    df: list[int] = []
    total: list[int] = []
    with path.open("r", encoding="utf-8") as fh:
        next(fh)  # header
        for line in fh:
            term, d, t = line.rstrip("\n").split("\t")
            terms.append(term)
            df.append(int(d))
            total.append(int(t))
    return terms, np.array(df, dtype=np.int64), np.array(total, dtype=np.int64)


def layer_name(entity_type: str) -> str:
    return entity_type + "s"


class Pipeline:
    """Stage runner bound to one config and its output directory."""

    def __init__(self, config: PipelineConfig):
        self.cfg = config
        self.out = Path(config.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)

    # ---- manifest bookkeeping -----------------------------------------

    def _manifest_path(self, stage: str) -> Path:
        return self.out / MANIFEST_DIR / f"{stage}.json"

    # producers of every artifact a stage may ask for, for error messages
    _PRODUCERS = {
        "corpus.jsonl": "ingest",
        "catalog.json": "ingest",
        "vocab.tsv": "vectorize",
        "vectorize.meta.json": "vectorize",
        "tfidf.data.npy": "vectorize",
        "tfidf.indices.npy": "vectorize",
        "tfidf.indptr.npy": "vectorize",
        "inc_author.data.npy": "vectorize",
        "inc_lab.data.npy": "vectorize",
        "model.meta.json": "embed",
        "emb_article.bin": "embed",
        "emb_word.bin": "embed",
        "emb_author.bin": "embed",
        "emb_lab.bin": "embed",
        "knn.meta.json": "knn",
        "projection.meta.json": "project",
        "coords_article.npy": "project",
        "coords_word.npy": "project",
        "coords_author.npy": "project",
        "coords_lab.npy": "project",
        "levels.json": "cluster",
        SNAPSHOT_DIR: "export",
        LAYERS_FILE: "raster",
        INDEX_DIR: "index",
    }

    def _require(self, *rels: str) -> list[Path]:
        paths = []
        for rel in rels:
            p = self.out / rel
            if not p.exists():
                producer = self._PRODUCERS.get(rel)
                hint = f"; run stage '{producer}' first" if producer else ""
                raise PipelineError(f"missing artifact {rel}{hint}")
            paths.append(p)
        return paths

    def _run(
        self,
        stage: str,
        inputs: list[Path],
        params: dict,
        outputs: list[str],
        fn: Callable[[], None],
    ) -> StageResult:
        input_hashes = {str(p): _hash_any(p) for p in inputs}
        manifest_path = self._manifest_path(stage)
        if manifest_path.exists():
            old = _json_read(manifest_path)
            if (
                old.get("inputs") == input_hashes
                and old.get("params") == params
                and all((self.out / rel).exists() for rel in outputs)
            ):
                return StageResult(stage, skipped=True, elapsed_s=0.0)
        t0 = time.perf_counter()
        fn()
        elapsed = time.perf_counter() - t0
        _json_write(
            manifest_path,
            {
                "stage": stage,
                "inputs": input_hashes,
                "params": params,
                "outputs": {rel: _hash_any(self.out / rel) for rel in outputs},
                "elapsed_s": round(elapsed, 3),
            },
        )
        return StageResult(stage, skipped=False, elapsed_s=elapsed)

    # ---- shared loaders ------------------------------------------------

    def _records(self) -> list[CorpusRecord]:
        (path,) = self._require("corpus.jsonl")
        records = []
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                row = json.loads(line)
                records.append(CorpusRecord(**row))
        return records

    def _catalog(self) -> EntityCatalog:
        (path,) = self._require("catalog.json")
        raw = _json_read(path)
        return EntityCatalog(**raw)

    def _tfidf(self) -> sp.csr_matrix:
        self._require("tfidf.data.npy", "vectorize.meta.json")
        meta = _json_read(self.out / "vectorize.meta.json")
        return _load_csr(self.out, "tfidf", meta["tfidf_shape"])

    def _embedding(self, entity_type: str) -> LatentEmbedding:
        (path,) = self._require(f"emb_{entity_type}.bin")
        emb, _ = load_embedding(path)
        return emb

    def _present_types(self) -> list[str]:
        meta = _json_read(self._require("model.meta.json")[0])
        return list(meta["types"])

    # ---- stages ----------------------------------------------------------

    def ingest(self) -> StageResult:
        cfg = self.cfg
        if not cfg.input_csv:
            raise PipelineError("no input_csv configured; pass --input or set it in the config")
        src = Path(cfg.input_csv)
        if not src.exists():
            raise PipelineError(f"input corpus {src} does not exist")
        mapping = cfg.resolved_mapping()

        def run():
            records = list(load_corpus(src, mapping))
            catalog = build_catalog(records, min_docs=cfg.min_docs)
            with (self.out / "corpus.jsonl").open("w", encoding="utf-8") as fh:
                for r in records:
                    fh.write(json.dumps(asdict(r), sort_keys=True, ensure_ascii=False) + "\n")
            _json_write(
                self.out / "catalog.json",
                {
                    "article_labels": catalog.article_labels,
                    "doc_ids": catalog.doc_ids,
                    "author_labels": catalog.author_labels,
                    "author_docs": catalog.author_docs,
                    "lab_labels": catalog.lab_labels,
                    "lab_docs": catalog.lab_docs,
                    "min_docs": catalog.min_docs,
                },
            )

        return self._run(
            "ingest",
            inputs=[src],
            params={"mapping": mapping, "min_docs": cfg.min_docs},
            outputs=["corpus.jsonl", "catalog.json"],
            fn=run,
        )

    def vectorize(self) -> StageResult:
        cfg = self.cfg
        inputs = self._require("corpus.jsonl", "catalog.json")
        params = {
            "language": cfg.language,
            "m_min": cfg.m_min,
            "n_max": cfg.n_max,
            "v_cap": cfg.v_cap,
        }

        def run():
            records = self._records()
            catalog = self._catalog()
            stop = for_language(cfg.language)
            docs = ngram_docs((r.text() for r in records), stop, n_max=cfg.n_max)
            vocab = build_vocab(docs, m_min=cfg.m_min, v_cap=cfg.v_cap, n_max=cfg.n_max)
            mat = tfidf_matrix(docs, vocab)
            vocab.dump_tsv(self.out / "vocab.tsv")
            _save_csr(self.out, "tfidf", mat)
            meta = {"tfidf_shape": list(mat.shape)}
            for t in ("author", "lab"):
                count = catalog.L_auth if t == "author" else catalog.L_lab
                if count > 0:
                    inc = incidence_matrix(catalog, t)
                    _save_csr(self.out, f"inc_{t}", inc)
                    meta[f"inc_{t}_shape"] = list(inc.shape)
                else:
                    meta[f"inc_{t}_shape"] = None
            _json_write(self.out / "vectorize.meta.json", meta)

        return self._run(
            "vectorize",
            inputs=inputs,
            params=params,
            outputs=["vocab.tsv", "tfidf.data.npy", "vectorize.meta.json"],
            fn=run,
        )

    def embed(self) -> StageResult:
        cfg = self.cfg
        inputs = self._require("tfidf.data.npy", "vectorize.meta.json")

        def run():
            mat = self._tfidf()
            meta = _json_read(self.out / "vectorize.meta.json")
            d_eff = min(cfg.d, min(mat.shape))
            model = fit_lsa(mat, d_eff, seed=cfg.seed)
            embs = {
                "article": embed_articles(model, mat),
                "word": embed_terms(model),
            }
            for t in ("author", "lab"):
                shape = meta.get(f"inc_{t}_shape")
                if shape:
                    inc = _load_csr(self.out, f"inc_{t}", shape)
                    embs[t] = embed_aggregates(inc, embs["article"], t)
            for t, emb in embs.items():
                save_embedding(emb, self.out / f"emb_{t}.bin", seed=cfg.seed)
            _json_write(
                self.out / "model.meta.json",
                {
                    "d": d_eff,
                    "d_configured": cfg.d,
                    "seed": cfg.seed,
                    "singular_values": [float(s) for s in model.singular_values],
                    "types": [t for t in TYPE_ORDER if t in embs],
                },
            )

        return self._run(
            "embed",
            inputs=inputs,
            params={"d": cfg.d, "seed": cfg.seed},
            outputs=["model.meta.json", "emb_article.bin", "emb_word.bin"],
            fn=run,
        )

    def knn(self) -> StageResult:
        cfg = self.cfg
        inputs = self._require("model.meta.json")

        def run():
            types = self._present_types()
            embs = {t: self._embedding(t) for t in types}
            meta: dict = {"k": cfg.k, "pairs": {}}
            for qt in types:
                for tt in types:
                    use_approx = cfg.approx_knn and embs[tt].n >= APPROX_MIN_TARGETS
                    nl = knn_typed(
                        embs[qt], embs[tt], k=cfg.k, approx=use_approx, seed=cfg.seed
                    )
                    np.save(self.out / f"knn_{qt}_{tt}.ids.npy", nl.ids)
                    np.save(self.out / f"knn_{qt}_{tt}.dists.npy", nl.dists)
                    meta["pairs"][f"{qt}_{tt}"] = {
                        "k": nl.k,
                        "method": "graph" if use_approx else "exact",
                    }
            _json_write(self.out / "knn.meta.json", meta)

        return self._run(
            "knn",
            inputs=inputs + [self.out / f"emb_{t}.bin" for t in self._present_types()],
            params={"k": cfg.k, "approx": cfg.approx_knn, "seed": cfg.seed},
            outputs=["knn.meta.json"],
            fn=run,
        )

    def project(self) -> StageResult:
        cfg = self.cfg
        inputs = self._require("model.meta.json", "knn.meta.json")

        def run():
            types = self._present_types()
            embs = {t: self._embedding(t) for t in types}
            art = embs["article"].matrix
            n = art.shape[0]
            rng = np.random.default_rng(cfg.seed)
            if cfg.subset_fraction < 1.0:
                n_fit = max(2, int(round(n * cfg.subset_fraction)))
                fit_idx = np.sort(rng.choice(n, size=n_fit, replace=False))
            else:
                fit_idx = np.arange(n)
            X_fit = np.ascontiguousarray(art[fit_idx])
            k_fit = min(cfg.k, X_fit.shape[0] - 1)

            if fit_idx.shape[0] == n:
                ids = np.load(self.out / "knn_article_article.ids.npy")
                dists = np.load(self.out / "knn_article_article.dists.npy")
            else:
                ids, dists = knn_exact(X_fit, k=k_fit, exclude_self=True)
            graph = fuzzy_graph(ids, dists)
            proj = fit_layout(
                graph,
                layout_init(X_fit),
                epochs=cfg.epochs,
                seed=cfg.seed,
                min_dist=cfg.min_dist,
                spread=cfg.spread,
                learning_rate=cfg.learning_rate,
            )

            def place(Q: np.ndarray) -> np.ndarray:
                t_ids, t_dists = knn_exact(X_fit, Q, k=min(cfg.k, X_fit.shape[0]))
                return transform(
                    proj,
                    t_ids,
                    t_dists,
                    refine_epochs=cfg.refine_epochs,
                    seed=cfg.seed,
                    min_dist=cfg.min_dist,
                    spread=cfg.spread,
                    learning_rate=cfg.learning_rate,
                )

            raw = {}
            art_coords = np.empty((n, 2), dtype=np.float64)
            art_coords[fit_idx] = proj.coords
            rest = np.setdiff1d(np.arange(n), fit_idx)
            if rest.size:
                art_coords[rest] = place(np.ascontiguousarray(art[rest]))
            raw["article"] = art_coords
            for t in types:
                if t != "article":
                    raw[t] = place(embs[t].matrix)

            stacked = np.concatenate([raw[t] for t in types])
            normed = normalize_coords(stacked)
            offset = 0
            for t in types:
                block = normed[offset : offset + raw[t].shape[0]]
                np.save(self.out / f"coords_{t}.npy", block)
                offset += raw[t].shape[0]
            np.save(self.out / "fit_ids.npy", fit_idx)
            _json_write(
                self.out / "projection.meta.json",
                {
                    "epochs": cfg.epochs,
                    "subset_fraction": cfg.subset_fraction,
                    "seed": cfg.seed,
                    "min_dist": cfg.min_dist,
                    "spread": cfg.spread,
                    "learning_rate": cfg.learning_rate,
                    "n_fit": int(fit_idx.shape[0]),
                    "types": types,
                },
            )

        return self._run(
            "project",
            inputs=inputs + [self.out / "emb_article.bin"],
            params={
                "epochs": cfg.epochs,
                "subset_fraction": cfg.subset_fraction,
                "seed": cfg.seed,
                "min_dist": cfg.min_dist,
                "spread": cfg.spread,
                "learning_rate": cfg.learning_rate,
                "refine_epochs": cfg.refine_epochs,
                "k": cfg.k,
            },
            outputs=["projection.meta.json", "coords_article.npy", "coords_word.npy"],
            fn=run,
        )

    def cluster(self) -> StageResult:
        cfg = self.cfg
        inputs = self._require("coords_article.npy", "coords_word.npy", "tfidf.data.npy", "vocab.tsv")

        def run():
            article_coords = np.load(self.out / "coords_article.npy")
            word_coords = np.load(self.out / "coords_word.npy")
            terms, df, _ = _load_vocab_tsv(self.out / "vocab.tsv")
            mat = self._tfidf()
            doc_terms = [
                set(mat.indices[mat.indptr[i] : mat.indptr[i + 1]].tolist())
                for i in range(mat.shape[0])
            ]
            ks = tuple(k for k in cfg.ks if k <= article_coords.shape[0])
            if not ks:
                raise PipelineError(
                    f"no usable cluster size: ks={cfg.ks} all exceed {article_coords.shape[0]} articles"
                )
            levels = build_levels(
                article_coords, word_coords, doc_terms, df, terms, ks=ks, seed=cfg.seed
            )
            payload = []
            for lvl in levels:
                np.save(self.out / f"level{lvl.level}.centroids.npy", lvl.centroids)
                np.save(self.out / f"level{lvl.level}.articles.npy", lvl.article_assignment)
                np.save(self.out / f"level{lvl.level}.words.npy", lvl.word_assignment)
                payload.append(
                    {
                        "level": lvl.level,
                        "k": lvl.k,
                        "names": [list(nm) for nm in lvl.names],
                        "coverage": [float(c) for c in lvl.coverage],
                    }
                )
            _json_write(self.out / "levels.json", payload)

        return self._run(
            "cluster",
            inputs=inputs,
            params={"ks": list(cfg.ks), "seed": cfg.seed},
            outputs=["levels.json"],
            fn=run,
        )

    def _load_levels(self) -> list[ClusterLevel]:
        (path,) = self._require("levels.json")
        out = []
        for row in _json_read(path):
            i = row["level"]
            out.append(
                ClusterLevel(
                    level=i,
                    k=row["k"],
                    centroids=np.load(self.out / f"level{i}.centroids.npy"),
                    article_assignment=np.load(self.out / f"level{i}.articles.npy"),
                    word_assignment=np.load(self.out / f"level{i}.words.npy"),
                    names=[tuple(nm) for nm in row["names"]],
                    coverage=np.array(row["coverage"], dtype=np.float64),
                )
            )
        return out

    def export(self) -> StageResult:
        inputs = self._require(
            "catalog.json", "corpus.jsonl", "vocab.tsv", "coords_article.npy",
            "knn.meta.json", "levels.json",
        )

        def run():
            catalog = self._catalog()
            records = self._records()
            terms, df, _ = _load_vocab_tsv(self.out / "vocab.tsv")
            types = self._present_types()
            views = np.array(
                [r.views_per_year if r.views_per_year is not None else np.nan for r in records],
                dtype=np.float64,
            )
            scores = score_entities(catalog, df, views)
            knn_meta = _json_read(self.out / "knn.meta.json")

            labels = {
                "article": catalog.article_labels,
                "word": terms,
                "author": catalog.author_labels,
                "lab": catalog.lab_labels,
            }
            metadata = {
                "article": [
                    {
                        "doc_id": r.doc_id,
                        "year": r.pub_year,
                        "domain": r.domain_tag,
                        "authors": r.authors,
                        "labs": r.labs,
                    }
                    for r in records
                ],
                "word": [{"df": int(v)} for v in df],
                "author": [{"articles": len(d)} for d in catalog.author_docs],
                "lab": [{"articles": len(d)} for d in catalog.lab_docs],
            }

            tables = {}
            for t in types:
                neighbors = {}
                neighbor_dists = {}
                for tt in types:
                    key = f"{t}_{tt}"
                    if key in knn_meta["pairs"]:
                        neighbors[tt] = np.load(self.out / f"knn_{t}_{tt}.ids.npy")
                        neighbor_dists[tt] = np.load(self.out / f"knn_{t}_{tt}.dists.npy")
                tables[t] = EntityTable(
                    entity_type=t,
                    labels=labels[t],
                    scores=scores[t],
                    coords=np.load(self.out / f"coords_{t}.npy"),
                    neighbors=neighbors,
                    neighbor_dists=neighbor_dists,
                    metadata=metadata[t],
                )

            # lab -> member articles and the authors that appear on them
            author_doc_sets = [set(d) for d in catalog.author_docs]
            related_labs = []
            for docs in catalog.lab_docs:
                doc_set = set(docs)
                authors = sorted(
                    j for j, adocs in enumerate(author_doc_sets) if doc_set & adocs
                )
                related_labs.append({"article": sorted(doc_set), "author": authors})
            related = {"lab": related_labs} if "lab" in types else {}

            snap = MapSnapshot(tables=tables, levels=self._load_levels(), related=related)
            export_map(snap, self.out / SNAPSHOT_DIR)

        return self._run(
            "export",
            inputs=inputs,
            params={},
            outputs=[SNAPSHOT_DIR],
            fn=run,
        )

    def raster(self) -> StageResult:
        cfg = self.cfg
        inputs = self._require(SNAPSHOT_DIR)

        def run():
            snap = load_map(self.out / SNAPSHOT_DIR)
            catalog_rows = []
            for t in cfg.layers:
                if t not in snap.tables:
                    raise PipelineError(f"layer type {t!r} not present in snapshot")
                name = layer_name(t)
                pyramid = build_pyramid(
                    snap.tables[t].coords, zmax=cfg.zmax, sigma=cfg.sigma, layer=name
                )
                write_pyramid(pyramid, self.out)
                catalog_rows.append(
                    {
                        "name": name,
                        "entity_type": t,
                        "zmax": cfg.zmax,
                        "sigma": cfg.sigma,
                        "scales": {str(z): pyramid.scales[z] for z in sorted(pyramid.scales)},
                    }
                )
            _json_write(self.out / LAYERS_FILE, {"layers": catalog_rows})

        return self._run(
            "raster",
            inputs=inputs,
            params={"zmax": cfg.zmax, "sigma": cfg.sigma, "layers": list(cfg.layers)},
            outputs=[LAYERS_FILE],
            fn=run,
        )

    def index(self) -> StageResult:
        cfg = self.cfg
        inputs = self._require(SNAPSHOT_DIR)

        def run():
            snap = load_map(self.out / SNAPSHOT_DIR)
            facets = tuple(f for f in cfg.facets if f != "lab" or "lab" in snap.tables)
            findex = build_facet_index(snap, facets)
            tindex = build_tile_index(snap, cfg.zmax)
            save_facet_index(findex, self.out / INDEX_DIR)
            save_tile_index(tindex, self.out / INDEX_DIR)

        return self._run(
            "index",
            inputs=inputs,
            params={"facets": list(cfg.facets), "zmax": cfg.zmax},
            outputs=[INDEX_DIR],
            fn=run,
        )

    # ---- orchestration ---------------------------------------------------

    def run_all(self) -> list[StageResult]:
        return [getattr(self, stage)() for stage in STAGE_ORDER]


def timing_table(results: list[StageResult]) -> str:
    rows = []
    for r in results:
        label = STAGE_LABELS.get(r.stage, r.stage)
        status = "skipped" if r.skipped else "ran"
        rows.append((label, r.elapsed_s, status))
    width = max(len(r[0]) for r in rows + [("total", 0, "")])
    lines = [f"{'stage':<{width}}  {'seconds':>8}  status"]
    for label, secs, status in rows:
        lines.append(f"{label:<{width}}  {secs:>8.2f}  {status}")
    total = sum(r.elapsed_s for r in results)
    lines.append(f"{'total':<{width}}  {total:>8.2f}")
    return "\n".join(lines)
