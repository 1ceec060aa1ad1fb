"""HTTP map server: tiles, filtered overlays, labels, search, render jobs.

The app is built around one immutable snapshot plus immutable indices;
the only mutable shared state is the bounded tile cache, the tone-map
scale cache, and the job table, each behind its own lock. Filtered tiles
are rendered on demand from compressed id sets and cached by
(canonical expression, layer, z, x, y).
"""

from __future__ import annotations

import itertools
import json
import os
import threading
import time
from collections import OrderedDict, deque
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Query, Response

from .facets import (
    FacetError,
    FacetIndex,
    TileIndex,
    canonical_filter,
    eval_filter,
    load_facet_index,
    load_tile_index,
    parse_filter,
)
from .idset import IdSet
from .raster import DEFAULT_SIGMA, png_bytes, render_tile_subset, subset_scale, tile_path
from .score_export import TYPE_ORDER, MapSnapshot, load_map

DEFAULT_ZOOM_BANDS = (1, 3, 5)
DEFAULT_CACHE_TILES = 512
DEFAULT_SCALE_CACHE = 256
SEARCH_CAP = 20
LABEL_GRID = 64
LAYERS_FILE = "layers.json"
SNAPSHOT_DIR = "snapshot"
INDEX_DIR = "index"


@dataclass
class ServerConfig:
    port: int = 8000
    cache_tiles: int = DEFAULT_CACHE_TILES
    workers: int | None = None  # render pool size; None = CPU count
    zoom_bands: tuple[int, ...] = DEFAULT_ZOOM_BANDS
    sigma: float = DEFAULT_SIGMA


@dataclass
class LayerInfo:
    name: str
    entity_type: str
    zmax: int
    sigma: float = DEFAULT_SIGMA


def zoom_to_level(zoom: float, bands: tuple[int, ...], n_levels: int) -> int:
    """Cluster level for a zoom: bands are per-level upper zoom bounds."""
    level = sum(zoom > b for b in bands)
    return min(level, max(n_levels - 1, 0))


class LRUCache:
    def __init__(self, capacity: int):
        self.capacity = capacity
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                self.hits += 1
                return self._data[key]
            self.misses += 1
            return None

    def put(self, key, value):
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.capacity:
                self._data.popitem(last=False)

    def __len__(self):
        with self._lock:
            return len(self._data)


class LabelIndex:
    """Per-type score ranking plus a coarse spatial grid for viewport queries."""

    def __init__(self, snap: MapSnapshot):
        xs, ys, scores, types, idxs = [], [], [], [], []
        for t_i, t in enumerate(TYPE_ORDER):
            if t not in snap.tables:
                continue
            tab = snap.tables[t]
            xs.append(tab.coords[:, 0])
            ys.append(tab.coords[:, 1])
            scores.append(tab.scores)
            types.append(np.full(tab.n, t_i, dtype=np.int8))
            idxs.append(np.arange(tab.n, dtype=np.int64))
        self.x = np.concatenate(xs)
        self.y = np.concatenate(ys)
        self.score = np.concatenate(scores)
        self.type_i = np.concatenate(types)
        self.idx = np.concatenate(idxs)
        cx = np.minimum((self.x * LABEL_GRID).astype(np.int64), LABEL_GRID - 1)
        cy = np.minimum((self.y * LABEL_GRID).astype(np.int64), LABEL_GRID - 1)
        cell = cy * LABEL_GRID + cx
        self._order = np.argsort(cell, kind="stable")
        sorted_cells = cell[self._order]
        self._cell_starts = np.searchsorted(sorted_cells, np.arange(LABEL_GRID * LABEL_GRID))
        self._cell_ends = np.searchsorted(
            sorted_cells, np.arange(LABEL_GRID * LABEL_GRID), side="right"
        )

    def query(
        self, bbox: tuple[float, float, float, float], type_ids: set[int], limit: int
    ) -> np.ndarray:
        """Row indices of the top-limit entities by (score desc, type, id)."""
        x0, y0, x1, y1 = bbox
        cx0 = max(0, min(int(x0 * LABEL_GRID), LABEL_GRID - 1))
        cx1 = max(0, min(int(x1 * LABEL_GRID), LABEL_GRID - 1))
        cy0 = max(0, min(int(y0 * LABEL_GRID), LABEL_GRID - 1))
        cy1 = max(0, min(int(y1 * LABEL_GRID), LABEL_GRID - 1))
        parts = []
        for cy in range(cy0, cy1 + 1):
            base = cy * LABEL_GRID
            s = self._cell_starts[base + cx0]
            e = self._cell_ends[base + cx1]
            if e > s:
                parts.append(self._order[s:e])
        if not parts:
            return np.empty(0, dtype=np.int64)
        cand = np.concatenate(parts)
        m = (
            (self.x[cand] >= x0)
            & (self.x[cand] <= x1)
            & (self.y[cand] >= y0)
            & (self.y[cand] <= y1)
        )
        cand = cand[m]
        if type_ids is not None:
            cand = cand[np.isin(self.type_i[cand], list(type_ids))]
        if cand.size == 0:
            return cand
        order = np.lexsort((self.idx[cand], self.type_i[cand], -self.score[cand]))
        return cand[order[:limit]]


@dataclass
class RenderJob:
    job_id: str
    layer: str
    expr: str
    tiles: list[tuple[int, int, int]]
    state: str = "queued"
    done: list[bool] = field(default_factory=list)
    rendered: int = 0
    skipped: int = 0
    cancel: threading.Event = field(default_factory=threading.Event)

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "layer": self.layer,
            "f": self.expr,
            "state": self.state,
            "tiles_total": len(self.tiles),
            "tiles_done": sum(self.done),
            "tiles_rendered": self.rendered,
            "done": list(self.done),
        }


class _State:
    def __init__(
        self,
        snapshot: MapSnapshot,
        facet_index: FacetIndex,
        tile_index: TileIndex,
        layers: list[LayerInfo],
        tile_bytes: Callable[[str, int, int, int], bytes | None],
        config: ServerConfig,
    ):
        self.snapshot = snapshot
        self.facet_index = facet_index
        self.tile_index = tile_index
        self.layers = {layer.name: layer for layer in layers}
        self.tile_bytes = tile_bytes
        self.config = config
        offsets = snapshot.offsets()
        parts = [snapshot.tables[t].coords for t in TYPE_ORDER if t in snapshot.tables]
        self.all_coords = np.concatenate(parts)
        self.type_range = {
            t: IdSet.from_array(
                np.arange(offsets[t], offsets[t] + snapshot.tables[t].n, dtype=np.uint32)
            )
            for t in snapshot.tables
        }
        self.labels = LabelIndex(snapshot)
        self.cache = LRUCache(config.cache_tiles)
        self.scale_cache = LRUCache(DEFAULT_SCALE_CACHE)
        self.render_ms: deque = deque(maxlen=10000)
        self.render_lock = threading.Lock()
        self.filtered_renders = 0
        self.jobs: dict[str, RenderJob] = {}
        self.jobs_lock = threading.Lock()
        self.job_counter = itertools.count(1)
        self.job_tiles_rendered = 0
        self.job_tiles_skipped = 0
        workers = config.workers or os.cpu_count() or 1
        self.executor = ThreadPoolExecutor(max_workers=workers)
        self.started = time.time()

    # -- filtered tile pipeline ----------------------------------------------

    def filter_ids(self, parsed: dict, layer: LayerInfo) -> IdSet:
        ids = eval_filter(parsed, self.facet_index)
        return ids & self.type_range[layer.entity_type]

    def level_scale(self, canon: str, layer: LayerInfo, z: int, ids: IdSet) -> float:
        key = (canon, layer.name, z)
        cached = self.scale_cache.get(key)
        if cached is not None:
            return cached
        scale = subset_scale(self.all_coords, ids, z, layer.sigma)
        self.scale_cache.put(key, scale)
        return scale

    def filtered_png(self, layer: LayerInfo, z: int, x: int, y: int, expr: str | None) -> bytes:
        parsed = parse_filter(expr)
        canon = canonical_filter(parsed)
        key = (canon, layer.name, z, x, y)
        cached = self.cache.get(key)
        if cached is not None:
            return cached
        t0 = time.perf_counter()
        ids = self.filter_ids(parsed, layer)
        scale = self.level_scale(canon, layer, z, ids)
        tile = render_tile_subset(self.all_coords, ids, z, x, y, layer.sigma, scale)
        png = png_bytes(tile)
        self.cache.put(key, png)
        with self.render_lock:
            self.render_ms.append((time.perf_counter() - t0) * 1000.0)
            self.filtered_renders += 1
        return png

    def run_job(self, job: RenderJob, layer: LayerInfo) -> None:
        def render_one(i: int, addr: tuple[int, int, int]):
            if job.cancel.is_set():
                with self.jobs_lock:
                    job.skipped += 1
                    self.job_tiles_skipped += 1
                return
            if job.state == "queued":
                job.state = "rendering"
            png = self.filtered_png(layer, *addr, job.expr)
            with self.jobs_lock:
                if job.cancel.is_set():
                    # rendered into the cache, but never emitted for this job
                    job.skipped += 1
                    self.job_tiles_skipped += 1
                    return
                job.done[i] = True
                job.rendered += 1
                self.job_tiles_rendered += 1
                _ = png
                if all(job.done):
                    job.state = "done"

        for i, addr in enumerate(job.tiles):
            self.executor.submit(render_one, i, addr)

    def shutdown(self):
        self.executor.shutdown(wait=False, cancel_futures=True)


def _parse_bbox(raw: str) -> tuple[float, float, float, float]:
    try:
        parts = [float(p) for p in raw.split(",")]
    except ValueError:
        parts = []
    if len(parts) != 4:
        raise HTTPException(400, f"malformed bbox {raw!r} (want x0,y0,x1,y1)")
    x0, y0, x1, y1 = parts
    if not (x0 < x1 and y0 < y1):
        raise HTTPException(400, f"malformed bbox {raw!r} (want x0<x1 and y0<y1)")
    return x0, y0, x1, y1


def _parse_types(raw: str, snap: MapSnapshot) -> set[int]:
    if not raw:
        return {i for i, t in enumerate(TYPE_ORDER) if t in snap.tables}
    out = set()
    for t in raw.split(","):
        t = t.strip()
        if t not in snap.tables:
            raise HTTPException(400, f"unknown entity type {t!r}")
        out.add(TYPE_ORDER.index(t))
    return out


def create_app(
    snapshot: MapSnapshot,
    facet_index: FacetIndex,
    tile_index: TileIndex,
    layers: list[LayerInfo],
    tile_bytes: Callable[[str, int, int, int], bytes | None] | None = None,
    config: ServerConfig | None = None,
) -> FastAPI:
    config = config or ServerConfig()
    state = _State(
        snapshot,
        facet_index,
        tile_index,
        layers,
        tile_bytes or (lambda *_: None),
        config,
    )

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        state.shutdown()

    app = FastAPI(title="cartomap server", lifespan=lifespan)
    app.state.cartomap = state
    snap = snapshot

    def _layer_or_404(name: str) -> LayerInfo:
        layer = state.layers.get(name)
        if layer is None:
            raise HTTPException(404, f"unknown layer {name!r}")
        return layer

    def _check_address(layer: LayerInfo, z: int, x: int, y: int):
        if not (0 <= z <= layer.zmax and 0 <= x < (1 << z) and 0 <= y < (1 << z)):
            raise HTTPException(404, f"tile z={z} x={x} y={y} outside pyramid")

    @app.get("/layers")
    def layers_catalog():
        return {
            "layers": [
                {
                    "name": layer.name,
                    "entity_type": layer.entity_type,
                    "zmax": layer.zmax,
                    "sigma": layer.sigma,
                }
                for layer in state.layers.values()
            ],
            "types": {t: snap.tables[t].n for t in TYPE_ORDER if t in snap.tables},
            "facets": {
                name: sorted(values) for name, values in state.facet_index.facets.items()
            },
            "levels": [
                {"level": lvl.level, "k": lvl.k} for lvl in snap.levels
            ],
            "zoom_bands": list(config.zoom_bands),
        }

    @app.get("/tiles/{layer}/{z}/{x}/{y}.png")
    def static_tile(layer: str, z: int, x: int, y: int):
        info = _layer_or_404(layer)
        _check_address(info, z, x, y)
        data = state.tile_bytes(layer, z, x, y)
        if data is None:
            raise HTTPException(404, f"tile z={z} x={x} y={y} not found")
        return Response(
            content=data,
            media_type="image/png",
            headers={"Cache-Control": "public, max-age=31536000, immutable"},
        )

    @app.get("/filtered/{layer}/{z}/{x}/{y}.png")
    def filtered_tile(layer: str, z: int, x: int, y: int, f: str = ""):
        info = _layer_or_404(layer)
        _check_address(info, z, x, y)
        try:
            data = state.filtered_png(info, z, x, y, f)
        except FacetError as exc:
            raise HTTPException(400, str(exc)) from exc
        return Response(content=data, media_type="image/png")

    @app.get("/labels")
    def labels(
        bbox: str,
        zoom: float = 0.0,
        types: str = "",
        limit: int = Query(default=10, ge=1),
    ):
        box = _parse_bbox(bbox)
        type_ids = _parse_types(types, snap)
        rows = state.labels.query(box, type_ids, limit)
        li = state.labels
        out = []
        for r in rows:
            t = TYPE_ORDER[li.type_i[r]]
            idx = int(li.idx[r])
            out.append(
                {
                    "type": t,
                    "id": idx,
                    "label": snap.tables[t].labels[idx],
                    "score": float(li.score[r]),
                    "x": float(li.x[r]),
                    "y": float(li.y[r]),
                }
            )
        return {"labels": out, "zoom": zoom}

    @app.get("/clusters")
    def clusters(bbox: str, zoom: float = 0.0):
        box = _parse_bbox(bbox)
        if not snap.levels:
            return {"level": None, "clusters": []}
        level_i = zoom_to_level(zoom, config.zoom_bands, len(snap.levels))
        lvl = snap.levels[level_i]
        x0, y0, x1, y1 = box
        out = []
        for c in range(lvl.k):
            cx, cy = float(lvl.centroids[c, 0]), float(lvl.centroids[c, 1])
            if x0 <= cx <= x1 and y0 <= cy <= y1:
                out.append(
                    {
                        "cluster": c,
                        "name": list(lvl.names[c]),
                        "x": cx,
                        "y": cy,
                        "coverage": float(lvl.coverage[c]) if lvl.coverage is not None else None,
                    }
                )
        return {"level": lvl.level, "k": lvl.k, "clusters": out}

    @app.get("/search")
    def search(q: str, type: str = "", limit: int = Query(default=SEARCH_CAP, ge=1)):
        q = q.strip()
        if len(q) < 2:
            raise HTTPException(400, "query must have at least 2 characters")
        needle = q.lower()
        wanted = _parse_types(type, snap)
        hits = []
        for t_i in sorted(wanted):
            t = TYPE_ORDER[t_i]
            tab = snap.tables[t]
            for idx, label in enumerate(tab.labels):
                if label.lower().startswith(needle):
                    hits.append(
                        (
                            -float(tab.scores[idx]),
                            t_i,
                            idx,
                            {
                                "type": t,
                                "id": idx,
                                "label": label,
                                "score": float(tab.scores[idx]),
                                "x": float(tab.coords[idx, 0]),
                                "y": float(tab.coords[idx, 1]),
                            },
                        )
                    )
        hits.sort(key=lambda h: h[:3])
        cap = min(limit, SEARCH_CAP)
        return {"matches": [h[3] for h in hits[:cap]]}

    @app.get("/entity/{entity_id}")
    def entity(entity_id: str):
        t, _, raw_idx = entity_id.partition(":")
        if t not in snap.tables or not raw_idx.isdigit():
            raise HTTPException(404, f"unknown entity id {entity_id!r}")
        idx = int(raw_idx)
        tab = snap.tables[t]
        if idx >= tab.n:
            raise HTTPException(404, f"unknown entity id {entity_id!r}")
        neighbors = {}
        for target, ids in tab.neighbors.items():
            ttab = snap.tables[target]
            dists = tab.neighbor_dists[target]
            neighbors[target] = [
                {
                    "id": int(ids[idx, j]),
                    "label": ttab.labels[int(ids[idx, j])],
                    "dist": float(dists[idx, j]),
                    "x": float(ttab.coords[int(ids[idx, j]), 0]),
                    "y": float(ttab.coords[int(ids[idx, j]), 1]),
                }
                for j in range(ids.shape[1])
            ]
        related = {}
        if t in snap.related and idx < len(snap.related[t]):
            related = snap.related[t][idx]
        return {
            "type": t,
            "id": idx,
            "label": tab.labels[idx],
            "score": float(tab.scores[idx]),
            "x": float(tab.coords[idx, 0]),
            "y": float(tab.coords[idx, 1]),
            "meta": tab.metadata[idx],
            "neighbors": neighbors,
            "related": related,
        }

    @app.post("/jobs", status_code=201)
    def create_job(payload: dict = Body(...)):
        layer = _layer_or_404(str(payload.get("layer", "")))
        expr = payload.get("f", "") or ""
        try:
            canonical_filter(expr)
        except FacetError as exc:
            raise HTTPException(400, str(exc)) from exc
        tiles_raw = payload.get("tiles")
        if not isinstance(tiles_raw, list) or not tiles_raw:
            raise HTTPException(400, "tiles must be a non-empty list of [z, x, y]")
        tiles = []
        for item in tiles_raw:
            if not (isinstance(item, list) and len(item) == 3):
                raise HTTPException(400, f"bad tile address {item!r}")
            z, x, y = (int(v) for v in item)
            if not (0 <= z <= layer.zmax and 0 <= x < (1 << z) and 0 <= y < (1 << z)):
                raise HTTPException(400, f"tile address {item!r} outside pyramid")
            tiles.append((z, x, y))
        with state.jobs_lock:
            job_id = f"job-{next(state.job_counter)}"
            job = RenderJob(
                job_id=job_id,
                layer=layer.name,
                expr=expr,
                tiles=tiles,
                done=[False] * len(tiles),
            )
            state.jobs[job_id] = job
        state.run_job(job, layer)
        return job.to_dict()

    @app.get("/jobs")
    def list_jobs():
        with state.jobs_lock:
            return {"jobs": [job.to_dict() for job in state.jobs.values()]}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id!r}")
        with state.jobs_lock:
            return job.to_dict()

    @app.delete("/jobs/{job_id}")
    def cancel_job(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id!r}")
        with state.jobs_lock:
            job.cancel.set()
            if job.state != "done":
                job.state = "cancelled"
            return job.to_dict()

    @app.get("/stats")
    def stats():
        with state.render_lock:
            times = list(state.render_ms)
            renders = state.filtered_renders
        summary = {}
        if times:
            arr = np.array(times)
            summary = {
                "count": len(times),
                "mean_ms": float(arr.mean()),
                "p50_ms": float(np.percentile(arr, 50)),
                "p99_ms": float(np.percentile(arr, 99)),
            }
        with state.jobs_lock:
            jobs = {
                "total": len(state.jobs),
                "cancelled": sum(1 for j in state.jobs.values() if j.state == "cancelled"),
                "tiles_rendered": state.job_tiles_rendered,
                "tiles_skipped": state.job_tiles_skipped,
            }
        return {
            "cache": {
                "hits": state.cache.hits,
                "misses": state.cache.misses,
                "size": len(state.cache),
                "capacity": state.cache.capacity,
            },
            "scale_cache": {
                "hits": state.scale_cache.hits,
                "misses": state.scale_cache.misses,
                "size": len(state.scale_cache),
            },
            "filtered_renders": renders,
            "render": summary,
            "jobs": jobs,
            "uptime_s": time.time() - state.started,
        }

    return app


def layer_catalog_path(map_dir: str | Path) -> Path:
    return Path(map_dir) / LAYERS_FILE


def create_app_from_dir(map_dir: str | Path, config: ServerConfig | None = None) -> FastAPI:
    """Serve a pipeline output directory: snapshot/, index/, layers/ + layers.json."""
    root = Path(map_dir)
    snapshot = load_map(root / SNAPSHOT_DIR)
    facet_index = load_facet_index(root / INDEX_DIR)
    tile_index = load_tile_index(root / INDEX_DIR)
    catalog = json.loads(layer_catalog_path(root).read_text(encoding="utf-8"))
    layers = [
        LayerInfo(
            name=item["name"],
            entity_type=item["entity_type"],
            zmax=item["zmax"],
            sigma=item.get("sigma", DEFAULT_SIGMA),
        )
        for item in catalog["layers"]
    ]

    def tile_bytes(layer: str, z: int, x: int, y: int) -> bytes | None:
        path = tile_path(root, layer, z, x, y)
        if not path.exists():
            return None
        return path.read_bytes()

    return create_app(snapshot, facet_index, tile_index, layers, tile_bytes, config)
