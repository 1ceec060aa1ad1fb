"""Entity scores and the map snapshot file the server loads.

A snapshot is a directory: a JSON manifest (counts, structure, cluster
levels), line-delimited JSON entity records, a little-endian binary block
for coordinates, neighbor lists, and cluster assignments, and a JSON file
of related-entity id sets. Loading validates every invariant and names the
offending entity on failure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import EntityCatalog
from .landmarks import ClusterLevel

FORMAT_VERSION = "cartomap/1"
TYPE_ORDER = ("article", "word", "author", "lab")

MANIFEST_FILE = "manifest.json"
ENTITIES_FILE = "entities.jsonl"
GEOMETRY_FILE = "geometry.bin"
RELATED_FILE = "related.json"


class ExportError(Exception):
    pass


def score_entities(
    catalog: EntityCatalog,
    df: np.ndarray,
    views: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Importance scores per entity type.

    Articles score their views-per-year (1.0 where absent), words their
    containing-article count, authors and labs their article count.
    """
    if views is not None:
        views = np.asarray(views, dtype=np.float64)
        if np.any(views < 0):
            bad = int(np.argmin(views))
            raise ExportError(f"article {bad} has negative views value {views[bad]}")
        article_scores = np.where(np.isfinite(views), views, 1.0)
    else:
        article_scores = np.ones(catalog.T, dtype=np.float64)
    return {
        "article": article_scores,
        "word": np.asarray(df, dtype=np.float64),
        "author": np.array([len(d) for d in catalog.author_docs], dtype=np.float64),
        "lab": np.array([len(d) for d in catalog.lab_docs], dtype=np.float64),
    }


@dataclass
class EntityTable:
    entity_type: str
    labels: list[str]
    scores: np.ndarray  # n float64
    coords: np.ndarray  # n x 2 float64 in [0,1]
    neighbors: dict[str, np.ndarray] = field(default_factory=dict)  # target -> n x k int64
    neighbor_dists: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: list[dict] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.labels)


@dataclass
class MapSnapshot:
    tables: dict[str, EntityTable]
    levels: list[ClusterLevel] = field(default_factory=list)
    related: dict[str, list[dict[str, list[int]]]] = field(default_factory=dict)
    format_version: str = FORMAT_VERSION

    def counts(self) -> dict[str, int]:
        return {t: self.tables[t].n for t in TYPE_ORDER if t in self.tables}

    def offsets(self) -> dict[str, int]:
        """Start of each type's block in the shared dense id space."""
        out = {}
        base = 0
        for t in TYPE_ORDER:
            if t in self.tables:
                out[t] = base
                base += self.tables[t].n
        return out

    @property
    def total(self) -> int:
        return sum(tab.n for tab in self.tables.values())

    def global_id(self, entity_type: str, idx: int) -> int:
        return self.offsets()[entity_type] + idx

    def resolve(self, gid: int) -> tuple[str, int]:
        offsets = self.offsets()
        for t in reversed([t for t in TYPE_ORDER if t in self.tables]):
            if gid >= offsets[t]:
                idx = gid - offsets[t]
                if idx >= self.tables[t].n:
                    break
                return t, idx
        raise ExportError(f"global id {gid} out of range")


def validate_snapshot(snap: MapSnapshot) -> None:
    if snap.format_version != FORMAT_VERSION:
        raise ExportError(
            f"unsupported format_version {snap.format_version!r}, expected {FORMAT_VERSION!r}"
        )
    if snap.total == 0:
        raise ExportError("empty snapshot")
    counts = snap.counts()
    for t, tab in snap.tables.items():
        n = tab.n
        if tab.scores.shape != (n,) or tab.coords.shape != (n, 2):
            raise ExportError(f"{t}: table arrays do not match label count {n}")
        if len(tab.metadata) != n:
            raise ExportError(f"{t}: metadata rows do not match label count {n}")
        if not np.all(np.isfinite(tab.scores)):
            bad = int(np.flatnonzero(~np.isfinite(tab.scores))[0])
            raise ExportError(f"{t} {bad}: score is not finite")
        if np.any(tab.scores < 0):
            bad = int(np.flatnonzero(tab.scores < 0)[0])
            raise ExportError(f"{t} {bad}: negative score")
        oob = ~(
            np.isfinite(tab.coords).all(axis=1)
            & (tab.coords >= 0.0).all(axis=1)
            & (tab.coords <= 1.0).all(axis=1)
        )
        if np.any(oob):
            bad = int(np.flatnonzero(oob)[0])
            raise ExportError(f"{t} {bad}: coordinates outside [0,1]")
        for target, ids in tab.neighbors.items():
            if target not in counts:
                raise ExportError(f"{t}: neighbor target type {target!r} missing")
            if ids.shape[0] != n:
                raise ExportError(f"{t}: neighbor rows do not match label count")
            bad_mask = (ids < 0) | (ids >= counts[target])
            if np.any(bad_mask):
                r, c = np.argwhere(bad_mask)[0]
                raise ExportError(
                    f"{t} {int(r)}: neighbor id {int(ids[r, c])} unresolvable "
                    f"in type {target!r} (count {counts[target]})"
                )
            dists = tab.neighbor_dists[target]
            if dists.shape != ids.shape:
                raise ExportError(f"{t}: neighbor distance shape mismatch for {target!r}")
            if ids.shape[1] > 1 and np.any(np.diff(dists, axis=1) < 0):
                r = int(np.argwhere(np.diff(dists, axis=1) < 0)[0][0])
                raise ExportError(f"{t} {r}: neighbor distances not ascending")
    n_articles = counts.get("article", 0)
    n_words = counts.get("word", 0)
    for lvl in snap.levels:
        if lvl.article_assignment.shape[0] != n_articles:
            raise ExportError(f"level {lvl.level}: article assignment size mismatch")
        if lvl.word_assignment.shape[0] != n_words:
            raise ExportError(f"level {lvl.level}: word assignment size mismatch")
        for arr in (lvl.article_assignment, lvl.word_assignment):
            if arr.size and (arr.min() < 0 or arr.max() >= lvl.k):
                raise ExportError(f"level {lvl.level}: assignment outside [0, {lvl.k})")
        if len(lvl.names) != lvl.k:
            raise ExportError(f"level {lvl.level}: {len(lvl.names)} names for k={lvl.k}")
    for t, rel in snap.related.items():
        if t not in snap.tables or len(rel) != snap.tables[t].n:
            raise ExportError(f"related sets for {t!r} do not match the table")
        for idx, groups in enumerate(rel):
            for target, ids in groups.items():
                if target not in counts:
                    raise ExportError(f"{t} {idx}: related target {target!r} missing")
                for i in ids:
                    if not 0 <= i < counts[target]:
                        raise ExportError(
                            f"{t} {idx}: related id {i} unresolvable in {target!r}"
                        )


def _json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def export_map(snap: MapSnapshot, path: str | Path) -> None:
    """Write the snapshot directory. Byte-deterministic for equal inputs."""
    validate_snapshot(snap)
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    present = [t for t in TYPE_ORDER if t in snap.tables]

    manifest = {
        "format_version": snap.format_version,
        "counts": snap.counts(),
        "neighbor_k": {
            t: {target: int(ids.shape[1]) for target, ids in sorted(snap.tables[t].neighbors.items())}
            for t in present
        },
        "levels": [
            {
                "level": lvl.level,
                "k": lvl.k,
                "centroids": [[float(a), float(b)] for a, b in lvl.centroids],
                "names": [list(name) for name in lvl.names],
                "coverage": [float(c) for c in (lvl.coverage if lvl.coverage is not None else np.zeros(lvl.k))],
            }
            for lvl in snap.levels
        ],
        "bounds": [0.0, 0.0, 1.0, 1.0],
    }
    (out / MANIFEST_FILE).write_text(_json_dumps(manifest) + "\n", encoding="utf-8")

    with (out / ENTITIES_FILE).open("w", encoding="utf-8") as fh:
        for t in present:
            tab = snap.tables[t]
            for i in range(tab.n):
                fh.write(
                    _json_dumps(
                        {
                            "type": t,
                            "id": i,
                            "label": tab.labels[i],
                            "score": float(tab.scores[i]),
                            "meta": tab.metadata[i],
                        }
                    )
                    + "\n"
                )

    with (out / GEOMETRY_FILE).open("wb") as fh:
        for t in present:
            fh.write(np.ascontiguousarray(snap.tables[t].coords, dtype="<f8").tobytes())
        for t in present:
            tab = snap.tables[t]
            for target in sorted(tab.neighbors):
                fh.write(np.ascontiguousarray(tab.neighbors[target], dtype="<i8").tobytes())
                fh.write(np.ascontiguousarray(tab.neighbor_dists[target], dtype="<f8").tobytes())
        for lvl in snap.levels:
            fh.write(np.ascontiguousarray(lvl.article_assignment, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(lvl.word_assignment, dtype="<i8").tobytes())

    (out / RELATED_FILE).write_text(_json_dumps(snap.related) + "\n", encoding="utf-8")


def load_map(path: str | Path) -> MapSnapshot:
    """Read and validate a snapshot directory in one pass per file."""
    src = Path(path)
    manifest_path = src / MANIFEST_FILE
    if not manifest_path.exists():
        raise ExportError(f"no snapshot manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ExportError(f"unsupported format_version {version!r}, expected {FORMAT_VERSION!r}")
    counts = manifest["counts"]
    present = [t for t in TYPE_ORDER if t in counts]

    tables: dict[str, EntityTable] = {}
    for t in present:
        tables[t] = EntityTable(
            entity_type=t,
            labels=[""] * counts[t],
            scores=np.zeros(counts[t], dtype=np.float64),
            coords=np.zeros((counts[t], 2), dtype=np.float64),
            metadata=[{} for _ in range(counts[t])],
        )
    seen = {t: 0 for t in present}
    with (src / ENTITIES_FILE).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            rec = json.loads(line)
            t = rec["type"]
            if t not in tables:
                raise ExportError(f"entities line {line_no}: unknown type {t!r}")
            i = rec["id"]
            if not 0 <= i < counts[t]:
                raise ExportError(f"entities line {line_no}: id {i} out of range for {t!r}")
            tables[t].labels[i] = rec["label"]
            tables[t].scores[i] = rec["score"]
            tables[t].metadata[i] = rec["meta"]
            seen[t] += 1
    for t in present:
        if seen[t] != counts[t]:
            raise ExportError(f"{t}: {seen[t]} entity rows, manifest says {counts[t]}")

    blob = (src / GEOMETRY_FILE).read_bytes()
    pos = 0

    def take(dtype: str, shape: tuple[int, ...]) -> np.ndarray:
        nonlocal pos
        size = int(np.prod(shape)) * np.dtype(dtype).itemsize
        if pos + size > len(blob):
            raise ExportError("geometry block truncated")
        arr = np.frombuffer(blob, dtype=dtype, count=int(np.prod(shape)), offset=pos)
        pos += size
        return arr.reshape(shape).copy()

    for t in present:
        tables[t].coords = take("<f8", (counts[t], 2))
    for t in present:
        for target, k in sorted(manifest["neighbor_k"].get(t, {}).items()):
            tables[t].neighbors[target] = take("<i8", (counts[t], k))
            tables[t].neighbor_dists[target] = take("<f8", (counts[t], k))
    levels = []
    for meta in manifest["levels"]:
        levels.append(
            ClusterLevel(
                level=meta["level"],
                k=meta["k"],
                centroids=np.array(meta["centroids"], dtype=np.float64).reshape(meta["k"], 2),
                article_assignment=take("<i8", (counts.get("article", 0),)),
                word_assignment=take("<i8", (counts.get("word", 0),)),
                names=[tuple(name) for name in meta["names"]],
                coverage=np.array(meta["coverage"], dtype=np.float64),
            )
        )
    if pos != len(blob):
        raise ExportError("geometry block has trailing bytes")

    related_raw = json.loads((src / RELATED_FILE).read_text(encoding="utf-8"))
    related = {
        t: [{tt: list(map(int, ids)) for tt, ids in groups.items()} for groups in rel]
        for t, rel in related_raw.items()
    }

    snap = MapSnapshot(tables=tables, levels=levels, related=related, format_version=version)
    validate_snapshot(snap)
    return snap
