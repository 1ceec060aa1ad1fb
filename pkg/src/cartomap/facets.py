"""Facet and tile indices over a map snapshot, with a boolean filter algebra.

Ids live in one shared dense space covering all entity types in a fixed
order (articles, words, authors, labs). Each facet value owns the
compressed set of ids it applies to; each tile (z, x, y) owns the set of
ids whose coordinates fall inside it. Filter expressions OR the values
inside a facet and AND across facets.

Expression grammar (percent-encoded values):
    lab:CERN|INRIA;year:2018
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import quote, unquote

import numpy as np

from .idset import IdSet
from .score_export import MapSnapshot, TYPE_ORDER

DEFAULT_FACETS = ("lab", "year", "type")
INDEX_FORMAT = "cartomap-index/1"

FACETS_MANIFEST = "facets.json"
FACETS_BLOB = "facets.bin"
TILES_MANIFEST = "tiles.json"
TILES_BLOB = "tiles.bin"


class FacetError(Exception):
    pass


@dataclass
class FacetIndex:
    facets: dict[str, dict[str, IdSet]]
    universe_size: int

    @property
    def universe(self) -> IdSet:
        return IdSet.full_range(self.universe_size)

    def value_counts(self, facet: str) -> dict[str, int]:
        return {v: len(s) for v, s in self.facets[facet].items()}


@dataclass
class TileIndex:
    zmax: int
    tiles: dict[tuple[int, int, int], IdSet] = field(default_factory=dict)

    def tile_set(self, z: int, x: int, y: int) -> IdSet:
        return self.tiles.get((z, x, y), IdSet.empty())


def parse_filter(expr: str | None) -> dict[str, list[str]]:
    """Parse 'facet:v1|v2;facet2:v3' into {facet: [values]}.

    Values are percent-decoded. Repeating a facet merges its value lists.
    An empty or missing expression is the empty constraint.
    """
    out: dict[str, list[str]] = {}
    if not expr:
        return out
    for clause in expr.split(";"):
        if not clause:
            continue
        if ":" not in clause:
            raise FacetError(f"malformed filter clause {clause!r} (expected facet:values)")
        facet, _, raw = clause.partition(":")
        facet = unquote(facet).strip()
        if not facet:
            raise FacetError(f"malformed filter clause {clause!r} (empty facet name)")
        values = [unquote(v) for v in raw.split("|") if v != ""]
        out.setdefault(facet, [])
        for v in values:
            if v not in out[facet]:
                out[facet].append(v)
    return out


def canonical_filter(expr: str | dict[str, list[str]] | None) -> str:
    """Stable string form: facets sorted, values sorted and deduplicated."""
    parsed = parse_filter(expr) if isinstance(expr, str) or expr is None else expr
    parts = []
    for facet in sorted(parsed):
        values = sorted(set(parsed[facet]))
        if not values:
            continue
        encoded = "|".join(quote(v, safe="") for v in values)
        parts.append(f"{quote(facet, safe='')}:{encoded}")
    return ";".join(parts)


def _related_ids(snap: MapSnapshot, entity_type: str, idx: int) -> list[int]:
    offsets = snap.offsets()
    groups = snap.related.get(entity_type, [])
    if idx >= len(groups):
        return []
    out = []
    for target, ids in groups[idx].items():
        base = offsets[target]
        out.extend(base + i for i in ids)
    return out


def build_facet_index(
    snap: MapSnapshot, facets: tuple[str, ...] = DEFAULT_FACETS
) -> FacetIndex:
    """One compressed id set per (facet, value).

    Built-in facets: 'lab' (a lab's related articles and authors), 'type'
    (each entity type's id block), 'term' (articles containing each
    retained vocabulary term, from article metadata 'terms'). Any other
    facet name indexes a metadata field across all entity types; a field
    no entity carries is an error.
    """
    offsets = snap.offsets()
    index: dict[str, dict[str, IdSet]] = {}
    for facet in facets:
        values: dict[str, list[int]] = {}
        if facet == "lab":
            if "lab" not in snap.tables:
                raise FacetError("facet 'lab' needs a lab entity table")
            for idx, label in enumerate(snap.tables["lab"].labels):
                values.setdefault(label, []).extend(_related_ids(snap, "lab", idx))
        elif facet == "type":
            for t in TYPE_ORDER:
                if t in snap.tables:
                    base = offsets[t]
                    values[t] = list(range(base, base + snap.tables[t].n))
        elif facet == "term":
            if "article" not in snap.tables or "word" not in snap.tables:
                raise FacetError("facet 'term' needs article and word tables")
            tab = snap.tables["article"]
            word_labels = snap.tables["word"].labels
            seen = False
            for idx, meta in enumerate(tab.metadata):
                terms = meta.get("terms")
                if terms is None:
                    continue
                seen = True
                gid = offsets["article"] + idx
                for w in terms:
                    values.setdefault(word_labels[w], []).append(gid)
            if not seen:
                raise FacetError(
                    "facet 'term' references metadata field 'terms' which no article has"
                )
        else:
            seen = False
            for t in TYPE_ORDER:
                if t not in snap.tables:
                    continue
                base = offsets[t]
                for idx, meta in enumerate(snap.tables[t].metadata):
                    if facet not in meta:
                        continue
                    raw = meta[facet]
                    seen = True
                    for v in raw if isinstance(raw, list) else [raw]:
                        values.setdefault(str(v), []).append(base + idx)
            if not seen:
                raise FacetError(
                    f"facet {facet!r} references metadata field {facet!r} which no entity has"
                )
        index[facet] = {
            v: IdSet.from_array(np.array(ids, dtype=np.uint32))
            for v, ids in sorted(values.items())
            if ids
        }
    return FacetIndex(facets=index, universe_size=snap.total)


def build_tile_index(snap: MapSnapshot, zmax: int) -> TileIndex:
    """Per-tile id sets for all levels 0..zmax, one coordinate pass per level."""
    offsets = snap.offsets()
    coords_parts = []
    gid_parts = []
    for t in TYPE_ORDER:
        if t not in snap.tables:
            continue
        tab = snap.tables[t]
        coords_parts.append(tab.coords)
        gid_parts.append(np.arange(offsets[t], offsets[t] + tab.n, dtype=np.uint32))
    coords = np.concatenate(coords_parts) if coords_parts else np.empty((0, 2))
    gids = np.concatenate(gid_parts) if gid_parts else np.empty(0, dtype=np.uint32)

    index = TileIndex(zmax=zmax)
    for z in range(zmax + 1):
        n_side = 1 << z
        tx = np.minimum((coords[:, 0] * n_side).astype(np.int64), n_side - 1)
        ty = np.minimum((coords[:, 1] * n_side).astype(np.int64), n_side - 1)
        flat = ty * n_side + tx
        order = np.argsort(flat, kind="stable")
        sorted_flat = flat[order]
        bounds = np.flatnonzero(np.diff(sorted_flat)) + 1
        starts = np.concatenate(([0], bounds))
        ends = np.concatenate((bounds, [flat.size]))
        for s, e in zip(starts, ends):
            if s == e:
                continue
            addr = int(sorted_flat[s])
            index.tiles[(z, addr % n_side, addr // n_side)] = IdSet.from_array(
                gids[order[s:e]]
            )
    return index


def eval_filter(expr: str | dict[str, list[str]] | None, index: FacetIndex) -> IdSet:
    """OR the value sets inside each facet, AND the facets together.

    The empty expression is unconstrained: the full universe.
    """
    parsed = parse_filter(expr) if isinstance(expr, str) or expr is None else expr
    result: IdSet | None = None
    for facet, values in parsed.items():
        if facet not in index.facets:
            raise FacetError(f"unknown facet {facet!r}")
        if not values:
            continue
        clause = IdSet.empty()
        for v in values:
            if v not in index.facets[facet]:
                raise FacetError(f"unknown value {v!r} for facet {facet!r}")
            clause = clause | index.facets[facet][v]
        result = clause if result is None else (result & clause)
    return index.universe if result is None else result


# -- on-disk form ------------------------------------------------------------


def save_facet_index(index: FacetIndex, path: str | Path) -> None:
    """Manifest (facet and value names, blob sizes) plus concatenated set blobs."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "format": INDEX_FORMAT,
        "universe_size": index.universe_size,
        "facets": {},
    }
    blob = bytearray()
    for facet in sorted(index.facets):
        values = sorted(index.facets[facet])
        sizes = []
        for v in values:
            data = index.facets[facet][v].serialize()
            sizes.append(len(data))
            blob += data
        manifest["facets"][facet] = {"values": values, "sizes": sizes}
    (out / FACETS_MANIFEST).write_text(
        json.dumps(manifest, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    (out / FACETS_BLOB).write_bytes(bytes(blob))


def load_facet_index(path: str | Path) -> FacetIndex:
    src = Path(path)
    manifest = json.loads((src / FACETS_MANIFEST).read_text(encoding="utf-8"))
    if manifest.get("format") != INDEX_FORMAT:
        raise FacetError(f"unsupported index format {manifest.get('format')!r}")
    blob = (src / FACETS_BLOB).read_bytes()
    facets: dict[str, dict[str, IdSet]] = {}
    pos = 0
    for facet in sorted(manifest["facets"]):
        spec = manifest["facets"][facet]
        facets[facet] = {}
        for v, size in zip(spec["values"], spec["sizes"]):
            facets[facet][v] = IdSet.deserialize(blob[pos : pos + size])
            pos += size
    if pos != len(blob):
        raise FacetError("facet blob has trailing bytes")
    return FacetIndex(facets=facets, universe_size=manifest["universe_size"])


def save_tile_index(index: TileIndex, path: str | Path) -> None:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    addrs = sorted(index.tiles)
    sizes = []
    blob = bytearray()
    for addr in addrs:
        data = index.tiles[addr].serialize()
        sizes.append(len(data))
        blob += data
    manifest = {
        "format": INDEX_FORMAT,
        "zmax": index.zmax,
        "tiles": [list(a) for a in addrs],
        "sizes": sizes,
    }
    (out / TILES_MANIFEST).write_text(
        json.dumps(manifest, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    (out / TILES_BLOB).write_bytes(bytes(blob))


def load_tile_index(path: str | Path) -> TileIndex:
    src = Path(path)
    manifest = json.loads((src / TILES_MANIFEST).read_text(encoding="utf-8"))
    if manifest.get("format") != INDEX_FORMAT:
        raise FacetError(f"unsupported index format {manifest.get('format')!r}")
    blob = (src / TILES_BLOB).read_bytes()
    index = TileIndex(zmax=manifest["zmax"])
    pos = 0
    for addr, size in zip(manifest["tiles"], manifest["sizes"]):
        index.tiles[tuple(addr)] = IdSet.deserialize(blob[pos : pos + size])
        pos += size
    if pos != len(blob):
        raise FacetError("tile blob has trailing bytes")
    return index
