"""Compressed sets of 32-bit ids with fast boolean algebra.

Ids are partitioned by their high 16 bits into containers of low-16-bit
values: small containers hold a sorted u16 array, dense ones a 65536-bit
bitmap. Set operations work container-by-container, so their cost follows
the number of containers touched, not the universe size.

Serialization follows the portable interoperable format for this container
family (cookies 12346/12347, run containers chosen when they save bytes),
so files written here can be read by the usual external tooling.
"""

from __future__ import annotations

import struct

import numpy as np

ARRAY_MAX_CARD = 4096
SERIAL_COOKIE_NO_RUN = 12346
SERIAL_COOKIE_RUN = 12347
NO_OFFSET_THRESHOLD = 4
_BITMAP_WORDS = 1024


class IdSetError(Exception):
    pass


def _bitmap_from_values(lows: np.ndarray) -> np.ndarray:
    bm = np.zeros(_BITMAP_WORDS, dtype=np.uint64)
    np.bitwise_or.at(bm, lows >> 6, np.uint64(1) << (lows & np.uint16(63)).astype(np.uint64))
    return bm


def _bitmap_values(bm: np.ndarray) -> np.ndarray:
    bits = np.unpackbits(bm.view(np.uint8), bitorder="little")
    return np.flatnonzero(bits).astype(np.uint16)


def _bitmap_card(bm: np.ndarray) -> int:
    return int(np.unpackbits(bm.view(np.uint8), bitorder="little").sum())


def _container(lows: np.ndarray):
    """Normalize sorted unique u16 values into array or bitmap form."""
    if lows.size <= ARRAY_MAX_CARD:
        return np.ascontiguousarray(lows, dtype=np.uint16)
    return _bitmap_from_values(lows)


def _is_bitmap(cont: np.ndarray) -> bool:
    return cont.dtype == np.uint64


def _card(cont: np.ndarray) -> int:
    return _bitmap_card(cont) if _is_bitmap(cont) else int(cont.size)


def _values(cont: np.ndarray) -> np.ndarray:
    return _bitmap_values(cont) if _is_bitmap(cont) else cont


def _from_bitmap(bm: np.ndarray) -> np.ndarray:
    card = _bitmap_card(bm)
    if card <= ARRAY_MAX_CARD:
        return _bitmap_values(bm)
    return bm


def _runs_of(values: np.ndarray) -> np.ndarray:
    """(start, length-1) pairs of consecutive-value runs, as int64 (m, 2)."""
    if values.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    v = values.astype(np.int64)
    breaks = np.flatnonzero(np.diff(v) > 1)
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [v.size - 1]))
    return np.stack([v[starts], v[ends] - v[starts]], axis=1)


class IdSet:
    """Immutable sorted set of u32 ids in container-compressed form."""

    __slots__ = ("keys", "containers")

    def __init__(self, keys: list[int], containers: list[np.ndarray]):
        self.keys = keys
        self.containers = containers

    @classmethod
    def empty(cls) -> "IdSet":
        return cls([], [])

    @classmethod
    def from_array(cls, ids) -> "IdSet":
        ids = np.asarray(ids)
        if ids.size == 0:
            return cls.empty()
        if ids.min() < 0 or ids.max() > 0xFFFFFFFF:
            raise IdSetError("ids must fit in unsigned 32 bits")
        ids = np.unique(ids.astype(np.uint32))
        highs = (ids >> np.uint32(16)).astype(np.uint32)
        lows = (ids & np.uint32(0xFFFF)).astype(np.uint16)
        keys, first = np.unique(highs, return_index=True)
        bounds = np.append(first, ids.size)
        conts = [
            _container(lows[bounds[i] : bounds[i + 1]]) for i in range(keys.size)
        ]
        return cls([int(k) for k in keys], conts)

    @classmethod
    def full_range(cls, n: int) -> "IdSet":
        """The set {0, 1, ..., n-1}."""
        return cls.from_array(np.arange(n, dtype=np.uint32))

    def to_array(self) -> np.ndarray:
        parts = [
            (np.uint32(key) << np.uint32(16)) | _values(cont).astype(np.uint32)
            for key, cont in zip(self.keys, self.containers)
        ]
        if not parts:
            return np.empty(0, dtype=np.uint32)
        return np.concatenate(parts)

    def cardinality(self) -> int:
        return sum(_card(c) for c in self.containers)

    def __len__(self) -> int:
        return self.cardinality()

    def __bool__(self) -> bool:
        return len(self.keys) > 0

    def __iter__(self):
        return iter(self.to_array().tolist())

    def __contains__(self, id_: int) -> bool:
        key = id_ >> 16
        low = id_ & 0xFFFF
        try:
            pos = self.keys.index(key)
        except ValueError:
            return False
        cont = self.containers[pos]
        if _is_bitmap(cont):
            return bool((cont[low >> 6] >> np.uint64(low & 63)) & np.uint64(1))
        i = int(np.searchsorted(cont, low))
        return i < cont.size and int(cont[i]) == low

    def __eq__(self, other) -> bool:
        if not isinstance(other, IdSet):
            return NotImplemented
        if self.keys != other.keys:
            return False
        for a, b in zip(self.containers, other.containers):
            if _is_bitmap(a) != _is_bitmap(b):
                return False
            if a.size != b.size or not np.array_equal(a, b):
                return False
        return True

    def __hash__(self):
        return hash(self.serialize())

    def __repr__(self) -> str:
        return f"IdSet(card={self.cardinality()}, containers={len(self.keys)})"

    # -- boolean algebra ----------------------------------------------------

    def union(self, other: "IdSet") -> "IdSet":
        keys: list[int] = []
        conts: list[np.ndarray] = []
        i = j = 0
        while i < len(self.keys) or j < len(other.keys):
            if j >= len(other.keys) or (i < len(self.keys) and self.keys[i] < other.keys[j]):
                keys.append(self.keys[i])
                conts.append(self.containers[i].copy())
                i += 1
            elif i >= len(self.keys) or other.keys[j] < self.keys[i]:
                keys.append(other.keys[j])
                conts.append(other.containers[j].copy())
                j += 1
            else:
                keys.append(self.keys[i])
                conts.append(_union_cont(self.containers[i], other.containers[j]))
                i += 1
                j += 1
        return IdSet(keys, conts)

    def intersect(self, other: "IdSet") -> "IdSet":
        keys: list[int] = []
        conts: list[np.ndarray] = []
        i = j = 0
        while i < len(self.keys) and j < len(other.keys):
            if self.keys[i] < other.keys[j]:
                i += 1
            elif other.keys[j] < self.keys[i]:
                j += 1
            else:
                cont = _intersect_cont(self.containers[i], other.containers[j])
                if _card(cont) > 0:
                    keys.append(self.keys[i])
                    conts.append(cont)
                i += 1
                j += 1
        return IdSet(keys, conts)

    def difference(self, other: "IdSet") -> "IdSet":
        keys: list[int] = []
        conts: list[np.ndarray] = []
        j = 0
        for i, key in enumerate(self.keys):
            while j < len(other.keys) and other.keys[j] < key:
                j += 1
            if j < len(other.keys) and other.keys[j] == key:
                cont = _difference_cont(self.containers[i], other.containers[j])
                if _card(cont) > 0:
                    keys.append(key)
                    conts.append(cont)
            else:
                keys.append(key)
                conts.append(self.containers[i].copy())
        return IdSet(keys, conts)

    __or__ = union
    __and__ = intersect
    __sub__ = difference

    # -- portable serialization ----------------------------------------------

    def serialize(self) -> bytes:
        encodings = []  # (key, card, kind, payload_array)
        has_run = False
        for key, cont in zip(self.keys, self.containers):
            card = _card(cont)
            values = _values(cont)
            runs = _runs_of(values)
            run_size = 2 + 4 * runs.shape[0]
            plain_size = 2 * card if card <= ARRAY_MAX_CARD else 8192
            if run_size < plain_size:
                encodings.append((key, card, "run", runs))
                has_run = True
            elif card <= ARRAY_MAX_CARD:
                encodings.append((key, card, "array", values))
            else:
                encodings.append((key, card, "bitmap", cont))

        n = len(encodings)
        out = bytearray()
        if not has_run:
            out += struct.pack("<II", SERIAL_COOKIE_NO_RUN, n)
            offsets_present = True
        else:
            out += struct.pack("<I", SERIAL_COOKIE_RUN | ((n - 1) << 16))
            flags = bytearray((n + 7) // 8)
            for idx, (_, _, kind, _) in enumerate(encodings):
                if kind == "run":
                    flags[idx // 8] |= 1 << (idx % 8)
            out += flags
            offsets_present = n >= NO_OFFSET_THRESHOLD
        for key, card, _, _ in encodings:
            out += struct.pack("<HH", key, card - 1)
        sizes = []
        for _, _, kind, payload in encodings:
            if kind == "run":
                sizes.append(2 + 4 * payload.shape[0])
            elif kind == "array":
                sizes.append(2 * payload.size)
            else:
                sizes.append(8192)
        if offsets_present:
            pos = len(out) + 4 * n
            for s in sizes:
                out += struct.pack("<I", pos)
                pos += s
        for _, _, kind, payload in encodings:
            if kind == "run":
                out += struct.pack("<H", payload.shape[0])
                out += payload.astype("<u2").tobytes()
            elif kind == "array":
                out += payload.astype("<u2").tobytes()
            else:
                out += payload.astype("<u8").tobytes()
        return bytes(out)

    @classmethod
    def deserialize(cls, data: bytes) -> "IdSet":
        idset, consumed = cls._parse(data, 0)
        if consumed != len(data):
            raise IdSetError(
                f"trailing bytes after id set ({len(data) - consumed} unread)"
            )
        return idset

    @classmethod
    def _parse(cls, data: bytes, pos: int) -> tuple["IdSet", int]:
        if len(data) - pos < 4:
            raise IdSetError("truncated id set header")
        (cookie,) = struct.unpack_from("<I", data, pos)
        pos += 4
        run_flags = None
        if (cookie & 0xFFFF) == SERIAL_COOKIE_RUN:
            n = (cookie >> 16) + 1
            nbytes = (n + 7) // 8
            run_flags = data[pos : pos + nbytes]
            pos += nbytes
            offsets_present = n >= NO_OFFSET_THRESHOLD
        elif cookie == SERIAL_COOKIE_NO_RUN:
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            offsets_present = True
        else:
            raise IdSetError(f"bad id set cookie {cookie}")
        keys = []
        cards = []
        for _ in range(n):
            key, card_minus_1 = struct.unpack_from("<HH", data, pos)
            pos += 4
            keys.append(key)
            cards.append(card_minus_1 + 1)
        if offsets_present:
            pos += 4 * n  # containers follow in order; offsets are redundant
        containers = []
        for idx in range(n):
            is_run = run_flags is not None and bool(run_flags[idx // 8] & (1 << (idx % 8)))
            if is_run:
                (n_runs,) = struct.unpack_from("<H", data, pos)
                pos += 2
                pairs = np.frombuffer(data, dtype="<u2", count=2 * n_runs, offset=pos)
                pos += 4 * n_runs
                pairs = pairs.reshape(n_runs, 2).astype(np.int64)
                values = np.concatenate(
                    [np.arange(s, s + l + 1, dtype=np.uint16) for s, l in pairs]
                ) if n_runs else np.empty(0, dtype=np.uint16)
                containers.append(_container(values))
            elif cards[idx] <= ARRAY_MAX_CARD:
                arr = np.frombuffer(data, dtype="<u2", count=cards[idx], offset=pos)
                pos += 2 * cards[idx]
                containers.append(arr.astype(np.uint16))
            else:
                bm = np.frombuffer(data, dtype="<u8", count=_BITMAP_WORDS, offset=pos)
                pos += 8192
                containers.append(bm.astype(np.uint64))
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise IdSetError("container keys not strictly increasing")
        return cls(keys, containers), pos


def _union_cont(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if _is_bitmap(a) and _is_bitmap(b):
        return _from_bitmap(a | b)
    if _is_bitmap(a) or _is_bitmap(b):
        bm, arr = (a, b) if _is_bitmap(a) else (b, a)
        merged = bm.copy()
        np.bitwise_or.at(merged, arr >> 6, np.uint64(1) << (arr & np.uint16(63)).astype(np.uint64))
        return _from_bitmap(merged)
    return _container(np.union1d(a, b))


def _intersect_cont(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if _is_bitmap(a) and _is_bitmap(b):
        return _from_bitmap(a & b)
    if _is_bitmap(a) or _is_bitmap(b):
        bm, arr = (a, b) if _is_bitmap(a) else (b, a)
        hit = ((bm[arr >> 6] >> (arr & np.uint16(63)).astype(np.uint64)) & np.uint64(1)).astype(bool)
        return arr[hit]
    return np.intersect1d(a, b)


def _difference_cont(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if not _is_bitmap(a):
        if _is_bitmap(b):
            hit = ((b[a >> 6] >> (a & np.uint16(63)).astype(np.uint64)) & np.uint64(1)).astype(bool)
            return a[~hit]
        return np.setdiff1d(a, b)
    if _is_bitmap(b):
        return _from_bitmap(a & ~b)
    cleared = a.copy()
    np.bitwise_and.at(cleared, b >> 6, ~(np.uint64(1) << (b & np.uint16(63)).astype(np.uint64)))
    return _from_bitmap(cleared)


def set_union(a: IdSet, b: IdSet) -> IdSet:
    return a.union(b)


def set_intersect(a: IdSet, b: IdSet) -> IdSet:
    return a.intersect(b)


def set_difference(a: IdSet, b: IdSet) -> IdSet:
    return a.difference(b)
