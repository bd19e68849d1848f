"""Undo records for reductions and the packed reduction log.

Every reduction appends one record carrying exactly the state its undo
rule needs. Records are stored packed in flat int32 segments so that a
block worker can ship its log back to the coordinator as a single array;
the dataclass views exist for tests and for the replay loop.

A log is an ordered list of segments. Undo correctness depends only on
the order of records within a segment (one segment is one block pass or
one global phase), never on the relative order of segments from different
blocks of the same round.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

GLOBAL = -1  # origin id for records emitted outside any block

TAG_DEGREE_ZERO = 1
TAG_DEGREE_ONE = 2
TAG_PATH_CONTRACTION = 3
TAG_FOLD = 4
TAG_ISOLATED_CLIQUE = 5
TAG_TWIN_INCLUDED = 6
TAG_TWIN_FOLDED = 7
TAG_UNCONFINED = 8
TAG_DIAMOND = 9
TAG_LP_REMOVAL = 10
TAG_RELABEL = 11


@dataclass(frozen=True)
class DegreeZero:
    v: int

    def encode(self):
        return [TAG_DEGREE_ZERO, 1, self.v]


@dataclass(frozen=True)
class DegreeOne:
    v: int
    u: int

    def encode(self):
        return [TAG_DEGREE_ONE, 2, self.v, self.u]


@dataclass(frozen=True)
class PathContraction:
    """Degree-two cycle contraction: `vertices` in cycle order, `chosen`
    is the committed alternating subset."""
    case: str
    vertices: Tuple[int, ...]
    chosen: Tuple[int, ...]

    def encode(self):
        assert self.case == "cycle"
        payload = [len(self.vertices), *self.vertices,
                   len(self.chosen), *self.chosen]
        return [TAG_PATH_CONTRACTION, len(payload), *payload]


@dataclass(frozen=True)
class Fold:
    """Contraction of degree-two v with nonadjacent neighbors u, w into the
    vertex occupying `slot` (v's slot in the interior case, u's when u is a
    boundary vertex)."""
    v: int
    u: int
    w: int
    slot: int
    saved_u_neighbors: Tuple[int, ...]
    saved_w_neighbors: Tuple[int, ...]

    def encode(self):
        payload = [self.v, self.u, self.w, self.slot,
                   len(self.saved_u_neighbors), *self.saved_u_neighbors,
                   len(self.saved_w_neighbors), *self.saved_w_neighbors]
        return [TAG_FOLD, len(payload), *payload]


@dataclass(frozen=True)
class IsolatedClique:
    v: int
    clique: Tuple[int, ...]

    def encode(self):
        payload = [self.v, len(self.clique), *self.clique]
        return [TAG_ISOLATED_CLIQUE, len(payload), *payload]


@dataclass(frozen=True)
class TwinIncluded:
    u: int
    v: int
    shared: Tuple[int, ...]

    def encode(self):
        payload = [self.u, self.v, len(self.shared), *self.shared]
        return [TAG_TWIN_INCLUDED, len(payload), *payload]


@dataclass(frozen=True)
class TwinFolded:
    u: int
    v: int
    shared: Tuple[int, ...]
    gadget: int
    two_neighborhood: Tuple[int, ...]

    def encode(self):
        payload = [self.u, self.v, len(self.shared), *self.shared, self.gadget,
                   len(self.two_neighborhood), *self.two_neighborhood]
        return [TAG_TWIN_FOLDED, len(payload), *payload]


@dataclass(frozen=True)
class Unconfined:
    v: int

    def encode(self):
        return [TAG_UNCONFINED, 1, self.v]


@dataclass(frozen=True)
class Diamond:
    v: int

    def encode(self):
        return [TAG_DIAMOND, 1, self.v]


@dataclass(frozen=True)
class LPRemoval:
    ones: Tuple[int, ...]
    zeros: Tuple[int, ...]

    def encode(self):
        payload = [len(self.ones), *self.ones, len(self.zeros), *self.zeros]
        return [TAG_LP_REMOVAL, len(payload), *payload]


@dataclass(frozen=True)
class Relabel:
    """Compaction marker: new id i corresponds to old id old_of_new[i]."""
    old_of_new: Tuple[int, ...]

    def encode(self):
        payload = [len(self.old_of_new), *self.old_of_new]
        return [TAG_RELABEL, len(payload), *payload]


_DECODERS = {}


def _decoder(tag):
    def wrap(fn):
        _DECODERS[tag] = fn
        return fn
    return wrap


@_decoder(TAG_DEGREE_ZERO)
def _d_deg0(p):
    return DegreeZero(int(p[0]))


@_decoder(TAG_DEGREE_ONE)
def _d_deg1(p):
    return DegreeOne(int(p[0]), int(p[1]))


@_decoder(TAG_PATH_CONTRACTION)
def _d_path(p):
    nv = int(p[0])
    verts = tuple(int(x) for x in p[1 : 1 + nv])
    nc = int(p[1 + nv])
    chosen = tuple(int(x) for x in p[2 + nv : 2 + nv + nc])
    return PathContraction("cycle", verts, chosen)


@_decoder(TAG_FOLD)
def _d_fold(p):
    v, u, w, slot = (int(x) for x in p[:4])
    nu = int(p[4])
    su = tuple(int(x) for x in p[5 : 5 + nu])
    nw = int(p[5 + nu])
    sw = tuple(int(x) for x in p[6 + nu : 6 + nu + nw])
    return Fold(v, u, w, slot, su, sw)


@_decoder(TAG_ISOLATED_CLIQUE)
def _d_iso(p):
    v = int(p[0])
    nc = int(p[1])
    return IsolatedClique(v, tuple(int(x) for x in p[2 : 2 + nc]))


@_decoder(TAG_TWIN_INCLUDED)
def _d_twin_inc(p):
    u, v = int(p[0]), int(p[1])
    ns = int(p[2])
    return TwinIncluded(u, v, tuple(int(x) for x in p[3 : 3 + ns]))


@_decoder(TAG_TWIN_FOLDED)
def _d_twin_fold(p):
    u, v = int(p[0]), int(p[1])
    ns = int(p[2])
    shared = tuple(int(x) for x in p[3 : 3 + ns])
    gadget = int(p[3 + ns])
    nt = int(p[4 + ns])
    two = tuple(int(x) for x in p[5 + ns : 5 + ns + nt])
    return TwinFolded(u, v, shared, gadget, two)


@_decoder(TAG_UNCONFINED)
def _d_unconf(p):
    return Unconfined(int(p[0]))


@_decoder(TAG_DIAMOND)
def _d_diamond(p):
    return Diamond(int(p[0]))


@_decoder(TAG_LP_REMOVAL)
def _d_lp(p):
    n1 = int(p[0])
    ones = tuple(int(x) for x in p[1 : 1 + n1])
    n0 = int(p[1 + n1])
    zeros = tuple(int(x) for x in p[2 + n1 : 2 + n1 + n0])
    return LPRemoval(ones, zeros)


@_decoder(TAG_RELABEL)
def _d_relabel(p):
    n = int(p[0])
    return Relabel(tuple(int(x) for x in p[1 : 1 + n]))


def decode_segment(data):
    """Decode a packed int32 segment into record dataclasses, in order."""
    out = []
    i = 0
    n = len(data)
    while i < n:
        tag = int(data[i])
        ln = int(data[i + 1])
        out.append(_DECODERS[tag](data[i + 2 : i + 2 + ln]))
        i += 2 + ln
    return out


class SegmentWriter:
    """Accumulates packed records for one block pass or global phase."""

    __slots__ = ("origin", "buf")

    def __init__(self, origin=GLOBAL):
        self.origin = origin
        self.buf = []

    def append(self, record):
        self.buf.extend(record.encode())

    def __len__(self):
        return len(self.buf)

    def seal(self):
        return np.asarray(self.buf, dtype=np.int32)


@dataclass
class ReductionLog:
    """Ordered list of (origin, packed int32 segment) pairs."""

    segments: List[Tuple[int, np.ndarray]] = field(default_factory=list)

    def add_segment(self, origin, data):
        data = np.asarray(data, dtype=np.int32)
        if data.size:
            self.segments.append((int(origin), data))

    def add_writer(self, writer):
        if len(writer):
            self.segments.append((writer.origin, writer.seal()))

    def add_record(self, record, origin=GLOBAL):
        self.add_segment(origin, np.asarray(record.encode(), dtype=np.int32))

    def records(self):
        """All records flattened in application order."""
        out = []
        for _, data in self.segments:
            out.extend(decode_segment(data))
        return out

    def records_reversed(self):
        """All records in reverse application order (newest first)."""
        for _, data in reversed(self.segments):
            yield from reversed(decode_segment(data))

    def n_records(self):
        return sum(len(decode_segment(d)) for _, d in self.segments)

    def __len__(self):
        return len(self.segments)
