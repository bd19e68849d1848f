"""Undo-log replay, independence validation, and brute-force oracles.

The oracles here are the ground truth the rest of the package is tested
against: an exact branch-and-bound maximum independent set solver for
desk-scale graphs and an exhaustive half-integral LP solver. Both refuse
inputs above their size limits instead of silently taking forever.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet

import numpy as np

from .errors import MalformedInputError, OracleLimitError, UsageError
from .records import (
    DegreeOne,
    DegreeZero,
    Diamond,
    Fold,
    IsolatedClique,
    LPRemoval,
    PathContraction,
    Relabel,
    TwinFolded,
    TwinIncluded,
    Unconfined,
)


@dataclass(frozen=True)
class IndependentSet:
    members: FrozenSet[int]

    def __len__(self):
        return len(self.members)

    @classmethod
    def of(cls, iterable):
        return cls(frozenset(int(v) for v in iterable))


@dataclass(frozen=True)
class OracleResult:
    size: int
    witness: IndependentSet


def validate_independent(g0, s):
    """True iff no edge of g0 has both endpoints in s.

    Liveness is ignored: validation runs against the full structure of the
    graph the set is claimed independent in.
    """
    members = s.members if isinstance(s, IndependentSet) else frozenset(s)
    for v in members:
        if not (0 <= v < g0.capacity):
            raise MalformedInputError(f"vertex {v} out of range")
    members_set = set(members)
    for v in members_set:
        a = g0.adjacency(v)
        for u in a:
            if int(u) in members_set:
                return False
    return True


# ----------------------------------------------------------------------
# brute-force MIS oracle


def _mis_bitset(adj, full_mask):
    """Exact MIS over a bitmask-encoded graph; returns (size, chosen_mask)."""
    best_size = 0
    best_set = 0

    def rec(cand, size, chosen):
        nonlocal best_size, best_set
        while True:
            v_best = -1
            d_best = -1
            low = -1
            m = cand
            while m:
                b = m & -m
                i = b.bit_length() - 1
                m ^= b
                d = (adj[i] & cand).bit_count()
                if d <= 1:
                    low = i
                    break
                if d > d_best:
                    d_best = d
                    v_best = i
            if low >= 0:
                # Degree-0/1 vertices are always in some maximum set.
                size += 1
                chosen |= 1 << low
                cand &= ~(adj[low] | (1 << low))
                continue
            break
        if cand == 0:
            if size > best_size:
                best_size, best_set = size, chosen
            return
        if size + cand.bit_count() <= best_size:
            return
        if cand.bit_count() > 8:
            # Greedy clique cover: at most one pick per clique.
            cliques = 0
            m = cand
            while m:
                b = m & -m
                i = b.bit_length() - 1
                m ^= b
                common = adj[i] & m
                while common:
                    cb = common & -common
                    ci = cb.bit_length() - 1
                    m ^= cb
                    common &= adj[ci]
                    common &= m
                cliques += 1
            if size + cliques <= best_size:
                return
        v = v_best
        rec(cand & ~(adj[v] | (1 << v)), size + 1, chosen | (1 << v))
        rec(cand & ~(1 << v), size, chosen)

    rec(full_mask, 0, 0)
    return best_size, best_set


def brute_force_mis(g, limit=40):
    """Exact maximum independent set of the live subgraph of g.

    Branch and bound on the maximum-degree vertex with degree-0/1
    shortcuts and a greedy clique-cover bound. Refuses graphs with more
    than `limit` live vertices.
    """
    live = [int(v) for v in g.live_vertices()]
    n = len(live)
    if n > limit:
        raise OracleLimitError(
            f"brute-force oracle limited to {limit} vertices, got {n}")
    index = {v: i for i, v in enumerate(live)}
    adj = [0] * n
    for i, v in enumerate(live):
        for u in g.live_neighbors(v):
            j = index.get(int(u))
            if j is not None and j != i:
                adj[i] |= 1 << j
    size, chosen = _mis_bitset(adj, (1 << n) - 1)
    witness = IndependentSet.of(live[i] for i in range(n) if chosen >> i & 1)
    return OracleResult(size=size, witness=witness)


def exhaustive_mis_size(g, limit=20):
    """MIS size by full subset enumeration; the oracle for the oracle."""
    live = [int(v) for v in g.live_vertices()]
    n = len(live)
    if n > limit:
        raise OracleLimitError(f"subset enumeration limited to {limit}, got {n}")
    index = {v: i for i, v in enumerate(live)}
    adj = [0] * n
    for i, v in enumerate(live):
        for u in g.live_neighbors(v):
            j = index.get(int(u))
            if j is not None:
                adj[i] |= 1 << j
    best = 0
    for mask in range(1 << n):
        ok = True
        m = mask
        while m:
            b = m & -m
            i = b.bit_length() - 1
            m ^= b
            if adj[i] & mask:
                ok = False
                break
        if ok:
            c = mask.bit_count()
            if c > best:
                best = c
    return best


# ----------------------------------------------------------------------
# half-integral LP oracle


def lp_oracle(g, limit=12):
    """Exhaustive half-integral LP over the live subgraph.

    Maximizes the sum of vertex values in {0, 1/2, 1} subject to
    x_u + x_v <= 1 per live edge. Returns (doubled objective, half_set)
    where half_set contains every live vertex that takes value 1/2 in
    some optimal assignment (the half part of the canonical minimal
    solution that matching-based extraction must reproduce).
    """
    live = [int(v) for v in g.live_vertices()]
    n = len(live)
    if n > limit:
        raise OracleLimitError(f"LP oracle limited to {limit} vertices, got {n}")
    if n == 0:
        return 0, frozenset()
    index = {v: i for i, v in enumerate(live)}
    total = 3 ** n
    idx = np.arange(total, dtype=np.int64)
    vals = np.empty((total, n), dtype=np.int8)
    for i in range(n):
        vals[:, i] = (idx // (3 ** i)) % 3  # doubled values 0, 1, 2
    feasible = np.ones(total, dtype=bool)
    for u, v in g.live_edge_array():
        iu, iv = index[int(u)], index[int(v)]
        feasible &= (vals[:, iu].astype(np.int16) + vals[:, iv]) <= 2
    obj = vals.sum(axis=1, dtype=np.int32)
    obj_feas = obj[feasible]
    best = int(obj_feas.max())
    optima = vals[feasible][obj_feas == best]
    half_any = np.any(optima == 1, axis=0)
    half_set = frozenset(live[i] for i in range(n) if half_any[i])
    return best, half_set


# ----------------------------------------------------------------------
# undo replay


def undo_all(log, kernel_is, vertex_map=None, kernel_graph=None):
    """Lift an independent set of the kernel to one of the original graph.

    Records are replayed newest-first. `vertex_map`, when given, maps the
    kernel ids into the id space of the newest log records before replay
    (for logs produced by the kernelizer it is not needed: they end with a
    Relabel record). With an empty log the result is simply kernel_is
    mapped through vertex_map.
    """
    members = kernel_is.members if isinstance(kernel_is, IndependentSet) \
        else frozenset(int(v) for v in kernel_is)
    if kernel_graph is not None and not validate_independent(kernel_graph, members):
        raise UsageError("kernel solution is not independent in the kernel")
    current = set(int(v) for v in members)
    if vertex_map is not None:
        current = {int(vertex_map[v]) for v in current}

    for rec in log.records_reversed():
        if isinstance(rec, Relabel):
            current = {rec.old_of_new[v] for v in current}
        elif isinstance(rec, DegreeZero):
            current.add(rec.v)
        elif isinstance(rec, DegreeOne):
            if rec.u not in current:
                current.add(rec.v)
        elif isinstance(rec, PathContraction):
            current.update(rec.chosen)
        elif isinstance(rec, IsolatedClique):
            # Exchange argument: a selected clique neighbor stands in for v.
            if not any(c in current for c in rec.clique):
                current.add(rec.v)
        elif isinstance(rec, Fold):
            if rec.slot in current:
                current.discard(rec.slot)
                current.add(rec.u)
                current.add(rec.w)
            else:
                current.add(rec.v)
        elif isinstance(rec, TwinIncluded):
            current.add(rec.u)
            current.add(rec.v)
        elif isinstance(rec, TwinFolded):
            if rec.gadget in current:
                current.discard(rec.gadget)
                current.update(rec.shared)
            else:
                current.add(rec.u)
                current.add(rec.v)
        elif isinstance(rec, (Unconfined, Diamond)):
            pass
        elif isinstance(rec, LPRemoval):
            current.update(rec.ones)
        else:  # pragma: no cover
            raise UsageError(f"unknown record type {type(rec).__name__}")
    return IndependentSet.of(current)
