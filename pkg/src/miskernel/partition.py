"""Vertex partitioning and boundary layers for blockwise reductions.

The internal partitioner is deliberately simple: farthest-point seeding,
level-synchronous capped BFS growth, then a few rounds of size-constrained
label propagation. Correctness of the blockwise reductions must hold for
any partition; quality only affects how many vertices the boundary guards
exclude. Externally computed partitions are ingested from the common
one-block-id-per-line file format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MalformedInputError


@dataclass
class Partition:
    """Block assignment per vertex id; blocks may be empty."""

    block_of: np.ndarray  # int32, -1 for never-assigned ids
    k: int

    def grow(self, capacity):
        if capacity > self.block_of.size:
            extra = np.full(capacity - self.block_of.size, -1, dtype=np.int32)
            self.block_of = np.concatenate([self.block_of, extra])

    def copy(self):
        return Partition(block_of=self.block_of.copy(), k=self.k)


@dataclass
class BoundaryIndex:
    """b0: vertex has a live neighbor in another block. b1: closed
    neighborhood of b0 restricted to live vertices."""

    b0: np.ndarray  # uint8
    b1: np.ndarray  # uint8

    def grow(self, capacity):
        if capacity > self.b0.size:
            extra = np.zeros(capacity - self.b0.size, dtype=np.uint8)
            self.b0 = np.concatenate([self.b0, extra])
            self.b1 = np.concatenate([self.b1, np.zeros_like(extra)])


def _bfs_distance(g, sources):
    """Hop distance from the source set over the live subgraph (-1 if
    unreachable)."""
    dist = np.full(g.capacity, -1, dtype=np.int64)
    frontier = np.asarray(sources, dtype=np.int64)
    frontier = frontier[g.alive[frontier] == 1]
    dist[frontier] = 0
    level = 0
    while frontier.size:
        level += 1
        seg, dst = g.gather_adjacency(frontier)
        if dst.size == 0:
            break
        cand = dst[g.alive[dst] == 1]
        cand = np.unique(cand)
        new = cand[dist[cand] < 0]
        if new.size == 0:
            break
        dist[new] = level
        frontier = new.astype(np.int64)
    return dist


def partition_internal(g, k, seed, epsilon=0.1, lp_rounds=10):
    """Partition the live vertices of g into k blocks.

    Deterministic for fixed (graph, k, seed). Every block ends with at
    most ceil((1 + epsilon) * n_live / k) vertices.
    """
    if k < 1:
        raise MalformedInputError("block count must be at least 1")
    live = g.live_vertices()
    nl = int(live.size)
    block_of = np.full(g.capacity, -1, dtype=np.int32)
    if nl == 0:
        return Partition(block_of=block_of, k=k)
    if k == 1:
        block_of[live] = 0
        return Partition(block_of=block_of, k=1)
    if k >= nl:
        block_of[live] = np.arange(nl, dtype=np.int32)
        return Partition(block_of=block_of, k=k)

    cap = math.ceil((1.0 + epsilon) * nl / k)
    rng = np.random.default_rng(seed)

    # Farthest-point seeding: spread seeds out, preferring unreachable
    # (other-component) vertices so disjoint components get their own seeds.
    seeds = [int(live[rng.integers(nl)])]
    for _ in range(k - 1):
        dist = _bfs_distance(g, np.asarray(seeds))
        dist_live = dist[live]
        unreached = live[dist_live < 0]
        if unreached.size:
            seeds.append(int(unreached[0]))
        else:
            far = int(dist_live.max())
            cands = live[dist_live == far]
            seeds.append(int(cands[0]))

    owner = block_of  # filled in place
    sizes = np.zeros(k, dtype=np.int64)
    frontiers = []
    for b, s in enumerate(seeds):
        owner[s] = b
        sizes[b] += 1
        frontiers.append(np.asarray([s], dtype=np.int64))

    # Level-synchronous capped growth.
    while any(f.size for f in frontiers):
        for b in range(k):
            f = frontiers[b]
            if f.size == 0:
                continue
            if sizes[b] >= cap:
                frontiers[b] = np.empty(0, dtype=np.int64)
                continue
            seg, dst = g.gather_adjacency(f)
            if dst.size == 0:
                frontiers[b] = np.empty(0, dtype=np.int64)
                continue
            cand = dst[g.alive[dst] == 1]
            cand = np.unique(cand)
            cand = cand[owner[cand] < 0]
            take = min(int(cap - sizes[b]), int(cand.size))
            claimed = cand[:take]
            owner[claimed] = b
            sizes[b] += take
            frontiers[b] = claimed.astype(np.int64)

    # Leftovers (capped-out regions, stranded components): breadth-first
    # order per component, filling the currently smallest blocks.
    leftover = live[owner[live] < 0]
    if leftover.size:
        left_set = set(int(v) for v in leftover)
        while left_set:
            start = min(left_set)
            comp = [start]
            left_set.discard(start)
            qi = 0
            while qi < len(comp):
                v = comp[qi]
                qi += 1
                for u in g.live_neighbors(v):
                    u = int(u)
                    if u in left_set:
                        left_set.discard(u)
                        comp.append(u)
            for v in comp:
                b = int(np.argmin(sizes))
                owner[v] = b
                sizes[b] += 1

    # Size-constrained label propagation to cut down boundary edges.
    for _ in range(lp_rounds):
        seg, dst = g.gather_adjacency(live)
        keep = g.alive[dst] == 1
        seg = seg[keep]
        nbr_block = owner[dst[keep]]
        counts = np.zeros((nl, k), dtype=np.int32)
        np.add.at(counts, (seg, nbr_block), 1)
        cur = owner[live]
        target = np.argmax(counts, axis=1).astype(np.int32)
        gain = counts[np.arange(nl), target] - counts[np.arange(nl), cur]
        movers = np.flatnonzero((gain > 0) & (target != cur))
        if movers.size == 0:
            break
        # Per-target admission: best gains first, never overflowing cap.
        order = np.lexsort((live[movers], -gain[movers], target[movers]))
        movers = movers[order]
        tgt_sorted = target[movers]
        group_start = np.flatnonzero(
            np.concatenate([[True], tgt_sorted[1:] != tgt_sorted[:-1]]))
        pos_in_group = np.arange(movers.size) - np.repeat(
            group_start, np.diff(np.concatenate([group_start, [movers.size]])))
        allow = cap - sizes[tgt_sorted]
        admit = movers[pos_in_group < allow]
        if admit.size == 0:
            break
        owner[live[admit]] = target[admit]
        sizes = np.bincount(owner[live], minlength=k).astype(np.int64)

    return Partition(block_of=owner, k=k)


def load_partition(path, n):
    """Read a partition file: line i holds the block id of vertex i."""
    block = np.empty(n, dtype=np.int32)
    count = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if text == "" and count == n:
                continue
            if count >= n:
                raise MalformedInputError(
                    f"{path}: expected {n} lines, found extra data at line {lineno}")
            try:
                val = int(text)
            except ValueError:
                raise MalformedInputError(
                    f"{path}: non-numeric block id at line {lineno}") from None
            if val < 0:
                raise MalformedInputError(
                    f"{path}: negative block id at line {lineno}")
            block[count] = val
            count += 1
    if count != n:
        raise MalformedInputError(
            f"{path}: expected {n} lines, file ends at line {count + 1}")
    k = int(block.max()) + 1 if n else 1
    return Partition(block_of=block, k=k)


def boundary_sets(g, p):
    """Compute the boundary layers B0 and B1 = N[B0] over live vertices."""
    b0 = np.zeros(g.capacity, dtype=np.uint8)
    b1 = np.zeros(g.capacity, dtype=np.uint8)
    edges = g.live_edge_array()
    if edges.size:
        cross = p.block_of[edges[:, 0]] != p.block_of[edges[:, 1]]
        ce = edges[cross]
        b0[ce[:, 0]] = 1
        b0[ce[:, 1]] = 1
        members = np.flatnonzero(b0)
        if members.size:
            b1[members] = 1
            seg, dst = g.gather_adjacency(members)
            if dst.size:
                nbrs = dst[g.alive[dst] == 1]
                b1[nbrs] = 1
    return BoundaryIndex(b0=b0, b1=b1)


def refresh_boundary(g, p, bi, touched=None):
    """Bring a BoundaryIndex back in sync with the graph and partition.

    Recomputes from scratch in vectorized form; the `touched` hint exists
    for interface stability and is not needed for correctness.
    """
    fresh = boundary_sets(g, p)
    bi.b0 = fresh.b0
    bi.b1 = fresh.b1
    return bi


def cut_edge_count(g, p):
    edges = g.live_edge_array()
    if edges.size == 0:
        return 0
    return int(np.count_nonzero(
        p.block_of[edges[:, 0]] != p.block_of[edges[:, 1]]))
