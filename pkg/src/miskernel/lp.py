"""LP-relaxation reduction via maximum bipartite matching.

The half-integral relaxation (values 0, 1/2, 1) is solved exactly on the
bi-double graph B(G): two copies of the live vertices with an edge
{l_u, r_v} per orientation of each live edge. A maximum matching of B(G)
yields, through alternating-path reachability from the unmatched left
vertices, the canonical optimal solution whose half part is minimal;
vertices at value 1 are committed, their neighbors (value 0) removed.

All vertex values are kept in doubled integers (0, 1, 2); no floats.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import InternalInvariantError, UsageError
from .records import LPRemoval


@dataclass
class BiDoubleGraph:
    """Bipartite double cover of the live subgraph, in dense index space.

    vertices[i] is the original id of dense index i; the CSR arrays
    describe left-to-right adjacency (identical to right-to-left by
    symmetry of the construction).
    """

    vertices: np.ndarray  # int64 original ids, sorted
    indptr: np.ndarray    # int64, len n+1
    indices: np.ndarray   # int32 dense right indices
    n: int

    @property
    def edge_count(self):
        """Number of bipartite edges, i.e. twice the live edge count."""
        return int(self.indices.size)

    def neighbors(self, i):
        return self.indices[self.indptr[i] : self.indptr[i + 1]]


def build_bi_double(g):
    """Construct B(G) for the live subgraph of g."""
    live = g.live_vertices()
    n = int(live.size)
    dense = np.full(g.capacity, -1, dtype=np.int64)
    dense[live] = np.arange(n, dtype=np.int64)
    if n == 0:
        return BiDoubleGraph(vertices=live, indptr=np.zeros(1, dtype=np.int64),
                             indices=np.empty(0, dtype=np.int32), n=0)
    seg, dst = g.gather_adjacency(live)
    keep = g.alive[dst] == 1
    seg = seg[keep]
    dst_dense = dense[dst[keep]].astype(np.int32)
    lens = np.bincount(seg, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lens, out=indptr[1:])
    return BiDoubleGraph(vertices=live, indptr=indptr, indices=dst_dense, n=n)


@dataclass
class Matching:
    """Partner arrays over the dense index space of a BiDoubleGraph."""

    vertices: np.ndarray  # original ids the dense space refers to
    match_l: np.ndarray   # int64, right partner of left i, or -1
    match_r: np.ndarray   # int64, left partner of right i, or -1

    @classmethod
    def empty(cls, bd):
        return cls(vertices=bd.vertices.copy(),
                   match_l=np.full(bd.n, -1, dtype=np.int64),
                   match_r=np.full(bd.n, -1, dtype=np.int64))

    @property
    def size(self):
        """Number of matched pairs (edges of the matching)."""
        return int(np.count_nonzero(self.match_l >= 0))

    def check_valid(self, bd):
        for l in range(bd.n):
            r = int(self.match_l[l])
            if r >= 0:
                assert int(self.match_r[r]) == l, "partner arrays disagree"
                nb = bd.neighbors(l)
                assert np.searchsorted(nb, r) < nb.size and \
                    int(nb[np.searchsorted(nb, r)]) == r, "matched non-edge"
        for r in range(bd.n):
            l = int(self.match_r[r])
            if l >= 0:
                assert int(self.match_l[l]) == r, "partner arrays disagree"
        return True

    def is_maximal(self, bd):
        free_l = self.match_l < 0
        free_r = self.match_r < 0
        if bd.indices.size == 0:
            return True
        seg = np.repeat(np.arange(bd.n), np.diff(bd.indptr))
        return not np.any(free_l[seg] & free_r[bd.indices])


def _dedup_first(keys):
    """Indices of the first occurrence of each value in `keys`, preserving
    the given order."""
    seen = {}
    out = []
    for i, k in enumerate(keys):
        if k not in seen:
            seen[k] = True
            out.append(i)
    return np.asarray(out, dtype=np.int64)


def karp_sipser(bd, seed=0):
    """Maximal matching: degree-one vertices first, random edges otherwise.

    Vectorized round-based variant: every round either matches all
    current degree-one endpoints (conflicts resolved deterministically) or
    matches a random conflict-free edge set drawn with the seeded RNG.
    """
    m = Matching.empty(bd)
    if bd.indices.size == 0:
        return m
    rng = np.random.default_rng(seed)
    e_l = np.repeat(np.arange(bd.n, dtype=np.int64), np.diff(bd.indptr))
    e_r = bd.indices.astype(np.int64)
    free_l = np.ones(bd.n, dtype=bool)
    free_r = np.ones(bd.n, dtype=bool)

    def apply_pairs(pl, pr):
        # Per-left then per-right first-wins dedup keeps it a matching.
        order = np.lexsort((pr, pl))
        pl, pr = pl[order], pr[order]
        keep = np.concatenate([[True], pl[1:] != pl[:-1]])
        pl, pr = pl[keep], pr[keep]
        order = np.lexsort((pl, pr))
        pl, pr = pl[order], pr[order]
        keep = np.concatenate([[True], pr[1:] != pr[:-1]])
        pl, pr = pl[keep], pr[keep]
        m.match_l[pl] = pr
        m.match_r[pr] = pl
        free_l[pl] = False
        free_r[pr] = False

    edges = np.stack([e_l, e_r], axis=1)
    while True:
        keep = free_l[edges[:, 0]] & free_r[edges[:, 1]]
        edges = edges[keep]
        if edges.size == 0:
            break
        degl = np.bincount(edges[:, 0], minlength=bd.n)
        degr = np.bincount(edges[:, 1], minlength=bd.n)
        pend = (degl[edges[:, 0]] == 1) | (degr[edges[:, 1]] == 1)
        if np.any(pend):
            cand = edges[pend]
            apply_pairs(cand[:, 0], cand[:, 1])
            continue
        # 2-core: pick one random conflict-free edge batch.
        perm = rng.permutation(edges.shape[0])
        cand = edges[perm]
        apply_pairs(cand[:, 0], cand[:, 1])
    return m


def reference_maximum_matching(bd):
    """Independent maximum-matching oracle (Kuhn's algorithm).

    Deliberately simple and separate from the production path; used by the
    test suite to pin the sizes augment_to_maximum must reach.
    """
    match_l = np.full(bd.n, -1, dtype=np.int64)
    match_r = np.full(bd.n, -1, dtype=np.int64)

    def try_augment(l, visited):
        for r in bd.neighbors(l):
            r = int(r)
            if visited[r]:
                continue
            visited[r] = True
            if match_r[r] < 0 or try_augment(int(match_r[r]), visited):
                match_l[l] = r
                match_r[r] = l
                return True
        return False

    import sys
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, bd.n * 2 + 100))
    try:
        for l in range(bd.n):
            if match_l[l] < 0:
                try_augment(l, np.zeros(bd.n, dtype=bool))
    finally:
        sys.setrecursionlimit(old)
    return Matching(vertices=bd.vertices.copy(), match_l=match_l, match_r=match_r)


def _bfs_layers(bd, m):
    """Hopcroft-Karp style BFS labeling from the free left vertices.

    Returns (dist_l, found) where dist_l[l] is the alternating BFS layer
    of left vertex l and `found` says whether a free right vertex is
    reachable.
    """
    dist = np.full(bd.n, -1, dtype=np.int64)
    frontier = np.flatnonzero(m.match_l < 0)
    dist[frontier] = 0
    found = False
    d = 0
    while frontier.size:
        lens = (bd.indptr[frontier + 1] - bd.indptr[frontier]).astype(np.int64)
        if int(lens.sum()) == 0:
            break
        seg = np.repeat(np.arange(frontier.size), lens)
        starts = bd.indptr[frontier]
        cum = np.zeros(frontier.size, dtype=np.int64)
        np.cumsum(lens[:-1], out=cum[1:])
        idx = np.arange(int(lens.sum()), dtype=np.int64) - np.repeat(cum, lens) \
            + np.repeat(starts, lens)
        rights = bd.indices[idx].astype(np.int64)
        owners = m.match_r[rights]
        if np.any(owners < 0):
            found = True
            break
        nxt = np.unique(owners)
        nxt = nxt[dist[nxt] < 0]
        if nxt.size == 0:
            break
        d += 1
        dist[nxt] = d
        frontier = nxt
    return dist, found


def _augment_dfs(bd, m, dist, sources):
    """Find and apply augmenting paths from `sources` along the BFS layers.

    Iterative depth-first search; each right vertex is visited at most
    once per phase, which keeps the discovered paths vertex-disjoint.
    Returns the applied paths as lists of (left, right) pairs.
    """
    paths = []
    indptr, indices = bd.indptr, bd.indices
    match_l, match_r = m.match_l, m.match_r
    visited_r = np.zeros(bd.n, dtype=bool)
    for s in sources:
        s = int(s)
        if match_l[s] >= 0:
            continue
        stack = [(s, int(indptr[s]))]
        trail = []  # trail[i] = (left, right) pair chosen at depth i
        pairs = None
        while stack:
            l, cur = stack[-1]
            end = int(indptr[l + 1])
            step = None  # ("augment", r) or ("descend", r, owner)
            while cur < end:
                r = int(indices[cur])
                cur += 1
                if visited_r[r]:
                    continue
                owner = int(match_r[r])
                if owner < 0:
                    step = ("augment", r)
                    break
                if dist[owner] == dist[l] + 1:
                    step = ("descend", r, owner)
                    break
            stack[-1] = (l, cur)
            if step is None:
                stack.pop()
                if trail:
                    trail.pop()
                continue
            if step[0] == "augment":
                r = step[1]
                visited_r[r] = True
                pairs = trail + [(l, r)]
                break
            _, r, owner = step
            visited_r[r] = True
            trail.append((l, r))
            stack.append((owner, int(indptr[owner])))
        if pairs is not None:
            for pl, pr in pairs:
                match_l[pl] = pr
                match_r[pr] = pl
            paths.append(pairs)
    return paths


def augment_to_maximum(bd, m, workers=1):
    """Grow a matching to maximum cardinality with augmenting paths.

    Phases of shortest-path BFS labeling followed by disjoint augmenting
    DFS. With workers > 1 the DFS proposals are computed concurrently on
    read-only snapshots and applied by a sequential arbiter; the final
    size always equals the sequential result because phases repeat until
    no augmenting path exists.
    """
    m = Matching(vertices=m.vertices.copy(), match_l=m.match_l.copy(),
                 match_r=m.match_r.copy())
    if bd.n == 0:
        return m
    while True:
        dist, found = _bfs_layers(bd, m)
        if not found:
            break
        free = np.flatnonzero(m.match_l < 0)
        if workers <= 1 or free.size < 4:
            paths = _augment_dfs(bd, m, dist, free)
            if not paths:
                break
            continue
        # Parallel proposals: chunk sources, propose on snapshots, then
        # apply non-conflicting paths in deterministic order. Later paths
        # of a worker may depend on its earlier flips, so a worker's
        # remaining proposals are dropped after its first conflict.
        chunks = np.array_split(free, workers)
        proposals = [None] * len(chunks)

        def propose(i):
            snap = Matching(vertices=m.vertices, match_l=m.match_l.copy(),
                            match_r=m.match_r.copy())
            proposals[i] = _augment_dfs(bd, snap, dist, chunks[i])

        threads = [threading.Thread(target=propose, args=(i,))
                   for i in range(len(chunks))]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        used = np.zeros(2 * bd.n, dtype=bool)
        applied = 0
        for plist in proposals:
            for path in plist:
                if any(used[l] or used[bd.n + r] for l, r in path):
                    break
                for l, r in path:
                    m.match_l[l] = r
                    m.match_r[r] = l
                    used[l] = True
                    used[bd.n + r] = True
                applied += 1
        if applied == 0:
            # Conflicting proposals can starve a phase; fall back to the
            # sequential pass to guarantee progress.
            paths = _augment_dfs(bd, m, dist, free)
            if not paths:
                break
    return m


def reuse_matching(prev, g):
    """Project a previous round's matching onto the current live subgraph.

    Pairs with both endpoints still alive are kept; everything else is
    unmatched. The result lives in the dense space of build_bi_double(g).
    """
    live = g.live_vertices()
    n = int(live.size)
    dense = np.full(g.capacity, -1, dtype=np.int64)
    dense[live] = np.arange(n, dtype=np.int64)
    match_l = np.full(n, -1, dtype=np.int64)
    match_r = np.full(n, -1, dtype=np.int64)
    prev_verts = prev.vertices
    for i in range(prev_verts.size):
        j = int(prev.match_l[i])
        if j < 0:
            continue
        u = int(prev_verts[i])
        v = int(prev_verts[j])
        if u < g.capacity and v < g.capacity and g.alive[u] and g.alive[v]:
            du, dv = int(dense[u]), int(dense[v])
            match_l[du] = dv
            match_r[dv] = du
    return Matching(vertices=live, match_l=match_l, match_r=match_r)


@dataclass
class ReachabilityMarks:
    """Alternating-path reachability marks over a bi-double graph."""

    vertices: np.ndarray
    marked_l: np.ndarray  # bool
    marked_r: np.ndarray  # bool


def alternating_reachability(bd, m):
    """Mark every bi-double vertex reachable by an alternating path from an
    unmatched left vertex (non-matching edges left-to-right, matching
    edges right-to-left).

    This is the König construction; downstream extraction turns it into
    the optimal half-integral solution with minimal half part. Marking is
    idempotent, so concurrent searches may race benignly; this
    implementation runs the whole frontier data-parallel per level.
    """
    marked_l = np.zeros(bd.n, dtype=bool)
    marked_r = np.zeros(bd.n, dtype=bool)
    frontier = np.flatnonzero(m.match_l < 0)
    marked_l[frontier] = True
    while frontier.size:
        lens = (bd.indptr[frontier + 1] - bd.indptr[frontier]).astype(np.int64)
        total = int(lens.sum())
        if total == 0:
            break
        seg = np.repeat(np.arange(frontier.size), lens)
        starts = bd.indptr[frontier]
        cum = np.zeros(frontier.size, dtype=np.int64)
        np.cumsum(lens[:-1], out=cum[1:])
        idx = np.arange(total, dtype=np.int64) - np.repeat(cum, lens) \
            + np.repeat(starts, lens)
        rights = bd.indices[idx].astype(np.int64)
        # Non-matching edges only.
        srcs = frontier[seg]
        keep = rights != m.match_l[srcs]
        rights = np.unique(rights[keep])
        rights = rights[~marked_r[rights]]
        if rights.size == 0:
            break
        marked_r[rights] = True
        lefts = m.match_r[rights]
        lefts = lefts[lefts >= 0]
        lefts = np.unique(lefts)
        lefts = lefts[~marked_l[lefts]]
        marked_l[lefts] = True
        frontier = lefts
    return ReachabilityMarks(vertices=bd.vertices.copy(),
                             marked_l=marked_l, marked_r=marked_r)


@dataclass
class HalfIntegralSolution:
    """Vertex values of the LP relaxation in doubled integers (0, 1, 2)."""

    vertices: np.ndarray  # original ids
    x2: np.ndarray        # int8 doubled values

    def ones(self):
        return self.vertices[self.x2 == 2]

    def zeros(self):
        return self.vertices[self.x2 == 0]

    def halves(self):
        return self.vertices[self.x2 == 1]

    def doubled_objective(self):
        return int(self.x2.sum())

    def value2(self, v):
        i = int(np.searchsorted(self.vertices, v))
        if i >= self.vertices.size or int(self.vertices[i]) != int(v):
            raise UsageError(f"vertex {v} not in solution domain")
        return int(self.x2[i])


def extract_half_integral(g, marks):
    """Turn reachability marks into the canonical half-integral solution.

    x_v = 1 when only l_v is marked, 0 when only r_v is marked, 1/2
    otherwise (König cover membership per copy).
    """
    x2 = np.ones(marks.vertices.size, dtype=np.int8)
    x2[marks.marked_l & ~marks.marked_r] = 2
    x2[~marks.marked_l & marks.marked_r] = 0
    return HalfIntegralSolution(vertices=marks.vertices.copy(), x2=x2)


def solve_lp(g, seed=0, prev=None, workers=1):
    """Full LP pipeline: bi-double, matching (reused when given), marks,
    extraction. Returns (solution, matching)."""
    bd = build_bi_double(g)
    if prev is not None:
        m = reuse_matching(prev, g)
    else:
        m = karp_sipser(bd, seed=seed)
    m = augment_to_maximum(bd, m, workers=workers)
    marks = alternating_reachability(bd, m)
    x = extract_half_integral(g, marks)
    return x, m


def apply_lp(g, x, writer, offset, cand=None, partition=None, stats=None):
    """Commit all value-1 vertices and hide them with their neighbors.

    Returns the number of vertices removed. Raises InternalInvariantError
    if two committed vertices are adjacent (the solution was infeasible).
    """
    ones = [int(v) for v in x.ones()]
    zeros = [int(v) for v in x.zeros()]
    ones_set = set(ones)
    for v in ones:
        for u in g.live_neighbors(v):
            if int(u) in ones_set:
                raise InternalInvariantError(
                    f"LP solution commits adjacent vertices {v} and {u}")
    if not ones and not zeros:
        return 0
    removed = ones + zeros
    affected = set()
    for v in removed:
        for u in g.live_neighbors(v):
            affected.add(int(u))
    writer.append(LPRemoval(tuple(ones), tuple(zeros)))
    for v in removed:
        g.hide_vertex(v)
    offset.add(len(ones))
    if stats is not None:
        stats["lp"] = stats.get("lp", 0) + len(removed)
    if cand is not None:
        from .records import GLOBAL
        for v in sorted(affected):
            if g.alive[v]:
                block = GLOBAL if partition is None else int(partition.block_of[v])
                cand.push(v, block)
    return len(removed)
