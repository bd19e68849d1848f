"""Dynamic undirected simple graph with lazy vertex deletion.

Vertices are dense integer ids. Hiding a vertex clears a liveness flag and
leaves the adjacency lists of its neighbors untouched; neighbor queries
filter on liveness instead. Adjacency lists are slices of a flat int32
pool: a neighborhood rewrite appends a fresh slice and repoints the
per-vertex (offset, length) descriptor, so readers of other vertices never
observe a half-written list. The liveness flag is the only state the
parallel scheduler ever mutates across block boundaries.

Gadget vertices (inserted by the twin reduction) get ids strictly above
every id handed out before them; capacity grows by amortized doubling.
"""

from __future__ import annotations

import numpy as np

from .errors import MalformedInputError, UsageError


class Graph:
    """Mutable undirected simple graph backed by a flat adjacency pool."""

    __slots__ = (
        "n_input",
        "capacity",
        "pool",
        "pool_used",
        "adj_off",
        "adj_len",
        "alive",
        "live_deg",
        "deg_tracking",
        "patched",
        "track_patches",
        "_gadget_range",
    )

    def __init__(self, n_input, capacity, pool, pool_used, adj_off, adj_len,
                 alive, live_deg):
        self.n_input = n_input
        self.capacity = capacity
        self.pool = pool
        self.pool_used = pool_used
        self.adj_off = adj_off
        self.adj_len = adj_len
        self.alive = alive
        self.live_deg = live_deg
        # Sequential callers keep live_deg exact; parallel block workers turn
        # this off and filter against `alive` instead.
        self.deg_tracking = True
        # When set, ids whose adjacency slice was replaced (rewrites, gadget
        # insertions) are collected so a block worker can ship them back.
        self.track_patches = False
        self.patched = set()
        # (next_id, end) when a worker allocates gadgets from a reserved
        # range instead of the tail of the id space.
        self._gadget_range = None

    # ------------------------------------------------------------------
    # construction

    @classmethod
    def from_edges(cls, n, edges):
        """Build a graph on vertices 0..n-1 from an iterable of edge pairs.

        Duplicate and mirrored pairs are deduplicated. Raises
        MalformedInputError for out-of-range endpoints or self-loops.
        """
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                         dtype=np.int64)
        if arr.size == 0:
            arr = arr.reshape(0, 2)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise MalformedInputError("edge list must be a sequence of pairs")
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise MalformedInputError("edge endpoint out of range")
        if arr.size and np.any(arr[:, 0] == arr[:, 1]):
            raise MalformedInputError("self-loops are not allowed")

        # Symmetrize, then deduplicate via a packed key.
        both = np.concatenate([arr, arr[:, ::-1]], axis=0)
        key = both[:, 0] * np.int64(max(n, 1)) + both[:, 1]
        order = np.argsort(key, kind="stable")
        key = key[order]
        keep = np.ones(key.size, dtype=bool)
        if key.size:
            keep[1:] = key[1:] != key[:-1]
        both = both[order][keep]

        deg = np.bincount(both[:, 0], minlength=n).astype(np.int64) if n else \
            np.zeros(0, dtype=np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(deg, out=indptr[1:])
        pool = np.empty(max(int(indptr[-1]), 16), dtype=np.int32)
        pool[: indptr[-1]] = both[:, 1]
        return cls(
            n_input=n,
            capacity=n,
            pool=pool,
            pool_used=int(indptr[-1]),
            adj_off=indptr[:-1].copy(),
            adj_len=deg.astype(np.int32),
            alive=np.ones(n, dtype=np.uint8),
            live_deg=deg.astype(np.int32),
        )

    # ------------------------------------------------------------------
    # queries

    def adjacency(self, v):
        """Raw adjacency slice of v (sorted, may contain hidden ids)."""
        off = self.adj_off[v]
        return self.pool[off : off + self.adj_len[v]]

    def live_neighbors(self, v):
        """Live neighbors of v as a sorted int32 array."""
        a = self.adjacency(v)
        if a.size == 0:
            return a
        return a[self.alive[a] == 1]

    def live_degree(self, v):
        if self.deg_tracking:
            return int(self.live_deg[v])
        return int(self.live_neighbors(v).size)

    def is_alive(self, v):
        return bool(self.alive[v])

    def has_edge(self, u, v):
        """True iff u and v are both live and adjacent."""
        if not (self.alive[u] and self.alive[v]):
            return False
        a = self.adjacency(u)
        i = int(np.searchsorted(a, v))
        return i < a.size and int(a[i]) == v

    def live_vertices(self):
        """Sorted array of live vertex ids."""
        return np.flatnonzero(self.alive[: self.capacity]).astype(np.int64)

    def n_live(self):
        return int(np.count_nonzero(self.alive[: self.capacity]))

    def gather_adjacency(self, verts):
        """Concatenated raw adjacency of `verts` without a Python loop.

        Returns (seg, dst): dst is the concatenation of the adjacency
        slices, seg[i] is the index into `verts` owning dst[i].
        """
        verts = np.asarray(verts, dtype=np.int64)
        lens = self.adj_len[verts].astype(np.int64)
        total = int(lens.sum())
        if total == 0:
            return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int32))
        seg = np.repeat(np.arange(verts.size, dtype=np.int64), lens)
        starts = self.adj_off[verts]
        cum = np.zeros(verts.size, dtype=np.int64)
        np.cumsum(lens[:-1], out=cum[1:])
        idx = np.arange(total, dtype=np.int64) - np.repeat(cum, lens) \
            + np.repeat(starts, lens)
        return seg, self.pool[idx]

    def live_edge_array(self):
        """All live edges as an (m, 2) int64 array with u < v."""
        live = self.live_vertices()
        if live.size == 0:
            return np.empty((0, 2), dtype=np.int64)
        seg, dst = self.gather_adjacency(live)
        src = live[seg]
        keep = (self.alive[dst] == 1) & (dst > src)
        return np.stack([src[keep], dst[keep].astype(np.int64)], axis=1)

    # ------------------------------------------------------------------
    # mutation

    def hide_vertex(self, v):
        """Hide a live vertex. Neighbor adjacency lists are left untouched."""
        if not self.alive[v]:
            raise UsageError(f"vertex {v} is already hidden")
        if self.deg_tracking:
            nb = self.live_neighbors(v)
            self.alive[v] = 0
            if nb.size:
                self.live_deg[nb] -= 1
        else:
            self.alive[v] = 0

    def hide_flag_only(self, v):
        """Clear the liveness flag without degree bookkeeping.

        A single byte store, so concurrent readers in other blocks see
        either the old or the new value.
        """
        self.alive[v] = 0

    def _append_slice(self, arr):
        need = self.pool_used + arr.size
        if need > self.pool.size:
            new_size = max(need, self.pool.size * 2)
            self.pool = np.concatenate(
                [self.pool[: self.pool_used],
                 np.empty(new_size - self.pool_used, dtype=np.int32)]
            )
        off = self.pool_used
        self.pool[off : off + arr.size] = arr
        self.pool_used = off + arr.size
        return off

    def _set_adjacency(self, v, sorted_arr):
        # Write the new slice first, then repoint length and offset, so a
        # racing reader of v sees a consistent (old or new) list.
        off = self._append_slice(sorted_arr)
        self.adj_len[v] = sorted_arr.size
        self.adj_off[v] = off
        if self.track_patches:
            self.patched.add(int(v))

    def _insert_entry(self, u, v):
        """Insert v into u's sorted adjacency slice (u's list only)."""
        a = self.adjacency(u)
        i = int(np.searchsorted(a, v))
        if i < a.size and int(a[i]) == v:
            return False
        self._set_adjacency(u, np.insert(a, i, np.int32(v)))
        return True

    def _remove_entry(self, u, v):
        a = self.adjacency(u)
        i = int(np.searchsorted(a, v))
        if i < a.size and int(a[i]) == v:
            self._set_adjacency(u, np.delete(a, i))
            return True
        return False

    def grow_arrays(self, need_capacity):
        """Ensure backing arrays cover ids below need_capacity (all dead)."""
        if need_capacity <= self.alive.size:
            self.capacity = max(self.capacity, need_capacity)
            return
        new_size = max(need_capacity, self.alive.size * 2, 16)
        grow = new_size - self.alive.size
        self.adj_off = np.concatenate([self.adj_off, np.zeros(grow, dtype=np.int64)])
        self.adj_len = np.concatenate([self.adj_len, np.zeros(grow, dtype=np.int32)])
        self.alive = np.concatenate([self.alive, np.zeros(grow, dtype=np.uint8)])
        self.live_deg = np.concatenate([self.live_deg, np.zeros(grow, dtype=np.int32)])
        self.capacity = need_capacity

    def set_gadget_range(self, start, end):
        """Allocate future gadget ids from [start, end) (parallel workers)."""
        self._gadget_range = (start, end)

    def add_gadget_vertex(self, neighbors):
        """Insert a fresh vertex adjacent to the given live vertices.

        Returns the new id, strictly greater than every id allocated
        before it by this owner.
        """
        nbrs = np.asarray(sorted(set(int(x) for x in neighbors)), dtype=np.int32)
        if nbrs.size and not np.all(self.alive[nbrs] == 1):
            raise UsageError("gadget neighbors must be alive")
        if self._gadget_range is not None:
            w, end = self._gadget_range
            if w >= end:
                raise UsageError("gadget id range exhausted")
            self._gadget_range = (w + 1, end)
        else:
            w = self.capacity
            self.grow_arrays(w + 1)
        self.alive[w] = 1
        self._set_adjacency(w, nbrs)
        self.live_deg[w] = nbrs.size
        for u in nbrs:
            self._insert_entry(int(u), w)
            if self.deg_tracking:
                self.live_deg[u] += 1
        return int(w)

    def rewrite_neighborhood(self, v, new_neighbors, validate=True):
        """Replace v's neighborhood, repairing symmetry on both sides.

        Only live counterpart lists are touched; stale entries of v inside
        hidden vertices' lists are left to compaction. `validate=False`
        skips the aliveness precondition check: block workers pass
        neighbor sets snapshotted moments earlier, and a concurrent
        liveness clear in another block must not abort the rewrite (the
        entry simply stays as a lazily-deleted one).
        """
        if not self.alive[v]:
            raise UsageError(f"vertex {v} is hidden")
        new = np.asarray(sorted(set(int(x) for x in new_neighbors)), dtype=np.int32)
        if new.size and (new == v).any():
            raise UsageError("rewrite would create a self-loop")
        if validate and new.size and not np.all(self.alive[new] == 1):
            raise UsageError("rewrite neighbors must be alive")
        old = self.adjacency(v).copy()
        old_live = old[self.alive[old] == 1]
        removed = np.setdiff1d(old_live, new, assume_unique=True)
        added = np.setdiff1d(new, old, assume_unique=True)
        self._set_adjacency(v, new)
        for u in removed:
            self._remove_entry(int(u), v)
            if self.deg_tracking:
                self.live_deg[u] -= 1
        for u in added:
            self._insert_entry(int(u), v)
            if self.deg_tracking:
                self.live_deg[u] += 1
        if self.deg_tracking:
            self.live_deg[v] = int(np.count_nonzero(self.alive[new] == 1)) if new.size else 0

    # ------------------------------------------------------------------
    # compaction

    def compact(self):
        """Return (new_graph, old_to_new) keeping exactly the live vertices.

        old_to_new is an int64 array over the old id space with -1 for
        hidden vertices; live ids are renumbered densely preserving order.
        """
        live = self.live_vertices()
        old_to_new = np.full(self.capacity, -1, dtype=np.int64)
        old_to_new[live] = np.arange(live.size, dtype=np.int64)
        n = int(live.size)
        seg, dst = self.gather_adjacency(live) if n else \
            (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int32))
        keep = self.alive[dst] == 1 if dst.size else np.empty(0, dtype=bool)
        seg = seg[keep]
        dst_new = old_to_new[dst[keep]].astype(np.int32)
        lens = np.bincount(seg, minlength=n).astype(np.int64) if n else \
            np.zeros(0, dtype=np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(lens, out=indptr[1:])
        pool = np.empty(max(int(indptr[-1]), 16), dtype=np.int32)
        pool[: indptr[-1]] = dst_new
        g = Graph(
            n_input=n,
            capacity=n,
            pool=pool,
            pool_used=int(indptr[-1]),
            adj_off=indptr[:-1].copy(),
            adj_len=lens.astype(np.int32),
            alive=np.ones(n, dtype=np.uint8),
            live_deg=lens.astype(np.int32),
        )
        return g, old_to_new

    def copy(self):
        g = Graph(
            n_input=self.n_input,
            capacity=self.capacity,
            pool=self.pool[: self.pool_used].copy(),
            pool_used=self.pool_used,
            adj_off=self.adj_off.copy(),
            adj_len=self.adj_len.copy(),
            alive=self.alive.copy(),
            live_deg=self.live_deg.copy(),
        )
        g.deg_tracking = self.deg_tracking
        return g

    # ------------------------------------------------------------------
    # bookkeeping for the parallel phase

    def rebuild_live_degrees(self):
        """Recompute live_deg from scratch (used at phase barriers)."""
        self.live_deg[: self.capacity] = 0
        live = self.live_vertices()
        if live.size == 0:
            return
        seg, dst = self.gather_adjacency(live)
        keep = self.alive[dst] == 1
        counts = np.bincount(seg[keep], minlength=live.size)
        self.live_deg[live] = counts.astype(np.int32)

    def collect_patches(self):
        return {v: self.adjacency(v).copy() for v in self.patched}

    def apply_patches(self, patches):
        for v, arr in patches.items():
            self._set_adjacency(int(v), np.asarray(arr, dtype=np.int32))

    # ------------------------------------------------------------------
    # debug checks

    def check(self):
        """Validate structural invariants. Raises AssertionError on failure."""
        for v in range(self.capacity):
            a = self.adjacency(v)
            if a.size:
                assert np.all(np.diff(a) > 0), f"adjacency of {v} unsorted/duplicated"
                assert not np.any(a == v), f"self-loop at {v}"
        for v in self.live_vertices():
            v = int(v)
            nb = self.live_neighbors(v)
            if self.deg_tracking:
                assert self.live_degree(v) == nb.size, f"stale live_deg at {v}"
            for u in nb:
                assert self.has_edge(int(u), v), f"asymmetric edge {v}-{u}"
        return True


def build_graph(n, edges):
    """Module-level constructor mirroring Graph.from_edges."""
    return Graph.from_edges(n, edges)
