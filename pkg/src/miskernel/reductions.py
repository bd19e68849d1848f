"""Local reduction rules with their blockwise safety guards.

Every rule hides vertices (liveness flags only), appends one undo record,
and bumps the committed-solution offset where it commits vertices. In
blockwise mode a rule only fires when its reads and writes stay inside
the owning block, except that liveness flags of other blocks' vertices
may be read (a racy read can only show a dead vertex as still alive,
which makes every guard conservative, never wrong).

Writes are owner-only: a rule invoked for block i never hides or rewrites
a vertex outside block i. This is slightly stricter than strictly
necessary for the degree-one rule, which consequently skips pendants
whose support vertex lives in another block.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .records import (
    GLOBAL,
    DegreeOne,
    DegreeZero,
    Diamond,
    Fold,
    IsolatedClique,
    PathContraction,
    SegmentWriter,
    TwinFolded,
    TwinIncluded,
    Unconfined,
)


class OffsetCounter:
    """Count of solution vertices already committed by applied reductions."""

    __slots__ = ("offset",)

    def __init__(self, offset=0):
        self.offset = int(offset)

    def add(self, n):
        self.offset += int(n)

    def __int__(self):
        return self.offset

    def __repr__(self):
        return f"OffsetCounter({self.offset})"


@dataclass
class ConfinementState:
    """Final confining set of a vertex that survived the unconfined test."""

    v: int
    S: set
    block: int  # GLOBAL in sequential mode
    trace: list  # growth steps [(u, w), ...] for certificate checking


@dataclass
class RuleContext:
    """Shared state threaded through the rule functions."""

    g: object
    writer: SegmentWriter
    offset: OffsetCounter
    cand: object = None          # CandidateSet or None
    partition: object = None     # None in GLOBAL mode
    boundary: object = None
    stats: dict = field(default_factory=dict)
    isolated_cap: int = 2        # max |N(v)| for the isolated-vertex rule
    diamond_cap: int = 64        # max |N(S)| scanned by the diamond rule
    validate_writes: bool = True  # off inside parallel workers (racy reads)

    def count(self, rule, removed):
        self.stats[rule] = self.stats.get(rule, 0) + removed

    def push(self, v):
        if self.cand is not None and self.g.alive[v]:
            block = GLOBAL if self.partition is None \
                else int(self.partition.block_of[v])
            self.cand.push(int(v), block)

    def push_neighbors_of_removed(self, removed):
        if self.cand is None:
            return
        g = self.g
        for r in removed:
            for x in g.live_neighbors(int(r)):
                self.push(int(x))


def _hide(ctx, v):
    ctx.g.hide_vertex(int(v))


# ----------------------------------------------------------------------
# degree zero / one


def reduce_degree_zero_one(ctx, v, block=GLOBAL):
    """Commit isolated vertices; commit pendants and hide their support.

    Blockwise, the support vertex must belong to the same block: hiding it
    would otherwise write another block's liveness state and two blocks
    could commit the two endpoints of a shared edge.
    """
    g = ctx.g
    if not g.alive[v]:
        return 0
    nb = g.live_neighbors(v)
    if nb.size > 1:
        return 0
    if nb.size == 0:
        ctx.writer.append(DegreeZero(int(v)))
        _hide(ctx, v)
        ctx.offset.add(1)
        ctx.count("degree_zero", 1)
        return 1
    u = int(nb[0])
    if block != GLOBAL and int(ctx.partition.block_of[u]) != block:
        return 0
    ctx.writer.append(DegreeOne(int(v), u))
    _hide(ctx, v)
    _hide(ctx, u)
    ctx.offset.add(1)
    ctx.count("degree_one", 2)
    ctx.push_neighbors_of_removed([u])
    return 2


# ----------------------------------------------------------------------
# isolated vertex (simplicial) removal


def _is_clique(g, verts):
    for i in range(len(verts)):
        for j in range(i + 1, len(verts)):
            if not g.has_edge(int(verts[i]), int(verts[j])):
                return False
    return True


def reduce_isolated_clique(ctx, v, block=GLOBAL):
    """Commit v when N[v] is a clique of at most isolated_cap+1 vertices.

    Blockwise, v must not be a boundary vertex; the removed neighbors may
    be, since only their liveness flags change.
    """
    g = ctx.g
    if not g.alive[v]:
        return 0
    if block != GLOBAL and ctx.boundary.b0[v]:
        return 0
    nb = g.live_neighbors(v)
    if nb.size > ctx.isolated_cap:
        return 0
    if not _is_clique(g, nb):
        return 0
    ctx.writer.append(IsolatedClique(int(v), tuple(int(x) for x in nb)))
    _hide(ctx, v)
    for u in nb:
        _hide(ctx, u)
    ctx.offset.add(1)
    removed = 1 + int(nb.size)
    ctx.count("isolated_clique", removed)
    ctx.push_neighbors_of_removed(nb)
    return removed


# ----------------------------------------------------------------------
# vertex folding


def reduce_fold(ctx, v, block=GLOBAL):
    """Contract degree-two v with nonadjacent neighbors u, w.

    Interior case folds onto v's slot; when exactly one neighbor is a
    boundary vertex that neighbor survives so no other block's adjacency
    needs rewriting; when both neighbors are boundary vertices the fold is
    skipped rather than locked.
    """
    g = ctx.g
    if not g.alive[v]:
        return 0
    nb = g.live_neighbors(v)
    if nb.size != 2:
        return 0
    u, w = int(nb[0]), int(nb[1])
    if g.has_edge(u, w):
        return 0
    if block == GLOBAL:
        slot = int(v)
    else:
        bo = ctx.partition.block_of
        if int(bo[u]) != block or int(bo[w]) != block:
            return 0
        b0u = bool(ctx.boundary.b0[u])
        b0w = bool(ctx.boundary.b0[w])
        if b0u and b0w:
            return 0
        slot = int(v) if not (b0u or b0w) else (u if b0u else w)

    nu = g.live_neighbors(u)
    nw = g.live_neighbors(w)
    merged = (set(int(x) for x in nu) | set(int(x) for x in nw)) \
        - {int(v), u, w}
    ctx.writer.append(Fold(int(v), u, w, slot,
                           tuple(int(x) for x in nu),
                           tuple(int(x) for x in nw)))
    for x in (int(v), u, w):
        if x != slot:
            _hide(ctx, x)
    g.rewrite_neighborhood(slot, sorted(merged), validate=ctx.validate_writes)
    ctx.offset.add(1)
    ctx.count("fold", 2)
    if ctx.cand is not None:
        ctx.push(slot)
        for x in merged:
            ctx.push(x)
    return 2


# ----------------------------------------------------------------------
# twin


def reduce_twin(ctx, u, block=GLOBAL):
    """Apply the twin reduction at a degree-three vertex u.

    Searches for a nonadjacent v with N(v) = N(u). If the shared
    neighborhood has an edge both twins are committed; otherwise the five
    vertices are replaced by a gadget adjacent to u's two-neighborhood,
    deferring the choice to undo time.
    """
    g = ctx.g
    if not g.alive[u]:
        return 0
    nb = g.live_neighbors(u)
    if nb.size != 3:
        return 0
    a, b, c = (int(x) for x in nb)
    if block != GLOBAL:
        bo = ctx.partition.block_of
        if int(bo[a]) != block or int(bo[b]) != block or int(bo[c]) != block:
            return 0
    shared = {a, b, c}
    twin = -1
    for x in g.live_neighbors(a):
        x = int(x)
        if x == u or x in shared:
            continue
        nx = g.live_neighbors(x)
        if nx.size == 3 and {int(y) for y in nx} == shared:
            twin = x
            break
    if twin < 0:
        return 0
    v = twin
    # The twin itself must be owned by this block: all its neighbors are,
    # but the vertex can still sit across the cut.
    if block != GLOBAL and int(ctx.partition.block_of[v]) != block:
        return 0

    has_inner_edge = g.has_edge(a, b) or g.has_edge(a, c) or g.has_edge(b, c)
    if has_inner_edge:
        ctx.writer.append(TwinIncluded(int(u), v, (a, b, c)))
        for x in (int(u), v, a, b, c):
            _hide(ctx, x)
        ctx.offset.add(2)
        ctx.count("twin_included", 5)
        ctx.push_neighbors_of_removed([a, b, c])
        return 5

    two_nbhd = set()
    for x in (a, b, c):
        for y in g.live_neighbors(x):
            two_nbhd.add(int(y))
    two_nbhd -= {int(u), v}
    if block != GLOBAL:
        bo = ctx.partition.block_of
        for x in two_nbhd:
            if int(bo[x]) != block:
                return 0
    for x in (int(u), v, a, b, c):
        _hide(ctx, x)
    gadget = g.add_gadget_vertex(sorted(two_nbhd))
    if ctx.partition is not None:
        ctx.partition.grow(g.capacity)
        ctx.partition.block_of[gadget] = block
    if ctx.boundary is not None:
        ctx.boundary.grow(g.capacity)
    if ctx.cand is not None:
        ctx.cand.grow(g.capacity)
    ctx.writer.append(TwinFolded(int(u), v, (a, b, c), gadget,
                                 tuple(sorted(two_nbhd))))
    ctx.offset.add(2)
    # Net removal: five hidden, one gadget inserted.
    ctx.count("twin_folded", 4)
    ctx.stats["gadgets"] = ctx.stats.get("gadgets", 0) + 1
    if ctx.cand is not None:
        ctx.push(gadget)
        for x in two_nbhd:
            ctx.push(x)
    return 5


# ----------------------------------------------------------------------
# unconfined / diamond


def reduce_unconfined(ctx, v, block=GLOBAL):
    """Run the confining-set loop for v.

    Returns (removed_count, state): (1, None) when v was unconfined and
    hidden, (0, ConfinementState) when the loop terminated with v
    confined, and (0, None) for a dead vertex. Blockwise, both the pivot
    u and any vertex added to S must belong to the block; this can only
    misclassify unconfined vertices as confined, never the reverse.
    """
    g = ctx.g
    if not g.alive[v]:
        return 0, None
    v = int(v)
    bo = ctx.partition.block_of if block != GLOBAL else None
    S = {v}
    ns = set(int(x) for x in g.live_neighbors(v))
    closed = ns | S
    trace = []
    while True:
        best_u = -1
        best_resid = None
        for u in sorted(ns):
            if not g.alive[u]:
                continue
            if bo is not None and int(bo[u]) != block:
                continue
            nu = g.live_neighbors(u)
            in_s = 0
            resid = []
            for x in nu:
                x = int(x)
                if x in S:
                    in_s += 1
                    if in_s > 1:
                        break
                elif x not in closed:
                    resid.append(x)
            if in_s != 1:
                continue
            if best_resid is None or len(resid) < len(best_resid):
                best_u = u
                best_resid = resid
                if not resid:
                    break
        if best_u < 0:
            return 0, ConfinementState(v=v, S=S, block=block, trace=trace)
        if len(best_resid) == 0:
            ctx.writer.append(Unconfined(v))
            nb = g.live_neighbors(v)
            _hide(ctx, v)
            ctx.count("unconfined", 1)
            if ctx.cand is not None:
                for x in nb:
                    ctx.push(int(x))
            return 1, None
        if len(best_resid) == 1:
            w = best_resid[0]
            if bo is not None and int(bo[w]) != block:
                return 0, ConfinementState(v=v, S=S, block=block, trace=trace)
            trace.append((best_u, w))
            S.add(w)
            closed.add(w)
            ns.discard(w)
            for x in g.live_neighbors(w):
                x = int(x)
                if x not in S:
                    ns.add(x)
                    closed.add(x)
            continue
        return 0, ConfinementState(v=v, S=S, block=block, trace=trace)


def check_unconfined_certificate(g, v, trace):
    """Re-validate a recorded confining-set growth without block limits.

    Each recorded step (u, w) must satisfy |N(u) ∩ S| = 1 and
    N(u) \\ N[S] = {w} against the full graph; the final state must admit
    a witness u with empty residual. Used to confirm the one-sided error
    claim of the blockwise unconfined test.
    """
    v = int(v)
    S = {v}
    closed = S | {int(x) for x in g.live_neighbors(v)}
    for u, w in trace:
        nu = [int(x) for x in g.live_neighbors(int(u))]
        if sum(1 for x in nu if x in S) != 1:
            return False
        resid = [x for x in nu if x not in closed]
        if resid != [int(w)]:
            return False
        S.add(int(w))
        closed.add(int(w))
        for x in g.live_neighbors(int(w)):
            closed.add(int(x))
    ns = set()
    for s in S:
        for x in g.live_neighbors(s):
            x = int(x)
            if x not in S:
                ns.add(x)
    for u in ns:
        nu = [int(x) for x in g.live_neighbors(u)]
        if sum(1 for x in nu if x in S) != 1:
            continue
        if all(x in closed for x in nu):
            return True
    return False


def reduce_diamond(ctx, v, state, block=GLOBAL):
    """Try the diamond extension on a confined vertex with final set S.

    Looks for nonadjacent u1, u2 in N(S) whose neighborhoods outside N(S)
    are the same pair {v1, v2}; the pair must lie inside S (mandatory in
    blockwise mode, kept in sequential mode for uniformity). Blockwise the
    candidates u1, u2 are further restricted to the block so no other
    block's adjacency lists are read while they may be rewritten.
    """
    g = ctx.g
    if state is None or not g.alive[v]:
        return 0
    v = int(v)
    S = state.S
    bo = ctx.partition.block_of if block != GLOBAL else None
    ns = set()
    for s in S:
        if not g.alive[s]:
            continue
        for x in g.live_neighbors(s):
            x = int(x)
            if x not in S:
                ns.add(x)
    cands = []
    for u in sorted(ns):
        if not g.alive[u]:
            continue
        if bo is not None and int(bo[u]) != block:
            continue
        cands.append(u)
    if len(cands) > ctx.diamond_cap:
        return 0
    by_pair = {}
    for u in cands:
        resid = [int(x) for x in g.live_neighbors(u) if int(x) not in ns]
        if len(resid) != 2:
            continue
        pair = (min(resid), max(resid))
        if pair[0] not in S or pair[1] not in S:
            continue
        by_pair.setdefault(pair, []).append(u)
    for pair, members in sorted(by_pair.items()):
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                if not g.has_edge(members[i], members[j]):
                    ctx.writer.append(Diamond(v))
                    nb = g.live_neighbors(v)
                    _hide(ctx, v)
                    ctx.count("diamond", 1)
                    if ctx.cand is not None:
                        for x in nb:
                            ctx.push(int(x))
                    return 1
    return 0


# ----------------------------------------------------------------------
# degree-two path preprocessing (LinearTime-style)


def _collect_cycle(g, v):
    """If v lies on a cycle whose vertices all have live degree 2, return
    the cycle in order, else None."""
    nb = g.live_neighbors(v)
    if nb.size != 2:
        return None
    order = [int(v)]
    prev = int(v)
    cur = int(nb[0])
    while True:
        cnb = g.live_neighbors(cur)
        if cnb.size != 2:
            return None
        order.append(cur)
        nxt = int(cnb[0]) if int(cnb[1]) == prev else int(cnb[1])
        if nxt == order[0]:
            return order
        prev, cur = cur, nxt


def reduce_degree_two_paths(g, writer, offset, cand=None, stats=None):
    """Exhaustive global pass removing degree <= 1 vertices and contracting
    maximal degree-two paths.

    Pure cycles of degree-two vertices are committed in one shot
    (alternating vertices, floor(L/2) of them); chains are consumed by
    repeated folding, with triangle endpoints handled by the simplicial
    rule and cascading degree-0/1 cleanups. Runs sequentially before
    partitioning. Returns the number of vertices removed.
    """
    ctx = RuleContext(g=g, writer=writer, offset=offset, cand=cand,
                      stats=stats if stats is not None else {})
    removed = 0
    live = g.live_vertices()
    deg = g.live_deg[live]
    seeds = live[deg <= 2]
    queue = deque(int(x) for x in seeds)
    inq = np.zeros(g.capacity, dtype=np.uint8)
    inq[seeds] = 1

    def push_local(x):
        x = int(x)
        if x < inq.size and not inq[x] and g.alive[x] and g.live_degree(x) <= 2:
            inq[x] = 1
            queue.append(x)

    while queue:
        v = queue.popleft()
        if v < inq.size:
            inq[v] = 0
        if not g.alive[v]:
            continue
        d = g.live_degree(v)
        if d > 2:
            continue
        if d <= 1:
            before = [int(x) for x in g.live_neighbors(v)]
            nbrs_of_support = []
            if d == 1:
                nbrs_of_support = [int(x) for x in g.live_neighbors(before[0])]
            r = reduce_degree_zero_one(ctx, v, GLOBAL)
            removed += r
            for x in nbrs_of_support:
                push_local(x)
            continue
        cycle = _collect_cycle(g, v)
        if cycle is not None:
            length = len(cycle)
            take = length // 2
            chosen = tuple(cycle[2 * i] for i in range(take))
            writer.append(PathContraction("cycle", tuple(cycle), chosen))
            for x in cycle:
                g.hide_vertex(x)
            offset.add(take)
            ctx.count("path_cycle", length)
            removed += length
            continue
        nb = [int(x) for x in g.live_neighbors(v)]
        u, w = nb
        if g.has_edge(u, w):
            aff = set(int(x) for x in g.live_neighbors(u)) \
                | set(int(x) for x in g.live_neighbors(w))
            r = reduce_isolated_clique(ctx, v, GLOBAL)
            removed += r
            if r:
                for x in aff:
                    push_local(x)
            continue
        slot_neighbors_before = set(int(x) for x in g.live_neighbors(u)) \
            | set(int(x) for x in g.live_neighbors(w))
        r = reduce_fold(ctx, v, GLOBAL)
        removed += r
        if r:
            push_local(v)  # the fold site keeps v's slot
            for x in slot_neighbors_before:
                push_local(x)
    if stats is not None:
        for k, x in ctx.stats.items():
            if k not in stats:
                stats[k] = x
    return removed


# ----------------------------------------------------------------------
# block driver


@dataclass
class BlockStats:
    removed: int = 0
    attempts: int = 0
    stopped: bool = False


RULE_ORDER = ("degree_zero_one", "isolated_clique", "fold", "twin")


def process_block(ctx, block, block_vertices, stop, rules=None,
                  run_unconfined=True, run_diamond=True):
    """Drain the candidate queue of one block, then sweep unconfined and
    diamond over the block's live vertices, then drain again.

    Only liveness flags of this block's vertices are written; pushes to
    other blocks' queues go through the CandidateSet and are routed by the
    caller in parallel mode.
    """
    g = ctx.g
    cand = ctx.cand
    enabled = set(rules if rules is not None else RULE_ORDER)
    bs = BlockStats()

    def drain():
        while True:
            if stop is not None and stop.raised:
                bs.stopped = True
                return
            v = cand.pop(block)
            if v < 0:
                return
            if not g.alive[v]:
                continue
            bs.attempts += 1
            if "degree_zero_one" in enabled:
                r = reduce_degree_zero_one(ctx, v, block)
                if r:
                    bs.removed += r
                    continue
            if "isolated_clique" in enabled:
                r = reduce_isolated_clique(ctx, v, block)
                if r:
                    bs.removed += r
                    continue
            if "fold" in enabled:
                r = reduce_fold(ctx, v, block)
                if r:
                    bs.removed += r
                    continue
            if "twin" in enabled:
                r = reduce_twin(ctx, v, block)
                if r:
                    bs.removed += r
                    continue

    drain()
    if bs.stopped or not (run_unconfined or run_diamond):
        return bs

    for v in block_vertices:
        if stop is not None and stop.raised:
            bs.stopped = True
            break
        v = int(v)
        if not g.alive[v]:
            continue
        if run_unconfined:
            r, state = reduce_unconfined(ctx, v, block)
            if r:
                bs.removed += r
                continue
        else:
            state = None
        if run_diamond and state is not None:
            r = reduce_diamond(ctx, v, state, block)
            bs.removed += r

    if not bs.stopped:
        drain()
    return bs
