"""Top-level kernelization driver.

Pipeline: degree-two-path preprocessing (global, sequential), compaction,
partitioning, then rounds of blockwise local reductions (parallel across
blocks, with reduction tracking) alternated with the global LP reduction
until a round removes nothing. Full mode finishes with an exhaustive
sequential pass so no rule in the suite can fire on the result.

Parallelism uses forked worker processes sharing the liveness flags
through shared memory; all other mutations are block-local and merged at
the phase barrier, so undo correctness never depends on the relative
order of different blocks' log segments.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, replace
from multiprocessing import get_context
from multiprocessing import shared_memory

import numpy as np

from .candidates import CandidateSet, StopSignal
from .errors import MalformedInputError, UsageError
from .graph import Graph
from .lp import apply_lp, augment_to_maximum, build_bi_double, karp_sipser, \
    reuse_matching, alternating_reachability, extract_half_integral
from .partition import Partition, boundary_sets, cut_edge_count, \
    load_partition, partition_internal, refresh_boundary
from .records import GLOBAL, Relabel, ReductionLog, SegmentWriter
from .reductions import OffsetCounter, RuleContext, check_unconfined_certificate, \
    process_block, reduce_degree_two_paths
from .restore import IndependentSet, undo_all
from .stats import RunStats

_FORK = get_context("fork")


@dataclass
class KernelizerConfig:
    workers: int = 1
    blocks: int = None  # defaults to workers
    mode: str = "quasi"  # "quasi" or "full"
    seed: int = 0
    tracking: bool = True
    tracking_threshold: float = 0.05
    sample_interval: float = 0.010  # seconds
    partition_source: str = "internal"  # "internal" or a partition file path
    partition_epsilon: float = 0.1
    enable_deg2_paths: bool = True
    enable_degree_zero_one: bool = True
    enable_isolated_clique: bool = True
    enable_fold: bool = True
    enable_twin: bool = True
    enable_unconfined: bool = True
    enable_diamond: bool = True
    enable_lp: bool = True
    isolated_cap: int = 2
    diamond_cap: int = 64
    verify_unconfined: bool = False
    max_rounds: int = 0  # 0 = unlimited

    def __post_init__(self):
        if self.workers < 1:
            raise UsageError("workers must be at least 1")
        if not (0.0 < self.tracking_threshold < 1.0):
            raise UsageError("tracking threshold must be in (0, 1)")
        if self.mode not in ("quasi", "full"):
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.blocks is None:
            self.blocks = self.workers
        if self.blocks < 1:
            raise UsageError("blocks must be at least 1")

    def local_rules(self):
        rules = []
        if self.enable_degree_zero_one:
            rules.append("degree_zero_one")
        if self.enable_isolated_clique:
            rules.append("isolated_clique")
        if self.enable_fold:
            rules.append("fold")
        if self.enable_twin:
            rules.append("twin")
        return tuple(rules)


@dataclass
class KernelResult:
    kernel: Graph
    vertex_map: np.ndarray  # kernel id -> original id
    offset: int
    log: ReductionLog
    stats: RunStats
    is_quasi: bool

    def lift(self, kernel_is):
        """Lift an independent set of the kernel to the original graph."""
        return undo_all(self.log, kernel_is, kernel_graph=self.kernel)


# ----------------------------------------------------------------------
# reduction tracking


def track_reductions(samples, threshold):
    """Decide the first sample index at which to stop local reductions.

    samples: list of (time, live_size); samples[0] is the phase start.
    Triggers at index i when the removal rate over the last interval drops
    below threshold times the average rate since phase start. Never fires
    before two post-start samples exist. Returns the index or None.
    """
    for i in range(2, len(samples)):
        t0, s0 = samples[0]
        t_prev, s_prev = samples[i - 1]
        t_i, s_i = samples[i]
        dt_last = t_i - t_prev
        dt_all = t_i - t0
        if dt_last <= 0 or dt_all <= 0:
            continue
        last_rate = (s_prev - s_i) / dt_last
        avg_rate = (s0 - s_i) / dt_all
        if last_rate < threshold * avg_rate:
            return i
    return None


class _TrackingMonitor:
    """Samples the live-vertex count on a dedicated thread and raises the
    stop signal when the tracking rule fires."""

    def __init__(self, count_fn, stop, cfg, trace, trace_t0, start_gate=None):
        self.count_fn = count_fn
        self.stop = stop
        self.cfg = cfg
        self.trace = trace
        self.trace_t0 = trace_t0
        self.start_gate = start_gate  # callable; sampling waits until true
        self.samples = []
        self._done = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)

    def start(self):
        self._thread.start()

    def finish(self):
        self._done.set()
        self._thread.join()

    def _run(self):
        interval = self.cfg.sample_interval
        if self.start_gate is not None:
            while not self._done.is_set() and not self.start_gate():
                if self._done.wait(interval / 4 if interval > 0 else 0.001):
                    return
        self.samples.append((time.perf_counter(), self.count_fn()))
        while not self._done.wait(interval):
            now = time.perf_counter()
            size = self.count_fn()
            self.samples.append((now, size))
            self.trace.append((now - self.trace_t0, size))
            if track_reductions(self.samples, self.cfg.tracking_threshold) is not None:
                self.stop.raise_("tracking")
                return


# ----------------------------------------------------------------------
# local phase: sequential


def _block_members(g, partition, k):
    """Live vertices grouped by block, each group sorted ascending."""
    live = g.live_vertices()
    if live.size == 0:
        return [np.empty(0, dtype=np.int64) for _ in range(k)]
    blocks = partition.block_of[live]
    order = np.argsort(blocks, kind="stable")
    live_sorted = live[order]
    blocks_sorted = blocks[order]
    out = []
    for b in range(k):
        lo = int(np.searchsorted(blocks_sorted, b, side="left"))
        hi = int(np.searchsorted(blocks_sorted, b, side="right"))
        out.append(live_sorted[lo:hi])
    return out


def _certified_unconfined_guard(g, cfg):
    if not cfg.verify_unconfined:
        return None

    def check(v, trace):
        if not check_unconfined_certificate(g, v, trace):
            raise AssertionError(
                f"blockwise unconfined removal of {v} failed the "
                f"unrestricted certificate check")
    return check


def _run_local_sequential(g, partition, boundary, cand, log, offset, cfg,
                          stats, trace, trace_t0):
    """One pass over all blocks in block order, with tracking."""
    stop = StopSignal()
    monitor = None
    if cfg.tracking:
        monitor = _TrackingMonitor(g.n_live, stop, cfg, trace, trace_t0)
        monitor.start()
    members = _block_members(g, partition, partition.k)
    removed = 0
    rules = cfg.local_rules()
    before = offset.offset
    try:
        for b in range(partition.k):
            ctx = RuleContext(
                g=g, writer=SegmentWriter(b), offset=offset, cand=cand,
                partition=partition, boundary=boundary, stats=stats,
                isolated_cap=cfg.isolated_cap, diamond_cap=cfg.diamond_cap)
            bs = process_block(
                ctx, b, members[b], stop, rules=rules,
                run_unconfined=cfg.enable_unconfined,
                run_diamond=cfg.enable_diamond)
            log.add_writer(ctx.writer)
            removed += bs.removed
            if bs.stopped:
                break
    finally:
        if monitor is not None:
            monitor.finish()
    if stop.raised and stop.reason == "tracking":
        return removed, True
    return removed, False


# ----------------------------------------------------------------------
# local phase: parallel (forked block workers, shared liveness flags)


def _worker_main(g, partition, boundary, cfg, block_queue_data, members,
                 ranges, claim, done_flags, out_queue, stop_buf):
    """Entry point of one forked block worker."""
    try:
        g.deg_tracking = False
        g.track_patches = True
        g.patched = set()
        stop = StopSignal(stop_buf)
        rules = cfg.local_rules()
        results = []
        while True:
            with claim.get_lock():
                b = claim.value
                if b >= partition.k:
                    break
                claim.value = b + 1
            start, end = ranges[b]
            g.set_gadget_range(start, end)
            local_d = CandidateSet(g.capacity)
            for v in block_queue_data[b]:
                local_d.push(v, b)
            local_offset = OffsetCounter()
            local_stats = {}
            writer = SegmentWriter(b)
            ctx = RuleContext(
                g=g, writer=writer, offset=local_offset, cand=local_d,
                partition=partition, boundary=boundary, stats=local_stats,
                isolated_cap=cfg.isolated_cap, diamond_cap=cfg.diamond_cap,
                validate_writes=False,
                verify_unconfined=cfg.verify_unconfined)
            bs = process_block(
                ctx, b, members[b], stop, rules=rules,
                run_unconfined=cfg.enable_unconfined,
                run_diamond=cfg.enable_diamond)
            gadget_used = g._gadget_range[0] if g._gadget_range else start
            gadgets = list(range(start, gadget_used))
            pending = {blk: local_d.drain(blk) for blk in list(local_d.queues)}
            pending = {blk: vs for blk, vs in pending.items() if vs}
            results.append({
                "block": b,
                "segment": writer.seal(),
                "offset": local_offset.offset,
                "stats": local_stats,
                "patches": g.collect_patches(),
                "gadgets": gadgets,
                "pending": pending,
                "removed": bs.removed,
                "stopped": bs.stopped,
            })
            g.patched = set()
            done_flags[b] = 1
        out_queue.put(("ok", results))
    except BaseException as exc:  # ship the failure, never hang the parent
        out_queue.put(("error", repr(exc)))
        raise


def _run_local_parallel(g, partition, boundary, cand, log, offset, cfg,
                        stats, trace, trace_t0):
    """One parallel pass over all blocks.

    Liveness flags live in shared memory; each worker owns the blocks it
    claims, writes only their vertices, and ships adjacency patches, log
    segments, and candidate pushes back for a deterministic merge in
    block order.
    """
    k = partition.k
    live_counts = np.zeros(k, dtype=np.int64)
    members = _block_members(g, partition, k)
    for b in range(k):
        live_counts[b] = members[b].size

    # Reserve per-block gadget id ranges and pre-grow every array.
    reserves = live_counts // 4 + 8
    base = g.capacity
    starts = base + np.concatenate([[0], np.cumsum(reserves[:-1])])
    new_cap = int(base + reserves.sum())
    g.grow_arrays(new_cap)
    partition.grow(new_cap)
    boundary.grow(new_cap)
    cand.grow(new_cap)
    ranges = [(int(starts[b]), int(starts[b] + reserves[b])) for b in range(k)]

    # Shared state: liveness flags, stop flag, per-block done flags.
    shm_alive = shared_memory.SharedMemory(create=True, size=new_cap or 1)
    shm_misc = shared_memory.SharedMemory(create=True, size=k + 1)
    try:
        alive_shared = np.ndarray((new_cap,), dtype=np.uint8, buffer=shm_alive.buf)
        alive_shared[:] = g.alive[:new_cap]
        private_alive = g.alive
        g.alive = alive_shared
        misc = np.ndarray((k + 1,), dtype=np.uint8, buffer=shm_misc.buf)
        misc[:] = 0
        stop_buf = misc[:1]
        done_flags = misc[1:]
        stop = StopSignal(stop_buf)

        block_queue_data = {b: cand.drain(b) for b in range(k)}
        claim = _FORK.Value("l", 0)
        out_queue = _FORK.SimpleQueue()
        n_workers = min(cfg.workers, k)
        procs = [
            _FORK.Process(
                target=_worker_main,
                args=(g, partition, boundary, cfg, block_queue_data, members,
                      ranges, claim, done_flags, out_queue, stop_buf))
            for _ in range(n_workers)
        ]
        for p in procs:
            p.start()

        monitor = None
        if cfg.tracking:
            def count_live():
                return int(np.count_nonzero(alive_shared))

            def first_done():
                return bool(done_flags.any())
            monitor = _TrackingMonitor(count_live, stop, cfg, trace, trace_t0,
                                       start_gate=first_done)
            monitor.start()

        results = []
        for _ in procs:
            results.extend(out_queue.get())
        for p in procs:
            p.join()
        if monitor is not None:
            monitor.finish()
        failed = [p.exitcode for p in procs if p.exitcode]
        if failed:
            raise RuntimeError(f"block worker failed with exit codes {failed}")

        # Copy shared flags back into private storage.
        private_alive = np.empty(new_cap, dtype=np.uint8)
        private_alive[:] = alive_shared
        g.alive = private_alive
    finally:
        shm_alive.close()
        shm_alive.unlink()
        shm_misc.close()
        shm_misc.unlink()

    # Deterministic merge in block order.
    removed = 0
    stopped = False
    results.sort(key=lambda r: r["block"])
    for res in results:
        b = res["block"]
        log.add_segment(b, res["segment"])
        offset.add(res["offset"])
        removed += res["removed"]
        stopped = stopped or res["stopped"]
        for rule, cnt in res["stats"].items():
            stats[rule] = stats.get(rule, 0) + cnt
        g.apply_patches(res["patches"])
        for gid in res["gadgets"]:
            partition.block_of[gid] = b
    for res in results:
        for blk, vs in sorted(res["pending"].items()):
            for v in vs:
                if g.alive[v]:
                    cand.push(v, int(partition.block_of[v]))
    g.rebuild_live_degrees()
    return removed, stopped and stop.reason != "external"


# ----------------------------------------------------------------------
# driver


def _project_partition(part, old_to_new, capacity):
    block_new = np.full(capacity, -1, dtype=np.int32)
    olds = np.flatnonzero(old_to_new >= 0)
    block_new[old_to_new[olds]] = part.block_of[olds]
    return Partition(block_of=block_new, k=part.k)


def kernelize(g0, cfg=None):
    """Shrink g0 to a (quasi) kernel. Returns a KernelResult whose offset
    plus the MIS size of the kernel equals the MIS size of g0."""
    cfg = cfg if cfg is not None else KernelizerConfig()
    t_start = time.perf_counter()
    stats = RunStats(workers=cfg.workers, blocks=cfg.blocks)
    stats.n_original = g0.n_live()
    stats.m_original = int(g0.live_edge_array().shape[0])
    g = g0.copy()
    log = ReductionLog()
    offset = OffsetCounter()
    rule_stats = {}
    trace = stats.size_trace
    trace.append((0.0, stats.n_original))

    # Phase 1: global degree-two-path preprocessing.
    t0 = time.perf_counter()
    if cfg.enable_deg2_paths:
        writer = SegmentWriter(GLOBAL)
        reduce_degree_two_paths(g, writer, offset, stats=rule_stats)
        log.add_writer(writer)
    stats.phase_times["preprocess"] = time.perf_counter() - t0
    stats.n_after_preprocess = g.n_live()
    trace.append((time.perf_counter() - t_start, stats.n_after_preprocess))

    # Phase 2: compact and partition the compacted graph.
    t0 = time.perf_counter()
    g, old_to_new = g.compact()
    log.add_record(Relabel(tuple(int(x) for x in np.flatnonzero(old_to_new >= 0))))
    if cfg.partition_source == "internal":
        partition = partition_internal(g, cfg.blocks, cfg.seed,
                                       epsilon=cfg.partition_epsilon)
    else:
        raw = load_partition(cfg.partition_source, stats.n_original)
        raw.grow(old_to_new.size)
        partition = _project_partition(raw, old_to_new, g.capacity)
    boundary = boundary_sets(g, partition)
    stats.cut_edges = cut_edge_count(g, partition)
    stats.phase_times["partition"] = time.perf_counter() - t0

    # Phase 3: rounds of blockwise local reductions and the LP reduction.
    cand = CandidateSet(g.capacity)
    cand.seed(g.live_vertices(), partition.block_of)
    prev_matching = None
    t_local = 0.0
    t_lp = 0.0
    rounds = 0
    run_parallel = cfg.workers > 1
    while True:
        rounds += 1
        t0 = time.perf_counter()
        if run_parallel:
            removed_local, stopped = _run_local_parallel(
                g, partition, boundary, cand, log, offset, cfg, rule_stats,
                trace, t_start)
        else:
            removed_local, stopped = _run_local_sequential(
                g, partition, boundary, cand, log, offset, cfg, rule_stats,
                trace, t_start)
        if stopped:
            stats.tracking_stops += 1
        t_local += time.perf_counter() - t0
        trace.append((time.perf_counter() - t_start, g.n_live()))

        refresh_boundary(g, partition, boundary)

        removed_lp = 0
        if cfg.enable_lp:
            t0 = time.perf_counter()
            writer = SegmentWriter(GLOBAL)
            bd = build_bi_double(g)
            m = reuse_matching(prev_matching, g) if prev_matching is not None \
                else karp_sipser(bd, seed=cfg.seed)
            m = augment_to_maximum(bd, m, workers=cfg.workers)
            marks = alternating_reachability(bd, m)
            x = extract_half_integral(g, marks)
            removed_lp = apply_lp(g, x, writer, offset, cand=cand,
                                  partition=partition, stats=rule_stats)
            log.add_writer(writer)
            prev_matching = m
            t_lp += time.perf_counter() - t0
            trace.append((time.perf_counter() - t_start, g.n_live()))
        if removed_lp:
            refresh_boundary(g, partition, boundary)

        if removed_local + removed_lp == 0:
            break
        if cfg.max_rounds and rounds >= cfg.max_rounds:
            break
    stats.phase_times["local_rounds"] = t_local
    stats.phase_times["lp_rounds"] = t_lp
    stats.rounds = rounds
    is_quasi = True

    # Phase 4 (full mode): exhaustive sequential finish, tracking off.
    t0 = time.perf_counter()
    if cfg.mode == "full":
        finish_full_kernel(g, log, offset, cfg, rule_stats)
        is_quasi = False
    stats.phase_times["finish"] = time.perf_counter() - t0

    # Final compaction.
    kernel, old_to_new2 = g.compact()
    log.add_record(Relabel(tuple(int(x) for x in np.flatnonzero(old_to_new2 >= 0))))
    mid_ids = np.flatnonzero(old_to_new2 >= 0)
    orig_ids = np.flatnonzero(old_to_new >= 0)
    vertex_map = orig_ids[mid_ids] if mid_ids.size else \
        np.empty(0, dtype=np.int64)

    stats.kernel_vertices = kernel.n_live()
    stats.kernel_edges = int(kernel.live_edge_array().shape[0])
    stats.offset = offset.offset
    stats.rule_removals = rule_stats
    stats.gadgets = rule_stats.get("gadgets", 0)
    stats.phase_times["total"] = time.perf_counter() - t_start
    trace.append((time.perf_counter() - t_start, stats.kernel_vertices))
    return KernelResult(kernel=kernel, vertex_map=vertex_map,
                        offset=offset.offset, log=log, stats=stats,
                        is_quasi=is_quasi)


def finish_full_kernel(g, log, offset, cfg=None, stats=None):
    """Exhaustively apply every enabled reduction, sequentially, until no
    rule fires. Mutates g in place; returns removed vertex count."""
    cfg = cfg if cfg is not None else KernelizerConfig()
    cfg = replace(cfg, workers=1, blocks=1, tracking=False)
    stats = stats if stats is not None else {}
    partition = Partition(
        block_of=np.zeros(g.capacity, dtype=np.int32), k=1)
    partition.block_of[:] = 0
    boundary = boundary_sets(g, partition)
    cand = CandidateSet(g.capacity)
    cand.seed(g.live_vertices(), partition.block_of)
    prev_matching = None
    total = 0
    while True:
        removed, _ = _run_local_sequential(
            g, partition, boundary, cand, log, offset, cfg, stats, [], 0.0)
        removed_lp = 0
        if cfg.enable_lp:
            writer = SegmentWriter(GLOBAL)
            bd = build_bi_double(g)
            m = reuse_matching(prev_matching, g) if prev_matching is not None \
                else karp_sipser(bd, seed=cfg.seed)
            m = augment_to_maximum(bd, m)
            marks = alternating_reachability(bd, m)
            x = extract_half_integral(g, marks)
            removed_lp = apply_lp(g, x, writer, offset, cand=cand,
                                  partition=partition, stats=stats)
            log.add_writer(writer)
            prev_matching = m
        total += removed + removed_lp
        if removed + removed_lp == 0:
            return total


def sequential_kernelize(g0, cfg=None):
    """Reference single-worker single-block run of the same pipeline."""
    cfg = cfg if cfg is not None else KernelizerConfig()
    cfg = replace(cfg, workers=1, blocks=1)
    return kernelize(g0, cfg)
