"""Run statistics collected by the kernelizer and emitted as JSON."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class RunStats:
    """Measurements of one kernelization run.

    rule_removals counts net removed vertices per rule (the twin gadget
    case counts its five hidden vertices minus the inserted gadget), so
    the values sum to n_original - kernel_vertices.
    """

    n_original: int = 0
    m_original: int = 0
    n_after_preprocess: int = 0
    kernel_vertices: int = 0
    kernel_edges: int = 0
    offset: int = 0
    rounds: int = 0
    cut_edges: int = 0
    gadgets: int = 0
    workers: int = 1
    blocks: int = 1
    phase_times: dict = field(default_factory=dict)
    rule_removals: dict = field(default_factory=dict)
    size_trace: list = field(default_factory=list)  # (seconds, live count)
    tracking_stops: int = 0

    def removal_total(self):
        return sum(v for k, v in self.rule_removals.items() if k != "gadgets")

    def to_dict(self):
        return {
            "n_original": self.n_original,
            "m_original": self.m_original,
            "n_after_preprocess": self.n_after_preprocess,
            "kernel_vertices": self.kernel_vertices,
            "kernel_edges": self.kernel_edges,
            "offset": self.offset,
            "rounds": self.rounds,
            "cut_edges": self.cut_edges,
            "gadgets": self.gadgets,
            "workers": self.workers,
            "blocks": self.blocks,
            "phase_times": {k: float(v) for k, v in self.phase_times.items()},
            "rule_removals": {k: int(v) for k, v in self.rule_removals.items()},
            "size_trace": [[float(t), int(s)] for t, s in self.size_trace],
            "tracking_stops": self.tracking_stops,
        }
