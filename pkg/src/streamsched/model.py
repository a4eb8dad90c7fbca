"""Domain types for events, messages, operators and dataflow graphs.

Times follow two axes: logical time ``p`` is an integer tick count marking
stream progress, physical time ``t`` is integer milliseconds on an abstract
clock. Both are plain ints so the virtual-time simulator stays deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, TYPE_CHECKING

if TYPE_CHECKING:
    from .context import PriorityContext

REGULAR = "regular"
TUMBLING = "tumbling"
SLIDING = "sliding"

EVENT_TIME = "event_time"
INGESTION_TIME = "ingestion_time"


@dataclass(frozen=True, slots=True)
class Event:
    """A unit of input observed at a source operator."""

    source_id: str
    p: int
    t: int
    tuple_count: int = 1


@dataclass(slots=True)
class Message:
    """A batch of tuples in flight toward one operator.

    ``p``/``t`` are the logical and physical time of the last input needed to
    produce the message. ``influence_t`` tracks the latest source arrival time
    anywhere in the message's lineage, which is what output latency is
    measured against. ``channel_seq`` is the per-channel send counter used to
    assert in-order processing.
    """

    msg_id: int
    job_id: str
    target: str
    sender: str
    p: int
    t: int
    tuples: int
    influence_t: int
    channel_seq: int
    pc: "PriorityContext | None" = None


@dataclass(frozen=True, slots=True)
class OperatorSpec:
    """Static description of one operator in a dataflow stage.

    ``window`` and ``slide`` are in logical ticks; for tumbling windows the
    slide equals the window size. Regular operators (and sources) behave as
    slide size 1 in frontier math. Synthetic execution costs live here too:
    ``exec_cost_ms`` per invocation, ``per_tuple_cost_us`` scaling with batch
    size, and ``trigger_cost_ms`` charged once per fired window.
    """

    id: str
    stage: int
    kind: str = REGULAR
    window: int | None = None
    slide: int | None = None
    downstream: tuple[str, ...] = ()
    cost_hint: float | None = None
    exec_cost_ms: int = 0
    per_tuple_cost_us: int = 0
    trigger_cost_ms: int = 0

    def __post_init__(self) -> None:
        if self.kind not in (REGULAR, TUMBLING, SLIDING):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.kind == TUMBLING and self.slide is not None and self.slide != self.window:
            raise ValueError("tumbling windows have slide equal to window size")
        if self.kind == TUMBLING and self.slide is None:
            object.__setattr__(self, "slide", self.window)

    @property
    def windowed(self) -> bool:
        return self.kind in (TUMBLING, SLIDING)

    @property
    def slide_size(self) -> int:
        """Slide size used by frontier math; regular operators count as 1."""
        if not self.windowed:
            return 1
        return self.slide if self.slide is not None else 0


@dataclass(frozen=True, slots=True)
class DataflowGraph:
    """An immutable DAG of operators with a per-job latency constraint."""

    job_id: str
    operators: Mapping[str, OperatorSpec]
    latency_constraint: int
    time_domain: str = INGESTION_TIME
    sources: tuple[str, ...] = ()
    sinks: tuple[str, ...] = ()
    group: str = ""

    def successors(self, op_id: str) -> tuple[str, ...]:
        return self.operators[op_id].downstream

    def predecessors(self) -> dict[str, list[str]]:
        preds: dict[str, list[str]] = {oid: [] for oid in self.operators}
        for oid, spec in self.operators.items():
            for d in spec.downstream:
                if d in preds:
                    preds[d].append(oid)
        return preds

    def edges(self) -> list[tuple[str, str]]:
        return [(u, d) for u, spec in self.operators.items() for d in spec.downstream]


@dataclass(frozen=True, slots=True)
class OutputRecord:
    """One dataflow output emitted at a sink."""

    job_id: str
    sink_id: str
    p_out: int
    emit_time: int
    last_input_arrival: int
    latency: int
    deadline_met: bool


@dataclass(frozen=True, slots=True)
class Violation:
    code: str
    detail: str


@dataclass(frozen=True, slots=True)
class GraphValidation:
    ok: bool
    violations: tuple[Violation, ...] = ()


def topological_order(graph: DataflowGraph) -> list[str] | None:
    """Kahn topological sort; None if the edge set has a cycle."""
    indeg = {oid: 0 for oid in graph.operators}
    for _, d in graph.edges():
        if d in indeg:
            indeg[d] += 1
    ready = sorted(oid for oid, n in indeg.items() if n == 0)
    order: list[str] = []
    while ready:
        oid = ready.pop(0)
        order.append(oid)
        for d in graph.operators[oid].downstream:
            if d not in indeg:
                continue
            indeg[d] -= 1
            if indeg[d] == 0:
                ready.append(d)
        ready.sort()
    if len(order) != len(graph.operators):
        return None
    return order


def validate_graph(graph: DataflowGraph) -> GraphValidation:
    """Check a populated graph. Violations are data, not exceptions."""
    violations: list[Violation] = []

    for oid, spec in graph.operators.items():
        for d in spec.downstream:
            if d not in graph.operators:
                violations.append(Violation("unknown operator", f"{oid} -> {d}"))
        if spec.windowed:
            if spec.window is None or spec.window <= 0:
                violations.append(Violation("nonpositive window", oid))
            if spec.slide_size <= 0:
                violations.append(Violation("nonpositive slide", oid))
    for sid in graph.sources:
        if sid not in graph.operators:
            violations.append(Violation("unknown operator", f"source {sid}"))
    for sid in graph.sinks:
        if sid not in graph.operators:
            violations.append(Violation("unknown operator", f"sink {sid}"))

    if graph.latency_constraint <= 0:
        violations.append(Violation("nonpositive latency constraint", graph.job_id))
    if not graph.sources:
        violations.append(Violation("missing source", graph.job_id))

    if topological_order(graph) is None:
        violations.append(Violation("cycle", graph.job_id))
    else:
        seen: set[str] = set()
        stack = [s for s in graph.sources if s in graph.operators]
        while stack:
            oid = stack.pop()
            if oid in seen:
                continue
            seen.add(oid)
            stack.extend(d for d in graph.operators[oid].downstream if d in graph.operators)
        for oid in graph.operators:
            if oid not in seen:
                violations.append(Violation("orphan operator", oid))

        sink_set = set(graph.sinks)
        for oid, spec in graph.operators.items():
            if not spec.downstream and oid not in sink_set:
                violations.append(Violation("missing sink", f"{oid} terminates a path"))
            if spec.downstream and oid in sink_set:
                violations.append(Violation("sink has downstream", oid))

    violations.sort(key=lambda v: (v.code, v.detail))
    return GraphValidation(ok=not violations, violations=tuple(violations))


def static_critical_path(
    graph: DataflowGraph, op_id: str, costs: Mapping[str, float]
) -> float:
    """Max total cost over any path from ``op_id``'s successors to a sink.

    A sink has no successors and scores 0. Satisfies the recurrence
    value(o) = max over direct successors d of (costs[d] + value(d)).
    """
    if op_id not in graph.operators:
        raise ValueError(f"unknown operator id {op_id!r}")
    memo: dict[str, float] = {}

    def value(oid: str) -> float:
        if oid in memo:
            return memo[oid]
        best = 0.0
        for d in graph.operators[oid].downstream:
            if d not in graph.operators:
                raise ValueError(f"unknown operator id {d!r}")
            if d not in costs:
                raise ValueError(f"no cost defined for operator {d!r}")
            got = costs[d] + value(d)
            if got > best:
                best = got
        memo[oid] = best
        return best

    return value(op_id)


def compute_latency(emit_time: int, influencing_events: Iterable[Event]) -> int:
    """Output latency: emit time minus the last influencing arrival."""
    last = None
    for ev in influencing_events:
        if last is None or ev.t > last:
            last = ev.t
    if last is None:
        raise ValueError("influencing event set is empty")
    latency = emit_time - last
    if latency < 0:
        raise ValueError(f"emit time {emit_time} precedes last arrival {last}")
    return latency
