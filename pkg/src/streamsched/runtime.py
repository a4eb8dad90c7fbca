"""Operator execution semantics and the deterministic simulator.

Windows are left-open intervals (b - W, b] over logical time, identified by
their completion boundary b = k * slide + window. A window fires exactly once,
at the moment every upstream channel's watermark has reached its boundary, and
the emitted message carries the boundary as its logical time. The physical
time of the output is the time the last channel crossed the boundary, which is
the observed frontier time.

The simulator runs a single logical timeline: source events, message arrivals,
executions and acknowledgements are heap-ordered by (time, sequence), so a
(scenario, seed) pair always yields bit-identical results. Wall mode reuses
the same machinery but stamps phases with a real clock; it exists for
overhead measurement, not for latency semantics.
"""
from __future__ import annotations

import heapq
import random
import time
from dataclasses import dataclass, field

from .context import ContextConverter, ReplyContext
from .model import DataflowGraph, Event, Message, OperatorSpec, OutputRecord
from .policy import DEADLINE_POLICIES, TOKEN, TokenBucket
from .scenario import Scenario, ScenarioError
from .scheduler import CAMEO, make_dispatcher
from .workload import generate_arrivals


@dataclass(slots=True)
class Clock:
    """Dual-mode clock: virtual time advances only via simulator events."""

    mode: str = "virtual"
    now: int = 0
    _wall_start: int = 0

    def start(self) -> None:
        if self.mode == "wall":
            self._wall_start = time.perf_counter_ns()

    def advance(self, t: int) -> None:
        if t < self.now:
            raise ValueError("clock may not run backwards")
        self.now = t

    def read(self) -> int:
        if self.mode == "wall":
            self.now = (time.perf_counter_ns() - self._wall_start) // 1_000_000
        return self.now


def profile_update(profile: float | None, observed_cost: float, beta: float = 0.2) -> float:
    """Exponentially weighted moving average; first observation initializes.

    Written in delta form so a constant observation stream is an exact fixed
    point (profiles of constant-cost operators stay bit-equal to the cost).
    """
    if observed_cost < 0:
        raise ValueError("observed cost must be nonnegative")
    if profile is None:
        return observed_cost
    return profile + beta * (observed_cost - profile)


@dataclass(slots=True)
class RawOutput:
    p: int
    t: int
    tuples: int
    influence_t: int


@dataclass(slots=True)
class ExecResult:
    outputs: list[RawOutput]
    cost_ms: int
    fired: int = 0
    late: bool = False


class OperatorRuntime:
    """Mutable execution state of one operator instance."""

    __slots__ = (
        "spec",
        "channels",
        "profile",
        "late_dropped",
        "fired_windows",
        "empty_windows",
        "_expected_seq",
        "_crossed_k",
        "_next_k",
        "_win_tuples",
        "_win_influence",
        "_cross_count",
        "_cross_t",
    )

    def __init__(self, spec: OperatorSpec, channels: list[str]):
        self.spec = spec
        self.channels = list(channels)
        self.profile: float | None = None
        self.late_dropped = 0
        self.fired_windows = 0
        self.empty_windows = 0
        self._expected_seq: dict[str, int] = {c: 0 for c in self.channels}
        # Per-channel index of the highest crossed window boundary.
        self._crossed_k: dict[str, int] = {c: -1 for c in self.channels}
        self._next_k = 0
        self._win_tuples: dict[int, int] = {}
        self._win_influence: dict[int, int] = {}
        self._cross_count: dict[int, int] = {}
        self._cross_t: dict[int, int] = {}

    def check_channel_order(self, msg: Message) -> None:
        expected = self._expected_seq.get(msg.sender)
        if expected is None:
            raise RuntimeError(f"{self.spec.id}: message from unknown channel {msg.sender}")
        if msg.channel_seq != expected:
            raise RuntimeError(
                f"{self.spec.id}: out-of-order message on channel {msg.sender} "
                f"(got {msg.channel_seq}, expected {expected})"
            )
        self._expected_seq[msg.sender] = expected + 1

    def _boundary(self, k: int) -> int:
        return k * self.spec.slide_size + (self.spec.window or 0)

    def _window_range(self, p: int) -> tuple[int, int]:
        """Indices [k_lo, k_hi] of windows containing logical time p."""
        s = self.spec.slide_size
        w = self.spec.window or 0
        k_hi = (p - 1) // s
        k_lo = max(0, -(-(p - w) // s))
        return k_lo, k_hi

    def _base_cost(self, tuples: int) -> int:
        return self.spec.exec_cost_ms + (tuples * self.spec.per_tuple_cost_us) // 1000

    def execute(self, msg: Message) -> ExecResult:
        """Invoke the operator with one message.

        Regular operators trigger immediately: one output per invocation.
        Windowed operators buffer the batch, advance the channel watermark,
        and fire every window whose boundary all channels have now crossed.
        """
        cost = self._base_cost(msg.tuples)
        if not self.spec.windowed:
            out = RawOutput(p=msg.p, t=msg.t, tuples=msg.tuples, influence_t=msg.influence_t)
            return ExecResult(outputs=[out], cost_ms=cost)

        k_lo, k_hi = self._window_range(msg.p)
        if k_hi < self._next_k:
            # Every window this batch belongs to has already fired.
            self.late_dropped += 1
            return ExecResult(outputs=[], cost_ms=cost, late=True)

        for k in range(max(k_lo, self._next_k), k_hi + 1):
            b = self._boundary(k)
            self._win_tuples[b] = self._win_tuples.get(b, 0) + msg.tuples
            prev = self._win_influence.get(b)
            if prev is None or msg.influence_t > prev:
                self._win_influence[b] = msg.influence_t

        # Watermark advance: record boundary crossings for this channel.
        crossed = self._crossed_k[msg.sender]
        s = self.spec.slide_size
        w = self.spec.window or 0
        reach = (msg.p - w) // s  # max k with boundary(k) <= msg.p
        for k in range(crossed + 1, reach + 1):
            b = self._boundary(k)
            self._cross_count[b] = self._cross_count.get(b, 0) + 1
            prev_t = self._cross_t.get(b)
            if prev_t is None or msg.t > prev_t:
                self._cross_t[b] = msg.t
        if reach > crossed:
            self._crossed_k[msg.sender] = reach

        outputs: list[RawOutput] = []
        fired = 0
        n_channels = len(self.channels)
        while self._cross_count.get(self._boundary(self._next_k), 0) == n_channels:
            b = self._boundary(self._next_k)
            self._cross_count.pop(b)
            t_frontier = self._cross_t.pop(b)
            tuples = self._win_tuples.pop(b, 0)
            influence = self._win_influence.pop(b, None)
            if tuples > 0 and influence is not None:
                outputs.append(RawOutput(p=b, t=t_frontier, tuples=tuples, influence_t=influence))
                self.fired_windows += 1
                fired += 1
                cost += self.spec.trigger_cost_ms
            else:
                self.empty_windows += 1
            self._next_k += 1
        return ExecResult(outputs=outputs, cost_ms=cost, fired=fired)

    def observe_cost(self, observed: float, beta: float) -> None:
        self.profile = profile_update(self.profile, observed, beta)

    def profiled_cost(self) -> float:
        if self.profile is not None:
            return self.profile
        return self.spec.cost_hint or 0.0


@dataclass(slots=True)
class TraceRow:
    t: int
    worker: int
    op_id: str
    msg_id: int
    local_key: float
    global_key: float


@dataclass(slots=True)
class RunReport:
    """Everything a simulation run produced, before summarization."""

    records: list[OutputRecord] = field(default_factory=list)
    trace: list[TraceRow] = field(default_factory=list)
    executed: int = 0
    executed_by_job: dict[str, int] = field(default_factory=dict)
    tuples_by_job: dict[str, int] = field(default_factory=dict)
    late_by_job: dict[str, int] = field(default_factory=dict)
    groups_by_job: dict[str, str] = field(default_factory=dict)
    busy_ms_by_worker: dict[int, int] = field(default_factory=dict)
    total_cost_ms: int = 0
    makespan_ms: int = 0
    late_dropped: int = 0
    fired_windows: int = 0
    empty_windows: int = 0
    errors: list[str] = field(default_factory=list)
    overhead_ns: dict[str, int] = field(default_factory=dict)
    mode: str = "virtual"
    seed: int = 0


_ARRIVE, _WAKE, _ACK, _EMIT = 0, 1, 2, 3


class Simulator:
    """Event-driven execution of a scenario on a pool of modeled workers."""

    def __init__(self, scenario: Scenario, seed: int):
        problems = scenario.validate()
        if problems:
            raise ScenarioError("invalid scenario: " + "; ".join(problems))
        self.scenario = scenario
        self.config = scenario.config
        self.seed = seed
        self.clock = Clock(mode=scenario.mode)

        self.graphs: dict[str, DataflowGraph] = {}
        self.specs: dict[str, OperatorSpec] = {}
        self.job_of: dict[str, str] = {}
        self.runtimes: dict[str, OperatorRuntime] = {}
        self.converters: dict[str, ContextConverter] = {}
        self._build_operators()

        self.dispatcher = make_dispatcher(self.config, list(self.specs))
        self._use_acks = (
            self.config.scheduler == CAMEO and self.config.policy in DEADLINE_POLICIES
        )
        self._heap: list[tuple[int, int, int, tuple]] = []
        self._heap_seq = 0
        self._msg_seq = 0
        self._channel_seq: dict[tuple[str, str], int] = {}
        self._reply_countdown: dict[tuple[str, str], int] = {}
        self._busy: list[bool] = [False] * self.config.workers
        self._perturb = random.Random(f"{seed}:perturb")
        self.report = RunReport(mode=scenario.mode, seed=seed)
        self.report.groups_by_job = {
            job.graph.job_id: job.graph.group for job in scenario.jobs
        }
        self.report.busy_ms_by_worker = {w: 0 for w in range(self.config.workers)}
        self._ns = {"scheduling": 0, "priority_generation": 0, "execution": 0}
        self._wall = scenario.mode == "wall"
        self._schedule_sources()

    def _build_operators(self) -> None:
        for job in self.scenario.jobs:
            graph = job.graph
            self.graphs[graph.job_id] = graph
            preds = graph.predecessors()
            for oid, spec in graph.operators.items():
                if oid in self.specs:
                    raise ScenarioError(f"operator id {oid} used by more than one job")
                self.specs[oid] = spec
                self.job_of[oid] = graph.job_id
                self.runtimes[oid] = OperatorRuntime(spec, preds[oid])
                bucket = None
                if self.config.policy == TOKEN and oid in graph.sources:
                    bucket = TokenBucket(
                        graph.job_id, job.token_rate, self.scenario.token_interval_ms
                    )
                self.converters[oid] = ContextConverter(
                    spec,
                    graph,
                    self.config.policy,
                    regression_capacity=self.config.regression_capacity,
                    semantic_awareness=self.config.semantic_awareness,
                    bucket=bucket,
                )

    def _schedule_sources(self) -> None:
        for job in self.scenario.jobs:
            graph = job.graph
            if job.injections:
                events = sorted(job.injections, key=lambda e: (e.t, e.p, e.source_id))
                for ev in events:
                    if ev.source_id not in graph.operators:
                        raise ScenarioError(
                            f"{graph.job_id}: injection for unknown source {ev.source_id}"
                        )
                    self._push(ev.t, _EMIT, (ev.source_id, ev))
                continue
            for idx, sid in enumerate(graph.sources):
                events = generate_arrivals(
                    job.profile,
                    self.scenario.horizon_ms,
                    self.seed,
                    source_id=sid,
                    source_index=idx,
                    time_domain=graph.time_domain,
                )
                for ev in events:
                    self._push(ev.t, _EMIT, (sid, ev))

    def _push(self, t: int, kind: int, payload: tuple) -> None:
        heapq.heappush(self._heap, (t, self._heap_seq, kind, payload))
        self._heap_seq += 1

    def _next_channel_seq(self, sender: str, target: str) -> int:
        key = (sender, target)
        seq = self._channel_seq.get(key, 0)
        self._channel_seq[key] = seq + 1
        return seq

    def _send(self, sender: str, target: str, out: RawOutput, pc, now: int) -> None:
        self._msg_seq += 1
        msg = Message(
            msg_id=self._msg_seq,
            job_id=self.job_of[sender],
            target=target,
            sender=sender,
            p=out.p,
            t=out.t,
            tuples=out.tuples,
            influence_t=out.influence_t,
            channel_seq=self._next_channel_seq(sender, target),
            pc=pc,
        )
        self._push(now + self.config.channel_delay_ms, _ARRIVE, (msg, None))

    def _emit(self, source_id: str, event: Event, now: int) -> None:
        conv = self.converters[source_id]
        for target_id in self.specs[source_id].downstream:
            self._msg_seq += 1
            t0 = time.perf_counter_ns() if self._wall else 0
            pc = conv.at_source(event, self.specs[target_id], self._msg_seq)
            if self._wall:
                self._ns["priority_generation"] += time.perf_counter_ns() - t0
            msg = Message(
                msg_id=self._msg_seq,
                job_id=self.job_of[source_id],
                target=target_id,
                sender=source_id,
                p=event.p,
                t=event.t,
                tuples=event.tuple_count,
                influence_t=event.t,
                channel_seq=self._next_channel_seq(source_id, target_id),
                pc=pc,
            )
            self._push(now + self.config.channel_delay_ms, _ARRIVE, (msg, None))

    def _arrive(self, msg: Message, produced_by: int | None, now: int) -> None:
        t0 = time.perf_counter_ns() if self._wall else 0
        self.dispatcher.enqueue(msg, now=now, produced_by=produced_by)
        if self._wall:
            self._ns["scheduling"] += time.perf_counter_ns() - t0

    def _assign(self, now: int) -> None:
        if self.dispatcher.pending() == 0:
            return
        for w in range(self.config.workers):
            if self._busy[w]:
                continue
            t0 = time.perf_counter_ns() if self._wall else 0
            sel = self.dispatcher.select(w)
            if self._wall:
                self._ns["scheduling"] += time.perf_counter_ns() - t0
            if sel is None:
                continue
            op_id, msg = sel
            self._start_execution(w, op_id, msg, now)
            if self.dispatcher.pending() == 0:
                return

    def _start_execution(self, worker: int, op_id: str, msg: Message, now: int) -> None:
        rt = self.runtimes[op_id]
        if self.scenario.trace:
            self.report.trace.append(
                TraceRow(
                    t=now,
                    worker=worker,
                    op_id=op_id,
                    msg_id=msg.msg_id,
                    local_key=msg.pc.local_key,
                    global_key=msg.pc.global_key,
                )
            )
        t0 = time.perf_counter_ns() if self._wall else 0
        try:
            rt.check_channel_order(msg)
            result = rt.execute(msg)
        except Exception as exc:  # executor failures surface per message
            self.report.errors.append(f"{op_id}: msg {msg.msg_id}: {exc!r}")
            result = ExecResult(outputs=[], cost_ms=0)
        if self._wall:
            self._ns["execution"] += time.perf_counter_ns() - t0
        cost = result.cost_ms
        if self._use_acks and self.config.ack_cost_us > 0:
            cost += (self.config.ack_cost_us) // 1000
        self._busy[worker] = True
        self.dispatcher.charge(worker, cost)
        self._push(now + cost, _WAKE, (worker, op_id, msg, result))

    def _complete(self, worker: int, op_id: str, msg: Message, result: ExecResult, now: int) -> None:
        rt = self.runtimes[op_id]
        spec = rt.spec
        self.report.executed += 1
        job_id = self.job_of[op_id]
        self.report.executed_by_job[job_id] = self.report.executed_by_job.get(job_id, 0) + 1
        self.report.tuples_by_job[job_id] = (
            self.report.tuples_by_job.get(job_id, 0) + msg.tuples
        )
        self.report.busy_ms_by_worker[worker] += result.cost_ms
        self.report.total_cost_ms += result.cost_ms
        if now > self.report.makespan_ms:
            self.report.makespan_ms = now

        observed = float(result.cost_ms)
        if self.config.perturb_sigma_ms > 0:
            observed = max(0.0, observed + self._perturb.gauss(0.0, self.config.perturb_sigma_ms))
        rt.observe_cost(observed, self.config.profile_beta)

        graph = self.graphs[job_id]
        if not spec.downstream:
            for out in result.outputs:
                latency = now - out.influence_t
                if latency < 0:
                    raise RuntimeError(f"negative latency at sink {op_id}")
                self.report.records.append(
                    OutputRecord(
                        job_id=job_id,
                        sink_id=op_id,
                        p_out=out.p,
                        emit_time=now,
                        last_input_arrival=out.influence_t,
                        latency=latency,
                        deadline_met=latency <= graph.latency_constraint,
                    )
                )
        else:
            conv = self.converters[op_id]
            for out in result.outputs:
                for target_id in spec.downstream:
                    self._msg_seq += 1
                    t0 = time.perf_counter_ns() if self._wall else 0
                    pc = conv.at_operator(
                        msg.pc, out.p, out.t, self.specs[target_id], self._msg_seq
                    )
                    if self._wall:
                        self._ns["priority_generation"] += time.perf_counter_ns() - t0
                    out_msg = Message(
                        msg_id=self._msg_seq,
                        job_id=job_id,
                        target=target_id,
                        sender=op_id,
                        p=out.p,
                        t=out.t,
                        tuples=out.tuples,
                        influence_t=out.influence_t,
                        channel_seq=self._next_channel_seq(op_id, target_id),
                        pc=pc,
                    )
                    self._push(
                        now + self.config.channel_delay_ms, _ARRIVE, (out_msg, worker)
                    )

        if self._use_acks:
            key = (op_id, msg.sender)
            left = self._reply_countdown.get(key, 1) - 1
            if left <= 0:
                self._reply_countdown[key] = self.config.rc_every_n
                t0 = time.perf_counter_ns() if self._wall else 0
                rc = self.converters[op_id].reply(rt.profiled_cost())
                if self._wall:
                    self._ns["priority_generation"] += time.perf_counter_ns() - t0
                self._push(now + self.config.ack_delay_ms, _ACK, (msg.sender, op_id, rc))
            else:
                self._reply_countdown[key] = left

        self._busy[worker] = False

    def _ack(self, sender: str, replier: str, rc: ReplyContext) -> None:
        t0 = time.perf_counter_ns() if self._wall else 0
        self.converters[sender].on_reply(replier, rc)
        if self._wall:
            self._ns["priority_generation"] += time.perf_counter_ns() - t0

    def run(self) -> RunReport:
        loop_start = time.perf_counter_ns()
        self.clock.start()
        while self._heap:
            t, _, kind, payload = heapq.heappop(self._heap)
            self.clock.advance(t)
            now = t
            if kind == _EMIT:
                self._emit(payload[0], payload[1], now)
            elif kind == _ARRIVE:
                self._arrive(payload[0], payload[1], now)
            elif kind == _WAKE:
                self._complete(payload[0], payload[1], payload[2], payload[3], now)
            elif kind == _ACK:
                self._ack(payload[0], payload[1], payload[2])
            self._assign(now)
        for oid, rt in self.runtimes.items():
            job_id = self.job_of[oid]
            self.report.late_dropped += rt.late_dropped
            self.report.late_by_job[job_id] = (
                self.report.late_by_job.get(job_id, 0) + rt.late_dropped
            )
            self.report.fired_windows += rt.fired_windows
            self.report.empty_windows += rt.empty_windows
        if self._wall:
            total = time.perf_counter_ns() - loop_start
            self.report.overhead_ns = {
                "scheduling_ns": self._ns["scheduling"],
                "priority_generation_ns": self._ns["priority_generation"],
                "execution_ns": self._ns["execution"],
                "total_busy_ns": total,
            }
        return self.report


def simulate(scenario: Scenario, seed: int) -> RunReport:
    """Run a validated scenario to completion and return its report."""
    return Simulator(scenario, seed).run()
