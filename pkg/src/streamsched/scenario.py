"""Scenario description: jobs, graphs, source profiles and runtime knobs.

A scenario is the unit of execution for the simulator and the harness. It can
be built programmatically (tests, workload generators) or loaded from a
versioned JSON config file (the CLI). Job entries describe synthetic pipeline
templates; explicit event injections are supported for scripted scenarios.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace

from .model import (
    EVENT_TIME,
    INGESTION_TIME,
    REGULAR,
    SLIDING,
    TUMBLING,
    DataflowGraph,
    Event,
    OperatorSpec,
    validate_graph,
)
from .scheduler import SchedulerConfig

SHAPES = ("tumbling", "sliding", "join", "regular")


class ScenarioError(ValueError):
    """Malformed scenario or config file."""


@dataclass(frozen=True, slots=True)
class SourceProfile:
    """Arrival behaviour of one job's sources.

    ``rate`` is messages per second per source before skew. ``skew`` holds
    per-source rate multipliers, cycled over source indices. The pareto
    arrival process draws inter-arrival gaps; ``tuples_pareto_shape`` makes
    per-message batch sizes heavy-tailed around ``tuples_per_message``.
    """

    rate: float = 1.0
    tuples_per_message: int = 1
    arrival: str = "constant"
    pareto_shape: float = 2.0
    pareto_scale_ms: float | None = None
    skew: tuple[float, ...] = ()
    tick_ms: float | None = None
    tuples_pareto_shape: float | None = None
    start_ms: int = 0
    event_lag_ms: int = 0

    def __post_init__(self) -> None:
        if self.rate <= 0:
            raise ScenarioError("source rate must be positive")
        if self.tuples_per_message < 1:
            raise ScenarioError("tuples per message must be positive")
        if self.arrival not in ("constant", "poisson", "pareto"):
            raise ScenarioError(f"unknown arrival process {self.arrival!r}")
        if self.arrival == "pareto" and self.pareto_shape <= 1:
            raise ScenarioError("pareto shape must exceed 1 for a finite mean")
        if any(m <= 0 for m in self.skew):
            raise ScenarioError("skew multipliers must be positive")

    def rate_for(self, source_index: int) -> float:
        if not self.skew:
            return self.rate
        return self.rate * self.skew[source_index % len(self.skew)]


@dataclass(slots=True)
class JobSetup:
    """One dataflow job plus the input that drives it."""

    graph: DataflowGraph
    profile: SourceProfile | None = None
    injections: tuple[Event, ...] = ()
    token_rate: int = 0

    def __post_init__(self) -> None:
        if self.profile is None and not self.injections:
            raise ScenarioError(f"job {self.graph.job_id}: no profile and no injections")


@dataclass(slots=True)
class Scenario:
    jobs: list[JobSetup]
    config: SchedulerConfig = field(default_factory=SchedulerConfig)
    horizon_ms: int = 10_000
    token_interval_ms: int = 1000
    mode: str = "virtual"
    trace: bool = False

    def __post_init__(self) -> None:
        if self.horizon_ms <= 0:
            raise ScenarioError("horizon must be positive")
        if self.mode not in ("virtual", "wall"):
            raise ScenarioError(f"unknown mode {self.mode!r}")
        seen: set[str] = set()
        for job in self.jobs:
            if job.graph.job_id in seen:
                raise ScenarioError(f"conflicting job id {job.graph.job_id!r}")
            seen.add(job.graph.job_id)

    def validate(self) -> list[str]:
        problems: list[str] = []
        for job in self.jobs:
            result = validate_graph(job.graph)
            for v in result.violations:
                problems.append(f"{job.graph.job_id}: {v.code} ({v.detail})")
        return problems


def _stage_costs(stage_cost_ms, stages: int) -> list[int]:
    if isinstance(stage_cost_ms, (int, float)):
        return [int(stage_cost_ms)] * stages
    costs = [int(c) for c in stage_cost_ms]
    if len(costs) != stages:
        raise ScenarioError(f"stage_cost_ms needs {stages} entries, got {len(costs)}")
    return costs


def make_pipeline_graph(
    job_id: str,
    *,
    shape: str = "tumbling",
    stages: int = 4,
    window_ms: int = 1000,
    slide_ms: int | None = None,
    sources: int = 64,
    latency_constraint_ms: int = 800,
    time_domain: str = INGESTION_TIME,
    stage_cost_ms=0,
    per_tuple_cost_us: int = 0,
    trigger_cost_ms: int = 0,
    parallelism: int = 1,
    group: str = "",
) -> DataflowGraph:
    """Build a multi-stage aggregation pipeline as a DataflowGraph.

    Shapes: ``tumbling`` chains tumbling windows of ``window_ms`` through all
    stages; ``sliding`` uses an overlapped first stage and tumbling
    slide-sized buckets after it; ``join`` splits the sources over two
    first-stage operators feeding a two-channel windowed join; ``regular``
    chains window-less operators that trigger on every invocation.
    """
    if shape not in SHAPES:
        raise ScenarioError(f"unknown pipeline shape {shape!r}")
    if stages < 1:
        raise ScenarioError("pipeline needs at least one stage")
    if sources < 1:
        raise ScenarioError("pipeline needs at least one source")
    if parallelism < 1:
        raise ScenarioError("parallelism must be positive")
    if shape == "join" and stages < 2:
        raise ScenarioError("join shape needs at least two stages")

    costs = _stage_costs(stage_cost_ms, stages)
    slide = slide_ms if slide_ms is not None else (window_ms // 2 if shape == "sliding" else window_ms)
    ops: dict[str, OperatorSpec] = {}

    def windowed_kind(stage: int) -> tuple[str, int, int]:
        if shape == "regular":
            return REGULAR, 0, 0
        if shape == "sliding" and stage == 0:
            return SLIDING, window_ms, slide
        if shape == "sliding":
            return TUMBLING, slide, slide
        return TUMBLING, window_ms, window_ms

    def stage_ops(stage: int) -> list[str]:
        width = parallelism if shape != "join" or stage != 0 else 2 * parallelism
        if shape == "join" and stage == 0:
            half = ["a", "b"]
            return [f"{job_id}/s0{h}p{i}" for h in half for i in range(parallelism)]
        return [f"{job_id}/s{stage}p{i}" for i in range(width)]

    names = [stage_ops(s) for s in range(stages)]
    for stage in range(stages):
        kind, window, sl = windowed_kind(stage)
        downstream_names = names[stage + 1] if stage + 1 < stages else []
        for i, name in enumerate(names[stage]):
            down = (downstream_names[i % len(downstream_names)],) if downstream_names else ()
            ops[name] = OperatorSpec(
                id=name,
                stage=stage,
                kind=kind,
                window=window if kind != REGULAR else None,
                slide=sl if kind != REGULAR else None,
                downstream=down,
                exec_cost_ms=costs[stage],
                per_tuple_cost_us=per_tuple_cost_us,
                trigger_cost_ms=trigger_cost_ms if (shape == "join" and stage == 1) else 0,
            )

    source_ids = []
    first = names[0]
    for i in range(sources):
        sid = f"{job_id}/src{i}"
        source_ids.append(sid)
        if shape == "join":
            half = first[: len(first) // 2] if i % 2 == 0 else first[len(first) // 2 :]
            target = half[(i // 2) % len(half)]
        else:
            target = first[i % len(first)]
        ops[sid] = OperatorSpec(id=sid, stage=-1, kind=REGULAR, downstream=(target,))

    return DataflowGraph(
        job_id=job_id,
        operators=ops,
        latency_constraint=latency_constraint_ms,
        time_domain=time_domain,
        sources=tuple(source_ids),
        sinks=tuple(names[-1]),
        group=group,
    )


_JOB_KEYS = {
    "job_id",
    "group",
    "shape",
    "stages",
    "window_ms",
    "slide_ms",
    "sources",
    "latency_constraint_ms",
    "time_domain",
    "stage_cost_ms",
    "per_tuple_cost_us",
    "trigger_cost_ms",
    "parallelism",
    "rate",
    "tuples_per_message",
    "arrival",
    "pareto_shape",
    "pareto_scale_ms",
    "skew",
    "tick_ms",
    "tuples_pareto_shape",
    "start_ms",
    "event_lag_ms",
    "token_rate",
    "injections",
}

_PROFILE_KEYS = {f.name for f in fields(SourceProfile)}


def job_from_dict(entry: dict) -> JobSetup:
    unknown = set(entry) - _JOB_KEYS
    if unknown:
        raise ScenarioError(f"unknown job keys: {sorted(unknown)}")
    if "job_id" not in entry:
        raise ScenarioError("job entry needs a job_id")
    graph = make_pipeline_graph(
        entry["job_id"],
        shape=entry.get("shape", "tumbling"),
        stages=int(entry.get("stages", 4)),
        window_ms=int(entry.get("window_ms", 1000)),
        slide_ms=entry.get("slide_ms"),
        sources=int(entry.get("sources", 64)),
        latency_constraint_ms=int(entry.get("latency_constraint_ms", 800)),
        time_domain=entry.get("time_domain", INGESTION_TIME),
        stage_cost_ms=entry.get("stage_cost_ms", 0),
        per_tuple_cost_us=int(entry.get("per_tuple_cost_us", 0)),
        trigger_cost_ms=int(entry.get("trigger_cost_ms", 0)),
        parallelism=int(entry.get("parallelism", 1)),
        group=entry.get("group", ""),
    )
    injections = tuple(
        Event(
            source_id=inj["source"],
            p=int(inj["p"]),
            t=int(inj["t"]),
            tuple_count=int(inj.get("tuples", 1)),
        )
        for inj in entry.get("injections", ())
    )
    profile = None
    if not injections:
        kwargs = {k: entry[k] for k in _PROFILE_KEYS if k in entry}
        if "skew" in kwargs:
            kwargs["skew"] = tuple(float(m) for m in kwargs["skew"])
        profile = SourceProfile(**kwargs)
    return JobSetup(
        graph=graph,
        profile=profile,
        injections=injections,
        token_rate=int(entry.get("token_rate", 0)),
    )


def scenario_from_dict(data: dict) -> Scenario:
    if data.get("version") != 1:
        raise ScenarioError("config must declare version: 1")
    sched = data.get("scheduler", {})
    known = {f.name for f in fields(SchedulerConfig)}
    unknown = set(sched) - known
    if unknown:
        raise ScenarioError(f"unknown scheduler keys: {sorted(unknown)}")
    try:
        config = SchedulerConfig(**sched)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad scheduler config: {exc}") from exc
    jobs_data = data.get("jobs")
    if not jobs_data:
        raise ScenarioError("config declares no jobs")
    jobs = [job_from_dict(entry) for entry in jobs_data]
    scenario = Scenario(
        jobs=jobs,
        config=config,
        horizon_ms=int(data.get("horizon_ms", 10_000)),
        token_interval_ms=int(data.get("token_interval_ms", 1000)),
        mode=data.get("mode", "virtual"),
        trace=bool(data.get("trace", False)),
    )
    problems = scenario.validate()
    if problems:
        raise ScenarioError("invalid graphs: " + "; ".join(problems))
    return scenario


def load_scenario(path: str) -> Scenario:
    """Parse a JSON config file; parse errors keep their line numbers."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be an object")
    try:
        return scenario_from_dict(data)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def with_config(scenario: Scenario, **overrides) -> Scenario:
    """Copy a scenario with scheduler-config fields replaced."""
    config = replace(scenario.config, **overrides)
    return Scenario(
        jobs=scenario.jobs,
        config=config,
        horizon_ms=scenario.horizon_ms,
        token_interval_ms=scenario.token_interval_ms,
        mode=scenario.mode,
        trace=scenario.trace,
    )
