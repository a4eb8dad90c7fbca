"""Synthetic multi-tenant workload generation and latency calibration.

Two tenant groups mirror the usual production mix: latency-sensitive jobs
with sparse input and tight constraints, and bulk-analytics jobs with heavy,
variable volume and lax constraints. Generators are pure functions of
(profile, seed), so every stream is reproducible.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, replace

from .model import EVENT_TIME, INGESTION_TIME, Event
from .scenario import (
    JobSetup,
    Scenario,
    ScenarioError,
    SourceProfile,
    make_pipeline_graph,
)
from .scheduler import SchedulerConfig
from .stats import percentile_nearest_rank

LS = "LS"
BA = "BA"


class CalibrationError(RuntimeError):
    """Raised when the calibration utilization target cannot be approached."""


def generate_arrivals(
    profile: SourceProfile,
    horizon_ms: int,
    seed,
    *,
    source_id: str = "src",
    source_index: int = 0,
    time_domain: str = INGESTION_TIME,
) -> list[Event]:
    """Deterministic event sequence for one source up to the horizon.

    Logical time is the event index scaled by the tick size (event-time
    streams) or the arrival timestamp itself (ingestion-time streams).
    Physical arrival times follow the configured process; the pareto process
    keeps the configured rate as its mean via the scale default.
    """
    if horizon_ms <= 0:
        raise ValueError("horizon must be positive")
    rng = random.Random(f"{seed}:{source_id}:arrivals")
    rate = profile.rate_for(source_index)
    gap_ms = 1000.0 / rate
    tick_ms = profile.tick_ms if profile.tick_ms is not None else gap_ms
    start = profile.start_ms
    lag = profile.event_lag_ms

    vshape = profile.tuples_pareto_shape
    vscale = None
    if vshape is not None:
        if vshape <= 1:
            raise ValueError("tuple volume pareto shape must exceed 1")
        vscale = profile.tuples_per_message * (vshape - 1) / vshape

    if profile.arrival == "pareto":
        scale = profile.pareto_scale_ms
        if scale is None:
            scale = gap_ms * (profile.pareto_shape - 1) / profile.pareto_shape
    events: list[Event] = []
    cursor = float(start)
    k = 0
    while True:
        k += 1
        if profile.arrival == "constant":
            cursor = start + k * gap_ms
        elif profile.arrival == "poisson":
            cursor += rng.expovariate(1.0 / gap_ms)
        else:
            cursor += scale * rng.paretovariate(profile.pareto_shape)
        t = round(cursor) + (lag if time_domain == EVENT_TIME else 0)
        if t > horizon_ms:
            break
        if vscale is None:
            tuples = profile.tuples_per_message
        else:
            tuples = max(1, round(vscale * rng.paretovariate(vshape)))
        p = round(k * tick_ms) if time_domain == EVENT_TIME else t
        events.append(Event(source_id=source_id, p=p, t=t, tuple_count=tuples))
    return events


@dataclass(frozen=True, slots=True)
class TenantGroupSpec:
    """A homogeneous group of tenant jobs.

    Defaults follow the usual shapes: latency-sensitive tenants run sparse
    1 msg/s sources with 1000-tuple batches over 1 s windows and an 800 ms
    constraint; bulk-analytics tenants run 10 s windows with a constraint of
    two hours.
    """

    group: str
    job_count: int
    sources_per_job: int = 64
    window_ms: int = 1000
    latency_constraint_ms: int = 800
    name: str = ""
    shape: str = "tumbling"
    stages: int = 4
    slide_ms: int | None = None
    time_domain: str = INGESTION_TIME
    rate: float = 1.0
    tuples_per_message: int = 1000
    arrival: str = "constant"
    pareto_shape: float = 2.0
    pareto_scale_ms: float | None = None
    skew: tuple[float, ...] = ()
    tick_ms: float | None = None
    tuples_pareto_shape: float | None = None
    start_ms: int = 0
    event_lag_ms: int = 0
    stage_cost_ms: object = 1
    per_tuple_cost_us: int = 0
    trigger_cost_ms: int = 0
    parallelism: int = 1
    token_rate: int = 0

    def __post_init__(self) -> None:
        if self.window_ms <= 0:
            raise ScenarioError("window must be positive")
        if self.latency_constraint_ms <= 0:
            raise ScenarioError("latency constraint must be positive")
        if self.job_count < 1:
            raise ScenarioError("group needs at least one job")


def latency_sensitive(job_count: int, **overrides) -> TenantGroupSpec:
    base = dict(
        group=LS,
        job_count=job_count,
        window_ms=1000,
        latency_constraint_ms=800,
        rate=1.0,
        tuples_per_message=1000,
    )
    base.update(overrides)
    return TenantGroupSpec(**base)


def bulk_analytics(job_count: int, **overrides) -> TenantGroupSpec:
    base = dict(
        group=BA,
        job_count=job_count,
        window_ms=10_000,
        latency_constraint_ms=7_200_000,
        rate=1.0,
        tuples_per_message=1000,
    )
    base.update(overrides)
    return TenantGroupSpec(**base)


def _profile_of(spec: TenantGroupSpec) -> SourceProfile:
    return SourceProfile(
        rate=spec.rate,
        tuples_per_message=spec.tuples_per_message,
        arrival=spec.arrival,
        pareto_shape=spec.pareto_shape,
        pareto_scale_ms=spec.pareto_scale_ms,
        skew=spec.skew,
        tick_ms=spec.tick_ms,
        tuples_pareto_shape=spec.tuples_pareto_shape,
        start_ms=spec.start_ms,
        event_lag_ms=spec.event_lag_ms,
    )


def build_scenario(
    groups: list[TenantGroupSpec],
    cluster: SchedulerConfig,
    *,
    horizon_ms: int = 30_000,
    token_interval_ms: int = 1000,
    mode: str = "virtual",
    trace: bool = False,
) -> Scenario:
    """Expand tenant groups into a full scenario with one graph per job."""
    jobs: list[JobSetup] = []
    for spec in groups:
        label = spec.name or spec.group.lower()
        for j in range(spec.job_count):
            job_id = f"{label}-{j}"
            graph = make_pipeline_graph(
                job_id,
                shape=spec.shape,
                stages=spec.stages,
                window_ms=spec.window_ms,
                slide_ms=spec.slide_ms,
                sources=spec.sources_per_job,
                latency_constraint_ms=spec.latency_constraint_ms,
                time_domain=spec.time_domain,
                stage_cost_ms=spec.stage_cost_ms,
                per_tuple_cost_us=spec.per_tuple_cost_us,
                trigger_cost_ms=spec.trigger_cost_ms,
                parallelism=spec.parallelism,
                group=spec.group,
            )
            jobs.append(
                JobSetup(graph=graph, profile=_profile_of(spec), token_rate=spec.token_rate)
            )
    return Scenario(
        jobs=jobs,
        config=cluster,
        horizon_ms=horizon_ms,
        token_interval_ms=token_interval_ms,
        mode=mode,
        trace=trace,
    )


def calibrate_constraint(
    job: TenantGroupSpec,
    cluster: SchedulerConfig,
    seed,
    *,
    horizon_ms: int = 30_000,
    target_utilization: float = 0.5,
    max_instances: int = 64,
) -> int:
    """Latency constraint from an isolated run: twice the 95th percentile.

    Replicates the job until modeled CPU utilization approaches the target,
    then returns 2 x p95 of the observed output latencies. Zero-cost jobs run
    a single instance (utilization cannot rise above zero).
    """
    from .runtime import simulate

    single = build_scenario([replace(job, job_count=1)], cluster, horizon_ms=horizon_ms)
    probe = simulate(single, seed)
    capacity = cluster.workers * horizon_ms
    utilization = probe.total_cost_ms / capacity
    if utilization > 1.5 * target_utilization:
        raise CalibrationError(
            f"single instance already runs at {utilization:.0%} utilization; "
            f"target {target_utilization:.0%} unreachable"
        )
    if utilization <= 0:
        instances = 1
    else:
        instances = min(max_instances, max(1, round(target_utilization / utilization)))
    if instances == 1:
        report = probe
    else:
        scaled = build_scenario(
            [replace(job, job_count=instances)], cluster, horizon_ms=horizon_ms
        )
        report = simulate(scaled, seed)
    latencies = [r.latency for r in report.records]
    if not latencies:
        raise CalibrationError("calibration run produced no outputs")
    return int(2 * percentile_nearest_rank(latencies, 95))
