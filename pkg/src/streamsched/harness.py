"""Experiment runner: execute scenarios, write reports, sweep parameters.

Outputs per run: ``latencies.csv`` (one row per dataflow output),
``summary.json`` (per-job and per-group statistics plus counters) and,
when tracing is enabled, ``trace.csv`` with every dispatch. Reports are
byte-reproducible in virtual mode for a fixed seed.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import replace

from .runtime import RunReport, simulate
from .scenario import Scenario, JobSetup, load_scenario, with_config
from .stats import latency_summary

SWEEP_AXES = ("quantum", "batch", "workers", "ingestion", "perturbation_sigma")


def summarize(report: RunReport, scenario: Scenario) -> dict:
    """Aggregate a run report into the summary.json structure."""
    per_job: dict[str, dict] = {}
    by_job: dict[str, list[int]] = {}
    met_by_job: dict[str, int] = {}
    for rec in report.records:
        by_job.setdefault(rec.job_id, []).append(rec.latency)
        if rec.deadline_met:
            met_by_job[rec.job_id] = met_by_job.get(rec.job_id, 0) + 1

    span_ms = max(report.makespan_ms, 1)
    for job in scenario.jobs:
        job_id = job.graph.job_id
        latencies = by_job.get(job_id, [])
        entry = latency_summary(latencies)
        entry["success_rate"] = (
            met_by_job.get(job_id, 0) / len(latencies) if latencies else None
        )
        entry["throughput_tuples_per_s"] = (
            report.tuples_by_job.get(job_id, 0) * 1000.0 / span_ms
        )
        entry["executed_messages"] = report.executed_by_job.get(job_id, 0)
        entry["late_dropped"] = report.late_by_job.get(job_id, 0)
        entry["group"] = report.groups_by_job.get(job_id, "")
        per_job[job_id] = entry

    per_group: dict[str, dict] = {}
    group_lat: dict[str, list[int]] = {}
    group_met: dict[str, int] = {}
    group_tuples: dict[str, int] = {}
    for rec in report.records:
        group = report.groups_by_job.get(rec.job_id, "") or "default"
        group_lat.setdefault(group, []).append(rec.latency)
        if rec.deadline_met:
            group_met[group] = group_met.get(group, 0) + 1
    for job_id, tuples in report.tuples_by_job.items():
        group = report.groups_by_job.get(job_id, "") or "default"
        group_tuples[group] = group_tuples.get(group, 0) + tuples
    for group in sorted(set(group_lat) | set(group_tuples)):
        latencies = group_lat.get(group, [])
        entry = latency_summary(latencies)
        entry["success_rate"] = (
            group_met.get(group, 0) / len(latencies) if latencies else None
        )
        entry["throughput_tuples_per_s"] = group_tuples.get(group, 0) * 1000.0 / span_ms
        per_group[group] = entry

    overhead = None
    if report.overhead_ns:
        total = max(report.overhead_ns.get("total_busy_ns", 0), 1)
        overhead = dict(report.overhead_ns)
        overhead["scheduling_fraction"] = report.overhead_ns["scheduling_ns"] / total
        overhead["priority_generation_fraction"] = (
            report.overhead_ns["priority_generation_ns"] / total
        )

    config = scenario.config
    return {
        "seed": report.seed,
        "mode": report.mode,
        "scheduler": config.scheduler,
        "policy": config.policy,
        "quantum_ms": config.quantum_ms,
        "workers": config.workers,
        "horizon_ms": scenario.horizon_ms,
        "per_job": per_job,
        "per_group": per_group,
        "totals": {
            "outputs": len(report.records),
            "executed_messages": report.executed,
            "total_cost_ms": report.total_cost_ms,
            "makespan_ms": report.makespan_ms,
            "busy_ms_by_worker": {str(w): ms for w, ms in report.busy_ms_by_worker.items()},
            "fired_windows": report.fired_windows,
            "empty_windows": report.empty_windows,
            "late_dropped": report.late_dropped,
            "errors": len(report.errors),
        },
        "overhead": overhead,
    }


def write_report(report: RunReport, scenario: Scenario, out_dir: str) -> dict:
    """Write latencies.csv, summary.json and (if traced) trace.csv."""
    os.makedirs(out_dir, exist_ok=True)
    latencies_path = os.path.join(out_dir, "latencies.csv")
    with open(latencies_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["job_id", "sink_id", "p_out", "emit_time", "latency_ms", "deadline_met"])
        for rec in report.records:
            writer.writerow(
                [
                    rec.job_id,
                    rec.sink_id,
                    rec.p_out,
                    rec.emit_time,
                    rec.latency,
                    "true" if rec.deadline_met else "false",
                ]
            )

    summary = summarize(report, scenario)
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")

    paths = {"latencies": latencies_path, "summary": summary_path}
    if scenario.trace:
        trace_path = os.path.join(out_dir, "trace.csv")
        with open(trace_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "worker", "operator", "msg_id", "pri_local", "pri_global"])
            for row in report.trace:
                writer.writerow(
                    [row.t, row.worker, row.op_id, row.msg_id, row.local_key, row.global_key]
                )
        paths["trace"] = trace_path
    return paths


def run(
    scenario: Scenario | str,
    seed: int = 0,
    out_dir: str | None = None,
    **config_overrides,
) -> tuple[RunReport, dict]:
    """Execute one scenario (object or config path); optionally write files."""
    if isinstance(scenario, str):
        scenario = load_scenario(scenario)
    if config_overrides:
        scenario = with_config(scenario, **config_overrides)
    report = simulate(scenario, seed)
    if out_dir is not None:
        write_report(report, scenario, out_dir)
    return report, summarize(report, scenario)


def apply_axis(scenario: Scenario, axis: str, value) -> Scenario:
    """Return a scenario with one experiment axis changed."""
    if axis == "quantum":
        return with_config(scenario, quantum_ms=float(value))
    if axis == "workers":
        return with_config(scenario, workers=int(value))
    if axis == "perturbation_sigma":
        return with_config(scenario, perturb_sigma_ms=float(value))
    if axis == "batch":
        batch = int(value)
        jobs = []
        for job in scenario.jobs:
            profile = job.profile
            if profile is None:
                jobs.append(job)
                continue
            # Conserve the aggregate tuple rate: msgs/s shrinks as batch grows.
            rate = profile.rate * profile.tuples_per_message / batch
            jobs.append(replace(job, profile=replace(profile, rate=rate, tuples_per_message=batch)))
        return Scenario(
            jobs=jobs,
            config=scenario.config,
            horizon_ms=scenario.horizon_ms,
            token_interval_ms=scenario.token_interval_ms,
            mode=scenario.mode,
            trace=scenario.trace,
        )
    if axis == "ingestion":
        factor = float(value)
        targets = {j.graph.job_id for j in scenario.jobs if j.graph.group == "BA"}
        jobs = []
        for job in scenario.jobs:
            profile = job.profile
            scale = not targets or job.graph.job_id in targets
            if profile is None or not scale:
                jobs.append(job)
                continue
            jobs.append(replace(job, profile=replace(profile, rate=profile.rate * factor)))
        return Scenario(
            jobs=jobs,
            config=scenario.config,
            horizon_ms=scenario.horizon_ms,
            token_interval_ms=scenario.token_interval_ms,
            mode=scenario.mode,
            trace=scenario.trace,
        )
    raise ValueError(f"unknown sweep axis {axis!r} (expected one of {SWEEP_AXES})")


def sweep(
    scenario: Scenario | str,
    axis: str,
    values,
    seed: int = 0,
    out_dir: str | None = None,
) -> list[tuple[object, dict]]:
    """One run per axis value at a constant seed, plus a combined table."""
    if isinstance(scenario, str):
        scenario = load_scenario(scenario)
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r} (expected one of {SWEEP_AXES})")
    results: list[tuple[object, dict]] = []
    for value in values:
        variant = apply_axis(scenario, axis, value)
        sub_dir = os.path.join(out_dir, f"{axis}={value}") if out_dir is not None else None
        _, summary = run(variant, seed=seed, out_dir=sub_dir)
        results.append((value, summary))

    if out_dir is not None:
        combined = os.path.join(out_dir, "sweep.csv")
        groups = sorted({g for _, s in results for g in s["per_group"]})
        header = ["axis", "value"]
        for g in groups:
            header += [
                f"{g}_median_ms",
                f"{g}_p95_ms",
                f"{g}_p99_ms",
                f"{g}_success_rate",
                f"{g}_throughput_tuples_per_s",
            ]
        with open(combined, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for value, summary in results:
                row = [axis, value]
                for g in groups:
                    entry = summary["per_group"].get(g, {})
                    row += [
                        entry.get("median_ms"),
                        entry.get("p95_ms"),
                        entry.get("p99_ms"),
                        entry.get("success_rate"),
                        entry.get("throughput_tuples_per_s"),
                    ]
                writer.writerow(row)
    return results
