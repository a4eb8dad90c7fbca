"""Shared test helpers: random DAGs and independent brute-force oracles."""
from __future__ import annotations

import random

from streamsched.model import DataflowGraph, OperatorSpec


def random_dag(rng: random.Random, max_nodes: int = 8, cost_range=(1, 10)):
    """A random single-source DAG of regular operators plus per-op costs.

    Node j > 0 always has at least one predecessor among 0..j-1, so every
    operator is reachable from node 0. Returns (graph, costs).
    """
    n = rng.randint(2, max_nodes)
    downstream: dict[int, set[int]] = {i: set() for i in range(n)}
    for j in range(1, n):
        preds = [i for i in range(j) if rng.random() < 0.4]
        if not preds:
            preds = [rng.randrange(j)]
        for i in preds:
            downstream[i].add(j)
    names = [f"o{i}" for i in range(n)]
    ops = {}
    for i in range(n):
        ops[names[i]] = OperatorSpec(
            id=names[i],
            stage=i,
            downstream=tuple(names[j] for j in sorted(downstream[i])),
            exec_cost_ms=rng.randint(*cost_range),
        )
    sinks = tuple(names[i] for i in range(n) if not downstream[i])
    graph = DataflowGraph(
        job_id="rand",
        operators=ops,
        latency_constraint=1_000_000,
        sources=(names[0],),
        sinks=sinks,
    )
    costs = {oid: float(spec.exec_cost_ms) for oid, spec in ops.items()}
    return graph, costs


def enumerate_max_path(graph: DataflowGraph, op_id: str, costs) -> float:
    """Exhaustive path enumeration: max cost sum from op's successors to a sink."""
    best = 0.0

    def dfs(node: str, acc: float) -> None:
        nonlocal best
        succ = graph.operators[node].downstream
        if not succ and acc > best:
            best = acc
        for d in succ:
            dfs(d, acc + costs[d])

    dfs(op_id, 0.0)
    return best


def has_cycle_dfs(nodes, edges) -> bool:
    """Independent colored-DFS cycle detector over an arbitrary edge list."""
    adj: dict[str, list[str]] = {n: [] for n in nodes}
    for u, v in edges:
        adj[u].append(v)
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in nodes}

    def visit(u: str) -> bool:
        color[u] = GREY
        for v in adj[u]:
            if color[v] == GREY:
                return True
            if color[v] == WHITE and visit(v):
                return True
        color[u] = BLACK
        return False

    return any(color[n] == WHITE and visit(n) for n in nodes)


def feasible_zero_violation(jobs: dict[str, list[tuple[int, int, int | None]]]) -> bool:
    """Brute-force search for a single-worker non-preemptive schedule with no
    start-deadline violations.

    ``jobs`` maps an operator to its FIFO message list of
    (arrival, cost, start_deadline or None). Branches over every eligible
    head message and over idling until the next arrival.
    """
    op_ids = sorted(jobs)
    msgs = {op: list(batch) for op, batch in jobs.items()}
    total = sum(len(b) for b in msgs.values())

    def dfs(time: int, pos: tuple[int, ...], done: int) -> bool:
        if done == total:
            return True
        arrivals = []
        for i, op in enumerate(op_ids):
            if pos[i] < len(msgs[op]):
                arrivals.append(msgs[op][pos[i]][0])
        soonest = min(arrivals)
        if soonest > time:
            time = soonest
        for i, op in enumerate(op_ids):
            if pos[i] >= len(msgs[op]):
                continue
            arrival, cost, deadline = msgs[op][pos[i]]
            if arrival > time:
                continue
            if deadline is not None and time > deadline:
                continue
            nxt = list(pos)
            nxt[i] += 1
            if dfs(time + cost, tuple(nxt), done + 1):
                return True
        future = [a for a in arrivals if a > time]
        if future and dfs(min(future), pos, done):
            return True
        return False

    return dfs(0, tuple(0 for _ in op_ids), 0)
