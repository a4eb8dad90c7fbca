"""Scheduling contexts and the four-function context-handling API.

Priority generation happens entirely at the sending side: a context converter
embedded in each operator builds a PriorityContext for every outgoing message
and digests ReplyContexts piggybacked on acknowledgements coming back from
downstream. The scheduler only ever reads the finished priority keys, which
keeps it stateless.

The four functions a policy supplies are ``build_ctx_at_source``,
``build_ctx_at_operator``, ``process_ctx_from_reply`` and ``prepare_reply``;
``cxt_convert`` is the shared core that turns stream progress plus cost
feedback into priority keys.
"""
from __future__ import annotations

from typing import NamedTuple

from .model import EVENT_TIME, DataflowGraph, Event, OperatorSpec
from .policy import (
    EDF,
    LLF,
    SJF,
    TOKEN,
    Priority,
    TokenBucket,
    edf_deadline,
    llf_deadline,
    sjf_priority,
    token_priority,
)
from .progress import RegressionModel, frontier


class PriorityContext(NamedTuple):
    """Per-message scheduling state carried with the message.

    ``p``/``t``/``latency_budget`` form the dataflow-defined field: frontier
    progress, frontier time and the job latency constraint, rewritten at every
    hop by ``cxt_convert``. The budget never changes along a dataflow path.
    Immutable by construction; the scheduler only ever reads it.
    """

    msg_id: int
    local_key: float
    global_key: float
    p: int
    t: int
    latency_budget: int


class ReplyContext(NamedTuple):
    """Feedback attached to an acknowledgement from a downstream operator.

    ``c_m`` is the replier's own profiled per-message cost, ``c_path`` the
    accumulated critical-path cost below it. The optional runtime counters are
    carried for reporting only and never feed priority math.
    """

    c_m: float
    c_path: float
    queue_delay_ms: float | None = None
    queue_length: int | None = None


class RcStore:
    """Latest ReplyContext per downstream operator, with a max-cost view.

    The critical entry (max c_m + c_path, ties to the smallest operator id)
    is maintained incrementally; context conversion reads it on every message.
    """

    __slots__ = ("_entries", "_critical_id")

    def __init__(self) -> None:
        self._entries: dict[str, ReplyContext] = {}
        self._critical_id: str | None = None

    def _rescan(self) -> None:
        best_id = None
        best_sum = -1.0
        for oid, rc in self._entries.items():
            total = rc.c_m + rc.c_path
            if total > best_sum or (total == best_sum and oid < best_id):
                best_id, best_sum = oid, total
        self._critical_id = best_id

    def update(self, replier: str, rc: ReplyContext) -> None:
        self._entries[replier] = rc
        cur = self._critical_id
        if cur is None or cur == replier:
            self._rescan()
            return
        best = self._entries[cur]
        total = rc.c_m + rc.c_path
        best_sum = best.c_m + best.c_path
        if total > best_sum or (total == best_sum and replier < cur):
            self._critical_id = replier

    def entry(self, replier: str) -> ReplyContext | None:
        return self._entries.get(replier)

    def aggregate(self) -> float:
        """Max of c_m + c_path over stored entries; 0 when empty."""
        if self._critical_id is None:
            return 0.0
        rc = self._entries[self._critical_id]
        return rc.c_m + rc.c_path

    def critical(self) -> ReplyContext | None:
        """The entry achieving the aggregate (ties broken by operator id)."""
        if self._critical_id is None:
            return None
        return self._entries[self._critical_id]

    def __len__(self) -> int:
        return len(self._entries)


def process_ctx_from_reply(reply_from: str, rc: ReplyContext, rc_store: RcStore) -> RcStore:
    """Store the replying operator's latest feedback."""
    rc_store.update(reply_from, rc)
    return rc_store


def prepare_reply(replying_op: OperatorSpec, own_cost: float, rc_store: RcStore) -> ReplyContext:
    """Build the feedback this operator sends upstream.

    A sink starts the recursion with zero path cost; everyone else forwards
    the max downstream cost it has heard of, so the path costs accumulate into
    the critical path toward the sinks.
    """
    if own_cost < 0:
        raise ValueError("reply costs must be nonnegative")
    if not replying_op.downstream:
        return ReplyContext(c_m=own_cost, c_path=0.0)
    return ReplyContext(c_m=own_cost, c_path=rc_store.aggregate())


def _deadline_keys(
    policy: str,
    p_f: int,
    t_f: int,
    latency_budget: int,
    rc_store: RcStore,
    target: OperatorSpec,
) -> tuple[float, float]:
    crit = rc_store.critical()
    if crit is None:
        # Bootstrap before any feedback: the target's cost hint, no path cost.
        c_op = target.cost_hint if target.cost_hint is not None else 0.0
        c_path = 0.0
    else:
        c_op, c_path = crit.c_m, crit.c_path
    if policy == LLF:
        return p_f, llf_deadline(t_f, latency_budget, c_op, c_path)
    if policy == EDF:
        return p_f, edf_deadline(t_f, latency_budget, c_path)
    if policy == SJF:
        own = rc_store.entry(target.id)
        c = own.c_m if own is not None else (target.cost_hint or 0.0)
        key = sjf_priority(c)
        return key, key
    raise ValueError(f"unknown deadline policy {policy!r}")


def _converted(
    msg_id: int,
    p: int,
    t: int,
    latency_budget: int,
    rc_store: RcStore,
    target: OperatorSpec,
    model: RegressionModel | None,
    policy: str,
    sender_slide: int,
    domain: str,
    semantic_awareness: bool,
) -> PriorityContext:
    """The conversion core: frontier extension, model feedback, deadline keys."""
    if semantic_awareness and target.windowed:
        p_f, t_f = frontier(p, t, sender_slide, target, model, domain)
        if domain == EVENT_TIME and model is not None:
            model.update(p, t)
    else:
        p_f, t_f = p, t
    local, glob = _deadline_keys(policy, p_f, t_f, latency_budget, rc_store, target)
    return PriorityContext(msg_id, local, glob, p_f, t_f, latency_budget)


def cxt_convert(
    pc: PriorityContext,
    rc_store: RcStore,
    target: OperatorSpec,
    model: RegressionModel | None,
    policy: str,
    *,
    sender_slide: int = 1,
    domain: str = "ingestion_time",
    semantic_awareness: bool = True,
) -> PriorityContext:
    """Recompute a PC's priority keys and dataflow field for one hop.

    Frontier extension only applies to windowed targets and can be switched
    off (``semantic_awareness=False``), in which case the message's own
    timestamps feed the deadline directly. Event-time hops also feed the
    observed (p, t) sample into the channel's regression model.
    """
    if policy == TOKEN:
        # Token keys are assigned at the source and ride along unchanged.
        return pc
    return _converted(
        pc.msg_id,
        pc.p,
        pc.t,
        pc.latency_budget,
        rc_store,
        target,
        model,
        policy,
        sender_slide,
        domain,
        semantic_awareness,
    )


def build_ctx_at_source(
    event: Event,
    job: DataflowGraph,
    rc_store: RcStore,
    target: OperatorSpec,
    policy: str,
    *,
    model: RegressionModel | None = None,
    msg_id: int = 0,
    bucket: TokenBucket | None = None,
    semantic_awareness: bool = True,
) -> PriorityContext:
    """Create the PC for a message born at a source from event ``event``.

    The initial priority keys are the event's own (p, t); conversion then
    rewrites them for the first hop (or, under the token policy, the keys come
    from the source's token bucket and ride the whole dataflow).
    """
    if policy == TOKEN:
        if bucket is None:
            raise ValueError("token policy needs a TokenBucket at the source")
        tag = bucket.issue(event.t)
        pri = token_priority(tag, bucket.interval_id(event.t))
        return PriorityContext(
            msg_id, pri.local_key, pri.global_key, event.p, event.t, job.latency_constraint
        )
    return _converted(
        msg_id,
        event.p,
        event.t,
        job.latency_constraint,
        rc_store,
        target,
        model,
        policy,
        1,
        job.time_domain,
        semantic_awareness,
    )


def build_ctx_at_operator(
    upstream_pc: PriorityContext,
    out_p: int,
    out_t: int,
    rc_store: RcStore,
    sender: OperatorSpec,
    target: OperatorSpec,
    policy: str,
    *,
    model: RegressionModel | None = None,
    domain: str = "ingestion_time",
    msg_id: int = 0,
    semantic_awareness: bool = True,
) -> PriorityContext:
    """Derive the PC for a message an operator emits downstream.

    The new PC inherits the upstream context (in particular the latency
    budget) and is converted for the next hop from the outgoing message's own
    (p, t): for windowed senders that is the fired window's boundary and the
    time the boundary was observed.
    """
    if upstream_pc is None:
        raise ValueError("upstream message carries no priority context")
    if policy == TOKEN:
        # Inherited token keys propagate unchanged along the dataflow.
        return PriorityContext(
            msg_id,
            upstream_pc.local_key,
            upstream_pc.global_key,
            out_p,
            out_t,
            upstream_pc.latency_budget,
        )
    return _converted(
        msg_id,
        out_p,
        out_t,
        upstream_pc.latency_budget,
        rc_store,
        target,
        model,
        policy,
        sender.slide_size,
        domain,
        semantic_awareness,
    )


class ContextConverter:
    """Per-operator owner of the context-handling state.

    Holds the operator's RcStore, one regression model per downstream windowed
    target and, under the token policy at sources, the token bucket. All four
    API functions funnel through here so the runtime has a single seam per
    operator instance.
    """

    def __init__(
        self,
        spec: OperatorSpec,
        graph: DataflowGraph,
        policy: str,
        *,
        regression_capacity: int = 32,
        semantic_awareness: bool = True,
        bucket: TokenBucket | None = None,
    ):
        self.spec = spec
        self.graph = graph
        self.policy = policy
        self.semantic_awareness = semantic_awareness
        self.rc_store = RcStore()
        self.bucket = bucket
        self._regression_capacity = regression_capacity
        self._event_domain = graph.time_domain == EVENT_TIME
        self._models: dict[str, RegressionModel] = {}
        self._local_floor: dict[str, float] = {}

    def model_for(self, target: OperatorSpec) -> RegressionModel | None:
        if not self._event_domain or not target.windowed:
            return None
        model = self._models.get(target.id)
        if model is None:
            model = RegressionModel(self._regression_capacity)
            self._models[target.id] = model
        return model

    def _monotone_local(self, pc: PriorityContext, target_id: str) -> PriorityContext:
        # Local priority is stream progress and must be nondecreasing along a
        # channel, or the target's priority queue could reorder the channel.
        # A merge operator can emit regressing logical times when one of its
        # inputs lags; the ordering key is floored to the channel's high mark.
        floor = self._local_floor.get(target_id)
        if floor is not None and floor > pc.local_key:
            return pc._replace(local_key=floor)
        self._local_floor[target_id] = pc.local_key
        return pc

    def at_source(self, event: Event, target: OperatorSpec, msg_id: int) -> PriorityContext:
        if self.policy == TOKEN:
            pc = build_ctx_at_source(
                event, self.graph, self.rc_store, target, TOKEN,
                msg_id=msg_id, bucket=self.bucket,
            )
        else:
            pc = _converted(
                msg_id,
                event.p,
                event.t,
                self.graph.latency_constraint,
                self.rc_store,
                target,
                self.model_for(target),
                self.policy,
                1,
                self.graph.time_domain,
                self.semantic_awareness,
            )
        return self._monotone_local(pc, target.id)

    def at_operator(
        self,
        upstream_pc: PriorityContext,
        out_p: int,
        out_t: int,
        target: OperatorSpec,
        msg_id: int,
    ) -> PriorityContext:
        if upstream_pc is None:
            raise ValueError("upstream message carries no priority context")
        if self.policy == TOKEN:
            pc = PriorityContext(
                msg_id,
                upstream_pc.local_key,
                upstream_pc.global_key,
                out_p,
                out_t,
                upstream_pc.latency_budget,
            )
        else:
            pc = _converted(
                msg_id,
                out_p,
                out_t,
                upstream_pc.latency_budget,
                self.rc_store,
                target,
                self.model_for(target),
                self.policy,
                self.spec.slide_size,
                self.graph.time_domain,
                self.semantic_awareness,
            )
        return self._monotone_local(pc, target.id)

    def on_reply(self, reply_from: str, rc: ReplyContext) -> None:
        process_ctx_from_reply(reply_from, rc, self.rc_store)

    def reply(self, own_cost: float) -> ReplyContext:
        return prepare_reply(self.spec, own_cost, self.rc_store)
