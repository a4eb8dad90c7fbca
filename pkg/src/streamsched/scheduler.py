"""Two-level priority scheduling structures and baseline dispatchers.

The ready queue orders messages within an operator by local priority and
orders operators by the global priority of each operator's current head
message. It is stateless in the sense that every ordering decision reads only
the PriorityContext already attached to a message; nothing is recomputed here.

Workers pull whole operators, never single messages, so an operator executes
on at most one worker at a time and per-channel FIFO is preserved. The
dispatcher classes add the worker-facing semantics on top: quantum-based
peek-and-swap for the priority scheduler, plus FIFO and thread-local-first
baselines.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

from .model import Message

CAMEO = "cameo"
FIFO = "fifo"
LOCAL_FIRST = "local-first"

SCHEDULER_NAMES = (CAMEO, FIFO, LOCAL_FIRST)


@dataclass(slots=True)
class SchedulerConfig:
    scheduler: str = CAMEO
    policy: str = "llf"
    quantum_ms: float = 1.0
    workers: int = 2
    rc_every_n: int = 1
    aging_ms: float | None = None
    ack_delay_ms: int = 0
    ack_cost_us: int = 0
    channel_delay_ms: int = 0
    regression_capacity: int = 32
    semantic_awareness: bool = True
    perturb_sigma_ms: float = 0.0
    profile_beta: float = 0.2

    def __post_init__(self) -> None:
        if self.quantum_ms < 0:
            raise ValueError("quantum must be nonnegative")
        if self.workers < 1:
            raise ValueError("worker count must be positive")
        if self.scheduler not in SCHEDULER_NAMES:
            raise ValueError(f"unknown scheduler {self.scheduler!r}")


class _OpEntry:
    # msgs holds (local_key, seq, effective_global, message); the effective
    # global key equals pc.global_key unless the aging bound clamps it.
    __slots__ = ("msgs", "held", "version")

    def __init__(self) -> None:
        self.msgs: list[tuple[float, int, float, Message]] = []
        self.held = False
        self.version = 0


class ReadyQueue:
    """Indexed two-level priority structure over operators and messages.

    The operator heap uses lazy invalidation: re-keying pushes a fresh entry
    with a bumped version and stale entries are skipped on pop. Ties break by
    enqueue sequence number, which makes runs reproducible.
    """

    def __init__(self, operator_ids, aging_ms: float | None = None):
        self._ops: dict[str, _OpEntry] = {oid: _OpEntry() for oid in operator_ids}
        self._heap: list[tuple[float, int, int, str]] = []
        self._seq = 0
        self._pending = 0
        self.aging_ms = aging_ms

    def __len__(self) -> int:
        return self._pending

    def register(self, op_id: str) -> None:
        if op_id not in self._ops:
            self._ops[op_id] = _OpEntry()

    def _head(self, entry: _OpEntry) -> tuple[float, int]:
        local, seq, eglobal, _ = entry.msgs[0]
        return (eglobal, seq)

    def _push_entry(self, op_id: str, entry: _OpEntry) -> None:
        entry.version += 1
        key, seq = self._head(entry)
        heapq.heappush(self._heap, (key, seq, entry.version, op_id))

    def enqueue(self, msg: Message, now: int = 0) -> int:
        """Insert a message under its target operator; returns its sequence."""
        if msg.pc is None:
            raise ValueError(f"message {msg.msg_id} carries no priority context")
        entry = self._ops.get(msg.target)
        if entry is None:
            raise KeyError(f"unknown target operator {msg.target!r}")
        seq = self._seq
        self._seq += 1
        local = msg.pc.local_key
        eglobal = msg.pc.global_key
        if self.aging_ms is not None and eglobal > now + self.aging_ms:
            # Aging bound: a bypassed message becomes eligible after aging_ms.
            eglobal = now + self.aging_ms
        was_head = entry.msgs[0] if entry.msgs else None
        heapq.heappush(entry.msgs, (local, seq, eglobal, msg))
        self._pending += 1
        if not entry.held and (was_head is None or entry.msgs[0] is not was_head):
            self._push_entry(msg.target, entry)
        return seq

    def _clean_top(self) -> tuple[float, int, int, str] | None:
        heap = self._heap
        while heap:
            top = heap[0]
            entry = self._ops[top[3]]
            if entry.held or top[2] != entry.version or not entry.msgs:
                heapq.heappop(heap)
                continue
            head = entry.msgs[0]
            if top[0] != head[2] or top[1] != head[1]:
                heapq.heappop(heap)
                continue
            return top
        return None

    def peek_key(self) -> tuple[float, int] | None:
        """Key of the best available operator, or None if all idle/held."""
        top = self._clean_top()
        if top is None:
            return None
        return (top[0], top[1])

    def acquire(self) -> str | None:
        """Take the min-global-key operator off the heap for exclusive use."""
        top = self._clean_top()
        if top is None:
            return None
        heapq.heappop(self._heap)
        op_id = top[3]
        entry = self._ops[op_id]
        entry.held = True
        entry.version += 1
        return op_id

    def release(self, op_id: str) -> None:
        entry = self._ops[op_id]
        entry.held = False
        if entry.msgs:
            self._push_entry(op_id, entry)

    def head_key(self, op_id: str) -> tuple[float, int] | None:
        entry = self._ops[op_id]
        if not entry.msgs:
            return None
        return self._head(entry)

    def pop_head(self, op_id: str) -> Message:
        entry = self._ops[op_id]
        _, _, _, msg = heapq.heappop(entry.msgs)
        self._pending -= 1
        return msg

    def pending_count(self, op_id: str) -> int:
        return len(self._ops[op_id].msgs)

    def next_dispatch(self) -> tuple[str, Message] | None:
        """One-shot dispatch: pop the head message of the best operator."""
        op_id = self.acquire()
        if op_id is None:
            return None
        msg = self.pop_head(op_id)
        self.release(op_id)
        return op_id, msg

    def drain_pending(self) -> list[Message]:
        """All pending messages in enqueue-sequence order (for rebuilds)."""
        out: list[tuple[int, Message]] = []
        for entry in self._ops.values():
            out.extend((seq, msg) for _, seq, _, msg in entry.msgs)
        out.sort(key=lambda x: x[0])
        return [msg for _, msg in out]


class CameoDispatcher:
    """Worker-facing wrapper: quantum-based peek-and-swap over a ReadyQueue.

    A worker keeps its operator while messages remain; once the processing
    time spent on the operator exceeds the quantum, every message boundary
    peeks at the heap and swaps if a strictly better operator is waiting.
    Messages themselves are never preempted.
    """

    def __init__(self, operator_ids, quantum_ms: float = 1.0, aging_ms: float | None = None):
        self.queue = ReadyQueue(operator_ids, aging_ms=aging_ms)
        self.quantum_ms = quantum_ms
        self._worker_op: dict[int, str] = {}
        self._worker_elapsed: dict[int, float] = {}

    def enqueue(self, msg: Message, now: int = 0, produced_by: int | None = None) -> int:
        return self.queue.enqueue(msg, now)

    def pending(self) -> int:
        return len(self.queue)

    def select(self, worker: int) -> tuple[str, Message] | None:
        cur = self._worker_op.get(worker)
        if cur is not None:
            if self.queue.pending_count(cur) == 0:
                self.queue.release(cur)
                del self._worker_op[worker]
                cur = None
            elif self._worker_elapsed[worker] >= self.quantum_ms:
                mine = self.queue.head_key(cur)
                other = self.queue.peek_key()
                if other is not None and other < mine:
                    self.queue.release(cur)
                    cur = None
        if cur is None:
            cur = self.queue.acquire()
            if cur is None:
                self._worker_op.pop(worker, None)
                return None
            self._worker_op[worker] = cur
            self._worker_elapsed[worker] = 0.0
        return cur, self.queue.pop_head(cur)

    def charge(self, worker: int, cost_ms: float) -> None:
        if worker in self._worker_elapsed:
            self._worker_elapsed[worker] += cost_ms

    def idle_worker(self, worker: int) -> None:
        """Drop the worker's operator hold when it goes idle."""
        cur = self._worker_op.pop(worker, None)
        if cur is not None:
            self.queue.release(cur)


class FifoDispatcher:
    """Global run queue in arrival order, one message per extraction.

    Each enqueued message appends its operator to the run queue; workers take
    the oldest entry whose operator is not currently executing elsewhere and
    process exactly one message from it.
    """

    def __init__(self, operator_ids, **_):
        self._tokens: deque[str] = deque()
        self._msgs: dict[str, deque[Message]] = {oid: deque() for oid in operator_ids}
        self._held: dict[int, str] = {}
        self._held_ops: set[str] = set()
        self._pending = 0

    def enqueue(self, msg: Message, now: int = 0, produced_by: int | None = None) -> int:
        if msg.target not in self._msgs:
            raise KeyError(f"unknown target operator {msg.target!r}")
        self._msgs[msg.target].append(msg)
        self._tokens.append(msg.target)
        self._pending += 1
        return self._pending

    def pending(self) -> int:
        return self._pending

    def select(self, worker: int) -> tuple[str, Message] | None:
        prev = self._held.pop(worker, None)
        if prev is not None:
            self._held_ops.discard(prev)
        skipped: list[str] = []
        found: str | None = None
        while self._tokens:
            op = self._tokens.popleft()
            if op in self._held_ops:
                skipped.append(op)
                continue
            found = op
            break
        self._tokens.extendleft(reversed(skipped))
        if found is None:
            return None
        self._held[worker] = found
        self._held_ops.add(found)
        self._pending -= 1
        return found, self._msgs[found].popleft()

    def charge(self, worker: int, cost_ms: float) -> None:
        pass

    def idle_worker(self, worker: int) -> None:
        prev = self._held.pop(worker, None)
        if prev is not None:
            self._held_ops.discard(prev)


class LocalFirstDispatcher:
    """Thread-local-first baseline approximating a default actor run queue.

    Work produced by a worker lands in that worker's local queue; source
    injections land in the global pool. A worker keeps its current operator
    while it has messages, then prefers its local queue, then the global pool,
    then steals from other workers in index order.
    """

    def __init__(self, operator_ids, workers: int = 1, **_):
        self._msgs: dict[str, deque[Message]] = {oid: deque() for oid in operator_ids}
        self._global: deque[str] = deque()
        self._local: list[deque[str]] = [deque() for _ in range(workers)]
        self._held: dict[int, str] = {}
        self._held_ops: set[str] = set()
        self._pending = 0

    def enqueue(self, msg: Message, now: int = 0, produced_by: int | None = None) -> int:
        if msg.target not in self._msgs:
            raise KeyError(f"unknown target operator {msg.target!r}")
        self._msgs[msg.target].append(msg)
        if produced_by is None:
            self._global.append(msg.target)
        else:
            self._local[produced_by].append(msg.target)
        self._pending += 1
        return self._pending

    def pending(self) -> int:
        return self._pending

    def _scan(self, tokens: deque[str]) -> str | None:
        # Tokens of held or drained operators are stale: their messages are
        # consumed run-to-empty by whoever holds the operator.
        while tokens:
            op = tokens.popleft()
            if op in self._held_ops or not self._msgs[op]:
                continue
            return op
        return None

    def select(self, worker: int) -> tuple[str, Message] | None:
        cur = self._held.get(worker)
        if cur is not None and self._msgs[cur]:
            self._pending -= 1
            return cur, self._msgs[cur].popleft()
        if cur is not None:
            del self._held[worker]
            self._held_ops.discard(cur)
        pools = [self._local[worker], self._global]
        pools.extend(q for i, q in enumerate(self._local) if i != worker)
        for pool in pools:
            op = self._scan(pool)
            if op is not None:
                self._held[worker] = op
                self._held_ops.add(op)
                self._pending -= 1
                return op, self._msgs[op].popleft()
        return None

    def charge(self, worker: int, cost_ms: float) -> None:
        pass

    def idle_worker(self, worker: int) -> None:
        cur = self._held.pop(worker, None)
        if cur is not None:
            self._held_ops.discard(cur)


def make_dispatcher(config: SchedulerConfig, operator_ids) -> object:
    if config.scheduler == CAMEO:
        return CameoDispatcher(operator_ids, quantum_ms=config.quantum_ms, aging_ms=config.aging_ms)
    if config.scheduler == FIFO:
        return FifoDispatcher(operator_ids)
    if config.scheduler == LOCAL_FIRST:
        return LocalFirstDispatcher(operator_ids, workers=config.workers)
    raise ValueError(f"unknown scheduler {config.scheduler!r}")
