"""Priority computation: start-deadline math and token-based fair sharing.

Smaller keys schedule earlier. The start deadline of a message is the latest
physical time it may begin executing without blowing the job's latency
budget; least-laxity-first dispatches by ascending start deadline. A deadline
already in the past stays a valid (small) key rather than being clamped, so
the total order over messages is preserved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

LLF = "llf"
EDF = "edf"
SJF = "sjf"
TOKEN = "token"

DEADLINE_POLICIES = (LLF, EDF, SJF)
POLICY_NAMES = DEADLINE_POLICIES + (TOKEN,)

#: Global-priority key for messages that did not obtain a token. Ordered
#: after every tokened key so untokened traffic runs only in leftover capacity.
UNTOKENED = math.inf


class Priority(NamedTuple):
    local_key: float
    global_key: float


@dataclass(frozen=True, slots=True)
class CostEstimate:
    """Profiled execution cost of the target plus its downstream critical path."""

    c_op: float = 0.0
    c_path: float = 0.0

    def __post_init__(self) -> None:
        if self.c_op < 0 or self.c_path < 0:
            raise ValueError("costs must be nonnegative")

    @property
    def total(self) -> float:
        return self.c_op + self.c_path


def llf_deadline(t_f: int, latency_budget: int, c_op: float, c_path: float) -> float:
    """Latest start time: frontier time plus budget minus downstream work."""
    return t_f + latency_budget - c_op - c_path


def edf_deadline(t_f: int, latency_budget: int, c_path: float) -> float:
    """Deadline before the target executes: the LLF value without c_op."""
    return t_f + latency_budget - c_path


def sjf_priority(c_op: float) -> float:
    """Shortest-job-first key: the target's own estimated cost."""
    return c_op


class TokenBucket:
    """Per-interval token allowance spread proportionally across the interval.

    Exactly ``rate`` tokens exist per interval; the k-th token issued carries
    tag ``interval_start + k * interval / rate``, so tokens of concurrent jobs
    interleave in proportion to their rates.
    """

    __slots__ = ("job_id", "rate", "interval_ms", "_interval_id", "_issued")

    def __init__(self, job_id: str, rate: int, interval_ms: int = 1000):
        if interval_ms <= 0:
            raise ValueError("interval must be positive")
        if rate < 0:
            raise ValueError("rate must be nonnegative")
        self.job_id = job_id
        self.rate = rate
        self.interval_ms = interval_ms
        self._interval_id = -1
        self._issued = 0

    def interval_id(self, now: int) -> int:
        return now // self.interval_ms

    def issue(self, now: int) -> int | None:
        """Consume and return the next token tag for ``now``'s interval, if any."""
        interval = now // self.interval_ms
        if interval != self._interval_id:
            self._interval_id = interval
            self._issued = 0
        if self.rate <= 0 or self._issued >= self.rate:
            return None
        tag = interval * self.interval_ms + (self._issued * self.interval_ms) // self.rate
        self._issued += 1
        return tag


def issue_token(bucket: TokenBucket, now: int) -> int | None:
    return bucket.issue(now)


def token_priority(token: int | None, interval_id: int) -> Priority:
    """Tokened messages sort by token tag; untokened ones sort last."""
    if token is None:
        return Priority(local_key=interval_id, global_key=UNTOKENED)
    return Priority(local_key=interval_id, global_key=token)
