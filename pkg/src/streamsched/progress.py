"""Stream-progress math: frontier transform and logical-to-physical mapping.

A windowed operator only emits when a window completes, so a message can be
deferred until the stream reaches the window boundary. ``transform`` computes
that boundary (frontier progress), and a progress map estimates the physical
time at which the boundary will have been observed at the sources (frontier
time). Ingestion-time streams map identically; event-time streams use a
least-squares fit over a sliding window of (p, t) samples.
"""
from __future__ import annotations

from collections import deque

from .model import EVENT_TIME, INGESTION_TIME, OperatorSpec


class ModelUnfitError(Exception):
    """Raised when predicting from a regression model with no usable fit."""


def transform(p: int, s_up: int, s_down: int) -> int:
    """Frontier progress for a message crossing from slide ``s_up`` to ``s_down``.

    When the sender's slide is shorter than the target's, the message cannot
    trigger the target until progress reaches the next multiple of the
    target's slide; otherwise progress passes through unchanged.
    """
    if s_up <= 0 or s_down <= 0:
        raise ValueError("slide sizes must be positive")
    if s_up < s_down:
        return (p // s_down + 1) * s_down
    return p


def progress_map_ingestion(p: int) -> int:
    """Ingestion-time streams stamp logical time from the clock: identity."""
    return p


class RegressionModel:
    """Running least-squares fit of physical time against logical progress.

    Keeps a bounded FIFO window of samples (default 32) and maintains exact
    integer sums, so the slope/intercept are a single float division away
    from the exact rational fit. With fewer than two distinct-p samples the
    model is unfit and callers fall back to treating the target as a regular
    operator.
    """

    __slots__ = ("capacity", "_samples", "_n", "_sp", "_st", "_spp", "_spt")

    def __init__(self, capacity: int = 32):
        if capacity < 2:
            raise ValueError("capacity must be at least 2")
        self.capacity = capacity
        self._samples: deque[tuple[int, int]] = deque()
        self._n = 0
        self._sp = 0
        self._st = 0
        self._spp = 0
        self._spt = 0

    def update(self, p: int, t: int) -> "RegressionModel":
        """Append a (p, t) sample, evicting the oldest beyond capacity."""
        if self._n == self.capacity:
            op, ot = self._samples.popleft()
            self._n -= 1
            self._sp -= op
            self._st -= ot
            self._spp -= op * op
            self._spt -= op * ot
        self._samples.append((p, t))
        self._n += 1
        self._sp += p
        self._st += t
        self._spp += p * p
        self._spt += p * t
        return self

    def _denominator(self) -> int:
        return self._n * self._spp - self._sp * self._sp

    @property
    def is_fit(self) -> bool:
        return self._n >= 2 and self._denominator() != 0

    @property
    def alpha(self) -> float:
        """Slope in ms per logical tick."""
        den = self._denominator()
        if self._n < 2 or den == 0:
            raise ModelUnfitError("fewer than two distinct-p samples")
        return (self._n * self._spt - self._sp * self._st) / den

    @property
    def gamma(self) -> float:
        """Intercept in ms."""
        den = self._denominator()
        if self._n < 2 or den == 0:
            raise ModelUnfitError("fewer than two distinct-p samples")
        return (self._st * self._spp - self._sp * self._spt) / den

    @property
    def samples(self) -> tuple[tuple[int, int], ...]:
        return tuple(self._samples)

    def predict(self, p: int) -> int:
        """alpha * p + gamma rounded to the nearest clock tick."""
        return round(self.alpha * p + self.gamma)


def model_update(model: RegressionModel, p: int, t: int) -> RegressionModel:
    return model.update(p, t)


def progress_map_event(model: RegressionModel, p: int) -> int:
    """Map frontier progress to frontier time through the fitted line."""
    if not model.is_fit:
        raise ModelUnfitError("fewer than two distinct-p samples")
    return model.predict(p)


def frontier(
    p_m: int,
    t_m: int,
    sender_slide: int,
    target: OperatorSpec,
    model: RegressionModel | None,
    domain: str,
) -> tuple[int, int]:
    """Estimated (frontier progress, frontier time) for a message at ``target``.

    Regular targets trigger immediately, so the message's own timestamps pass
    through. Windowed targets extend progress via ``transform``; the frontier
    time comes from the domain's progress map, falling back to ``t_m`` when an
    event-time model is unfit.
    """
    if not target.windowed:
        return p_m, t_m
    p_f = transform(p_m, sender_slide, target.slide_size)
    if domain == INGESTION_TIME:
        return p_f, progress_map_ingestion(p_f)
    if domain != EVENT_TIME:
        raise ValueError(f"unknown time domain {domain!r}")
    if model is None or not model.is_fit:
        return p_f, t_m
    return p_f, progress_map_event(model, p_f)
