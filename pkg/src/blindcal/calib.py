"""Per-node calibration state and update rules.

A node holds ``theta = (a_hat, b_hat)`` of its affine calibration function
``z = a_hat * y + b_hat``.  Every round it compares its own output with the
outputs received from in-neighbours and moves ``theta`` along the stochastic
gradient of the weighted squared disagreement.

These functions are the scalar reference for one node.  Whole-network
simulation goes through :mod:`blindcal.kernel`, which applies the same rules
to all nodes at once and is checked against these.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "SensorTrue",
    "CalibState",
    "EquivalentParams",
    "StepSchedule",
    "InboxMessage",
    "sensor_read",
    "output",
    "step_basic",
    "step_known_variance",
    "step_instrumental",
    "equivalent",
    "step_size",
]


@dataclass(frozen=True)
class SensorTrue:
    """Hidden sensor: ``y = alpha * x + beta + eta`` with ``Var(eta) = eta_var``."""

    alpha: float
    beta: float
    eta_var: float = 0.0

    def __post_init__(self):
        if self.alpha == 0:
            raise ValueError("sensor gain alpha must be non-zero")
        if self.eta_var < 0:
            raise ValueError("eta_var must be non-negative")


@dataclass(frozen=True)
class EquivalentParams:
    g: float
    f: float


@dataclass(frozen=True)
class InboxMessage:
    """Output ``z_received`` of ``sender`` as delivered (``present=False``: lost)."""

    sender: int
    z_received: float
    present: bool = True


@dataclass(frozen=True)
class CalibState:
    a: float = 1.0
    b: float = 0.0
    lag: int = 0
    pinned: bool = False
    history: tuple = ()

    def __post_init__(self):
        if self.lag < 0:
            raise ValueError("lag must be non-negative")

    @property
    def theta(self):
        return (self.a, self.b)

    def push(self, y):
        """Record a raw reading; keeps the newest ``lag + 1`` readings."""
        buf = deque(self.history, maxlen=self.lag + 1)
        buf.append(float(y))
        return replace(self, history=tuple(buf))

    @property
    def delayed(self):
        """y(t - lag), or ``None`` until the buffer has filled."""
        if len(self.history) < self.lag + 1:
            return None
        return self.history[0]


def sensor_read(s: SensorTrue, x, eta=0.0):
    return s.alpha * x + s.beta + eta


def output(c: CalibState, y):
    return c.a * y + c.b


def equivalent(c: CalibState, s: SensorTrue) -> EquivalentParams:
    return EquivalentParams(c.a * s.alpha, c.a * s.beta + c.b)


def _disagreement(c, y, inbox, gamma_row):
    """sum_j gamma_ij (z_j - z_i) over delivered messages."""
    z_own = output(c, y)
    acc = 0.0
    for msg in inbox:
        if msg.present:
            acc += gamma_row[msg.sender] * (msg.z_received - z_own)
    return acc


def _apply(c, delta, acc, regressor, extra_a=0.0):
    if c.pinned:
        return c
    a = c.a + delta * (acc * regressor + extra_a)
    return replace(c, a=a, b=c.b + delta * acc)


def step_basic(c: CalibState, y, inbox, gamma_row, delta):
    """Gradient step with regressor ``[y, 1]``."""
    return _apply(c, delta, _disagreement(c, y, inbox, gamma_row), y)


def step_known_variance(c: CalibState, y, inbox, gamma_row, delta, eta_var):
    """Gradient step plus the noise-bias compensation ``eta_var * sum_j gamma_ij * a_hat``.

    The weight sum is the nominal one (all arcs), independent of which
    messages arrived this round.
    """
    acc = _disagreement(c, y, inbox, gamma_row)
    gsum = sum(gamma_row.values()) if hasattr(gamma_row, "values") else sum(gamma_row)
    return _apply(c, delta, acc, y, eta_var * gsum * c.a)


def step_instrumental(c: CalibState, y_now, y_delayed, inbox, gamma_row, delta):
    """Instrumental-variable step: errors from current readings, regressor y(t - d).

    ``y_delayed=None`` (history not yet filled) leaves the node idle.
    """
    if y_delayed is None:
        return c
    return _apply(c, delta, _disagreement(c, y_now, inbox, gamma_row), y_delayed)


@dataclass(frozen=True)
class StepSchedule:
    """``constant``: delta(t) = delta.  ``power``: delta(t) = m1 / (m2 + t**mu), 1/2 < mu <= 1."""

    kind: str = "constant"
    delta: float = 0.01
    m1: float = 0.01
    m2: float = 0.0
    mu: float = 0.6

    def __post_init__(self):
        if self.kind == "constant":
            if not self.delta > 0:
                raise ValueError("constant step size must be positive")
        elif self.kind == "power":
            if not 0.5 < self.mu <= 1.0:
                raise ValueError(f"mu = {self.mu} violates 1/2 < mu <= 1 (sum of squares must converge)")
            if not self.m1 > 0 or self.m2 < 0:
                raise ValueError("power schedule needs m1 > 0 and m2 >= 0")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @property
    def decreasing(self):
        return self.kind == "power"

    def __call__(self, t):
        return step_size(self, t)

    def values(self, t_start, count):
        """delta(t) for t = t_start, ..., t_start + count - 1."""
        if self.kind == "constant":
            return np.full(count, float(self.delta))
        t = np.arange(t_start, t_start + count, dtype=float)
        if self.m2 == 0 and t_start <= 0 < t_start + count:
            raise ValueError("power schedule with m2 = 0 is undefined at t = 0")
        return self.m1 / (self.m2 + t**self.mu)


def step_size(s: StepSchedule, t):
    if t < 0:
        raise ValueError("t must be non-negative")
    if s.kind == "constant":
        return s.delta
    if s.m2 == 0 and t == 0:
        raise ValueError("power schedule with m2 = 0 is undefined at t = 0")
    return s.m1 / (s.m2 + t**s.mu)
