"""Measured signal x(t), channel events and measurement noise.

Every random source draws from its own ``numpy.random.Generator``, derived
from the master seed through ``SeedSequence(seed, spawn_key=(run, stream))``.
Streams therefore never share state, and run ``k`` of an ensemble is the same
no matter how many other runs exist.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "SignalModel",
    "SignalGenerator",
    "NoiseSpec",
    "LinkChannel",
    "STREAMS",
    "stream_rng",
    "moment",
    "check_a4prime",
    "sample_signal",
    "sample_link_events",
]

KINDS = ("iid-uniform", "iid-gaussian", "bounded-ar1")
STREAMS = {"x": 0, "u": 1, "xi": 2, "eta": 3}

# check_a4prime flags margins below this as weak excitation
WEAK_MARGIN = 1e-3


def stream_rng(seed, stream, run=0):
    """Generator for one named stream (``x``, ``u``, ``xi``, ``eta``) of one run."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(run), STREAMS[stream])))


@dataclass(frozen=True)
class SignalModel:
    """Stationary measured signal with closed-form moments.

    ``bounded-ar1`` realises ``x(t) = mean + phi (x(t-1) - mean) + w(t)`` with
    ``w`` uniform on ``[-c, c]``, ``c`` chosen so the stationary variance is
    ``s2 - mean**2``.  Samples then never leave ``|x| <= bound``.
    """

    kind: str = "iid-uniform"
    mean: float = 0.0
    s2: float = 1.0
    phi: float = 0.0
    burn_in: int = 1000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}; expected one of {KINDS}")
        if not self.s2 - self.mean**2 > 0:
            raise ValueError(
                f"[A4] signal variance s2 - mean^2 = {self.s2 - self.mean ** 2:g} must be positive"
            )
        if self.kind == "bounded-ar1" and not -1 < self.phi < 1:
            raise ValueError("AR coefficient phi must lie in (-1, 1)")
        if self.kind != "bounded-ar1" and self.phi != 0:
            raise ValueError("phi is only meaningful for the bounded-ar1 kind")

    @property
    def variance(self):
        return self.s2 - self.mean**2

    @property
    def innovation_halfwidth(self):
        if self.kind == "bounded-ar1":
            return math.sqrt(3.0 * self.variance * (1.0 - self.phi**2))
        return math.sqrt(3.0 * self.variance)

    @property
    def bound(self):
        """K with |x(t)| <= K almost surely (infinite for Gaussian samples)."""
        if self.kind == "iid-gaussian":
            return math.inf
        c = self.innovation_halfwidth
        if self.kind == "bounded-ar1":
            return abs(self.mean) + c / (1.0 - abs(self.phi))
        return abs(self.mean) + c

    def moment(self, lag):
        return moment(self, lag)


def moment(m: SignalModel, lag) -> float:
    """m(d) = E{x(t) x(t-d)}."""
    if lag < 0:
        raise ValueError("lag must be non-negative")
    if lag == 0:
        return m.s2
    if m.kind == "bounded-ar1":
        return m.mean**2 + m.variance * m.phi**lag
    return m.mean**2


def check_a4prime(m: SignalModel, lag):
    """Excitation at lag ``d >= 1``: ``m(d) > mean**2``.

    Returns ``(holds, margin, weak)`` where ``margin = m(d) - mean**2`` and
    ``weak`` flags a positive margin below ``WEAK_MARGIN``.
    """
    if lag < 1:
        raise ValueError("A4' is stated for lags d >= 1")
    margin = moment(m, lag) - m.mean**2
    holds = margin > 0
    return holds, margin, bool(holds and margin < WEAK_MARGIN)


class SignalGenerator:
    """Owns the stream state of one signal realisation.

    ``x(t)`` depends only on the seed and ``t``; the AR(1) burn-in runs before
    ``t = 0``.
    """

    def __init__(self, model: SignalModel, seed=0, run=0, rng=None):
        self.model = model
        self.rng = rng if rng is not None else stream_rng(seed, "x", run)
        self._next_t = 0
        self._last = model.mean
        if model.kind == "bounded-ar1":
            self._last = float(self._ar_block(model.burn_in)[-1]) if model.burn_in else model.mean

    def _ar_block(self, count):
        m = self.model
        c = m.innovation_halfwidth
        w = self.rng.uniform(-c, c, size=count)
        dev, _ = lfilter([1.0], [1.0, -m.phi], w, zi=[m.phi * (self._last - m.mean)])
        out = m.mean + dev
        if count:
            self._last = float(out[-1])
        return out

    def take(self, count):
        """Next ``count`` samples, in order."""
        m = self.model
        if m.kind == "bounded-ar1":
            out = self._ar_block(count)
        elif m.kind == "iid-uniform":
            c = m.innovation_halfwidth
            out = m.mean + self.rng.uniform(-c, c, size=count)
        else:
            out = m.mean + math.sqrt(m.variance) * self.rng.standard_normal(count)
        self._next_t += count
        return out

    def sample(self, t):
        """x(t); ``t`` must not go backwards (skipped rounds are drawn and discarded)."""
        if t < self._next_t:
            raise ValueError(f"signal already advanced past t={t} (next is {self._next_t})")
        return float(self.take(t - self._next_t + 1)[-1])


def sample_signal(gen: SignalGenerator, t) -> float:
    return gen.sample(t)


def _as_arc_matrix(value, n, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full((n, n), float(arr))
    if arr.shape != (n, n):
        raise ValueError(f"{name} must be a scalar or an {n}x{n} table")
    return arr.copy()


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Channel and measurement noise.

    ``link_up_p[i, j]`` is the probability that the message ``j -> i`` is
    delivered in a round (outage probability is ``1 - p``);
    ``link_var[i, j]`` the variance of the additive channel noise;
    ``meas_var[i]`` the variance of node ``i``'s measurement noise.
    """

    n: int
    link_up_p: np.ndarray = None
    link_var: np.ndarray = None
    meas_var: np.ndarray = None
    link_dist: str = "uniform"
    meas_dist: str = "gaussian"

    def __post_init__(self):
        n = self.n
        p = _as_arc_matrix(1.0 if self.link_up_p is None else self.link_up_p, n, "link_up_p")
        v = _as_arc_matrix(0.0 if self.link_var is None else self.link_var, n, "link_var")
        mv = np.asarray(0.0 if self.meas_var is None else self.meas_var, dtype=float)
        mv = np.full(n, float(mv)) if mv.ndim == 0 else mv.copy()
        if mv.shape != (n,):
            raise ValueError(f"meas_var must be a scalar or a length-{n} vector")
        if np.any((p < 0) | (p > 1)):
            raise ValueError("link_up_p entries must lie in [0, 1]")
        if np.any(v < 0) or np.any(mv < 0):
            raise ValueError("noise variances must be non-negative")
        for name, dist in (("link_dist", self.link_dist), ("meas_dist", self.meas_dist)):
            if dist not in ("uniform", "gaussian"):
                raise ValueError(f"{name} must be 'uniform' or 'gaussian', got {dist!r}")
        object.__setattr__(self, "link_up_p", p)
        object.__setattr__(self, "link_var", v)
        object.__setattr__(self, "meas_var", mv)

    def check_arcs(self, weights):
        """A5: every existing arc must have positive delivery probability."""
        bad = np.argwhere((np.asarray(weights) > 0) & (self.link_up_p <= 0))
        if len(bad):
            i, j = bad[0]
            raise ValueError(f"[A5] arc {j}->{i} exists but has delivery probability 0")

    @property
    def noiseless(self):
        return bool(np.all(self.link_up_p == 1) and np.all(self.link_var == 0) and np.all(self.meas_var == 0))


def _zero_mean(rng, dist, size, scale):
    """Zero-mean draws with standard deviation ``scale`` (broadcast)."""
    if dist == "uniform":
        return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=size) * scale
    return rng.standard_normal(size) * scale


@dataclass
class LinkChannel:
    """Per-arc delivery indicators u and additive noise xi for a fixed arc list."""

    noise: NoiseSpec
    src: np.ndarray
    dst: np.ndarray
    rng_u: np.random.Generator
    rng_xi: np.random.Generator
    _p: np.ndarray = field(init=False, repr=False)
    _sd: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._p = self.noise.link_up_p[self.dst, self.src]
        self._sd = np.sqrt(self.noise.link_var[self.dst, self.src])

    @classmethod
    def for_run(cls, noise, src, dst, seed, run=0):
        return cls(noise, src, dst, stream_rng(seed, "u", run), stream_rng(seed, "xi", run))

    def draw(self, count):
        """``(u, xi)`` of shapes ``(count, arcs)``; u is uint8 (1 = delivered)."""
        m = len(self.src)
        u = (self.rng_u.random((count, m)) < self._p).astype(np.uint8)
        xi = _zero_mean(self.rng_xi, self.noise.link_dist, (count, m), self._sd)
        return u, xi


def sample_link_events(channel: LinkChannel):
    """One round of channel events: ``(u, xi)`` per arc."""
    u, xi = channel.draw(1)
    return u[0], xi[0]


def measurement_noise(noise: NoiseSpec, rng, count):
    return _zero_mean(rng, noise.meas_dist, (count, noise.n), np.sqrt(noise.meas_var))
