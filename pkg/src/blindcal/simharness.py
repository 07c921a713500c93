"""Synchronous-round simulation, convergence metrics, Monte Carlo ensembles and rate fits."""
from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from blindcal import kernel
from blindcal.calib import StepSchedule
from blindcal.errors import AssumptionError, ConfigError, DivergenceError
from blindcal.netgraph import WeightedDigraph, has_spanning_tree
from blindcal.signals import (
    LinkChannel,
    NoiseSpec,
    SignalGenerator,
    SignalModel,
    check_a4prime,
    measurement_noise,
    stream_rng,
)
from blindcal.spectral import _check_pinning, assemble_mean_B, pinned_limit, predicted_limit

__all__ = [
    "SimConfig",
    "Trajectory",
    "EnsembleStats",
    "RateFit",
    "run",
    "monte_carlo",
    "fit_rate",
    "consensus_spread",
    "distance_to_limit",
    "equivalent_stack",
    "write_trajectory_csv",
    "write_metrics_csv",
    "write_ensemble_csv",
]

log = logging.getLogger(__name__)

VARIANTS = ("basic", "known-variance", "instrumental")
GUARD = 1e6
CHUNK = 8192


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Everything one simulation needs; ``digest()`` identifies it.

    ``theta0`` defaults to ``a = 1, b = 0`` everywhere.  Nodes in ``pinned``
    keep their ``theta0`` for the whole run.  ``failure_demo`` must be set to
    run the instrumental variant with ``lag = 0``.
    """

    graph: WeightedDigraph
    alpha: np.ndarray
    beta: np.ndarray
    signal: SignalModel = field(default_factory=SignalModel)
    noise: NoiseSpec | None = None
    variant: str = "basic"
    lag: int = 0
    schedule: StepSchedule = field(default_factory=StepSchedule)
    rounds: int = 10_000
    seed: int = 0
    theta0: np.ndarray | None = None
    pinned: tuple = ()
    cadence: int = 10
    failure_demo: bool = False
    guard: float = GUARD

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        b = np.asarray(self.beta, dtype=float)
        n = self.graph.n
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        if a.shape != (n,) or b.shape != (n,):
            raise ConfigError(f"alpha and beta need {n} entries (one per node)")
        if self.noise is None:
            object.__setattr__(self, "noise", NoiseSpec(n))
        elif self.noise.n != n:
            raise ConfigError(f"noise spec is for {self.noise.n} nodes, graph has {n}")
        th = np.tile([1.0, 0.0], (n, 1)) if self.theta0 is None else np.array(self.theta0, dtype=float)
        if th.shape != (n, 2):
            raise ConfigError(f"theta0 must be {n}x2")
        object.__setattr__(self, "theta0", th)
        object.__setattr__(self, "pinned", tuple(sorted(set(int(k) for k in self.pinned))))
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.rounds < 0 or self.cadence < 1:
            raise ConfigError("rounds must be >= 0 and cadence >= 1")
        if self.lag < 0:
            raise ConfigError("lag must be non-negative")
        if self.variant != "instrumental" and self.lag:
            raise ConfigError("a lag is only used by the instrumental variant")

    @property
    def n(self):
        return self.graph.n

    @property
    def effective_lag(self):
        return self.lag if self.variant == "instrumental" else 0

    def validate(self):
        """Check modelling hypotheses; raises AssumptionError naming the failed one."""
        if np.any(self.alpha == 0):
            raise AssumptionError("A4", "a sensor gain alpha is zero; that node cannot be calibrated")
        if any(k >= self.n for k in self.pinned):
            raise ConfigError(f"pinned node outside 0..{self.n - 1}")
        try:
            self.noise.check_arcs(self.graph.weights)
        except ValueError as exc:
            raise AssumptionError("A5", str(exc)) from None
        if self.pinned:
            _check_pinning(self.graph, self.pinned)
        elif not has_spanning_tree(self.graph):
            raise AssumptionError("A3", "communication graph has no spanning tree (no node reaches all others)")
        if self.variant == "instrumental":
            if self.lag == 0 and not self.failure_demo:
                raise ConfigError("instrumental variant with lag 0 is biased under noise; set failure_demo to run it")
            if self.lag:
                holds, margin, weak = check_a4prime(self.signal, self.lag)
                if not holds:
                    raise AssumptionError("A4'", f"m({self.lag}) - mean^2 = {margin:g} is not positive")
                if weak:
                    log.warning("lag-%d excitation margin %.2e is weak", self.lag, margin)
        if self.variant != "known-variance" and self.effective_lag == 0 and np.any(self.noise.meas_var > 0):
            log.warning("regressor y(t) with measurement noise: gains are biased toward zero")
        return self

    def digest(self):
        """Short SHA-256 over every field that influences the output."""
        payload = {
            "weights": self.graph.weights.tolist(),
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "signal": [self.signal.kind, self.signal.mean, self.signal.s2, self.signal.phi, self.signal.burn_in],
            "noise": [
                self.noise.link_up_p.tolist(),
                self.noise.link_var.tolist(),
                self.noise.meas_var.tolist(),
                self.noise.link_dist,
                self.noise.meas_dist,
            ],
            "variant": self.variant,
            "lag": self.lag,
            "schedule": [self.schedule.kind, self.schedule.delta, self.schedule.m1, self.schedule.m2,
                         self.schedule.mu],
            "rounds": self.rounds,
            "seed": self.seed,
            "theta0": self.theta0.tolist(),
            "pinned": list(self.pinned),
            "cadence": self.cadence,
            "guard": self.guard,
        }
        raw = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(raw).hexdigest()[:16]


def equivalent_stack(theta, alpha, beta):
    """``(g, f)`` per node from ``theta[..., n, 2]``: ``g = a alpha``, ``f = a beta + b``."""
    theta = np.asarray(theta, dtype=float)
    out = np.empty_like(theta)
    out[..., 0] = theta[..., 0] * alpha
    out[..., 1] = theta[..., 0] * beta + theta[..., 1]
    return out


def consensus_spread(rho):
    """``max_{i,j} ||rho_i - rho_j||_inf`` over nodes (axis ``-2``)."""
    rho = np.asarray(rho, dtype=float)
    return (rho.max(axis=-2) - rho.min(axis=-2)).max(axis=-1)


def distance_to_limit(rho, limit):
    """``max_i ||rho_i - limit_i||_inf``; ``limit`` is a common pair or per-node pairs."""
    rho = np.asarray(rho, dtype=float)
    return np.abs(rho - np.asarray(limit, dtype=float)).max(axis=(-2, -1))


@dataclass(eq=False)
class Trajectory:
    """Snapshots every ``cadence`` rounds (plus ``t = 0`` and the final round)."""

    times: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    limit: np.ndarray
    spread: np.ndarray
    dist_limit: np.ndarray
    mse_proj: np.ndarray
    seed: int
    run: int
    digest: str
    pinned: tuple = ()

    @property
    def rho(self):
        return equivalent_stack(self.theta, self.alpha, self.beta)

    @property
    def g(self):
        return self.theta[..., 0] * self.alpha

    @property
    def f(self):
        return self.theta[..., 0] * self.beta + self.theta[..., 1]

    @property
    def final_rho(self):
        return self.rho[-1]


def _reference(cfg: SimConfig):
    """Predicted limit (common pair or per-node pairs) and the projection for the MSE metric."""
    rho0 = equivalent_stack(cfg.theta0, cfg.alpha, cfg.beta)
    if cfg.pinned:
        fixed = list(cfg.pinned)
        limit = pinned_limit(cfg.graph, fixed, rho0[fixed], link_up_p=cfg.noise.link_up_p)
        return limit, None
    dyn = assemble_mean_B((cfg.alpha, cfg.beta), cfg.graph, cfg.signal, lag=cfg.effective_lag,
                          link_up_p=cfg.noise.link_up_p)
    return predicted_limit(dyn, rho0), dyn.S


def _mse(rho, limit, S, pinned):
    if S is None:
        free = np.ones(rho.shape[-2], dtype=bool)
        free[list(pinned)] = False
        return ((rho - limit)[..., free, :] ** 2).sum(axis=(-2, -1))
    flat = rho.reshape(rho.shape[:-2] + (-1,))
    return ((flat @ S.T) ** 2).sum(axis=-1)


def run(cfg: SimConfig, run_index=0, backend=None, validate=True) -> Trajectory:
    """Simulate ``cfg.rounds`` synchronous rounds of run ``run_index``.

    Every round each node reads its sensor, broadcasts ``z = a y + b`` from the
    pre-update state, receives ``(u, xi)``-corrupted outputs and applies its
    variant's step with ``delta(t + 1)``.  The result depends only on ``cfg``
    and ``run_index``.

    Raises
    ------
    DivergenceError
        If some ``|g_hat|`` exceeds ``cfg.guard``.
    """
    if validate:
        cfg.validate()
    advance = kernel.get_advance(backend)
    n = cfg.n
    src, dst, gam = cfg.graph.arcs()
    src = np.ascontiguousarray(src, dtype=np.intp)
    dst = np.ascontiguousarray(dst, dtype=np.intp)
    gam = np.ascontiguousarray(gam, dtype=float)
    lag = cfg.effective_lag
    depth = lag + 1
    noise = cfg.noise
    comp = noise.meas_var * cfg.graph.row_sums() if cfg.variant == "known-variance" else np.zeros(n)
    frozen = np.zeros(n, dtype=np.uint8)
    frozen[list(cfg.pinned)] = 1

    theta = cfg.theta0.copy()
    yhist = np.zeros((depth, n))
    hist = np.array([depth - 1, 0], dtype=np.intp)

    xgen = SignalGenerator(cfg.signal, cfg.seed, run_index)
    channel = LinkChannel.for_run(noise, src, dst, cfg.seed, run_index)
    eta_rng = stream_rng(cfg.seed, "eta", run_index)
    perfect_links = bool(np.all(channel._p == 1) and np.all(channel._sd == 0))
    quiet_sensors = bool(np.all(noise.meas_var == 0))

    times = [0]
    snaps = [theta.copy()]
    for t0 in range(0, cfg.rounds, CHUNK):
        c = min(CHUNK, cfg.rounds - t0)
        x = xgen.take(c)
        eta = np.zeros((c, n)) if quiet_sensors else measurement_noise(noise, eta_rng, c)
        if perfect_links:
            u, xi = np.ones((c, len(src)), dtype=np.uint8), np.zeros((c, len(src)))
        else:
            u, xi = channel.draw(c)
        delta = cfg.schedule.values(t0 + 1, c)
        buf = np.empty((c // cfg.cadence + 1, n, 2))
        taken, bad_round, bad_node = advance(
            theta, yhist, hist, cfg.alpha, cfg.beta, src, dst, gam, frozen, comp, lag,
            x, np.ascontiguousarray(eta), u, np.ascontiguousarray(xi), delta,
            t0, cfg.cadence, buf, cfg.guard,
        )
        first = (t0 // cfg.cadence + 1) * cfg.cadence
        times.extend(range(first, first + taken * cfg.cadence, cfg.cadence))
        snaps.extend(buf[:taken])
        if bad_round >= 0:
            raise DivergenceError(bad_round, bad_node, theta[bad_node, 0] * cfg.alpha[bad_node], cfg.guard)
    if times[-1] != cfg.rounds:
        times.append(cfg.rounds)
        snaps.append(theta.copy())

    th = np.array(snaps)
    rho = equivalent_stack(th, cfg.alpha, cfg.beta)
    limit, S = _reference(cfg)
    return Trajectory(
        times=np.array(times, dtype=np.int64),
        theta=th,
        alpha=cfg.alpha,
        beta=cfg.beta,
        limit=limit,
        spread=consensus_spread(rho),
        dist_limit=distance_to_limit(rho, limit),
        mse_proj=_mse(rho, limit, S, cfg.pinned),
        seed=cfg.seed,
        run=run_index,
        digest=cfg.digest(),
        pinned=cfg.pinned,
    )


@dataclass(eq=False)
class EnsembleStats:
    """Per-snapshot ensemble statistics over ``runs`` independent runs.

    ``mse_ci`` is the 95 % normal half-width of ``mse_mean``; ``g_median`` is
    the median of ``g_hat`` over all runs and nodes; ``rho_se`` is the
    standard error of ``rho_mean``.
    """

    times: np.ndarray
    runs: int
    mse_mean: np.ndarray
    mse_ci: np.ndarray
    g_median: np.ndarray
    rho_mean: np.ndarray
    rho_se: np.ndarray
    spread_mean: np.ndarray
    digest: str


def _one(args):
    cfg, k, backend = args
    tr = run(cfg, k, backend=backend, validate=False)
    return tr.times, tr.mse_proj, tr.g, tr.rho, tr.spread


def monte_carlo(cfg: SimConfig, runs, workers=None, backend=None) -> EnsembleStats:
    """Run ``runs`` independent replicas (run indices ``0..runs-1``) and aggregate.

    Runs may execute in worker processes; results are reduced in run-index
    order, so the statistics do not depend on scheduling.
    """
    if runs < 1:
        raise ValueError("need at least one run")
    cfg.validate()
    jobs = [(cfg, k, backend) for k in range(runs)]
    if workers and workers > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, jobs))
    else:
        results = [_one(j) for j in jobs]
    times = results[0][0]
    mse = np.array([r[1] for r in results])
    g = np.array([r[2] for r in results])
    rho = np.array([r[3] for r in results])
    spread = np.array([r[4] for r in results])
    sd = mse.std(axis=0, ddof=1) if runs > 1 else np.zeros_like(times, dtype=float)
    rho_sd = rho.std(axis=0, ddof=1) if runs > 1 else np.zeros(rho.shape[1:])
    return EnsembleStats(
        times=times,
        runs=runs,
        mse_mean=mse.mean(axis=0),
        mse_ci=1.96 * sd / np.sqrt(runs),
        g_median=np.median(g.transpose(1, 0, 2).reshape(len(times), -1), axis=1),
        rho_mean=rho.mean(axis=0),
        rho_se=rho_sd / np.sqrt(runs),
        spread_mean=spread.mean(axis=0),
        digest=cfg.digest(),
    )


@dataclass(frozen=True)
class RateFit:
    sigma_hat: float
    intercept: float
    window: tuple
    sigma: float
    checkpoints: tuple
    ratios: tuple
    monotone: bool


def fit_rate(stats, schedule: StepSchedule, window=None, sigma=0.2, checkpoints=6):
    """Log-log slope of MSE against ``delta(t)`` and a monotonicity check.

    Parameters
    ----------
    stats : EnsembleStats or ``(times, mse)``
    window : (t_lo, t_hi), optional
        Tail window; defaults to the final decade ``[T/10, T]``.
    sigma : float
        Exponent for the check that ``MSE(t) / delta(t)**sigma`` does not
        increase across ``checkpoints`` log-spaced times of the window.
    """
    if not schedule.decreasing:
        raise ValueError("rate fits need a decreasing (power) step schedule")
    times, mse = (stats.times, stats.mse_mean) if isinstance(stats, EnsembleStats) else stats
    times = np.asarray(times)
    mse = np.asarray(mse, dtype=float)
    T = times.max()
    lo, hi = window if window is not None else (T / 10, T)
    sel = (times >= lo) & (times <= hi) & (times > 0) & (mse > 0)
    if sel.sum() < 2:
        raise ValueError("tail window holds fewer than two usable points")
    ld = np.log(schedule.values(1, int(T))[times[sel] - 1])
    slope, icpt = np.polyfit(ld, np.log(mse[sel]), 1)
    targets = np.geomspace(max(lo, 1), hi, checkpoints)
    idx = np.unique([int(np.argmin(np.abs(times - t))) for t in targets])
    ct = times[idx]
    ratio = mse[idx] / schedule.values(1, int(T))[ct - 1] ** sigma
    mono = bool(np.all(np.diff(ratio) <= 0))
    return RateFit(float(slope), float(icpt), (float(lo), float(hi)), sigma,
                   tuple(int(t) for t in ct), tuple(float(r) for r in ratio), mono)


def _fmt(v):
    return format(float(v), ".17g")


def write_trajectory_csv(traj: Trajectory, path):
    rho = traj.rho
    with open(path, "w") as fh:
        fh.write("t,node,a_hat,b_hat,g_hat,f_hat\n")
        for k, t in enumerate(traj.times):
            for i in range(traj.theta.shape[1]):
                a, b = traj.theta[k, i]
                g, f = rho[k, i]
                fh.write(f"{int(t)},{i},{_fmt(a)},{_fmt(b)},{_fmt(g)},{_fmt(f)}\n")


def write_metrics_csv(traj: Trajectory, path):
    with open(path, "w") as fh:
        fh.write("t,spread,dist_limit,mse_proj\n")
        for row in zip(traj.times, traj.spread, traj.dist_limit, traj.mse_proj):
            fh.write(f"{int(row[0])},{_fmt(row[1])},{_fmt(row[2])},{_fmt(row[3])}\n")


def write_ensemble_csv(stats: EnsembleStats, path):
    with open(path, "w") as fh:
        fh.write("t,mse_mean,mse_ci\n")
        for t, m, c in zip(stats.times, stats.mse_mean, stats.mse_ci):
            fh.write(f"{int(t)},{_fmt(m)},{_fmt(c)}\n")
