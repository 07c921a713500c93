"""INI configuration files and bundled presets.

Sections and keys (all optional unless noted)::

    [graph]     kind = random | complete | edges, nodes, edge_prob, seed, weight,
                edges (path, relative to the config file), scale_by_link_p
    [sensors]   kind = random | explicit, distribution = uniform | gaussian,
                alpha_mean, beta_mean, variance, seed, alpha, beta,
                override = "node:alpha,beta; ..."
    [signal]    kind, mean, s2, phi, burn_in
    [noise]     link_up_p (alias p), link_var, meas_var (number or "uniform:lo:hi"),
                seed, link_dist, meas_dist
    [algorithm] variant, lag, failure_demo, a0, b0
    [schedule]  kind = constant | power, delta, m1, m2, mu
    [run]       rounds, seed, runs, cadence, workers
    [pinning]   nodes, rho = "g,f; g,f; ..." (equivalent targets of the pinned nodes)

Lists are whitespace or comma separated.  ``--set section.key=value`` on the
command line overrides single keys.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from blindcal.calib import StepSchedule
from blindcal.errors import AssumptionError, ConfigError
from blindcal.netgraph import WeightedDigraph, random_digraph, read_edge_list
from blindcal.signals import NoiseSpec, SignalModel
from blindcal.simharness import SimConfig

__all__ = ["Loaded", "load_config", "preset_names", "preset_path", "build_sim_config"]

SECTIONS = ("graph", "sensors", "signal", "noise", "algorithm", "schedule", "run", "pinning")


@dataclass(frozen=True, eq=False)
class Loaded:
    """Parsed configuration: the simulation config plus run-level options."""

    sim: SimConfig
    runs: int
    workers: int
    text: str
    source: str


def preset_names():
    root = resources.files("blindcal") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def preset_path(name):
    path = resources.files("blindcal") / "presets" / f"{name}.ini"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return Path(str(path))


def _floats(text, what):
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{what}: expected numbers, got {text!r}") from None


def _pairs(text, what):
    out = []
    for chunk in text.split(";"):
        if chunk.strip():
            vals = _floats(chunk, what)
            if len(vals) != 2:
                raise ConfigError(f"{what}: each entry needs two numbers, got {chunk!r}")
            out.append(vals)
    return np.array(out).reshape(-1, 2)


class _Section:
    """Typed access to one INI section with ConfigError on bad values."""

    def __init__(self, cp, name):
        self.name = name
        self.sec = cp[name] if cp.has_section(name) else {}

    def has(self, key):
        return key in self.sec

    def str(self, key, default=None):
        return self.sec.get(key, default)

    def _conv(self, key, default, fn, kind):
        if key not in self.sec:
            return default
        raw = self.sec[key]
        try:
            return fn(raw)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key}: expected {kind}, got {raw!r}") from None

    def float(self, key, default=None):
        return self._conv(key, default, float, "a number")

    def int(self, key, default=None):
        def conv(s):
            v = float(s)
            if not v.is_integer():
                raise ValueError
            return int(v)
        return self._conv(key, default, conv, "an integer")

    def bool(self, key, default=False):
        def conv(s):
            v = s.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError
        return self._conv(key, default, conv, "a boolean")


def _read(path=None, preset=None, overrides=()):
    if (path is None) == (preset is None):
        raise ConfigError("give exactly one of --config or --preset")
    src = Path(path) if path is not None else preset_path(preset)
    if not src.is_file():
        raise ConfigError(f"config file not found: {src}")
    text = src.read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";;"))
    try:
        cp.read_string(text, source=str(src))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {src}: {exc}") from None
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"{src}: unknown section [{sec}]")
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().partition(".")
        if not sep or not dot or not option:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        if section not in SECTIONS:
            raise ConfigError(f"override {item!r}: unknown section [{section}]")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, option, value.strip())
    return cp, src


def _graph(s: _Section, base: Path):
    kind = s.str("kind", "random")
    weight = s.float("weight", 1.0)
    if kind == "edges":
        if not s.has("edges"):
            raise ConfigError("[graph] kind = edges needs an 'edges' path")
        path = Path(s.str("edges"))
        path = path if path.is_absolute() else base / path
        if not path.is_file():
            raise ConfigError(f"edge list not found: {path}")
        try:
            return read_edge_list(path)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    n = s.int("nodes", 10)
    if n < 1:
        raise ConfigError("[graph] nodes must be positive")
    if kind == "complete":
        return WeightedDigraph(weight * (1.0 - np.eye(n)))
    if kind == "random":
        p = s.float("edge_prob", 0.5)
        if not 0 < p <= 1:
            raise ConfigError("[graph] edge_prob must lie in (0, 1]")
        return random_digraph(n, p, np.random.default_rng(s.int("seed", 0)), weight=weight)
    raise ConfigError(f"[graph] unknown kind {kind!r}")


def _sensors(s: _Section, n):
    kind = s.str("kind", "random")
    if kind == "explicit":
        if not (s.has("alpha") and s.has("beta")):
            raise ConfigError("[sensors] kind = explicit needs alpha and beta lists")
        a = np.array(_floats(s.str("alpha"), "[sensors] alpha"))
        b = np.array(_floats(s.str("beta"), "[sensors] beta"))
    elif kind == "random":
        var = s.float("variance", 0.3)
        if var < 0:
            raise ConfigError("[sensors] variance must be non-negative")
        rng = np.random.default_rng(s.int("seed", 0))
        dist = s.str("distribution", "uniform")
        if dist == "uniform":
            h = np.sqrt(3.0 * var)
            a = s.float("alpha_mean", 1.0) + rng.uniform(-h, h, n)
            b = s.float("beta_mean", 0.0) + rng.uniform(-h, h, n)
        elif dist == "gaussian":
            a = s.float("alpha_mean", 1.0) + np.sqrt(var) * rng.standard_normal(n)
            b = s.float("beta_mean", 0.0) + np.sqrt(var) * rng.standard_normal(n)
        else:
            raise ConfigError(f"[sensors] unknown distribution {dist!r}")
    else:
        raise ConfigError(f"[sensors] unknown kind {kind!r}")
    if len(a) != n or len(b) != n:
        raise ConfigError(f"[sensors] need {n} gains and offsets, got {len(a)} and {len(b)}")
    for chunk in (s.str("override") or "").split(";"):
        if not chunk.strip():
            continue
        node, colon, vals = chunk.partition(":")
        ab = _floats(vals, "[sensors] override")
        if not colon or len(ab) != 2:
            raise ConfigError(f"[sensors] override entry {chunk!r} must look like node:alpha,beta")
        k = int(node)
        if not 0 <= k < n:
            raise ConfigError(f"[sensors] override node {k} outside 0..{n - 1}")
        a[k], b[k] = ab
    return a, b


def _meas_var(text, n, rng):
    text = text.strip()
    if text.startswith("uniform:"):
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("[noise] meas_var = uniform:lo:hi")
        lo, hi = float(parts[1]), float(parts[2])
        return rng.uniform(lo, hi, n)
    vals = _floats(text, "[noise] meas_var")
    return vals[0] if len(vals) == 1 else np.array(vals)


def build_sim_config(cp, base=Path(".")):
    """Translate a parsed INI into a SimConfig; returns ``(sim, runs, workers)``."""
    g_sec, s_sec, sig_sec = _Section(cp, "graph"), _Section(cp, "sensors"), _Section(cp, "signal")
    n_sec, a_sec, sch_sec = _Section(cp, "noise"), _Section(cp, "algorithm"), _Section(cp, "schedule")
    r_sec, p_sec = _Section(cp, "run"), _Section(cp, "pinning")
    graph = _graph(g_sec, base)
    n = graph.n
    alpha, beta = _sensors(s_sec, n)

    try:
        signal = SignalModel(
            kind=sig_sec.str("kind", "iid-uniform"),
            mean=sig_sec.float("mean", 0.0),
            s2=sig_sec.float("s2", 1.0),
            phi=sig_sec.float("phi", 0.0),
            burn_in=sig_sec.int("burn_in", 1000),
        )
    except ValueError as exc:
        if "[A4]" in str(exc):
            raise AssumptionError("A4", str(exc).replace("[A4] ", "")) from None
        raise ConfigError(f"[signal] {exc}") from None

    p_up = n_sec.float("link_up_p", n_sec.float("p", 1.0))
    if not 0 < p_up <= 1:
        raise AssumptionError("A5", f"link_up_p = {p_up} must lie in (0, 1]")
    if g_sec.bool("scale_by_link_p", False):
        graph = graph.scaled(1.0 / p_up)
    try:
        noise = NoiseSpec(
            n,
            link_up_p=p_up,
            link_var=n_sec.float("link_var", 0.0),
            meas_var=_meas_var(n_sec.str("meas_var", "0"), n, np.random.default_rng(n_sec.int("seed", 0))),
            link_dist=n_sec.str("link_dist", "uniform"),
            meas_dist=n_sec.str("meas_dist", "gaussian"),
        )
        schedule = StepSchedule(
            kind=sch_sec.str("kind", "constant"),
            delta=sch_sec.float("delta", 0.01),
            m1=sch_sec.float("m1", 0.01),
            m2=sch_sec.float("m2", 0.0),
            mu=sch_sec.float("mu", 0.6),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    theta0 = np.tile([a_sec.float("a0", 1.0), a_sec.float("b0", 0.0)], (n, 1))
    pinned = ()
    if p_sec.has("nodes"):
        pinned = tuple(int(v) for v in _floats(p_sec.str("nodes"), "[pinning] nodes"))
        if any(not 0 <= k < n for k in pinned):
            raise ConfigError(f"[pinning] nodes must lie in 0..{n - 1}")
        if p_sec.has("rho"):
            rho = _pairs(p_sec.str("rho"), "[pinning] rho")
            if len(rho) != len(pinned):
                raise ConfigError("[pinning] rho needs one g,f pair per pinned node")
            for k, (g, f) in zip(pinned, rho):
                if alpha[k] == 0:
                    raise AssumptionError("A4", f"pinned node {k} has alpha = 0")
                a = g / alpha[k]
                theta0[k] = (a, f - a * beta[k])

    runs = r_sec.int("runs", 1)
    workers = r_sec.int("workers", 1)
    if runs < 1:
        raise ConfigError("[run] runs must be at least 1")
    try:
        sim = SimConfig(
            graph=graph,
            alpha=alpha,
            beta=beta,
            signal=signal,
            noise=noise,
            variant=a_sec.str("variant", "basic"),
            lag=a_sec.int("lag", 0),
            schedule=schedule,
            rounds=r_sec.int("rounds", 10_000),
            seed=r_sec.int("seed", 0),
            theta0=theta0,
            pinned=pinned,
            cadence=r_sec.int("cadence", 10),
            failure_demo=a_sec.bool("failure_demo", False),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return sim, runs, workers


def load_config(path=None, preset=None, overrides=()) -> Loaded:
    """Read a config file or bundled preset and apply ``section.key=value`` overrides."""
    cp, src = _read(path, preset, overrides)
    sim, runs, workers = build_sim_config(cp, src.parent)
    buf = []
    for sec in cp.sections():
        buf.append(f"[{sec}]")
        buf.extend(f"{k} = {v}" for k, v in cp[sec].items())
        buf.append("")
    return Loaded(sim, runs, workers, "\n".join(buf), str(src))
