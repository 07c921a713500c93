"""Mean dynamics of the stacked equivalent parameters and its spectral structure.

Stack the equivalent parameters ``rho_i = (g_i, f_i)`` of all nodes into a
``2n`` vector.  One noiseless round of the gradient rule is
``rho <- rho + delta * B(t) rho`` with ``B(t) = blockdiag(Phi_i(t)) (Gamma kron I2)``
and

    Phi_i(t) = [alpha_i r_i ; 1 + beta_i r_i] [x(t), 1],   r_i = alpha_i x(t - d) + beta_i.

Its expectation ``Bbar`` has a two-dimensional null space spanned by the
alternating indicators ``i1 = (1, 0, 1, 0, ...)`` and ``i2 = (0, 1, 0, 1, ...)``.
Because every ``Phi_i(t)`` has rank one, the left null vectors of ``Bbar``
annihilate every realisation ``B(t)``, which makes ``pi1 rho`` and
``pi2 rho`` conserved quantities and fixes the consensus limit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from blindcal.calib import SensorTrue
from blindcal.errors import AssumptionError
from blindcal.netgraph import WeightedDigraph, build_gamma, has_spanning_tree, reachable_from_set, restrict_gamma
from blindcal.signals import SignalModel, check_a4prime

__all__ = [
    "MeanDynamics",
    "DominanceReport",
    "mean_phi",
    "phi_hurwitz",
    "assemble_mean_B",
    "dominance_test",
    "is_m_matrix",
    "predicted_limit",
    "realized_B",
    "verify_left_annihilation",
    "decoupling_residual",
    "bias_sigma_eta",
    "noise_bias_blocks",
    "pinned_limit",
    "pinned_residual",
    "lyapunov_exponent",
    "safe_step_bound",
    "schur_radius",
    "analysis_report",
]

NULL_TOL = 1e-8


def _ab(sensors):
    """``(alpha, beta)`` arrays from SensorTrue objects or an ``(alpha, beta)`` pair."""
    if isinstance(sensors, tuple) and len(sensors) == 2 and not isinstance(sensors[0], SensorTrue):
        alpha, beta = (np.asarray(v, dtype=float) for v in sensors)
    else:
        alpha = np.array([s.alpha for s in sensors], dtype=float)
        beta = np.array([s.beta for s in sensors], dtype=float)
    if alpha.shape != beta.shape or alpha.ndim != 1:
        raise ValueError("alpha and beta must be 1-D arrays of equal length")
    return alpha, beta


def _gamma(G, link_up_p=None):
    """Gamma (zero row sums) from a digraph or a ready matrix, optionally thinned by delivery rates."""
    if isinstance(G, WeightedDigraph):
        w = np.array(G.weights, dtype=float)
    else:
        w = np.array(G, dtype=float)
        np.fill_diagonal(w, 0.0)
    if link_up_p is not None:
        w = w * np.asarray(link_up_p, dtype=float)
    return build_gamma(WeightedDigraph(w))


def mean_phi(s, mean, second):
    """E{Phi_i}: ``second`` is ``s2 = E x^2`` (no delay) or ``m(d) = E x(t) x(t-d)``."""
    a, b = (s.alpha, s.beta) if isinstance(s, SensorTrue) else s
    return np.array(
        [
            [a * b * mean + a * a * second, a * b + a * a * mean],
            [(1 + b * b) * mean + a * b * second, 1 + b * b + a * b * mean],
        ]
    )


def phi_hurwitz(s, mean, second):
    """Whether ``-E{Phi_i}`` is Hurwitz, from det and trace.

    ``det = alpha^2 (second - mean^2)`` and
    ``trace = 2 alpha beta mean + alpha^2 second + 1 + beta^2``; a real 2x2
    matrix has both eigenvalues in the open right half plane iff both are
    positive.  The verdict is cross-checked against the eigenvalues unless
    the matrix sits on the stability boundary.
    """
    a, b = (s.alpha, s.beta) if isinstance(s, SensorTrue) else s
    det = a * a * (second - mean * mean)
    tr = 2 * a * b * mean + a * a * second + 1 + b * b
    verdict = bool(det > 0 and tr > 0)
    lam = np.linalg.eigvals(mean_phi((a, b), mean, second))
    scale = 1.0 + abs(tr)
    if min(abs(det), abs(tr)) > 1e-9 * scale * scale:
        numeric = bool(np.all(lam.real > 0))
        if numeric != verdict:
            raise RuntimeError(f"closed-form and eigenvalue Hurwitz verdicts disagree: {lam}")
    return verdict


@dataclass(eq=False)
class MeanDynamics:
    """``Bbar = blockdiag(E Phi_i) (Gamma kron I2)`` with its null structure.

    ``T = [i1 i2 | Q]`` with ``Q`` an orthonormal basis of ``range(Bbar)``, so
    ``T^-1 Bbar T = diag(0, B_star)``; the first two rows of ``T^-1`` equal
    ``pi1`` and ``pi2``.
    """

    B: np.ndarray
    gamma: np.ndarray
    phis: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    spectrum: np.ndarray
    null_count: int
    i1: np.ndarray
    i2: np.ndarray
    pi1: np.ndarray
    pi2: np.ndarray
    T: np.ndarray
    T_inv: np.ndarray
    B_star: np.ndarray
    spectral_gap: float
    decoupling_residual: float
    lag: int = 0
    tol: float = NULL_TOL
    notes: list = field(default_factory=list)

    @property
    def n(self):
        return len(self.alpha)

    @property
    def S(self):
        """Rows ``2..`` of ``T^-1``: coordinates of the disagreement component."""
        return self.T_inv[2:]

    @property
    def nonzero_stable(self):
        """Every eigenvalue outside the null pair has negative real part."""
        rest = self.spectrum[np.abs(self.spectrum) >= self.tol]
        return bool(np.all(rest.real < 0))


def assemble_mean_B(sensors, G, signal: SignalModel, lag=0, link_up_p=None, tol=NULL_TOL):
    """Build ``Bbar`` and its decoupling transform.

    Parameters
    ----------
    sensors : sequence of SensorTrue, or ``(alpha, beta)`` arrays
    G : WeightedDigraph or weight matrix ``gamma_ij``
    signal : SignalModel
        Supplies the mean and ``m(lag)``.
    lag : int
        ``d`` of the instrumental variant; ``0`` for the plain gradient rule.
    link_up_p : array, optional
        Delivery probabilities; the mean weights become ``gamma_ij p_ij``.
    tol : float
        Absolute threshold on ``|lambda|`` classifying null eigenvalues.

    Raises
    ------
    AssumptionError
        No spanning tree (``A3``), non-Hurwitz ``-E Phi_i`` (``A4`` / ``A4'``),
        or a null space of dimension other than two.
    """
    alpha, beta = _ab(sensors)
    n = len(alpha)
    gamma = _gamma(G, link_up_p)
    if gamma.shape != (n, n):
        raise ValueError(f"Gamma is {gamma.shape[0]}x{gamma.shape[1]} but there are {n} sensors")
    if not has_spanning_tree(WeightedDigraph(gamma - np.diag(np.diag(gamma)))):
        raise AssumptionError("A3", "communication graph has no spanning tree (no node reaches all others)")
    lag = int(lag or 0)
    label = "A4'" if lag else "A4"
    if lag:
        holds, margin, _ = check_a4prime(signal, lag)
        if not holds:
            raise AssumptionError(label, f"m({lag}) - mean^2 = {margin:g} is not positive")
    second = signal.moment(lag)
    phis = np.array([mean_phi((a, b), signal.mean, second) for a, b in zip(alpha, beta)])
    for i, (a, b) in enumerate(zip(alpha, beta)):
        if not phi_hurwitz((a, b), signal.mean, second):
            raise AssumptionError(label, f"-E{{Phi_{i}}} is not Hurwitz (alpha={a:g}, beta={b:g})")

    B = sla.block_diag(*phis) @ np.kron(gamma, np.eye(2))
    lam = sla.eigvals(B)
    lam = lam[np.lexsort((lam.imag, lam.real))]
    small = np.abs(lam) < tol
    null_count = int(small.sum())
    if null_count != 2:
        raise AssumptionError(
            "A3/A4", f"mean dynamics has {null_count} eigenvalues with |lambda| < {tol:g}, expected 2"
        )
    gap = float(np.min(np.abs(lam[~small]))) if n > 1 else np.inf

    i1 = np.tile([1.0, 0.0], n)
    i2 = np.tile([0.0, 1.0], n)
    I12 = np.column_stack([i1, i2])
    bnorm = np.linalg.norm(B, 2)
    if np.linalg.norm(B @ I12, np.inf) > 1e-10 * max(bnorm, 1.0):
        raise AssumptionError("A3/A4", "indicator vectors are not right null vectors of the mean dynamics")

    # left null space: the two smallest singular directions
    U, _, _ = sla.svd(B)
    N = U[:, -2:].T
    P = np.linalg.solve(N @ I12, N)
    pi1, pi2 = P

    Q, _, _ = sla.qr(B, pivoting=True)
    T = np.column_stack([I12, Q[:, : 2 * n - 2]])
    T_inv = np.linalg.inv(T)
    M = T_inv @ B @ T
    B_star = M[2:, 2:].copy()
    resid = M.copy()
    resid[2:, 2:] = 0.0
    dec = float(np.linalg.norm(resid, 2) / max(bnorm, 1e-300))

    dyn = MeanDynamics(
        B=B, gamma=gamma, phis=phis, alpha=alpha, beta=beta, spectrum=lam, null_count=null_count,
        i1=i1, i2=i2, pi1=pi1, pi2=pi2, T=T, T_inv=T_inv, B_star=B_star,
        spectral_gap=gap, decoupling_residual=dec, lag=lag, tol=tol,
    )
    if dec > 1e-8:
        dyn.notes.append(f"decoupling residual {dec:.2e} exceeds 1e-8")
    if np.max(np.abs(T_inv[:2] - P)) > 1e-8 * max(1.0, np.max(np.abs(P))):
        dyn.notes.append("first rows of T^-1 deviate from the normalised left null vectors")
    return dyn


@dataclass(frozen=True, eq=False)
class DominanceReport:
    W: np.ndarray | None
    is_m_matrix: bool | None
    hurwitz: tuple
    norm_kind: str
    singular_blocks: tuple = ()

    @property
    def passed(self):
        """Dominance certified and every diagonal block Hurwitz."""
        return bool(self.is_m_matrix) and all(self.hurwitz)


def _partition(size, blocks):
    if isinstance(blocks, (int, np.integer)):
        if size % blocks:
            raise ValueError(f"matrix of size {size} does not split into blocks of {blocks}")
        blocks = [int(blocks)] * (size // blocks)
    edges = np.concatenate([[0], np.cumsum(blocks)])
    if edges[-1] != size:
        raise ValueError("block sizes do not add up to the matrix size")
    return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _d_factor(Aii):
    """Cholesky factor of D solving ``Aii D + D Aii^* = -I``, or None if D is not positive definite."""
    D = sla.solve_continuous_lyapunov(Aii, -np.eye(Aii.shape[0]))
    D = 0.5 * (D + D.conj().T)
    try:
        return np.linalg.cholesky(D)
    except np.linalg.LinAlgError:
        return None


def dominance_test(A, blocks=2, norm="spectral"):
    """Block quasi-dominance test matrix ``W``.

    ``w_ii = 1`` and ``w_ij = -||A_ii^-1 A_ij||``.  With ``norm="d-weighted"``
    block ``i`` is measured in ``||x||_D = (x^* D_i^-1 x)^(1/2)`` where
    ``A_ii D_i + D_i A_ii^* = -I``; the induced norm of a map from block ``j``
    to block ``i`` is then ``||C_i^-1 X C_j||_2`` with ``D = C C^*``.
    """
    if norm not in ("spectral", "d-weighted"):
        raise ValueError("norm must be 'spectral' or 'd-weighted'")
    A = np.asarray(A)
    parts = _partition(A.shape[0], blocks)
    k = len(parts)
    diag = [A[p, p] for p in parts]
    hurwitz = tuple(bool(np.all(np.linalg.eigvals(d).real < 0)) for d in diag)
    singular = tuple(i for i, d in enumerate(diag) if np.linalg.matrix_rank(d) < d.shape[0])
    if singular:
        return DominanceReport(None, None, hurwitz, norm, singular)
    factors = None
    if norm == "d-weighted":
        factors = [_d_factor(d) if h else None for d, h in zip(diag, hurwitz)]
        if any(f is None for f in factors):
            return DominanceReport(None, None, hurwitz, norm)
    W = np.eye(k)
    for i, pi in enumerate(parts):
        for j, pj in enumerate(parts):
            if i == j:
                continue
            X = np.linalg.solve(diag[i], A[pi, pj])
            if factors is not None:
                X = np.linalg.solve(factors[i], X @ factors[j])
            W[i, j] = -np.linalg.norm(X, 2)
    return DominanceReport(W, is_m_matrix(W), hurwitz, norm)


def is_m_matrix(W, tol=1e-12):
    """Nonsingular M-matrix test for a Z-matrix: all leading principal minors positive."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("W must be square")
    off = W - np.diag(np.diag(W))
    if np.any(off > 0):
        raise ValueError("W must have non-positive off-diagonal entries")
    return all(np.linalg.det(W[:k, :k]) > tol for k in range(1, W.shape[0] + 1))


def _stack(rho):
    rho = np.asarray(rho, dtype=float)
    return rho.reshape(-1) if rho.ndim == 2 else rho


def predicted_limit(dyn: MeanDynamics, rho0):
    """Common consensus pair ``(pi1 rho0, pi2 rho0)``; ``rho0`` is ``(n, 2)`` or stacked."""
    r = _stack(rho0)
    return np.array([dyn.pi1 @ r, dyn.pi2 @ r])


def realized_B(alpha, beta, gamma, x_now, x_delayed=None):
    """One noiseless realisation ``B(t)`` (or ``B(t, d)`` when ``x_delayed`` is given)."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    xd = x_now if x_delayed is None else x_delayed
    r = alpha * xd + beta
    left = np.stack([alpha * r, 1 + beta * r], axis=1)
    blocks = left[:, :, None] * np.array([x_now, 1.0])[None, None, :]
    return sla.block_diag(*blocks) @ np.kron(np.asarray(gamma, dtype=float), np.eye(2))


def verify_left_annihilation(dyn: MeanDynamics, samples, pis=None):
    """Largest ``max_k ||pi_k B(t)||_inf / ||B(t)||_inf`` over ``samples``."""
    p1, p2 = (dyn.pi1, dyn.pi2) if pis is None else pis
    worst = 0.0
    for Bt in samples:
        scale = np.linalg.norm(Bt, np.inf)
        r = max(np.linalg.norm(p1 @ Bt, np.inf), np.linalg.norm(p2 @ Bt, np.inf))
        worst = max(worst, r / scale if scale > 0 else r)
    return worst


def decoupling_residual(dyn: MeanDynamics, Bt):
    """Size of the blocks of ``T^-1 B(t) T`` that must vanish, relative to ``||B(t)||_2``."""
    M = dyn.T_inv @ Bt @ dyn.T
    r = max(np.linalg.norm(M[:2, :2], 2), np.linalg.norm(M[:2, 2:], 2), np.linalg.norm(M[2:, :2], 2))
    scale = np.linalg.norm(Bt, 2)
    return r / scale if scale > 0 else r


def bias_sigma_eta(sensors, G, meas_var):
    """Diagonal noise bias ``-diag(sigma_i^2 / alpha_i * sum_j gamma_ij, 0, ...)``.

    Added to ``Bbar`` it breaks the zero row sums, so the uncompensated rule
    loses the indicator null vector.  See :func:`noise_bias_blocks` for the
    bias computed directly from the update rule.
    """
    alpha, _ = _ab(sensors)
    gsum = -np.diag(_gamma(G))
    d = np.zeros(2 * len(alpha))
    d[0::2] = -np.asarray(meas_var, dtype=float) * gsum / alpha
    return np.diag(d)


def noise_bias_blocks(sensors, G, meas_var, link_up_p=None):
    """Bias of the mean increment of ``rho`` caused by measurement noise.

    Expanding ``E{(a_i eta_i) eta_i}`` in the plain gradient rule gives, per
    node, ``-sigma_i^2 S_i [[1, 0], [beta_i / alpha_i, 0]]`` acting on
    ``rho_i``, with ``S_i`` the (mean) weight sum.  It coincides with
    :func:`bias_sigma_eta` when ``alpha_i = 1`` and ``beta_i = 0``.
    """
    alpha, beta = _ab(sensors)
    gsum = -np.diag(_gamma(G, link_up_p))
    s = np.asarray(meas_var, dtype=float) * gsum
    blocks = [-si * np.array([[1.0, 0.0], [b / a, 0.0]]) for si, a, b in zip(s, alpha, beta)]
    return sla.block_diag(*blocks)


def _check_pinning(G, fixed):
    graph = G if isinstance(G, WeightedDigraph) else WeightedDigraph(np.where(np.eye(len(G)) > 0, 0.0, G))
    fixed = sorted(set(int(k) for k in fixed))
    free = [i for i in range(graph.n) if i not in fixed]
    missing = sorted(set(free) - reachable_from_set(graph, fixed))
    if missing:
        raise AssumptionError(
            "pinning reachability", f"free nodes {missing} are not reachable from every fixed node {fixed}"
        )
    return graph, fixed


def pinned_limit(G, fixed, rho_fixed, link_up_p=None):
    """Limit of the free nodes when ``fixed`` nodes hold ``rho_fixed``.

    ``rho_free = -(Gamma_f kron I2)^-1 (Gamma_cross kron I2) rho_fixed``,
    solved per coordinate.  Returns an ``(n, 2)`` array with the fixed rows
    copied from ``rho_fixed`` (ordered like ``sorted(fixed)``).
    """
    graph, fixed = _check_pinning(G, fixed)
    gamma = _gamma(graph, link_up_p)
    gf, gx, free = restrict_gamma(gamma, fixed)
    if not is_m_matrix(-gf):
        raise AssumptionError("pinning reachability", "-Gamma restricted to the free nodes is not an M-matrix")
    rho_fixed = np.asarray(rho_fixed, dtype=float).reshape(len(fixed), 2)
    out = np.empty((graph.n, 2))
    out[fixed] = rho_fixed
    out[free] = -np.linalg.solve(gf, gx @ rho_fixed)
    return out


def pinned_residual(G, fixed, rho, sensors=None, signal=None, link_up_p=None, lag=0):
    """Stationarity residual of the pinned mean recursion at ``rho`` (``(n, 2)``).

    The free-node increment is ``E Phi_i`` (``E Phi_i(d)`` for ``lag = d``)
    times ``sum_j gamma_ij (rho_j - rho_i)``; without ``sensors``/``signal``
    only the bracket is evaluated.
    """
    graph, fixed = _check_pinning(G, fixed)
    gamma = _gamma(graph, link_up_p)
    rho = np.asarray(rho, dtype=float).reshape(graph.n, 2)
    free = [i for i in range(graph.n) if i not in fixed]
    inc = (gamma @ rho)[free]
    if sensors is not None:
        alpha, beta = _ab(sensors)
        phis = [mean_phi((alpha[i], beta[i]), signal.mean, signal.moment(lag)) for i in free]
        inc = np.array([p @ v for p, v in zip(phis, inc)])
    return float(np.max(np.abs(inc))) if len(inc) else 0.0


def lyapunov_exponent(dyn: MeanDynamics, delta, x_now, x_delayed=None):
    """Sampled top Lyapunov exponent of ``prod (I + delta B(t))`` on the disagreement coordinates.

    Uses the noiseless realisations driven by the signal samples ``x_now``
    (and ``x_delayed`` for the lagged regressor).  Negative values mean
    almost-sure decay of the disagreement for that constant step.
    """
    x_now = np.asarray(x_now, dtype=float)
    x_delayed = x_now if x_delayed is None else np.asarray(x_delayed, dtype=float)
    T2 = dyn.T[:, 2:]
    m = T2.shape[1]
    if m == 0:
        return -np.inf

    def red(a, b):
        return dyn.S @ realized_B(dyn.alpha, dyn.beta, dyn.gamma, a, b) @ T2

    # B(t) is bilinear in (x(t), x(t - d)); four corners fix it exactly
    c00, c10, c01, c11 = red(0.0, 0.0), red(1.0, 0.0), red(0.0, 1.0), red(1.0, 1.0)
    c11 = c11 - c10 - c01 + c00
    c10 = c10 - c00
    c01 = c01 - c00
    v = np.full(m, 1.0 / np.sqrt(m))
    total = 0.0
    for a, b in zip(x_now, x_delayed):
        v = v + delta * ((c00 + a * c10 + b * c01 + a * b * c11) @ v)
        nv = np.linalg.norm(v)
        if not np.isfinite(nv) or nv == 0:
            return np.inf if not np.isfinite(nv) else -np.inf
        total += np.log(nv)
        v /= nv
    return total / len(x_now)


def safe_step_bound(dyn: MeanDynamics, margin=0.9, signal=None, samples=4000, seed=0, tol=1e-3):
    """Heuristic constant-step bound.

    Without ``signal`` this is ``margin * min_k (-2 Re l_k / |l_k|^2)`` over
    ``spec(B_star)``: ``|1 + delta l| < 1`` iff ``delta < -2 Re l / |l|^2``, so
    below it ``I + delta B_star`` is Schur stable.  Returns 0 if some
    eigenvalue has non-negative real part.

    With a ``signal`` model, the mean-dynamics edge is further reduced to the
    largest step whose sampled top Lyapunov exponent (``samples`` draws,
    common random numbers, bisection to relative ``tol``) stays negative, and
    ``margin`` is applied to the smaller of the two.
    """
    lam = np.linalg.eigvals(dyn.B_star)
    if len(lam) == 0:
        return np.inf
    if np.any(lam.real >= 0):
        return 0.0
    edge = float(np.min(-2.0 * lam.real / np.abs(lam) ** 2))
    if signal is not None:
        from blindcal.signals import SignalGenerator

        x = SignalGenerator(signal, seed).take(samples + dyn.lag)
        xn, xd = x[dyn.lag:], x[: len(x) - dyn.lag]
        if lyapunov_exponent(dyn, edge, xn, xd) >= 0:
            lo, hi = 0.0, edge
            while hi - lo > tol * hi:
                mid = 0.5 * (lo + hi)
                if lyapunov_exponent(dyn, mid, xn, xd) < 0:
                    lo = mid
                else:
                    hi = mid
            edge = lo
    return float(margin * edge)


def schur_radius(dyn: MeanDynamics, delta):
    """Spectral radius of ``I + delta B_star``."""
    m = dyn.B_star.shape[0]
    return float(np.max(np.abs(np.linalg.eigvals(np.eye(m) + delta * dyn.B_star)))) if m else 0.0


def _c(z):
    return [float(z.real), float(z.imag)]


def analysis_report(dyn: MeanDynamics, rho0=None, pinned=None, meas_var=None, variant="basic", signal=None):
    """Plain-data summary suitable for JSON serialisation.

    ``pinned`` is ``(graph, fixed, rho_fixed)``; ``meas_var`` enables the
    noise-bias diagnostics for the uncompensated variant; ``signal`` adds the
    sampled-realisation step bound next to the mean-dynamics one.
    """
    blocks = dominance_test(dyn.B_star, 2) if dyn.B_star.shape[0] >= 2 else None
    rep = {
        "nodes": dyn.n,
        "lag": dyn.lag,
        "spectrum": [_c(z) for z in dyn.spectrum],
        "null_eigenvalues": dyn.null_count,
        "null_tolerance": dyn.tol,
        "spectral_gap": dyn.spectral_gap,
        "nonzero_eigenvalues_stable": dyn.nonzero_stable,
        "decoupling_residual": dyn.decoupling_residual,
        "pi1": dyn.pi1.tolist(),
        "pi2": dyn.pi2.tolist(),
        "safe_step_bound_mean": safe_step_bound(dyn),
        "safe_step_bound": safe_step_bound(dyn, signal=signal) if signal is not None else safe_step_bound(dyn),
        "dominance_B_star": None if blocks is None else {
            "norm": blocks.norm_kind,
            "W": None if blocks.W is None else blocks.W.tolist(),
            "m_matrix": blocks.is_m_matrix,
            "hurwitz_blocks": list(blocks.hurwitz),
        },
        "notes": list(dyn.notes),
    }
    if rho0 is not None:
        rep["predicted_limit"] = predicted_limit(dyn, rho0).tolist()
    if pinned is not None:
        graph, fixed, rho_fixed = pinned
        rep["pinned_limit"] = pinned_limit(graph, fixed, rho_fixed).tolist()
    if meas_var is not None:
        mv = np.asarray(meas_var, dtype=float)
        sig = bias_sigma_eta((dyn.alpha, dyn.beta), dyn.gamma, mv)
        Bb = dyn.B + sig
        lost = float(np.linalg.norm(Bb @ dyn.i1, np.inf))
        rep["noise_bias"] = {
            "sigma_eta_diag": np.diag(sig).tolist(),
            "nonzero": bool(np.any(mv > 0)),
            "i1_residual_with_bias": lost,
            "variant": variant,
            "consensus_failure_predicted": bool(variant != "known-variance" and dyn.lag == 0 and lost > 1e-12),
        }
    return rep
