"""Pure-Python round loop, the fallback when the compiled kernel is absent."""
import numpy as np


def advance(theta, yhist, hist, alpha, beta, src, dst, gam, frozen, comp, lag,
            x, eta, up, xi, delta, t0, cadence, snaps, guard):
    """Advance the network through ``len(x)`` synchronous rounds in place.

    Round ``r`` (global index ``t0 + r``) reads ``y = alpha x + beta + eta``,
    broadcasts ``z = a y + b`` from the pre-update state, accumulates
    ``gamma (z_src + xi - z_dst)`` over delivered arcs and, once the reading
    history holds ``lag + 1`` rounds, updates every non-frozen node with
    regressor ``y(t - lag)`` and the extra ``comp * a`` term.

    ``theta`` (n, 2), ``yhist`` (lag + 1, n) and ``hist = [pos, count]`` are
    updated in place.  After every round whose new index is a multiple of
    ``cadence`` the state is copied into ``snaps``.

    Returns ``(snapshots_taken, diverged_round, diverged_node)``; the last two
    are ``-1`` unless some ``|a alpha|`` left ``[0, guard]``.
    """
    depth = yhist.shape[0]
    pos, count = int(hist[0]), int(hist[1])
    live = ~frozen.astype(bool)
    taken = 0
    for r in range(len(x)):
        pos = (pos + 1) % depth
        y = alpha * x[r] + beta + eta[r]
        yhist[pos] = y
        z = theta[:, 0] * y + theta[:, 1]
        acc = np.zeros(len(alpha))
        if count < depth:
            count += 1
        on = up[r].astype(bool)
        np.add.at(acc, dst[on], gam[on] * ((z[src[on]] + xi[r, on]) - z[dst[on]]))
        if count == depth:
            d = delta[r]
            reg = yhist[(pos - lag + depth) % depth]
            a = theta[live, 0]
            theta[live, 0] = a + d * (acc[live] * reg[live] + comp[live] * a)
            theta[live, 1] = theta[live, 1] + d * acc[live]
        g = np.abs(theta[:, 0] * alpha)
        bad = np.flatnonzero(~(g <= guard))
        if len(bad):
            hist[0], hist[1] = pos, count
            return taken, t0 + r + 1, int(bad[0])
        if (t0 + r + 1) % cadence == 0:
            snaps[taken] = theta
            taken += 1
    hist[0], hist[1] = pos, count
    return taken, -1, -1
