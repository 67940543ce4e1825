"""Brute-force log-grid minimisers used as independent references in tests.

Only the textbook definitions of the piecewise-max functions are used here;
nothing is imported from the certificate solvers.
"""
import numpy as np


def c_pieces(t, a, b, mu, L, s):
    c = 1.0 - s * L
    p1 = (t - 1.0) * (1.0 + mu / a) / (t * c)
    p2 = (1.0 + b) * (t - 1.0) / t + s * (a + L)
    p3 = (1.0 + 1.0 / b) / t
    return np.maximum(np.maximum(p1, p2), p3) / (mu * s)


def d_pieces(t1, t2, u, v, w, mu, L, s):
    c = 1.0 - s * L
    T1 = ((t2 - 1.0) * t2 * (1.0 / (s * mu) - 2.0 + L * s) + (1.0 + u + 1.0 / v) * t1 * t1) \
        / (c * t1 * t1)
    T2 = (t1 - 1.0) * (1.0 + v + w) / (mu * s * t1)
    T3 = (1.0 + 1.0 / w + 1.0 / u) / (mu * s * t1)
    return np.maximum(np.maximum(T1, T2), T3) + 1.0


def grid_min(fun, ndim, lo=-3.0, hi=3.0, n=64, shrink=8.0, tol=1e-7, max_rounds=80,
             limit=30.0):
    """Minimise ``fun`` over log10-spaced grids, zooming in around the best point.

    Each round evaluates an ``n**ndim`` grid.  Along a coordinate whose best
    value lies strictly inside the box the box shrinks to a few cells around
    it; along a coordinate that hits the box edge the box is recentred
    without shrinking, so infima approached only as a witness tends to 0 or
    infinity are followed outward (up to ``10**limit``).
    """
    centre = np.full(ndim, 0.5 * (lo + hi))
    half = np.full(ndim, 0.5 * (hi - lo))
    best = np.inf
    for _ in range(max_rounds):
        axes = [np.linspace(centre[i] - half[i], centre[i] + half[i], n) for i in range(ndim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        vals = fun(*(10.0 ** m for m in mesh))
        idx = np.unravel_index(np.argmin(vals), vals.shape)
        best = min(best, float(vals[idx]))
        for i, j in enumerate(idx):
            centre[i] = np.clip(axes[i][j], -limit, limit)
            if 0 < j < n - 1:
                half[i] = shrink * (axes[i][1] - axes[i][0])
        if np.all(half < tol):
            break
    return best


def _crossing(increasing, decreasing, lo=-30.0, hi=30.0, iters=64):
    """``min_x max(f(x), g(x))`` for ``f`` increasing and ``g`` decreasing in ``x = 10**e``.

    Vectorised over the leading shape of the callables' outputs; returns the
    minimal max-value and the minimising log10 abscissa.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        x = 10.0 ** mid
        up = increasing(x) > decreasing(x)
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    x_lo, x_hi = 10.0 ** lo, 10.0 ** hi
    v_lo = np.maximum(increasing(x_lo), decreasing(x_lo))
    v_hi = np.maximum(increasing(x_hi), decreasing(x_hi))
    return np.where(v_lo <= v_hi, v_lo, v_hi), np.where(v_lo <= v_hi, lo, hi)


def d_line_oracle(t1, t2, mu, L, s, n=64, rounds=40):
    """``D`` infimum via a log grid over ``v`` with exact monotone searches in ``u`` and ``w``.

    For fixed ``v`` the first piece increases in ``u`` while the best value
    of the other two pieces over ``w`` decreases in ``u``; likewise the second
    piece increases and the third decreases in ``w``.  Each of these inner
    problems is therefore a single crossing found by bisection.
    """
    c = 1.0 - s * L
    alpha = (t1 - 1.0) / (mu * s * t1)
    gamma = 1.0 / (mu * s * t1)
    P = (t2 - 1.0) * t2 * (1.0 / (s * mu) - 2.0 + L * s) / (c * t1 * t1)

    def profile(v):
        def tail(u):
            # min over w of max(T2, T3) for the given u (same shape as v)
            val, _ = _crossing(lambda w: alpha * (1.0 + v + w),
                               lambda w: gamma * (1.0 + 1.0 / w + 1.0 / u),
                               lo=np.full(v.shape, -30.0), hi=np.full(v.shape, 30.0))
            return val

        val, _ = _crossing(lambda u: P + (1.0 + u + 1.0 / v) / c, tail,
                           lo=np.full(v.shape, -30.0), hi=np.full(v.shape, 30.0))
        return val + 1.0

    centre, half = 0.0, 3.0
    best = np.inf
    for _ in range(rounds):
        e = np.linspace(centre - half, centre + half, n)
        vals = profile(10.0 ** e)
        j = int(np.argmin(vals))
        best = min(best, float(vals[j]))
        centre = float(np.clip(e[j], -30.0, 30.0))
        if 0 < j < n - 1:
            half = 4.0 * (e[1] - e[0])
        if half < 1e-7:
            break
    return best
