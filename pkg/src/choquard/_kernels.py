"""Hot loops for the sector kernels of |x|^{-(N-α)}.

The sector kernel is

    k_ℓ(r, s) = |S^{N-2}| ∫_0^π d^{-β} P_ℓ(cos θ) sin^{N-2}θ dθ,
    d² = (r - s)² + 4 r s sin²(θ/2),  β = N - α,

with P_ℓ the Gegenbauer polynomial of index (N-2)/2 normalised to P_ℓ(1) = 1.
With e = s - r, θ = θ_s sinh u and θ_s = |e|/√(rs) the near-diagonal peak is
unfolded; what is computed is the *scaled* kernel k_ℓ |e|^{1-α}, which stays
bounded as e → 0 when α < 1 and can be evaluated for |e| far below the
smallest normal float.

Every routine exists twice: a scalar numba version and a vectorised numpy
version.  ``choquard._accel.use_numba`` picks one at call time.
"""

from __future__ import annotations

import math

import numpy as np

from choquard._accel import njit, use_numba

GAUSS_X, GAUSS_W = np.polynomial.legendre.leggauss(12)
PANEL_WIDTH = 1.5
TINY_E = 1e-290
# bump when the quadrature changes so stale cache files are not reused
KERNEL_VERSION = 2


def panel_width(L: int) -> float:
    """Panel width in u; narrower panels resolve the oscillation of P_L."""
    return PANEL_WIDTH if L <= 2 else 3.0 / (L + 1)


def gegenbauer_norms(N: int, L: int) -> np.ndarray:
    """C_ℓ^λ(1) for ℓ = 0..L, λ = (N-2)/2."""
    lam = 0.5 * (N - 2)
    return np.array([math.gamma(l + 2 * lam) / (math.factorial(l) * math.gamma(2 * lam)) for l in range(L + 1)])


def sphere_factor(N: int) -> float:
    """|S^{N-2}|."""
    return 2.0 * math.pi ** ((N - 1) / 2.0) / math.gamma((N - 1) / 2.0)


def _u_end(ths, alpha):
    umax = np.arcsinh(np.pi / ths)
    if alpha < 1.0:
        umax = np.minimum(umax, 3.0 + 45.0 / (1.0 - alpha))
    return umax


# --------------------------------------------------------------------------
# numba path


@njit(cache=True)
def _scaled_point_nb(N, beta, alpha, L, norms, gx, gw, pw, r, s, e, out):
    for l in range(L + 1):
        out[l] = 0.0
    ae = abs(e)
    if ae < TINY_E:
        ae = TINY_E
    rs = r * s
    ths = ae / math.sqrt(rs)
    rho = 0.5 * ths
    uend = math.asinh(math.pi / ths)
    if alpha < 1.0:
        cap = 3.0 + 45.0 / (1.0 - alpha)
        if cap < uend:
            uend = cap
    K = int(math.ceil(uend / pw))
    # P_L(cos θ) must also be resolved in θ when the u-range is short
    th_end = min(math.pi, ths * math.sinh(uend))
    Kt = int(math.ceil(th_end * (L + 1) / (4.0 * math.pi)))
    if Kt > K:
        K = Kt
    if K < 1:
        K = 1
    hp = uend / K
    lam = 0.5 * (N - 2)
    log2 = math.log(2.0)
    for k in range(K):
        for q in range(gx.shape[0]):
            u = hp * (k + 0.5 * (gx[q] + 1.0))
            th = ths * math.sinh(u)
            if th > math.pi:
                th = math.pi
            X = math.sin(0.5 * th) / rho
            if X > 1e8:
                lf = -beta * math.log(X) - 0.5 * beta * math.log1p(1.0 / (X * X))
            else:
                lf = -0.5 * beta * math.log1p(X * X)
            if u > 20.0:
                lf += u - log2
                lsh = u - log2
            else:
                lf += math.log(math.cosh(u))
                lsh = math.log(math.sinh(u))
            if N > 2:
                st = math.sin(th)
                if st <= 0.0:
                    continue
                lf += (N - 2) * (lsh + math.log(st / th))
            F = math.exp(lf) * 0.5 * hp * gw[q]
            t = math.cos(th)
            out[0] += F
            if L >= 1:
                c0 = 1.0
                c1 = 2.0 * lam * t
                out[1] += F * c1 / norms[1]
                for n in range(2, L + 1):
                    c2 = (2.0 * t * (n + lam - 1.0) * c1 - (n + 2.0 * lam - 2.0) * c0) / n
                    out[n] += F * c2 / norms[n]
                    c0 = c1
                    c1 = c2
    pref = rs ** (-0.5 * (N - 1))
    for l in range(L + 1):
        out[l] *= pref


@njit(cache=True)
def _scaled_batch_nb(N, beta, alpha, L, norms, gx, gw, pw, r, s, e):
    m = r.shape[0]
    res = np.empty((L + 1, m))
    buf = np.empty(L + 1)
    for k in range(m):
        _scaled_point_nb(N, beta, alpha, L, norms, gx, gw, pw, r[k], s[k], e[k], buf)
        for l in range(L + 1):
            res[l, k] = buf[l]
    return res


@njit(cache=True)
def _pairwise_nb(N, beta, alpha, L, norms, gx, gw, pw, nodes):
    n = nodes.shape[0]
    K = np.zeros((L + 1, n, n))
    buf = np.empty(L + 1)
    for i in range(n):
        for j in range(i + 1, n):
            e = nodes[j] - nodes[i]
            _scaled_point_nb(N, beta, alpha, L, norms, gx, gw, pw, nodes[i], nodes[j], e, buf)
            f = abs(e) ** (alpha - 1.0)
            for l in range(L + 1):
                v = buf[l] * f
                K[l, i, j] = v
                K[l, j, i] = v
    return K


# --------------------------------------------------------------------------
# numpy path


def _scaled_batch_np(N, beta, alpha, L, norms, gx, gw, pw, r, s, e):
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    ae = np.maximum(np.abs(np.asarray(e, dtype=float)), TINY_E)
    rs = r * s
    ths = ae / np.sqrt(rs)
    uend = _u_end(ths, alpha)
    th_end = np.minimum(np.pi, ths * np.sinh(uend))
    npan = np.maximum(np.ceil(uend / pw), np.ceil(th_end * (L + 1) / (4.0 * np.pi)))
    npan = np.maximum(npan.astype(int), 1)
    res = np.zeros((L + 1, r.size))
    lam = 0.5 * (N - 2)
    for K in np.unique(npan):
        sel = np.nonzero(npan == K)[0]
        hp = (uend[sel] / K)[:, None]
        frac = (np.arange(K)[:, None] + 0.5 * (gx[None, :] + 1.0)).ravel()
        wq = np.tile(gw, K)
        u = hp * frac[None, :]
        w = 0.5 * hp * wq[None, :]
        th = np.minimum(ths[sel, None] * np.sinh(u), np.pi)
        X = np.sin(0.5 * th) / (0.5 * ths[sel, None])
        big = X > 1e8
        with np.errstate(divide="ignore"):
            lf = np.where(
                big,
                -beta * np.log(np.where(big, X, 1.0)) - 0.5 * beta * np.log1p(1.0 / np.where(big, X * X, 1.0)),
                -0.5 * beta * np.log1p(np.where(big, 0.0, X * X)),
            )
            hi = u > 20.0
            uc = np.where(hi, 1.0, u)
            lf += np.where(hi, u - math.log(2.0), np.log(np.cosh(uc)))
            lsh = np.where(hi, u - math.log(2.0), np.log(np.sinh(uc)))
            if N > 2:
                st = np.sin(th)
                lf += (N - 2) * (lsh + np.log(np.where(st > 0, st, 1.0) / th))
                lf = np.where(st > 0, lf, -np.inf)
        F = np.exp(lf) * w
        t = np.cos(th)
        res[0, sel] = F.sum(axis=1)
        if L >= 1:
            c0 = np.ones_like(t)
            c1 = 2.0 * lam * t
            res[1, sel] = (F * c1).sum(axis=1) / norms[1]
            for n in range(2, L + 1):
                c2 = (2.0 * t * (n + lam - 1.0) * c1 - (n + 2.0 * lam - 2.0) * c0) / n
                res[n, sel] = (F * c2).sum(axis=1) / norms[n]
                c0, c1 = c1, c2
    return res * rs[None, :] ** (-0.5 * (N - 1))


def _pairwise_np(N, beta, alpha, L, norms, gx, gw, pw, nodes):
    n = nodes.size
    K = np.zeros((L + 1, n, n))
    for i in range(n - 1):
        s = nodes[i + 1 :]
        e = s - nodes[i]
        vals = _scaled_batch_np(N, beta, alpha, L, norms, gx, gw, pw, np.full(s.size, nodes[i]), s, e)
        vals *= np.abs(e)[None, :] ** (alpha - 1.0)
        K[:, i, i + 1 :] = vals
        K[:, i + 1 :, i] = vals
    return K


# --------------------------------------------------------------------------
# dispatch


def scaled_kernel(N: int, alpha: float, L: int, r, s, e=None) -> np.ndarray:
    """k_ℓ(r, s)·|e|^{1-α} for ℓ = 0..L; ``e`` defaults to s - r."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    r, s = np.broadcast_arrays(r, s)
    e = s - r if e is None else np.broadcast_to(np.asarray(e, dtype=float), r.shape)
    r, s, e = (np.ascontiguousarray(a.ravel()) for a in (r, s, e))
    norms = gegenbauer_norms(N, max(L, 1))
    beta = N - alpha
    if use_numba():
        out = _scaled_batch_nb(N, beta, alpha, L, norms, GAUSS_X, GAUSS_W, panel_width(L), r, s, e)
    else:
        out = _scaled_batch_np(N, beta, alpha, L, norms, GAUSS_X, GAUSS_W, panel_width(L), r, s, e)
    return out * sphere_factor(N)


def pairwise_kernels(N: int, alpha: float, L: int, nodes: np.ndarray) -> np.ndarray:
    """k_ℓ(r_i, r_j) for ℓ = 0..L on all node pairs; the diagonal is left at 0."""
    nodes = np.ascontiguousarray(nodes, dtype=float)
    norms = gegenbauer_norms(N, max(L, 1))
    beta = N - alpha
    if use_numba():
        K = _pairwise_nb(N, beta, alpha, L, norms, GAUSS_X, GAUSS_W, panel_width(L), nodes)
    else:
        K = _pairwise_np(N, beta, alpha, L, norms, GAUSS_X, GAUSS_W, panel_width(L), nodes)
    K *= sphere_factor(N)
    return K
