"""Riesz-potential convolution of radial data, sector by sector.

For G(x) = g(|x|) Y_ℓ(x/|x|) the convolution with |x|^{-(N-α)} is
Y_ℓ(x/|x|) ∫_0^∞ k_ℓ(r, s) g(s) s^{N-1} ds, with k_ℓ the sector kernel from
:mod:`choquard._kernels`.  The radial integral is discretised by a locally
corrected node rule: off-diagonal entries carry the plain grid weights, and
seven weights around the diagonal are corrected so that the rule is exact
for a family of Gaussian-damped monomials centred at the target node.  The
exact moments of those test functions are computed by panel quadrature with
a power-law substitution at the singular point.

The corrected matrix is accurate row by row but only approximately
symmetric in the r^{N-1}-weighted inner product; :meth:`KernelMatrix.symmetrized`
gives the exactly symmetric part, which has the same quadratic form and is
what linearised operators use.  The coefficient A_α is never folded in.
"""

from __future__ import annotations

import functools
import hashlib
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate as _spi

from choquard import _kernels
from choquard.errors import ConfigError, DomainError, UsageError
from choquard.grid import RadialFn, RadialGrid
from choquard.specfun import Params

__all__ = [
    "MAX_SECTOR",
    "KernelMatrix",
    "kernel_value",
    "build_kernel",
    "build_kernels",
    "convolve",
    "multipole_sum",
    "clear_cache",
]

log = logging.getLogger(__name__)

MAX_SECTOR = 8
N_CORR = 7
SIGMA_CELLS = 10.0
ORIGIN_CELLS = 6.0
CUTOFF = 7.5
_PANEL_X, _PANEL_W = np.polynomial.legendre.leggauss(12)
_MEMO: dict = {}
_MEMO_LIMIT = 16


def _check(N, alpha, ell):
    if not 0.0 < alpha < N:
        raise DomainError(f"alpha must lie in (0, {N}), got {alpha}")
    if int(ell) != ell or ell < 0:
        raise ConfigError(f"sector must be a nonnegative integer, got {ell!r}")
    if ell > MAX_SECTOR:
        raise ConfigError(f"sector {ell} exceeds the supported maximum {MAX_SECTOR}")


def _diagonal_value(N, alpha, ell, r):
    # k_ℓ(r, r) = |S^{N-2}| (2r²)^{-β/2} ∫_0^π (1-cos θ)^{-β/2} P_ℓ sin^{N-2}θ dθ
    beta = N - alpha
    if beta >= N - 1:
        return math.inf
    lam = 0.5 * (N - 2)
    norm = _kernels.gegenbauer_norms(N, max(ell, 1))[ell]
    from scipy.special import eval_gegenbauer

    def f(theta):
        t = math.cos(theta)
        pl = eval_gegenbauer(ell, lam, t) / norm
        # (1-cosθ) = 2 sin²(θ/2); the θ^{-β} singularity goes into the weight
        if theta > 0:
            x = 2.0 * math.sin(0.5 * theta) ** 2 / theta**2
            sinc = math.sin(theta) / theta
        else:
            x, sinc = 0.5, 1.0
        return x ** (-0.5 * beta) * pl * sinc ** (N - 2)

    val, _ = _spi.quad(f, 0.0, math.pi, weight="alg", wvar=(N - 2 - beta, 0.0), epsabs=0, epsrel=1e-13, limit=200)
    return _kernels.sphere_factor(N) * (2.0 * r * r) ** (-0.5 * beta) * val


def kernel_value(N: int, alpha: float, ell: int, r, s):
    """Sector kernel k_ℓ(r, s) of |x|^{-(N-α)}; broadcasts over r and s.

    On the diagonal r = s the value is finite only for α > 1 and ``inf``
    is returned otherwise.
    """
    _check(N, alpha, ell)
    r_arr, s_arr = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
    if np.any(r_arr <= 0) or np.any(s_arr <= 0):
        raise DomainError("kernel_value needs r, s > 0")
    out = np.empty(r_arr.shape)
    flat_r, flat_s, flat = r_arr.ravel(), s_arr.ravel(), out.reshape(-1)
    off = flat_r != flat_s
    if np.any(off):
        e = flat_s[off] - flat_r[off]
        sk = _kernels.scaled_kernel(N, alpha, ell, flat_r[off], flat_s[off], e)[ell]
        flat[off] = sk * np.abs(e) ** (alpha - 1.0)
    for k in np.nonzero(~off)[0]:
        flat[k] = _diagonal_value(N, alpha, ell, flat_r[k])
    return float(out) if out.ndim == 0 else out


def multipole_sum(N: int, alpha: float, r: float, s: float, cos_gamma, L: int = MAX_SECTOR):
    """Σ_{ℓ≤L} dim_ℓ/|S^{N-1}| k_ℓ(r,s) P_ℓ(cos γ), which tends to |x-y|^{-(N-α)}."""
    from scipy.special import eval_gegenbauer

    from choquard.specfun import sphere_area

    lam = 0.5 * (N - 2)
    ks = _kernels.scaled_kernel(N, alpha, L, r, s)[:, 0] * abs(s - r) ** (alpha - 1.0)
    norms = _kernels.gegenbauer_norms(N, max(L, 1))
    t = np.asarray(cos_gamma, dtype=float)
    total = np.zeros_like(t)
    for ell in range(L + 1):
        # multiplicity of degree-ℓ harmonics in N dimensions
        dim = (2 * ell + N - 2) * math.comb(ell + N - 3, ell) / (N - 2)
        total = total + dim * ks[ell] * eval_gegenbauer(ell, lam, t) / norms[ell]
    return total / sphere_area(N)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Dense quadrature matrix for one sector.

    ``entries[i, j]`` approximates the weight of g(r_j) in
    ∫ k_ℓ(r_i, s) g(s) s^{N-1} ds, so convolution is ``entries @ g``.
    """

    grid: RadialGrid
    N: int
    alpha: float
    sector: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.entries @ values

    def unweighted(self) -> np.ndarray:
        """Entries divided by the plain weight w_j s_j^{N-1} (corrected near the diagonal)."""
        return self.entries / self.grid.mass[None, :]

    def symmetrized(self) -> np.ndarray:
        """Weighted-symmetric part ½(K + M⁻¹KᵀM): same quadratic form, symmetric Jacobians."""
        m = self.grid.mass
        return 0.5 * (self.entries + (self.entries.T * m[None, :]) / m[:, None])

    def weighted_asymmetry(self) -> float:
        m = self.grid.mass
        B = m[:, None] * self.entries
        return float(np.max(np.abs(B - B.T)) / np.max(np.abs(B)))


# ---------------------------------------------------------------------------
# moment quadrature


@functools.lru_cache(maxsize=None)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _side_rule(Ls: float, h: float, alpha: float):
    """Nodes x ∈ (0, Ls) and weights for ∫_0^Ls |x|^{α-1} f(x) dx given f.

    Returns ``x`` and ``G`` such that the integral ≈ Σ G f(x); the factor
    |x|^{α-1} is already inside G, which keeps the first panel finite.
    """
    delta = min(0.25 * h, Ls)
    m = max(1, math.ceil(4.0 * alpha))
    q = m / alpha
    ny = min(64, max(24, math.ceil(0.5 * (m + 3.0 * q)) + 2))
    yx, yw = _leggauss(ny)
    y = 0.5 * (yx + 1.0)
    wy = 0.5 * yw
    xs = [delta * y**q]
    Gs = [delta**alpha * q * y ** (m - 1) * wy]
    edges = []
    b = delta
    lim = min(Ls, SIGMA_CELLS * h)
    while b < lim:
        nb = min(2.0 * b, lim)
        edges.append((b, nb))
        b = nb
    width = SIGMA_CELLS * h
    if b < Ls:
        k = max(1, math.ceil((Ls - b) / width))
        grid = np.linspace(b, Ls, k + 1)
        edges.extend(zip(grid[:-1], grid[1:]))
    for a, c in edges:
        x = 0.5 * (c - a) * _PANEL_X + 0.5 * (c + a)
        xs.append(x)
        Gs.append(0.5 * (c - a) * _PANEL_W * x ** (alpha - 1.0))
    return np.concatenate(xs), np.concatenate(Gs)


def _test_functions(s, r0, sigma, parity, cut, origin=False):
    """Test functions Ψ_m(s), shape (N_CORR, len(s)).

    Away from the origin these are Gaussian-damped powers of (s - r0),
    reflected through 0 with the sector parity.  Near the origin that family
    degenerates, and powers s^{2m+δ} (δ = 0 or 1 by parity) are used instead.
    """
    out = np.zeros((N_CORR, np.size(s)))
    if origin:
        z = np.asarray(s, dtype=float) / sigma
        g = np.where(np.abs(s) <= cut, np.exp(-z * z), 0.0)
        zp = g * (z if parity < 0 else 1.0)
        for m in range(N_CORR):
            out[m] = zp
            zp = zp * z * z
        return out
    for sgn, shift in ((1.0, s - r0), (parity, -s - r0)):
        z = shift / sigma
        inside = np.abs(shift) <= cut
        g = np.where(inside, np.exp(-z * z), 0.0)
        zp = np.ones_like(z)
        for m in range(N_CORR):
            out[m] += sgn * zp * g
            zp = zp * z
    return out


def _corrections(grid: RadialGrid, alpha: float, ells, pair: np.ndarray, rows_per_chunk: int = 128):
    """Corrected weight matrices W_ℓ (unsymmetrised) for the requested sectors."""
    N = grid.N
    r, w, n = grid.nodes, grid.weights, grid.n
    mass = grid.mass
    L = max(ells)
    W = {ell: pair[ell] * mass[None, :] for ell in ells}
    h_last = w[-1]
    for start in range(0, n, rows_per_chunk):
        rows = range(start, min(n, start + rows_per_chunk))
        pts_s, pts_e, pts_G, owner = [], [], [], []
        virt_s, virt_owner = [], []
        for i in rows:
            hi = w[i]
            sigma = SIGMA_CELLS * hi
            cut = CUTOFF * sigma
            for sign, Ls in ((1.0, cut), (-1.0, min(cut, r[i]))):
                x, G = _side_rule(Ls, hi, alpha)
                pts_s.append(r[i] + sign * x)
                pts_e.append(sign * x)
                pts_G.append(G)
                owner.append(np.full(x.size, i))
            top = r[i] + cut
            if top > grid.R_max:
                k = int(math.ceil((top - grid.R_max) / h_last))
                vs = grid.R_max + (np.arange(k) + 0.5) * h_last
                virt_s.append(vs)
                virt_owner.append(np.full(k, i))
        s_all = np.concatenate(pts_s)
        e_all = np.concatenate(pts_e)
        G_all = np.concatenate(pts_G)
        own = np.concatenate(owner)
        sk = _kernels.scaled_kernel(N, alpha, L, r[own], s_all, e_all) * G_all[None, :]
        sk *= s_all[None, :] ** (N - 1)
        if virt_s:
            vs_all = np.concatenate(virt_s)
            vown = np.concatenate(virt_owner)
            kv = _kernels.scaled_kernel(N, alpha, L, r[vown], vs_all) * np.abs(vs_all - r[vown]) ** (alpha - 1.0)
            kv *= h_last * vs_all[None, :] ** (N - 1)
        else:
            vs_all = np.empty(0)
            vown = np.empty(0, dtype=int)
        for i in rows:
            sel = own == i
            vsel = vown == i
            hi = w[i]
            sigma = SIGMA_CELLS * hi
            cut = CUTOFF * sigma
            j0 = min(max(i - N_CORR // 2, 0), n - N_CORR)
            J = np.arange(j0, j0 + N_CORR)
            near = np.nonzero(np.abs(r - r[i]) <= cut + hi)[0]
            if r[i] < cut + hi:
                near = np.arange(0, near[-1] + 1)
            org = r[i] < ORIGIN_CELLS * hi
            for ell in ells:
                parity = -1.0 if ell % 2 else 1.0
                tf = lambda x: _test_functions(x, r[i], sigma, parity, cut, org)
                moments = tf(s_all[sel]) @ sk[ell, sel]
                base = tf(r[near]) @ W[ell][i, near]
                if np.any(vsel):
                    base += tf(vs_all[vsel]) @ kv[ell, vsel]
                Phi = tf(r[J])
                c = np.linalg.solve(Phi, moments - base)
                W[ell][i, J] += c
    return W


# ---------------------------------------------------------------------------
# construction and caching


def _budget_bytes() -> float:
    return float(os.environ.get("CHOQUARD_KERNEL_BUDGET_MB", "4096")) * 2**20


def _cache_path(grid: RadialGrid, alpha: float, ell: int) -> Path | None:
    root = os.environ.get("CHOQUARD_CACHE_DIR")
    if not root:
        return None
    key = f"{_kernels.KERNEL_VERSION}:{grid.N}:{alpha!r}:{ell}:{grid.n}:{grid.hash}"
    tag = hashlib.sha256(key.encode()).hexdigest()[:20]
    return Path(root) / f"kernel_{tag}.bin"


def _header(grid, alpha, ell) -> bytes:
    text = (
        f"CHOQUARD-KERNEL v{_kernels.KERNEL_VERSION} N={grid.N} alpha={alpha!r} ell={ell} "
        f"n={grid.n} grid={grid.hash}\n"
    )
    return text.encode().ljust(256, b" ")


def _load_cached(grid, alpha, ell):
    path = _cache_path(grid, alpha, ell)
    if path is None or not path.exists():
        return None
    raw = path.read_bytes()
    if raw[:256] != _header(grid, alpha, ell) or len(raw) != 256 + 8 * grid.n * grid.n:
        log.warning("ignoring stale kernel cache file %s", path)
        return None
    return np.frombuffer(raw[256:], dtype="<f8").reshape(grid.n, grid.n).copy()


def _store_cached(grid, alpha, ell, entries):
    path = _cache_path(grid, alpha, ell)
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".kernel-")
    with os.fdopen(fd, "wb") as fh:
        fh.write(_header(grid, alpha, ell))
        fh.write(np.ascontiguousarray(entries, dtype="<f8").tobytes())
    os.replace(tmp, path)


def clear_cache() -> None:
    """Drop the in-process kernel memo (disk cache files are left alone)."""
    _MEMO.clear()


def _params_alpha(grid: RadialGrid, params) -> float:
    if isinstance(params, Params):
        if params.N != grid.N:
            raise UsageError(f"params are for N={params.N}, grid is for N={grid.N}")
        return float(params.alpha)
    return float(params)


def build_kernels(grid: RadialGrid, params, ells=(0,)) -> dict[int, KernelMatrix]:
    """Kernel matrices for several sectors sharing one pass over node pairs.

    ``params`` is a :class:`Params` or a bare α.
    """
    alpha = _params_alpha(grid, params)
    ells = sorted({int(l) for l in ells})
    for ell in ells:
        _check(grid.N, alpha, ell)
    out = {}
    todo = []
    for ell in ells:
        key = (grid.N, alpha, ell, grid.hash)
        if key in _MEMO:
            out[ell] = _MEMO[key]
            continue
        cached = _load_cached(grid, alpha, ell)
        if cached is not None:
            out[ell] = KernelMatrix(grid, grid.N, alpha, ell, cached)
            _remember(key, out[ell])
        else:
            todo.append(ell)
    if not todo:
        return out
    need = 8.0 * grid.n**2 * (max(todo) + 1 + 2 * len(todo))
    if need > _budget_bytes():
        raise ConfigError(
            f"kernel matrices need about {need / 2**20:.0f} MB for n={grid.n}; "
            "reduce the grid size or raise CHOQUARD_KERNEL_BUDGET_MB"
        )
    pair = _kernels.pairwise_kernels(grid.N, alpha, max(todo), grid.nodes)
    W = _corrections(grid, alpha, todo, pair)
    del pair
    for ell in todo:
        entries = W[ell]
        K = KernelMatrix(grid, grid.N, alpha, ell, entries)
        _store_cached(grid, alpha, ell, entries)
        _remember((grid.N, alpha, ell, grid.hash), K)
        out[ell] = K
    return out


def _remember(key, K):
    if len(_MEMO) >= _MEMO_LIMIT:
        _MEMO.pop(next(iter(_MEMO)))
    _MEMO[key] = K


def build_kernel(grid: RadialGrid, params, ell: int = 0) -> KernelMatrix:
    return build_kernels(grid, params, (ell,))[int(ell)]


def convolve(K: KernelMatrix, g: RadialFn) -> RadialFn:
    """Sector-ℓ radial part of |x|^{-(N-α)} ∗ (g Y_ℓ); A_α is not applied."""
    if not K.grid.same_as(g.grid):
        raise UsageError("kernel and function live on different grids")
    if g.sector != K.sector:
        raise UsageError(f"function is in sector {g.sector}, kernel in sector {K.sector}")
    return RadialFn(g.grid, K.apply(g.values), K.sector)
