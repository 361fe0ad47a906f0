"""Radial discretisation of R^N.

Nodes are cell centres of a partition of [0, R_max]; the weights are the
cell widths, so Σ weights = R_max exactly.  On the uniform layout the node
rule is the midpoint rule, which for integrands with a smooth even
extension through r = 0 (all radial integrands when N is odd) converges
faster than any power of the spacing.

Derivatives use centred finite-difference stencils (default order 8) with
ghost values reflected through r = 0 with the sector parity (-1)^ℓ and
reflected oddly through R_max (homogeneous Dirichlet).  The Helmholtz
operator is assembled in weak form, H = DᵀMD + M(1 + ℓ(ℓ+N-2)/r²), so it is
symmetric and the discrete energy identity ⟨w, w⟩_{H¹} = ∫ f w holds to
round-off.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from choquard.errors import ConfigError, UsageError
from choquard.specfun import sphere_area

__all__ = [
    "RadialGrid",
    "RadialFn",
    "make_grid",
    "integrate",
    "h1_norm_sq",
    "h1_inner",
    "h1_distance",
    "lq_norm",
    "sup_norm",
    "helmholtz_solve",
    "fornberg_weights",
]

GRADED_RATIO = 1.01


def fornberg_weights(x0: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at x0 from nodes x."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


@dataclass(frozen=True, eq=False)
class RadialGrid:
    nodes: np.ndarray
    weights: np.ndarray
    R_max: float
    N: int
    layout: str = "uniform"
    fd_order: int = 8
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if self.fd_order % 2 or self.fd_order < 2:
            raise ConfigError(f"fd_order must be a positive even integer, got {self.fd_order}")

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def h(self) -> float:
        """Uniform spacing (the far-field spacing for graded grids)."""
        return float(self.weights[-1])

    @property
    def is_uniform(self) -> bool:
        return self.layout == "uniform"

    @property
    def sphere(self) -> float:
        return sphere_area(self.N)

    @property
    def mass(self) -> np.ndarray:
        """Diagonal of the radial mass matrix, w_i r_i^{N-1}."""
        m = self._cache.get("mass")
        if m is None:
            m = self.weights * self.nodes ** (self.N - 1)
            m.setflags(write=False)
            self._cache["mass"] = m
        return m

    @property
    def hash(self) -> str:
        hx = self._cache.get("hash")
        if hx is None:
            d = hashlib.sha256()
            d.update(self.nodes.tobytes())
            d.update(self.weights.tobytes())
            d.update(f"{self.N}:{self.fd_order}".encode())
            hx = d.hexdigest()[:16]
            self._cache["hash"] = hx
        return hx

    def same_as(self, other: "RadialGrid") -> bool:
        return self is other or (self.N == other.N and self.fd_order == other.fd_order and self.hash == other.hash)

    def centrifugal(self, ell: int) -> np.ndarray:
        return ell * (ell + self.N - 2) / self.nodes**2

    def derivative_matrix(self, parity: int) -> sp.csr_matrix:
        """First-derivative matrix for functions of the given parity at r = 0."""
        key = ("D", parity)
        D = self._cache.get(key)
        if D is None:
            D = _build_derivative(self, parity)
            self._cache[key] = D
        return D

    def stiffness(self, ell: int) -> sp.csr_matrix:
        """DᵀMD for sector ℓ (without the mass and centrifugal parts)."""
        key = ("S", ell % 2)
        S = self._cache.get(key)
        if S is None:
            D = self.derivative_matrix(1 if ell % 2 == 0 else -1)
            S = (D.T @ sp.diags(self.mass) @ D).tocsr()
            S = ((S + S.T) * 0.5).tocsr()
            self._cache[key] = S
        return S

    def helmholtz_matrix(self, ell: int) -> sp.csr_matrix:
        key = ("H", ell)
        H = self._cache.get(key)
        if H is None:
            H = (self.stiffness(ell) + sp.diags(self.mass * (1.0 + self.centrifugal(ell)))).tocsr()
            self._cache[key] = H
        return H

    def helmholtz_factor(self, ell: int):
        key = ("LU", ell)
        f = self._cache.get(key)
        if f is None:
            f = spla.factorized(self.helmholtz_matrix(ell).tocsc())
            self._cache[key] = f
        return f

    def function(self, values, sector: int = 0) -> "RadialFn":
        return RadialFn(self, np.asarray(values, dtype=float), sector)

    def sample(self, fn, sector: int = 0) -> "RadialFn":
        return RadialFn(self, np.asarray(fn(self.nodes), dtype=float), sector)

    def self_test(self) -> float:
        """Relative error of Σ w r^{N-1} e^{-r} against the incomplete Gamma value."""
        from scipy.special import gammainc

        exact = math.gamma(self.N) * gammainc(self.N, self.R_max)
        approx = float(np.sum(self.weights * self.nodes ** (self.N - 1) * np.exp(-self.nodes)))
        return abs(approx - exact) / exact

    def metadata(self) -> dict:
        return {
            "n": self.n,
            "R_max": self.R_max,
            "N": self.N,
            "layout": self.layout,
            "fd_order": self.fd_order,
            "hash": self.hash,
        }


def _build_derivative(grid: RadialGrid, parity: int) -> sp.csr_matrix:
    r = grid.nodes
    n = grid.n
    q = grid.fd_order
    half = q // 2
    R = grid.R_max
    # extended node list: mirrored through 0, physical, mirrored through R
    ext = np.concatenate([-r[half - 1 :: -1], r, 2.0 * R - r[: -half - 1 : -1]])
    owner = np.concatenate([np.arange(half - 1, -1, -1), np.arange(n), np.arange(n - 1, n - half - 1, -1)])
    sign = np.concatenate([np.full(half, float(parity)), np.ones(n), -np.ones(half)])
    rows, cols, vals = [], [], []
    uniform_w = None
    if grid.is_uniform:
        uniform_w = fornberg_weights(0.0, np.arange(-half, half + 1) * grid.h, 1)
    for i in range(n):
        k = i + half
        idx = np.arange(k - half, k + half + 1)
        w = uniform_w if uniform_w is not None else fornberg_weights(r[i], ext[idx], 1)
        rows.extend([i] * len(idx))
        cols.extend(owner[idx])
        vals.extend(w * sign[idx])
    D = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    D.sum_duplicates()
    return D


def make_grid(n: int, R_max: float, layout: str = "uniform", N: int = 3, fd_order: int = 8) -> RadialGrid:
    """Cell-centred radial grid on [0, R_max].

    ``uniform``: n cells of width R_max/n.  ``graded``: geometric cells
    (ratio 1.01) growing from the origin until they reach the far-field
    width, then uniform cells.
    """
    if int(n) != n or n < 16:
        raise ConfigError(f"grid needs n >= 16 nodes, got {n!r}")
    if not (R_max > 0 and math.isfinite(R_max)):
        raise ConfigError(f"R_max must be positive, got {R_max!r}")
    if int(N) != N or N < 3:
        raise ConfigError(f"dimension N must be an integer >= 3, got {N!r}")
    n = int(n)
    if layout == "uniform":
        h = R_max / n
        widths = np.full(n, h)
    elif layout == "graded":
        q = GRADED_RATIO
        K = min(n // 4, 460)
        geo = q ** -np.arange(K, 0, -1.0)
        h = R_max / (geo.sum() + (n - K))
        widths = np.concatenate([h * geo, np.full(n - K, h)])
    else:
        raise ConfigError(f"unknown layout {layout!r}; expected 'uniform' or 'graded'")
    faces = np.concatenate([[0.0], np.cumsum(widths)])
    faces[-1] = R_max
    nodes = 0.5 * (faces[:-1] + faces[1:])
    if layout == "uniform":
        nodes = (np.arange(n) + 0.5) * h
    return RadialGrid(nodes, widths, float(R_max), int(N), layout, fd_order)


@dataclass(frozen=True, eq=False)
class RadialFn:
    """Values of a radial profile on a grid, tagged with its harmonic sector."""

    grid: RadialGrid
    values: np.ndarray
    sector: int = 0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise UsageError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("RadialFn values must be finite")
        if int(self.sector) != self.sector or self.sector < 0:
            raise UsageError(f"sector must be a nonnegative integer, got {self.sector!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "sector", int(self.sector))

    def with_values(self, values) -> "RadialFn":
        return RadialFn(self.grid, values, self.sector)

    def __add__(self, other):
        _check_pair(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _check_pair(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__

    def derivative(self) -> np.ndarray:
        """d/dr of the profile at the nodes."""
        parity = 1 if self.sector % 2 == 0 else -1
        return self.grid.derivative_matrix(parity) @ self.values

    def regular_at_origin(self, factor: float = 4.0) -> bool:
        """Check |f(r_1)| <= C r_1^ℓ with C estimated from nodes 2 and 3."""
        if self.sector == 0:
            return True
        r, v, ell = self.grid.nodes, np.abs(self.values), self.sector
        C = max(v[1] / r[1] ** ell, v[2] / r[2] ** ell)
        return bool(v[0] <= factor * C * r[0] ** ell + 1e-300)

    def to_dict(self, alpha=None, p=None) -> dict:
        return {
            "N": self.grid.N,
            "alpha": alpha,
            "p": p,
            "R_max": self.grid.R_max,
            "nodes": self.grid.nodes.tolist(),
            "values": self.values.tolist(),
            "sector": self.sector,
        }

    def to_json(self, alpha=None, p=None) -> str:
        return json.dumps(self.to_dict(alpha, p))

    @classmethod
    def from_dict(cls, d: dict, grid: RadialGrid | None = None) -> "RadialFn":
        nodes = np.asarray(d["nodes"], dtype=float)
        if grid is None:
            grid = grid_from_nodes(nodes, float(d["R_max"]), int(d["N"]))
        elif not np.array_equal(grid.nodes, nodes):
            raise UsageError("serialised nodes do not match the supplied grid")
        return cls(grid, np.asarray(d["values"], dtype=float), int(d.get("sector", 0)))

    @classmethod
    def from_json(cls, text: str, grid: RadialGrid | None = None) -> "RadialFn":
        return cls.from_dict(json.loads(text), grid)


def grid_from_nodes(nodes: np.ndarray, R_max: float, N: int, fd_order: int = 8) -> RadialGrid:
    """Rebuild a grid from its cell-centre nodes.

    The standard layouts are recognised exactly; otherwise the faces follow
    from f_0 = 0 and f_{i+1} = 2 r_i - f_i.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    for layout in ("uniform", "graded"):
        try:
            cand = make_grid(n, R_max, layout, N, fd_order)
        except ConfigError:
            break
        if np.allclose(cand.nodes, nodes, rtol=1e-13, atol=0):
            return cand
    faces = np.empty(n + 1)
    faces[0] = 0.0
    for i in range(n):
        faces[i + 1] = 2.0 * nodes[i] - faces[i]
    widths = np.diff(faces)
    if np.any(widths <= 0) or abs(faces[-1] - R_max) > 1e-9 * R_max:
        raise ConfigError("nodes are not the cell centres of a partition of [0, R_max]")
    widths[-1] += R_max - faces[-1]
    return RadialGrid(nodes, widths, R_max, N, "graded", fd_order)


def _check_pair(f: RadialFn, g: RadialFn) -> None:
    if not f.grid.same_as(g.grid):
        raise UsageError("functions live on different grids")
    if f.sector != g.sector:
        raise UsageError(f"sector mismatch: {f.sector} vs {g.sector}")


def integrate(f: RadialFn, grid: RadialGrid | None = None) -> float:
    """|S^{N-1}| ∫_0^{R_max} f(r) r^{N-1} dr."""
    if grid is not None and not grid.same_as(f.grid):
        raise UsageError("function does not live on the expected grid")
    g = f.grid
    return g.sphere * float(np.dot(g.mass, f.values))


def h1_inner(f: RadialFn, g: RadialFn) -> float:
    _check_pair(f, g)
    gr = f.grid
    return gr.sphere * float(f.values @ (gr.helmholtz_matrix(f.sector) @ g.values))


def h1_norm_sq(f: RadialFn) -> float:
    """|S^{N-1}| ∫ (f'² + ℓ(ℓ+N-2) f²/r² + f²) r^{N-1} dr."""
    return h1_inner(f, f)


def h1_distance(f: RadialFn, g: RadialFn) -> float:
    _check_pair(f, g)
    return math.sqrt(max(h1_norm_sq(f - g), 0.0))


def lq_norm(f: RadialFn, q: float) -> float:
    g = f.grid
    return (g.sphere * float(np.dot(g.mass, np.abs(f.values) ** q))) ** (1.0 / q)


def sup_norm(f: RadialFn) -> float:
    return float(np.max(np.abs(f.values)))


def helmholtz_solve(rhs: RadialFn, sector: int | None = None) -> RadialFn:
    """Solve (-Δ + 1) w = rhs in harmonic sector ℓ, Dirichlet at R_max."""
    ell = rhs.sector if sector is None else int(sector)
    if sector is not None and sector != rhs.sector:
        raise UsageError(f"rhs lives in sector {rhs.sector}, requested {sector}")
    g = rhs.grid
    w = g.helmholtz_factor(ell)(g.mass * rhs.values)
    if not np.all(np.isfinite(w)):
        raise ArithmeticError("Helmholtz solve produced non-finite values")
    return RadialFn(g, w, ell)


def helmholtz_solve_values(grid: RadialGrid, rhs: np.ndarray, ell: int = 0) -> np.ndarray:
    """Array version of :func:`helmholtz_solve` used inside iterations."""
    return grid.helmholtz_factor(ell)(grid.mass * rhs)
