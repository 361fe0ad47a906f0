"""Linearised operators at ground states and their sector spectra.

In sector ℓ, with m the radial mass weights, the weak form of the
linearisation at a positive state u is the symmetric matrix

    A = H_ℓ - p·c·diag(m u^{p-1}) K̃_ℓ diag(u^{p-1}) - (p-1)·diag(m V u^{p-2})

where H_ℓ is the sector Helmholtz matrix, K̃_ℓ the weighted-symmetric sector
kernel matrix, c the Riesz coefficient (1 in the rescaled formulation) and
V = c K_0 u^p.  For the limit-N problem the exchange term is the rank-one
p|S|(m v^{p-1})(m v^{p-1})ᵀ, present only in sector 0, and for the limit-0
problem the operator is local with multiplier (2p-1)u^{2p-2}.

The spectrum is that of the pencil A φ = λ M φ with M = diag(m).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from choquard import riesz
from choquard.errors import DomainError, UsageError
from choquard.grid import RadialFn
from choquard.solver import GroundState, _Model
from choquard.specfun import riesz_coefficient

__all__ = [
    "LinearizedOperator",
    "SectorSpectrum",
    "assemble_linearized",
    "sector_spectrum",
    "nondegeneracy_report",
    "KERNEL_TOL",
    "SIMILARITY_MIN",
]

KERNEL_TOL = 1e-5
SIMILARITY_MIN = 0.9999
MAX_K = 10


@dataclass
class LinearizedOperator:
    sector: int
    A: np.ndarray
    M: np.ndarray
    local: np.ndarray
    nonlocal_part: np.ndarray | None
    potential_sup: float
    source: str
    grid: object = field(repr=False, default=None)

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.A - self.A.T)) / np.max(np.abs(self.A)))

    def apply(self, phi: np.ndarray) -> np.ndarray:
        """Strong form L[φ] = M⁻¹ A φ."""
        return (self.A @ phi) / self.M


def _source(formulation: str) -> str:
    return {"limit-N": "limit-N", "limit-0": "limit-0"}.get(formulation, "choquard")


def assemble_linearized(gs: GroundState, ell: int, kernel=None) -> LinearizedOperator:
    """Symmetric pencil (A, M) of the linearisation at ``gs`` in sector ℓ."""
    p = gs.params.p
    if p < 2.0:
        raise DomainError(
            f"the linearised equation needs p >= 2 (u^(p-2) must stay bounded); got p = {p:g}"
        )
    if int(ell) != ell or ell < 0 or ell > riesz.MAX_SECTOR:
        raise UsageError(f"sector must be an integer in [0, {riesz.MAX_SECTOR}], got {ell!r}")
    ell = int(ell)
    g = gs.grid
    u = gs.profile.values
    m = g.mass
    S = g.sphere
    H = g.helmholtz_matrix(ell).toarray()
    src = _source(gs.formulation)
    nonlocal_part = None
    if src == "limit-0":
        mult = (2.0 * p - 1.0) * np.abs(u) ** (2.0 * p - 2.0)
        local = H - np.diag(m * mult)
        potential = mult
    elif src == "limit-N":
        a0 = S * float(m @ np.abs(u) ** p)
        local = H - np.diag(m * (p - 1.0) * a0 * np.abs(u) ** (p - 2.0))
        potential = (2.0 * p - 1.0) * a0 * np.abs(u) ** (p - 2.0)
        if ell == 0:
            b = m * np.abs(u) ** (p - 1.0)
            nonlocal_part = -p * S * np.outer(b, b)
    else:
        coef = riesz_coefficient(g.N, gs.params.alpha) if gs.formulation == "choquard-I_alpha" else 1.0
        kernel = kernel or {}
        model = _Model(gs.params, g, gs.formulation, kernel.get(0))
        V = model.potential(u)
        local = H - np.diag(m * (p - 1.0) * V * np.abs(u) ** (p - 2.0))
        potential = (2.0 * p - 1.0) * V * np.abs(u) ** (p - 2.0)
        K = kernel.get(ell) or riesz.build_kernel(g, gs.params.alpha, ell)
        up = np.abs(u) ** (p - 1.0)
        W = K.symmetrized()
        nonlocal_part = -p * coef * (m * up)[:, None] * W * up[None, :]
        nonlocal_part = 0.5 * (nonlocal_part + nonlocal_part.T)
    A = local if nonlocal_part is None else local + nonlocal_part
    A = 0.5 * (A + A.T)
    return LinearizedOperator(ell, A, np.array(m), local, nonlocal_part, float(np.max(np.abs(potential))), src, g)


@dataclass
class SectorSpectrum:
    sector: int
    eigenvalues: np.ndarray
    eigenvectors: list
    source: str
    residuals: np.ndarray
    zero_gap: float = math.nan
    kernel_index: int | None = None
    similarity: float | None = None

    def negative_count(self, tol: float = 0.0) -> int:
        return int(np.sum(self.eigenvalues < -tol))

    def to_dict(self) -> dict:
        return {
            "sector": self.sector,
            "source": self.source,
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "residuals": [float(x) for x in self.residuals],
            "zero_gap": float(self.zero_gap),
            "kernel_index": self.kernel_index,
            "similarity": self.similarity,
        }


def sector_spectrum(op: LinearizedOperator, k: int = 6) -> SectorSpectrum:
    """k lowest eigenpairs of A φ = λ M φ (dense, after diagonal scaling by M^{-1/2})."""
    if not 1 <= k <= MAX_K:
        raise UsageError(f"k must be in [1, {MAX_K}], got {k}")
    s = 1.0 / np.sqrt(op.M)
    B = s[:, None] * op.A * s[None, :]
    B = 0.5 * (B + B.T)
    try:
        lam, Y = sla.eigh(B, subset_by_index=[0, k - 1], driver="evr")
    except (sla.LinAlgError, ValueError) as exc:  # pragma: no cover - defensive
        raise ArithmeticError(
            f"eigensolver failed ({exc}); mass range [{op.M.min():.3e}, {op.M.max():.3e}]"
        ) from exc
    Phi = s[:, None] * Y
    res = np.empty(k)
    scale = np.linalg.norm(op.A, 1)
    vecs = []
    for j in range(k):
        phi = Phi[:, j]
        # fix the sign so that the weighted mean is nonnegative
        if np.dot(op.M, phi) < 0 or (abs(np.dot(op.M, phi)) < 1e-300 and phi[np.argmax(np.abs(phi))] < 0):
            phi = -phi
            Phi[:, j] = phi
        r = op.A @ phi - lam[j] * op.M * phi
        res[j] = np.linalg.norm(r) / (scale * np.linalg.norm(phi))
        vecs.append(RadialFn(op.grid, phi, op.sector) if op.grid is not None else phi)
    return SectorSpectrum(op.sector, lam, vecs, op.source, res, zero_gap=float(np.min(np.abs(lam))))


def _weighted_cos(M, a, b) -> float:
    return abs(float(np.dot(M * a, b))) / math.sqrt(float(np.dot(M * a, a)) * float(np.dot(M * b, b)))


def nondegeneracy_report(gs: GroundState, k: int = 6, spot_check_l3: bool = False, kernel=None) -> dict:
    """Spectral evidence that the kernel of the linearisation is exactly the translations.

    Sector 1 must contain an eigenvalue with |λ| ≤ 1e-5 (1 + ‖potential‖∞)
    whose eigenvector matches u' with weighted cosine ≥ 0.9999; sectors 0
    and 2 must keep every |λ| above ``threshold`` = max(10 |λ_1|, that
    tolerance).
    """
    if gs.params.p < 2.0:
        raise DomainError("nondegeneracy needs p >= 2 for the linearised equation to be defined")
    ells = (0, 1, 2, 3) if spot_check_l3 else (0, 1, 2)
    if kernel is None and _source(gs.formulation) == "choquard":
        kernel = riesz.build_kernels(gs.grid, gs.params.alpha, ells)
    ops = {ell: assemble_linearized(gs, ell, kernel) for ell in ells}
    specs = {ell: sector_spectrum(ops[ell], k) for ell in ells}
    scale = 1.0 + ops[0].potential_sup
    tol = KERNEL_TOL * scale

    du = gs.profile.derivative()
    s1 = specs[1]
    j = int(np.argmin(np.abs(s1.eigenvalues)))
    lam1 = float(s1.eigenvalues[j])
    phi = s1.eigenvectors[j].values
    sim = _weighted_cos(ops[1].M, phi, du)
    certified = abs(lam1) <= tol and sim >= SIMILARITY_MIN
    s1.kernel_index, s1.similarity = j, sim
    others = np.delete(s1.eigenvalues, j) if certified else s1.eigenvalues
    s1.zero_gap = float(np.min(np.abs(others))) if others.size else math.inf

    threshold = max(10.0 * abs(lam1), tol)
    gap0, gap2 = specs[0].zero_gap, specs[2].zero_gap
    neg0 = specs[0].negative_count()
    verdict = certified and gap0 > threshold and gap2 > threshold
    report = {
        "params": gs.params.to_dict(),
        "formulation": gs.formulation,
        "grid": gs.grid.metadata(),
        "potential_scale": scale,
        "kernel_tolerance": tol,
        "threshold": threshold,
        "l1_eigenvalue": lam1,
        "l1_similarity": sim,
        "l1_certified": bool(certified),
        "l1_next_gap": s1.zero_gap,
        "l0_gap": gap0,
        "l0_negative_count": neg0,
        "l0_morse_flag": neg0 != 1,
        "l2_gap": gap2,
        "max_residual": float(max(np.max(s.residuals) for s in specs.values())),
        "max_asymmetry": float(max(op.asymmetry() for op in ops.values())),
        "sectors": {str(ell): specs[ell].to_dict() for ell in ells},
        "verdict": "PASS" if verdict else "FAIL",
    }
    if spot_check_l3:
        report["l3_gap"] = specs[3].zero_gap
    return report


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
