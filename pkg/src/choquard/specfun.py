"""Gamma-function constants: Riesz coefficient, scaling factor, HLS constants.

All functions are pure and operate on Python floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from choquard.errors import DomainError

__all__ = [
    "DomainError",
    "Params",
    "gamma_fn",
    "riesz_coefficient",
    "scaling_s",
    "hls_bound",
    "hls_sharp_diagonal",
    "sphere_area",
]

# Below this distance from a pole of Γ the explicit factorisation Γ(z) = Γ(z+1)/z is used.
POLE_SWITCH = 1e-3


def gamma_fn(x: float) -> float:
    """Γ(x) for x > 0."""
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise DomainError(f"gamma_fn requires a finite x > 0, got {x!r}")
    if x < POLE_SWITCH:
        return math.gamma(x + 1.0) / x
    return math.gamma(x)


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / gamma_fn(n / 2.0)


def _check_alpha(N: int, alpha: float) -> None:
    if not (0.0 < alpha < N):
        raise DomainError(f"alpha must lie in (0, N) = (0, {N}), got {alpha!r}")


def riesz_coefficient(N: int, alpha: float) -> float:
    """A_α = Γ((N-α)/2) / (Γ(α/2) π^{N/2} 2^α), the normalisation of I_α."""
    _check_alpha(N, alpha)
    return gamma_fn((N - alpha) / 2.0) / (gamma_fn(alpha / 2.0) * math.pi ** (N / 2.0) * 2.0**alpha)


def scaling_s(N: int, alpha: float, p: float) -> float:
    """s(N, α, p) = A_α^{1/(2p-2)}; v = s·u turns I_α into the bare kernel."""
    if not p > 1.0:
        raise DomainError(f"p must exceed 1, got {p!r}")
    return riesz_coefficient(N, alpha) ** (1.0 / (2.0 * p - 2.0))


def hls_conjugate(N: int, alpha: float, p: float) -> float:
    """The r with 1/p + 1/r = 1 + α/N."""
    _check_alpha(N, alpha)
    if not p > 1.0:
        raise DomainError(f"HLS exponent p must exceed 1, got {p!r}")
    inv_r = 1.0 + alpha / N - 1.0 / p
    if not inv_r > 0.0:
        raise DomainError(f"no finite r solves 1/p + 1/r = 1 + α/N for p={p}")
    r = 1.0 / inv_r
    if not r > 1.0:
        raise DomainError(f"1/p + 1/r = 1 + α/N gives r = {r:.6g} <= 1")
    return r


def hls_bound(N: int, alpha: float, p: float) -> float:
    """Explicit upper bound for the HLS constant C(N, α, p).

    N/(α p r) · (|S^{N-1}|/N)^{λ/N} · [(λ/N / (1-1/p))^{λ/N} + (λ/N / (1-1/r))^{λ/N}],
    with λ = N - α and r the conjugate exponent.
    """
    r = hls_conjugate(N, alpha, p)
    lam = (N - alpha) / N
    pre = N / (alpha * p * r) * (sphere_area(N) / N) ** lam
    return pre * ((lam / (1.0 - 1.0 / p)) ** lam + (lam / (1.0 - 1.0 / r)) ** lam)


def hls_sharp_diagonal(N: int, alpha: float) -> float:
    """Sharp HLS constant at p = r = 2N/(N+α)."""
    _check_alpha(N, alpha)
    return (
        math.pi ** ((N - alpha) / 2.0)
        * gamma_fn(alpha / 2.0)
        / gamma_fn((N + alpha) / 2.0)
        * (gamma_fn(N) / gamma_fn(N / 2.0)) ** (alpha / N)
    )


@dataclass(frozen=True)
class Params:
    """Problem triple (N, α, p) with its admissibility windows.

    ``classify`` returns one of ``inadmissible``, ``admissible``,
    ``admissible-near-0``, ``admissible-near-N`` or ``admissible-both``.
    All window endpoints are excluded.
    """

    N: int
    alpha: float
    p: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise DomainError(f"dimension N must be an integer >= 3, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "p", float(self.p))

    @property
    def critical_exponent(self) -> float:
        return 2.0 * self.N / (self.N - 2.0)

    def hls_window(self) -> tuple[float, float]:
        N, a = self.N, self.alpha
        return 1.0 + a / N, (N + a) / (N - 2.0)

    def violations(self) -> list[str]:
        """Human-readable list of the conditions that fail for existence."""
        N, a, p = self.N, self.alpha, self.p
        out = []
        if not (0.0 < a < N):
            out.append(f"alpha = {a:g} must lie in (0, N) = (0, {N})")
            return out
        lo, hi = self.hls_window()
        if not (lo < p < hi):
            out.append(
                f"p = {p:g} must lie in (1 + α/N, (N+α)/(N-2)) = ({lo:g}, {hi:g}); "
                "outside this range there is no nontrivial finite energy solution"
            )
        return out

    def near_zero_violations(self) -> list[str]:
        N, a, p = self.N, self.alpha, self.p
        out = []
        if not (1.0 < p < N / (N - 2.0)):
            out.append(f"near-0 window needs p in (1, N/(N-2)) = (1, {N / (N - 2.0):g}), got p = {p:g}")
        if not (0.0 < a < N * (p - 1.0)):
            out.append(f"near-0 window needs alpha < N(p-1) = {N * (p - 1.0):g}, got alpha = {a:g}")
        return out

    def near_N_violations(self) -> list[str]:
        N, a, p = self.N, self.alpha, self.p
        out = []
        if not (2.0 < p < self.critical_exponent):
            out.append(f"near-N window needs p in (2, 2N/(N-2)) = (2, {self.critical_exponent:g}), got p = {p:g}")
        lo = (N - 2.0) * p - N
        if not (lo < a < N):
            out.append(f"near-N window needs alpha in ((N-2)p-N, N) = ({lo:g}, {N}), got alpha = {a:g}")
        return out

    def classify(self) -> str:
        if self.violations():
            return "inadmissible"
        z = not self.near_zero_violations()
        n = not self.near_N_violations()
        if z and n:
            return "admissible-both"
        if z:
            return "admissible-near-0"
        if n:
            return "admissible-near-N"
        return "admissible"

    @property
    def admissible(self) -> bool:
        return self.classify() != "inadmissible"

    def require_admissible(self) -> None:
        v = self.violations()
        if v:
            raise DomainError("inadmissible (N, alpha, p): " + "; ".join(v + self.near_zero_violations()))

    def riesz_coefficient(self) -> float:
        return riesz_coefficient(self.N, self.alpha)

    def scaling_s(self) -> float:
        return scaling_s(self.N, self.alpha, self.p)

    def to_dict(self) -> dict:
        return {"N": self.N, "alpha": self.alpha, "p": self.p}
