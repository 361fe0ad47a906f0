"""Radial ground states of the nonlinear Choquard equation.

    -Δu + u = (I_α * |u|^p) |u|^{p-2} u   in R^N

Subpackages are organised bottom-up: ``specfun`` (Gamma constants),
``grid`` (radial mesh, norms, Helmholtz solve), ``riesz`` (sector kernels
of the Riesz potential), ``solver`` (ground states and limit profiles),
``linop`` (linearised spectra) and ``cli``.
"""

from choquard.specfun import (
    DomainError,
    Params,
    gamma_fn,
    hls_bound,
    hls_sharp_diagonal,
    riesz_coefficient,
    scaling_s,
)

__all__ = [
    "DomainError",
    "Params",
    "gamma_fn",
    "hls_bound",
    "hls_sharp_diagonal",
    "riesz_coefficient",
    "scaling_s",
]

__version__ = "0.1.0"
