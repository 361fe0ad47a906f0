from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choquard.errors import DomainError
from choquard.specfun import (
    Params,
    gamma_fn,
    hls_bound,
    hls_conjugate,
    hls_sharp_diagonal,
    riesz_coefficient,
    scaling_s,
    sphere_area,
)

# Γ(0.05) to 25 digits, frozen from an mpmath run at 40 digits
GAMMA_005 = 19.47008531125551286404732


def rel(a, b):
    return abs(a - b) / abs(b)


class TestGamma:
    def test_half(self):
        assert rel(gamma_fn(0.5), math.sqrt(math.pi)) <= 1e-14

    def test_factorial(self):
        assert rel(gamma_fn(5.0), 24.0) <= 1e-14

    def test_small_argument_fixture(self):
        assert rel(gamma_fn(0.05), GAMMA_005) <= 1e-13

    def test_against_mpmath_on_range(self):
        mp.mp.dps = 30
        for x in np.geomspace(1e-3, 50.0, 61):
            assert rel(gamma_fn(float(x)), float(mp.gamma(mp.mpf(float(x))))) <= 1e-13

    @pytest.mark.parametrize("x", [0.0, -1.0, math.inf, math.nan])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            gamma_fn(x)


class TestRieszCoefficient:
    def test_newtonian(self):
        assert rel(riesz_coefficient(3, 2.0), 1.0 / (4 * math.pi)) <= 1e-12

    def test_small_alpha_pole(self):
        a = 1e-4
        assert rel(riesz_coefficient(3, a) / a, gamma_fn(1.5) / (2 * math.pi**1.5)) <= 1e-3

    def test_near_N_pole(self):
        N, a = 3, 3 - 1e-4
        limit = 2.0 / (gamma_fn(N / 2) * math.pi ** (N / 2) * 2**N)
        assert rel(riesz_coefficient(N, a) * (N - a), limit) <= 1e-3

    @pytest.mark.parametrize("alpha", [0.0, 3.0, -0.5, 4.0])
    def test_domain(self, alpha):
        with pytest.raises(DomainError):
            riesz_coefficient(3, alpha)

    def test_matches_mpmath(self):
        mp.mp.dps = 30
        for N in (3, 4, 5):
            for a in np.linspace(0.01, N - 0.01, 17):
                ref = mp.gamma((N - a) / 2) / (mp.gamma(a / 2) * mp.pi ** (mp.mpf(N) / 2) * mp.mpf(2) ** a)
                assert rel(riesz_coefficient(N, float(a)), float(ref)) <= 1e-12


class TestScaling:
    def test_closed_form(self):
        assert rel(scaling_s(3, 2.0, 2.0), 1.0 / (2 * math.sqrt(math.pi))) <= 1e-12

    def test_defining_identity(self):
        s = scaling_s(4, 1.5, 2.5)
        assert rel(s ** (2 * 2.5 - 2), riesz_coefficient(4, 1.5)) <= 1e-12

    def test_near_N_asymptotics(self):
        a, p = 2.999, 3.0
        lhs = scaling_s(3, a, p) * (3 - a) ** (1 / (2 * p - 2))
        rhs = (2 / (gamma_fn(1.5) * math.pi**1.5 * 8)) ** 0.25
        assert abs(lhs - rhs) <= 1e-2 * rhs

    def test_p_domain(self):
        with pytest.raises(DomainError):
            scaling_s(3, 2.0, 1.0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(3, 6), st.floats(0.01, 0.99), st.floats(1.05, 4.0))
    def test_positive_and_identity(self, N, frac, p):
        a = frac * N
        s = scaling_s(N, a, p)
        assert s > 0
        assert rel(s ** (2 * p - 2), riesz_coefficient(N, a)) <= 1e-12

    def test_continuity_in_alpha(self):
        alphas = np.linspace(0.1, 2.9, 2801)
        vals = np.array([riesz_coefficient(3, a) for a in alphas])
        jumps = np.abs(np.diff(vals))
        # derivative bound from a coarse difference quotient
        slope = np.max(np.abs(np.gradient(vals, alphas)))
        assert np.max(jumps) <= slope * (alphas[1] - alphas[0]) * 1.01 + 1e-6


class TestHLS:
    def test_sharp_diagonal_closed_form(self):
        ref = (4 / 3) * (4 / math.sqrt(math.pi)) ** (2 / 3)
        assert rel(hls_sharp_diagonal(3, 2.0), ref) <= 1e-12

    def test_sharp_diagonal_mpmath(self):
        mp.mp.dps = 30
        for a in (0.05, 0.5, 1.0, 2.0, 2.95):
            N = 3
            ref = (
                mp.pi ** ((N - mp.mpf(a)) / 2)
                * mp.gamma(mp.mpf(a) / 2)
                / mp.gamma((N + mp.mpf(a)) / 2)
                * (mp.gamma(N) / mp.gamma(mp.mpf(N) / 2)) ** (mp.mpf(a) / N)
            )
            assert rel(hls_sharp_diagonal(N, a), float(ref)) <= 1e-12

    def test_sharp_small_alpha_pole(self):
        a = 1e-5
        assert rel(hls_sharp_diagonal(3, a) * a / 2, math.pi**1.5 / gamma_fn(1.5)) <= 1e-3

    def test_near_N_finite(self):
        v = hls_sharp_diagonal(3, 2.9999)
        assert math.isfinite(v) and v > 0

    def test_bound_dominates_sharp(self):
        for N in (3, 4):
            for a in (0.5, 1.0, 2.0, N - 0.5):
                p = 2 * N / (N + a)
                assert hls_bound(N, a, p) >= hls_sharp_diagonal(N, a)

    def test_bound_direct_formula(self):
        N, a, p = 3, 1.0, 1.5
        r = hls_conjugate(N, a, p)
        assert rel(r, 1.5) <= 1e-14
        lam = (N - a) / N
        S = 4 * math.pi
        ref = N / (a * p * r) * (S / N) ** lam * ((lam / (1 - 1 / p)) ** lam + (lam / (1 - 1 / r)) ** lam)
        assert rel(hls_bound(N, a, p), ref) <= 1e-14

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.2, 2.8), st.floats(0.05, 0.95))
    def test_bound_symmetric(self, a, t):
        N = 3
        # p ranges over the open interval where both p and r exceed 1
        pmax = 1.0 / (a / N)
        p = 1.0 + t * (min(pmax, 50.0) - 1.0)
        try:
            r = hls_conjugate(N, a, p)
        except DomainError:
            return
        assert rel(hls_bound(N, a, p), hls_bound(N, a, r)) <= 1e-12

    def test_bound_domain(self):
        with pytest.raises(DomainError):
            hls_bound(3, 2.0, 1.0)
        with pytest.raises(DomainError):
            hls_conjugate(3, 2.0, 1.0 / (1.0 + 2.0 / 3.0) * 0.99)


class TestParams:
    def test_windows(self):
        assert Params(3, 2.0, 2.0).classify() == "admissible-near-0"
        assert Params(3, 2.95, 3.0).classify() == "admissible-near-N"
        assert Params(3, 2.0, 2.5).classify() == "admissible-both"
        assert Params(3, 5.0, 2.0).classify() == "inadmissible"
        assert Params(3, 2.0, 1.5).classify() == "inadmissible"

    def test_endpoints_excluded(self):
        assert Params(3, 1.5, 1.5).classify() == "inadmissible"  # p = 1 + α/N
        assert Params(3, 1.0, 4.0).classify() == "inadmissible"  # p = (N+α)/(N-2)

    def test_message_names_window(self):
        with pytest.raises(DomainError, match=r"N\(p-1\)"):
            Params(3, 5.0, 2.0).require_admissible()

    def test_dimension(self):
        with pytest.raises(DomainError):
            Params(2, 1.0, 2.0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(3, 7), st.floats(-1.0, 8.0), st.floats(0.5, 8.0))
    def test_classification_total(self, N, a, p):
        c = Params(N, a, p).classify()
        assert c in {"inadmissible", "admissible", "admissible-near-0", "admissible-near-N", "admissible-both"}
        lo, hi = 1 + a / N, (N + a) / (N - 2)
        inside = 0 < a < N and lo < p < hi
        assert (c != "inadmissible") == inside


def test_sphere_area():
    assert rel(sphere_area(3), 4 * math.pi) <= 1e-15
    assert rel(sphere_area(4), 2 * math.pi**2) <= 1e-15
