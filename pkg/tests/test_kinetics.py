import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from bzmarbles.errors import ConfigurationError, DomainError
from bzmarbles.kinetics import (
    PRESETS,
    KineticsParams,
    fixed_points,
    jacobian,
    preset,
    reaction_rates,
    rest_state,
)

# Root of u - u^2 - (f u + phi)(u - q)/(u + q) on [q, 1] for the default
# parameters, from the bisection oracle below (frozen).
U_STAR_DEFAULT = 0.0021702726614564846

DEFAULT = KineticsParams()


def g(u, p):
    return u - u * u - (p.f * u + p.phi) * (u - p.q) / (u + p.q)


def bisection_oracle(p, lo, hi, tol=1e-12):
    flo = g(lo, p)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = g(mid, p)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sign_scan_roots(p, step=1e-6):
    x = np.arange(0.0, 1.0 + p.f + step, step)
    s = np.sign(g(x, p))
    return x[:-1][s[:-1] * s[1:] < 0]


def stability_by_eigenvalues(u, p):
    # direct 2x2 formula for the eigenvalues
    a = (1 - 2 * u - (p.f * u + p.phi) * 2 * p.q / (u + p.q) ** 2) / p.epsilon
    b = -p.f * (u - p.q) / (u + p.q) / p.epsilon
    c, d = 1.0, -1.0
    tr, det = a + d, a * d - b * c
    disc = complex(tr * tr - 4 * det) ** 0.5
    return max(((tr + disc) / 2).real, ((tr - disc) / 2).real) < 0


params = st.builds(
    KineticsParams,
    epsilon=st.floats(0.01, 0.2),
    f=st.floats(0.5, 3.0),
    q=st.floats(1e-4, 0.01),
    phi=st.floats(0.0, 0.5),
)


def test_origin_is_fixed_without_illumination():
    du, dv = reaction_rates(0.0, 0.0, DEFAULT.with_(phi=0.0))
    assert du == 0.0 and dv == 0.0


@pytest.mark.parametrize("phi", [0.0, 0.05, 0.7])
def test_factor_zero_case(phi):
    p = DEFAULT.with_(phi=phi)
    du, dv = reaction_rates(p.q, 1.0, p)
    assert du == pytest.approx((p.q - p.q ** 2) / p.epsilon, rel=1e-15)
    assert dv == p.q - 1.0


def test_default_fixed_point_matches_bisection_oracle():
    oracle = bisection_oracle(DEFAULT, DEFAULT.q, 1.0)
    assert oracle == pytest.approx(U_STAR_DEFAULT, abs=1e-12)
    fps = fixed_points(DEFAULT)
    assert len(fps) == 1
    assert fps[0].u == pytest.approx(oracle, abs=1e-12)
    assert fps[0].stable
    assert stability_by_eigenvalues(fps[0].u, DEFAULT)


def test_strong_illumination_single_stable_point():
    p = DEFAULT.with_(phi=2.0)
    oracle = sign_scan_roots(p)
    fps = fixed_points(p)
    assert len(oracle) == 1 and len(fps) == 1
    assert fps[0].u == pytest.approx(oracle[0], abs=1e-6)
    assert fps[0].stable and stability_by_eigenvalues(fps[0].u, p)


def test_oscillatory_preset_has_no_stable_rest():
    p = PRESETS["oscillatory"]
    fps = fixed_points(p)
    assert fps and not any(fp.stable for fp in fps)
    with pytest.raises(Exception):
        rest_state(p)


@settings(max_examples=60, deadline=None)
@given(params)
def test_fixed_points_are_zeros_and_flags_follow_trace_det(p):
    for fp in fixed_points(p):
        du, dv = reaction_rates(fp.u, fp.v, p)
        assert abs(du) < 1e-10 and abs(dv) < 1e-10
        jac = jacobian(fp.u, fp.v, p)
        tr, det = np.trace(jac), np.linalg.det(jac)
        assert fp.stable == (tr < 0 and det > 0)


@settings(max_examples=60, deadline=None)
@given(params)
def test_fixed_points_agree_with_sign_scan(p):
    roots = sign_scan_roots(p, step=1e-5)
    fps = fixed_points(p)
    # the scan can miss a root sitting on the u = 0 boundary
    interior = [fp for fp in fps if fp.u > 1e-5]
    assert len(interior) == len(roots)
    for fp, r in zip(interior, roots):
        assert fp.u == pytest.approx(r, abs=2e-5)


@given(
    u=st.floats(0.003, 1.5),
    v=st.floats(0.0, 1.5),
    phi1=st.floats(0.0, 1.0),
    dphi=st.floats(1e-3, 1.0),
)
def test_illumination_suppresses_activator(u, v, phi1, dphi):
    a, _ = reaction_rates(u, v, DEFAULT.with_(phi=phi1))
    b, _ = reaction_rates(u, v, DEFAULT.with_(phi=phi1 + dphi))
    assert b < a


@given(u=st.floats(-0.0019, 2.0), v=st.floats(0.0, 2.0))
def test_rates_finite_and_continuous(u, v):
    delta = 1e-9
    du, dv = reaction_rates(u, v, DEFAULT)
    du2, _ = reaction_rates(u + delta, v, DEFAULT)
    assert math.isfinite(du) and math.isfinite(dv)
    # local Lipschitz bound from the analytic derivative (largest at the left end)
    slope = max(abs(jacobian(x, v, DEFAULT)[0, 0]) for x in (u, u + delta))
    assert abs(du2 - du) <= 2.0 * slope * delta + 1e-9


def test_vectorised_rates_match_scalar():
    u = np.linspace(0, 1, 7)
    v = np.linspace(0.5, 0, 7)
    du, dv = reaction_rates(u, v, DEFAULT)
    for i in range(7):
        a, b = reaction_rates(float(u[i]), float(v[i]), DEFAULT)
        assert du[i] == a and dv[i] == b


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_input_is_domain_error(bad):
    with pytest.raises(DomainError):
        reaction_rates(bad, 0.0, DEFAULT)
    with pytest.raises(DomainError):
        reaction_rates(np.array([0.1, bad]), np.zeros(2), DEFAULT)


@pytest.mark.parametrize("field,value", [
    ("epsilon", 0.0), ("f", -1.0), ("q", 0.0), ("q", 1.0), ("phi", -0.1),
    ("time_unit_s", 0.0), ("diffusion_u", -1.0), ("epsilon", math.nan),
])
def test_invalid_params_rejected(field, value):
    with pytest.raises(ConfigurationError):
        KineticsParams(**{field: value})


def test_preset_lookup():
    assert preset("excitable") == KineticsParams()
    assert preset("excitable", phi=0.1).phi == 0.1
    with pytest.raises(ConfigurationError):
        preset("nope")


def _trajectory(p, u0, v0, t_end=50.0):
    # stiff reference integrator: a second route independent of the solver
    def rhs(_, y):
        return [(y[0] - y[0] ** 2 - (p.f * y[1] + p.phi) * (y[0] - p.q) / (y[0] + p.q)) / p.epsilon,
                y[0] - y[1]]
    return solve_ivp(rhs, (0.0, t_end), [u0, v0], method="Radau", rtol=1e-9, atol=1e-12,
                     dense_output=True, max_step=0.01)


def _excitability_holds(p):
    us, vs = rest_state(p)
    big = _trajectory(p, us + 0.3, vs)
    assert big.y[0].max() > 0.5
    settled = np.nonzero((np.abs(big.y[0] - us) < 1e-4) & (np.abs(big.y[1] - vs) < 1e-4))[0]
    assert settled.size and big.t[settled[0]] < 50.0
    small = _trajectory(p, us + 1e-4, vs)
    assert small.y[0].max() < us + 1e-2


def test_excitability_default():
    _excitability_holds(DEFAULT)


@settings(max_examples=12, deadline=None)
@given(
    je=st.floats(0.9, 1.1), jf=st.floats(0.9, 1.1), jq=st.floats(0.9, 1.1), jp=st.floats(0.9, 1.1),
)
def test_excitability_survives_ten_percent_jitter(je, jf, jq, jp):
    p = DEFAULT.with_(epsilon=0.04 * je, f=1.4 * jf, q=0.002 * jq, phi=0.05 * jp)
    _excitability_holds(p)


def test_small_kick_returns_monotonically():
    us, vs = rest_state(DEFAULT)
    sol = _trajectory(DEFAULT, us + 1e-4, vs, t_end=20.0)
    dist = np.abs(sol.y[0] - us)
    # no excursion beyond the initial offset
    assert dist.max() <= 1e-4 + 1e-12
