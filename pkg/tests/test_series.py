import math

import numpy as np
import pytest

from kinlim import (
    InitialLaw,
    KineticConstant,
    MaxwellianParams,
    SeriesMode,
    SeriesTermSpec,
    boltzmann_series_term,
    first_order_landau_prediction,
    landau_step,
    make_regime,
    maxwellian_grid,
    series_prefactor,
    two_beam_mixture,
)
from kinlim.errors import InvalidParameterError
from kinlim.landau import grid_from_law, landau_stability_bound, ql_apply
from kinlim.rng import stream
from kinlim.sampling import velocity_law_density
from kinlim.state import RegimeKind

B1 = KineticConstant(1.0, "unit")


def test_prefactor_examples():
    assert series_prefactor(57, 2, 0, 0.3) == 1.0
    assert math.isclose(series_prefactor(100, 1, 1, 0.1), 0.99, rel_tol=1e-14)
    with pytest.raises(InvalidParameterError):
        series_prefactor(5, 1, 5, 0.1)


def test_prefactor_tends_to_one_along_boltzmann_grad():
    vals = []
    for eps in (0.1, 0.05, 0.02):
        n = round(1.0 / eps**2)
        vals.append(series_prefactor(n, 1, 1, eps))
    gaps = [abs(v - 1.0) for v in vals]
    assert gaps[0] > gaps[1] > gaps[2]


def test_series_spec_validation():
    law = InitialLaw(velocity_law=MaxwellianParams())
    with pytest.raises(InvalidParameterError):
        SeriesTermSpec(j=1, n=3, t=0.1, initial_law=law)
    with pytest.raises(InvalidParameterError):
        SeriesTermSpec(j=1, n=1, t=0.1, initial_law=law, mode=SeriesMode.HARD_SPHERE_PREFACTOR)


def test_order_zero_returns_initial_density():
    law = InitialLaw(velocity_law=two_beam_mixture(1.0, 4.0))
    spec = SeriesTermSpec(j=1, n=0, t=0.7, initial_law=law)
    v = np.array([0.3, -0.2, 0.1])
    value, se = boltzmann_series_term(spec, v, 10, stream(80, 0))
    assert se == 0.0
    assert math.isclose(value, float(velocity_law_density(law.velocity_law, v[None, :])[0]),
                        rel_tol=1e-12)


def test_order_one_vanishes_on_maxwellian():
    law = InitialLaw(velocity_law=MaxwellianParams(beta=1.0))
    spec = SeriesTermSpec(j=1, n=1, t=0.5, initial_law=law)
    value, se = boltzmann_series_term(spec, np.array([0.5, 0.0, 0.0]), 200_000, stream(81, 0))
    # the estimator cancels exactly per sample on a Maxwellian, so both the
    # value and its SE sit at rounding level
    assert abs(value) <= 3 * se + 1e-15


def test_order_one_linear_in_time():
    law = InitialLaw(velocity_law=two_beam_mixture(1.0, 4.0))
    v = np.array([0.5, 0.0, 0.0])
    s1 = SeriesTermSpec(j=1, n=1, t=0.2, initial_law=law)
    s2 = SeriesTermSpec(j=1, n=1, t=0.4, initial_law=law)
    v1, se1 = boltzmann_series_term(s1, v, 150_000, stream(82, 0))
    v2, se2 = boltzmann_series_term(s2, v, 150_000, stream(82, 0))
    assert abs(v2 - 2 * v1) <= 3 * math.hypot(2 * se1, se2)


def test_order_one_matches_qb_quadrature():
    from kinlim.dsmc import qb_quadrature

    law = InitialLaw(velocity_law=two_beam_mixture(1.0, 4.0))
    f0 = grid_from_law(law.velocity_law, 17, 4.0).normalized()
    vnode = np.array([f0.axis()[10], 0.0, 0.0])
    t = 0.3
    spec = SeriesTermSpec(j=1, n=1, t=t, initial_law=law)
    value, se = boltzmann_series_term(spec, vnode, 400_000, stream(83, 0))
    q = qb_quadrature(f0, vnode, 1.0, n_cos=6, n_phi=6)
    q_coarse = qb_quadrature(grid_from_law(law.velocity_law, 9, 4.0).normalized(), vnode, 1.0,
                             n_cos=6, n_phi=6)
    quad_tol = abs(q - q_coarse)
    assert abs(value - t * q) <= max(3 * se, 2 * quad_tol)


def test_order_one_collision_invariants_vanish_per_sample():
    # <phi, Q_B> estimated with phi in {1, v_x, |v|^2} vanishes identically per
    # sample because the hard-sphere map conserves those exactly
    law = two_beam_mixture(1.0, 4.0)
    rng = stream(84, 0)
    from kinlim.sampling import sample_velocity

    v = sample_velocity(law, rng, size=5000)
    v1 = sample_velocity(law, rng, size=5000)
    n = rng.standard_normal((5000, 3))
    n /= np.linalg.norm(n, axis=1)[:, None]
    g = ((v - v1) * n).sum(axis=1)
    vp = v - n * g[:, None]
    v1p = v1 + n * g[:, None]
    np.testing.assert_allclose((vp + v1p) - (v + v1), 0.0, atol=1e-13)
    np.testing.assert_allclose(
        (vp**2).sum(1) + (v1p**2).sum(1) - (v**2).sum(1) - (v1**2).sum(1), 0.0, atol=1e-12
    )


def test_hard_sphere_prefactor_mode_scales_term():
    law = InitialLaw(velocity_law=two_beam_mixture(1.0, 4.0))
    regime = make_regime(RegimeKind.LOW_DENSITY, 0.1, 1.0)
    v = np.array([0.5, 0.0, 0.0])
    lim = SeriesTermSpec(j=1, n=1, t=0.2, initial_law=law)
    hs = SeriesTermSpec(j=1, n=1, t=0.2, initial_law=law,
                        mode=SeriesMode.HARD_SPHERE_PREFACTOR, regime=regime)
    v_lim, _ = boltzmann_series_term(lim, v, 50_000, stream(85, 0), lam=1.0)
    v_hs, _ = boltzmann_series_term(hs, v, 50_000, stream(85, 0))
    # same draws: the finite-N value is alpha_1 = (N-1) eps^2 times the limit
    assert math.isclose(v_hs, 0.99 * v_lim, rel_tol=1e-12)


def test_order_two_requires_flag_and_vanishes_on_maxwellian():
    law = InitialLaw(velocity_law=MaxwellianParams(beta=1.0))
    spec = SeriesTermSpec(j=1, n=2, t=0.3, initial_law=law)
    with pytest.raises(InvalidParameterError):
        boltzmann_series_term(spec, np.zeros(3), 100, stream(86, 0))
    value, se = boltzmann_series_term(
        spec, np.array([0.4, 0, 0]), 150_000, stream(86, 1), allow_experimental=True
    )
    assert abs(value) <= 3 * se + 1e-12


def test_first_order_prediction_identity_and_mass():
    f0 = maxwellian_grid(MaxwellianParams(beta=1.0), 11, 4.0).normalized()
    assert first_order_landau_prediction(f0, B1, 0.0) is f0
    pred = first_order_landau_prediction(f0, B1, 0.05)
    assert abs(pred.mass() - f0.mass()) < 1e-13


def test_first_order_prediction_on_maxwellian_stays_within_residual():
    f0 = maxwellian_grid(MaxwellianParams(beta=1.0), 11, 4.0).normalized()
    t = 0.05
    pred = first_order_landau_prediction(f0, B1, t)
    drift = float(np.abs(pred.values - f0.values).sum() * f0.h**3)
    assert drift <= t * ql_apply(f0, B1).l1_norm() * (1 + 1e-12)


def test_first_order_prediction_matches_trajectory_to_second_order():
    def aniso(m, v_max):
        import numpy as np

        from kinlim import VelocityGrid

        g = VelocityGrid(v_max, np.zeros((m, m, m)))
        nodes = g.nodes()
        b = np.array([0.5, 1.0, 1.0])
        q = (nodes**2 * b).sum(axis=-1)
        vals = np.exp(-0.5 * q) * math.sqrt(b.prod()) / (2 * math.pi) ** 1.5
        return VelocityGrid(v_max, vals).normalized()

    f0 = aniso(11, 4.0)
    dt = 0.2 * landau_stability_bound(f0, B1)

    def gap(t, steps):
        f = f0
        sub = t / steps
        for _ in range(steps):
            f = landau_step(f, B1, sub)
        pred = first_order_landau_prediction(f0, B1, t)
        return float(np.abs(pred.values - f.values).sum() * f0.h**3)

    g1 = gap(8 * dt, 8)
    g2 = gap(4 * dt, 4)
    slope = math.log2(g1 / g2)
    assert slope >= 1.7
