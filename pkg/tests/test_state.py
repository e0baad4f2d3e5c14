import math

import numpy as np
import pytest

from kinlim import (
    FreeSpace,
    Mode,
    ParticleEnsemble,
    PeriodicBox,
    RegimeKind,
    bump_potential,
    effective_potential,
    gaussian_potential,
    make_regime,
    minimal_image,
)
from kinlim.errors import (
    InconsistentStateError,
    InvalidParameterError,
    UnsupportedRegimeError,
)
from kinlim.rng import stream


def test_make_regime_low_density():
    reg = make_regime(RegimeKind.LOW_DENSITY, 0.1, 1.0)
    assert reg.n_particles == 100
    assert reg.coupling_exponent == 0.0
    assert reg.mean_free_path == 1.0


def test_make_regime_weak_coupling():
    reg = make_regime(RegimeKind.WEAK_COUPLING, 0.1)
    assert reg.n_particles == 1000
    assert reg.coupling_exponent == 0.5


def test_make_regime_identity_scale():
    assert make_regime(RegimeKind.LOW_DENSITY, 1.0, 1.0).n_particles == 1


def test_make_regime_rejects_bad_parameters():
    with pytest.raises(InvalidParameterError):
        make_regime(RegimeKind.LOW_DENSITY, -0.1, 1.0)
    with pytest.raises(InvalidParameterError):
        make_regime(RegimeKind.LOW_DENSITY, 0.1, 0.0)


def test_regime_rounding_invariants():
    rng = stream(1, 0)
    for _ in range(200):
        eps = float(rng.uniform(0.02, 0.5))
        lam = float(rng.uniform(0.3, 3.0))
        reg = make_regime(RegimeKind.LOW_DENSITY, eps, lam)
        n = reg.n_particles
        assert abs(n * eps**2 - 1.0 / lam) <= (1.0 / lam) / n + 1e-12
        reg = make_regime(RegimeKind.WEAK_COUPLING, eps)
        n = reg.n_particles
        assert abs(n * eps**3 - 1.0) <= 1.0 / n + 1e-12


def test_minimal_image_examples():
    box = PeriodicBox(1.0)
    np.testing.assert_allclose(minimal_image(np.array([0.9, 0.0, 0.0]), box), [-0.1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(minimal_image(np.zeros(3), box), [0, 0, 0], atol=0)
    # boundary convention keeps +L/2
    np.testing.assert_allclose(
        minimal_image(np.array([0.5, -0.5, 0.2]), box), [0.5, 0.5, 0.2], atol=1e-15
    )


def test_minimal_image_idempotent_and_odd():
    box = PeriodicBox(2.5)
    rng = stream(2, 0)
    d = rng.uniform(-5, 5, size=(500, 3))
    # keep away from the half-box boundary where the sign convention flips
    d = d[np.all(np.abs(np.abs(minimal_image(d, box)) - 1.25) > 1e-6, axis=1)]
    once = minimal_image(d, box)
    np.testing.assert_allclose(minimal_image(once, box), once, atol=1e-12)
    np.testing.assert_allclose(minimal_image(-d, box), -once, atol=1e-12)
    assert np.all(np.abs(once) <= 1.25 + 1e-12)


def test_minimal_image_free_space_identity():
    d = np.array([[3.0, -7.5, 0.1]])
    np.testing.assert_array_equal(minimal_image(d, FreeSpace()), d)


def test_effective_potential_scaling():
    base = bump_potential()
    reg = make_regime(RegimeKind.WEAK_COUPLING, 0.04)
    amp, length = effective_potential(base, reg)
    assert math.isclose(amp, 0.2)
    assert math.isclose(length, 0.04)
    amp, length = effective_potential(base, make_regime(RegimeKind.WEAK_COUPLING, 1.0))
    assert amp == 1.0 and length == 1.0
    amp, length = effective_potential(base, make_regime(RegimeKind.WEAK_COUPLING, 0.01))
    assert math.isclose(amp, 0.1)
    assert math.isclose(length, 0.01)


def test_effective_potential_rejects_hard_spheres():
    with pytest.raises(UnsupportedRegimeError):
        effective_potential(bump_potential(), make_regime(RegimeKind.LOW_DENSITY, 0.1, 1.0))


def test_bump_potential_support_and_derivative():
    pot = bump_potential(amplitude=2.0, cutoff=0.7)
    r = np.linspace(0.7, 2.0, 10)
    assert np.all(pot.value(r) == 0)
    assert np.all(pot.derivative(r) == 0)
    pot.validate_derivative(rtol=1e-6)
    assert pot.value(0.0) == 2.0


def test_gaussian_potential_derivative():
    gaussian_potential().validate_derivative(rtol=1e-6)


def test_inconsistent_derivative_rejected():
    with pytest.raises(InvalidParameterError):
        from kinlim.state import RadialPotential

        RadialPotential(
            value=lambda r: np.where(np.asarray(r) < 1, 1.0 - np.asarray(r) ** 2, 0.0) ** 2,
            derivative=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
            cutoff=1.0,
        )


def test_ensemble_validation():
    box = PeriodicBox(1.0)
    good = ParticleEnsemble(
        np.array([[0.1, 0.1, 0.1], [0.5, 0.5, 0.5]]),
        np.zeros((2, 3)),
        epsilon=0.1,
        box=box,
    )
    good.validate()
    overlapping = ParticleEnsemble(
        np.array([[0.1, 0.1, 0.1], [0.15, 0.1, 0.1]]),
        np.zeros((2, 3)),
        epsilon=0.1,
        box=box,
    )
    with pytest.raises(InconsistentStateError):
        overlapping.validate()
    outside = ParticleEnsemble(
        np.array([[1.2, 0.1, 0.1]]), np.zeros((1, 3)), epsilon=0.1, box=box
    )
    with pytest.raises(InconsistentStateError):
        outside.validate()


def test_ensemble_arrays_are_readonly():
    ens = ParticleEnsemble(np.zeros((1, 3)), np.zeros((1, 3)), epsilon=0.1)
    with pytest.raises(ValueError):
        ens.positions[0, 0] = 1.0
