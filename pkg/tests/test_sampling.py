import math

import numpy as np
import pytest

from kinlim import (
    InitialLaw,
    MaxwellianParams,
    MixtureOfMaxwellians,
    PeriodicBox,
    RegimeKind,
    ScalingRegime,
    make_regime,
    maxwellian_density,
    minimal_image,
    sample_factorized_hardcore,
    sample_velocity,
    two_beam_mixture,
)
from kinlim.errors import InvalidParameterError, SamplingFailureError
from kinlim.rng import stream


def test_maxwellian_density_values():
    p = MaxwellianParams(rho=1.0, u=(0, 0, 0), beta=1.0)
    assert math.isclose(maxwellian_density(p, np.zeros(3)), (2 * math.pi) ** -1.5, rel_tol=1e-12)
    p2 = MaxwellianParams(rho=2.0, u=(0, 0, 0), beta=1.0)
    assert math.isclose(
        maxwellian_density(p2, np.zeros(3)), 2 * (2 * math.pi) ** -1.5, rel_tol=1e-12
    )
    p3 = MaxwellianParams(rho=1.0, u=(1, 0, 0), beta=4.0)
    peak = maxwellian_density(p3, np.array([1.0, 0, 0]))
    assert math.isclose(peak, (4 / (2 * math.pi)) ** 1.5, rel_tol=1e-12)
    assert math.isclose(peak, 0.507949, rel_tol=1e-6)


def test_maxwellian_grid_normalization():
    # node sum approximates rho on a wide enough grid
    p = MaxwellianParams(rho=1.3, beta=2.0)
    vmax = 6.0 / math.sqrt(p.beta)
    g = np.linspace(-vmax, vmax, 41)
    h = g[1] - g[0]
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    vals = maxwellian_density(p, np.stack([X, Y, Z], axis=-1))
    assert math.isclose(float(vals.sum() * h**3), 1.3, rel_tol=1e-4)


def test_sample_velocity_moments():
    rng = stream(10, 0)
    v = sample_velocity(MaxwellianParams(beta=1.0), rng, size=10**6)
    assert np.all(np.abs(v.mean(axis=0)) < 4e-3)
    assert np.all(np.abs(v.var(axis=0) - 1.0) < 6e-3)


def test_sample_velocity_translation_symmetry():
    v = sample_velocity(MaxwellianParams(u=(2, 0, 0), beta=1.0), stream(11, 0), size=2000)
    v0 = sample_velocity(MaxwellianParams(beta=1.0), stream(11, 0), size=2000)
    np.testing.assert_allclose(v - np.array([2.0, 0, 0]), v0, atol=1e-12)


def test_mixture_mean_with_moment_oracle():
    law = two_beam_mixture(beam_speed=1.0, beta=4.0)
    # moment oracle: direct 1-D quadrature of the mixture density times v
    from kinlim.sampling import velocity_law_density

    g = np.linspace(-6, 6, 801)
    h = g[1] - g[0]
    X, Y, Z = np.meshgrid(g, np.linspace(-3, 3, 101), np.linspace(-3, 3, 101), indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1)
    dens = velocity_law_density(law, pts)
    hy = 6 / 100
    mean_x = float((dens * X).sum() * h * hy * hy)
    assert abs(mean_x) < 1e-6
    v = sample_velocity(law, stream(12, 0), size=10**6)
    assert np.all(np.abs(v.mean(axis=0)) < 4e-3)


def test_mixture_weights_validation():
    with pytest.raises(InvalidParameterError):
        MixtureOfMaxwellians(((0.6, MaxwellianParams()), (0.6, MaxwellianParams())))


def test_hardcore_sampler_single_particle():
    law = InitialLaw(velocity_law=MaxwellianParams())
    reg = make_regime(RegimeKind.LOW_DENSITY, 1.0, 1.0)
    stats = {}
    ens = sample_factorized_hardcore(law, reg, PeriodicBox(1.0), stream(13, 0), stats=stats)
    assert ens.n_particles == 1
    assert stats["attempts"] == 1


def test_hardcore_sampler_acceptance_improves_as_eps_vanishes():
    law = InitialLaw(velocity_law=MaxwellianParams())
    box = PeriodicBox(1.0)
    attempts = []
    for eps in (0.12, 0.03):
        reg = ScalingRegime(RegimeKind.LOW_DENSITY, eps, 60, 0.0, 1.0)
        stats = {}
        sample_factorized_hardcore(law, reg, box, stream(14, 0), stats=stats)
        attempts.append(stats["attempts"])
    assert attempts[1] <= attempts[0]
    assert attempts[1] >= 60


def test_hardcore_sampler_no_overlaps_brute_force():
    # brute-force all-pairs oracle over many draws
    law = InitialLaw(velocity_law=MaxwellianParams())
    reg = make_regime(RegimeKind.LOW_DENSITY, 0.1, 1.0)
    box = PeriodicBox(1.0)
    rng = stream(15, 0)
    for _ in range(200):
        ens = sample_factorized_hardcore(law, reg, box, rng)
        i, j = np.triu_indices(ens.n_particles, k=1)
        d = minimal_image(ens.positions[i] - ens.positions[j], box)
        assert float(np.sqrt((d * d).sum(axis=1)).min()) >= ens.epsilon


def test_hardcore_sampler_attempt_budget():
    law = InitialLaw(velocity_law=MaxwellianParams())
    reg = ScalingRegime(RegimeKind.LOW_DENSITY, 0.12, 100, 0.0, 1.0)
    with pytest.raises(SamplingFailureError):
        sample_factorized_hardcore(law, reg, PeriodicBox(1.0), stream(16, 0), max_attempts=40)


def test_hardcore_sampler_rejects_dense_packing():
    law = InitialLaw(velocity_law=MaxwellianParams())
    reg = ScalingRegime(RegimeKind.LOW_DENSITY, 0.3, 100, 0.0, 1.0)
    with pytest.raises(InvalidParameterError):
        sample_factorized_hardcore(law, reg, PeriodicBox(1.0), stream(17, 0))


def test_spatial_density_normalization_check():
    law = InitialLaw(
        velocity_law=MaxwellianParams(),
        spatial_density=lambda x: np.full(len(np.atleast_2d(x)), 2.0),
        sup_h=2.0,
    )
    with pytest.raises(InvalidParameterError):
        law.check_spatial_normalization(PeriodicBox(1.0))
    uniform = InitialLaw(velocity_law=MaxwellianParams())
    assert uniform.check_spatial_normalization(PeriodicBox(1.0)) == 1.0


def test_marginal_histogram_l1_decreases_with_bin_refinement():
    # L1 distance to the true law decreases as bins refine (within MC noise)
    from kinlim.diagnostics import HistogramSpec, histogram_velocities, law_bin_masses

    law = MaxwellianParams(beta=1.0)
    v = sample_velocity(law, stream(18, 0), size=10**5)
    dists = []
    for bins in (4, 8):
        spec = HistogramSpec(4.0, bins)
        hist = histogram_velocities(v, spec)
        dists.append(float(np.abs(hist.probabilities() - law_bin_masses(law, spec)).sum()))
    assert dists[1] < dists[0] + 0.02
