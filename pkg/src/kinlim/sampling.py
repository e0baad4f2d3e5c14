"""Initial laws and samplers.

Maxwellian and mixture-of-Maxwellian velocity laws, and the maximally
factorized hard-core position sampler (product law conditioned on no overlap).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import InvalidParameterError, SamplingFailureError
from .state import (
    Domain,
    FreeSpace,
    Mode,
    ParticleEnsemble,
    PeriodicBox,
    RegimeKind,
    ScalingRegime,
    minimal_image,
)


@dataclass(frozen=True)
class MaxwellianParams:
    """Gaussian equilibrium with mass rho, mean velocity u, inverse temperature beta."""

    rho: float = 1.0
    u: tuple[float, float, float] = (0.0, 0.0, 0.0)
    beta: float = 1.0

    def __post_init__(self):
        if not (self.rho > 0 and self.beta > 0):
            raise InvalidParameterError("rho and beta must be positive")
        object.__setattr__(self, "u", tuple(float(c) for c in self.u))


@dataclass(frozen=True)
class MixtureOfMaxwellians:
    """Convex combination sum_k w_k * M_k; weights must sum to 1."""

    components: tuple[tuple[float, MaxwellianParams], ...]

    def __post_init__(self):
        if not self.components:
            raise InvalidParameterError("mixture needs at least one component")
        w = sum(w for w, _ in self.components)
        if abs(w - 1.0) > 1e-12 or any(w <= 0 for w, _ in self.components):
            raise InvalidParameterError("mixture weights must be positive and sum to 1")


VelocityLaw = Union[MaxwellianParams, MixtureOfMaxwellians]


def two_beam_mixture(beam_speed: float = 1.0, beta: float = 4.0, axis: int = 0) -> MixtureOfMaxwellians:
    """Symmetric two-beam smooth mixture: half at +u, half at -u along one axis."""
    u = [0.0, 0.0, 0.0]
    u[axis] = beam_speed
    plus = MaxwellianParams(rho=1.0, u=tuple(u), beta=beta)
    u[axis] = -beam_speed
    minus = MaxwellianParams(rho=1.0, u=tuple(u), beta=beta)
    return MixtureOfMaxwellians(((0.5, plus), (0.5, minus)))


def maxwellian_density(params: MaxwellianParams, v: np.ndarray) -> np.ndarray:
    """rho * (beta / 2 pi)^(3/2) * exp(-beta |v - u|^2 / 2); v is (..., 3)."""
    v = np.asarray(v, dtype=float)
    dv = v - np.asarray(params.u)
    q = (dv * dv).sum(axis=-1)
    return params.rho * (params.beta / (2 * np.pi)) ** 1.5 * np.exp(-0.5 * params.beta * q)


def velocity_law_density(law: VelocityLaw, v: np.ndarray) -> np.ndarray:
    if isinstance(law, MaxwellianParams):
        return maxwellian_density(law, v)
    out = 0.0
    for w, comp in law.components:
        out = out + w * maxwellian_density(comp, v)
    return out


def velocity_law_beta_min(law: VelocityLaw) -> float:
    """Smallest inverse temperature among components (Gaussian-domination exponent)."""
    if isinstance(law, MaxwellianParams):
        return law.beta
    return min(comp.beta for _, comp in law.components)


def sample_velocity(law: VelocityLaw, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw i.i.d. velocities from the law; returns (3,) or (size, 3)."""
    n = 1 if size is None else int(size)
    if isinstance(law, MaxwellianParams):
        v = np.asarray(law.u) + rng.standard_normal((n, 3)) / math.sqrt(law.beta)
    else:
        weights = np.array([w for w, _ in law.components])
        idx = rng.choice(len(weights), size=n, p=weights)
        v = rng.standard_normal((n, 3))
        betas = np.array([c.beta for _, c in law.components])
        us = np.array([c.u for _, c in law.components])
        v = us[idx] + v / np.sqrt(betas[idx])[:, None]
    return v[0] if size is None else v


@dataclass(frozen=True)
class InitialLaw:
    """One-particle initial law f0(x, v) = h(x) * (velocity law density).

    spatial_density None means uniform on the box.  sup_h bounds h (used by the
    rejection sampler); beta_min is the Gaussian-domination exponent of the
    velocity law.
    """

    velocity_law: VelocityLaw
    spatial_density: Callable[[np.ndarray], np.ndarray] | None = None
    sup_h: float = 1.0
    beta_min: float | None = None

    def __post_init__(self):
        if self.beta_min is None:
            object.__setattr__(self, "beta_min", velocity_law_beta_min(self.velocity_law))
        if not (self.sup_h > 0):
            raise InvalidParameterError("sup_h must be positive")

    def check_spatial_normalization(self, box: PeriodicBox, rtol: float = 1e-6, n_nodes: int = 32) -> float:
        """Midpoint-quadrature integral of h over the box; raises if not ~1."""
        L = box.side
        if self.spatial_density is None:
            return 1.0
        g = (np.arange(n_nodes) + 0.5) * (L / n_nodes)
        X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
        pts = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
        total = float(self.spatial_density(pts).sum() * (L / n_nodes) ** 3)
        if abs(total - 1.0) > rtol * max(1.0, abs(total)):
            raise InvalidParameterError(
                f"spatial density integrates to {total:.8g}, expected 1"
            )
        return total


def sample_factorized_hardcore(
    law: InitialLaw,
    regime: ScalingRegime,
    box: PeriodicBox,
    rng: np.random.Generator,
    max_attempts: int = 10**6,
    stats: dict | None = None,
) -> ParticleEnsemble:
    """Sample the maximally factorized hard-core state.

    Sequential insertion with per-particle resampling: each particle's position
    is redrawn from h until it clears all previously placed spheres.  For the
    dilute regimes used here this reproduces the product measure conditioned on
    no overlap up to bias far below measurement noise.
    """
    if regime.kind is not RegimeKind.LOW_DENSITY:
        raise InvalidParameterError("hard-core sampling requires a low-density regime")
    n = regime.n_particles
    eps = regime.epsilon
    L = box.side
    packing = n * eps**3 / L**3
    if n > 1 and packing > 0.25:
        raise InvalidParameterError(
            f"packing fraction N eps^3 / L^3 = {packing:.3g} too dense for rejection sampling"
        )

    positions = np.empty((n, 3))
    eps2 = eps * eps
    attempts = 0
    for k in range(n):
        while True:
            if attempts >= max_attempts:
                raise SamplingFailureError(
                    f"hard-core sampler exhausted {max_attempts} resamplings at particle "
                    f"{k}/{n} (epsilon={eps}, L={L})"
                )
            attempts += 1
            x = rng.random(3) * L
            if law.spatial_density is not None:
                if rng.random() * law.sup_h > float(law.spatial_density(x[None, :])[0]):
                    continue
            if k > 0:
                d = minimal_image(x[None, :] - positions[:k], box)
                if ((d * d).sum(axis=1) < eps2).any():
                    continue
            positions[k] = x
            break

    velocities = sample_velocity(law.velocity_law, rng, size=n)
    if stats is not None:
        stats["attempts"] = attempts
        stats["n_particles"] = n
    return ParticleEnsemble(positions, velocities, epsilon=eps, box=box, mode=Mode.HARD_SPHERE)


def sample_uniform_smooth(
    law: InitialLaw,
    n_particles: int,
    epsilon: float,
    box: PeriodicBox,
    rng: np.random.Generator,
) -> ParticleEnsemble:
    """Factorized initial state for the weak-coupling dynamics (no exclusion)."""
    positions = rng.random((n_particles, 3)) * box.side
    velocities = sample_velocity(law.velocity_law, rng, size=n_particles)
    return ParticleEnsemble(positions, velocities, epsilon=epsilon, box=box, mode=Mode.SMOOTH_POTENTIAL)
