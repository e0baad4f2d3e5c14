"""Low-order terms of the collision-series expansion as short-time oracles.

For spatially homogeneous data the free flows act as identities, so the
first-order term collapses to t * Q(f0, f0); the finite-N combinatorial
prefactor alpha_n = (N-j)...(N-j-n+1) eps^(2n) is kept exact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .landau import VelocityGrid, ql_apply
from .sampling import InitialLaw, sample_velocity, velocity_law_density
from .scattering import KineticConstant
from .state import ScalingRegime


class SeriesMode(enum.Enum):
    BOLTZMANN_LIMIT = "boltzmann-limit"
    HARD_SPHERE_PREFACTOR = "hard-sphere-prefactor"


@dataclass(frozen=True)
class SeriesTermSpec:
    """Which term to evaluate: marginal order j, collision order n, time t."""

    j: int
    n: int
    t: float
    initial_law: InitialLaw
    mode: SeriesMode = SeriesMode.BOLTZMANN_LIMIT
    regime: ScalingRegime | None = None

    def __post_init__(self):
        if self.j not in (1, 2):
            raise InvalidParameterError("marginal order j must be 1 or 2")
        if not (0 <= self.n <= 2):
            raise InvalidParameterError("collision order n must be 0, 1 or 2")
        if self.t < 0:
            raise InvalidParameterError("t must be nonnegative")
        if self.mode is SeriesMode.HARD_SPHERE_PREFACTOR and self.regime is None:
            raise InvalidParameterError("hard-sphere prefactor mode needs a regime")


def series_prefactor(n_particles: int, j: int, n: int, epsilon: float) -> float:
    """(N-j)(N-j-1)...(N-j-n+1) * eps^(2n); the empty product (n=0) is 1."""
    if n < 0 or j < 0:
        raise InvalidParameterError("orders must be nonnegative")
    if n > n_particles - j:
        raise InvalidParameterError(f"order n={n} exceeds N-j={n_particles - j}")
    out = 1.0
    for k in range(n):
        out *= n_particles - j - k
    return out * epsilon ** (2 * n)


def _uniform_sphere(rng: np.random.Generator, size: int) -> np.ndarray:
    n = rng.standard_normal((size, 3))
    return n / np.linalg.norm(n, axis=1)[:, None]


def boltzmann_series_term(
    spec: SeriesTermSpec,
    v: np.ndarray,
    samples: int,
    rng: np.random.Generator,
    lam: float = 1.0,
    allow_experimental: bool = False,
) -> tuple[float, float]:
    """(value, standard error) of the order-n series term at velocity v.

    Homogeneous laws only (the free flow is then the identity on the data and
    order n reduces to the iterated collision integral times t^n / n!).
    Orders n >= 2 are experimental and must be enabled explicitly.
    """
    if spec.initial_law.spatial_density is not None:
        raise InvalidParameterError("series terms are implemented for homogeneous laws only")
    if spec.j != 1:
        raise InvalidParameterError("series terms are implemented for j = 1 only")
    law = spec.initial_law.velocity_law
    v = np.asarray(v, dtype=float)

    def f0(x):
        return velocity_law_density(law, x)

    if spec.mode is SeriesMode.HARD_SPHERE_PREFACTOR:
        kernel_const = series_prefactor(
            spec.regime.n_particles, spec.j, spec.n, spec.regime.epsilon
        )
    else:
        kernel_const = lam ** (-spec.n)

    if spec.n == 0:
        return float(f0(v[None, :])[0]), 0.0

    if spec.n == 1:
        v1 = sample_velocity(law, rng, size=samples)
        nvec = _uniform_sphere(rng, samples)
        w = v[None, :] - v1
        g = (w * nvec).sum(axis=1)
        vp = v[None, :] - nvec * g[:, None]
        v1p = v1 + nvec * g[:, None]
        est = 2.0 * np.pi * np.abs(g) * (f0(vp) * f0(v1p) / f0(v1) - f0(v[None, :])[0])
        est *= kernel_const * spec.t
        return float(est.mean()), float(est.std(ddof=1) / math.sqrt(samples))

    if not allow_experimental:
        raise InvalidParameterError("order n=2 is experimental; pass allow_experimental=True")

    # n = 2: nested estimator of C2 C3 f0^(x3) with the t^2/2 simplex volume.
    v2 = sample_velocity(law, rng, size=samples)
    v3 = sample_velocity(law, rng, size=samples)
    n1 = _uniform_sphere(rng, samples)
    n2 = _uniform_sphere(rng, samples)
    pick = rng.integers(2, size=samples)

    def g_hat(a, b):
        """Single-sample estimate of (C3 f0^(x3))(a, b) sharing (v3, n2, pick)."""
        uk = np.where(pick[:, None] == 0, a, b)
        other = np.where(pick[:, None] == 0, b, a)
        w2 = uk - v3
        q = (w2 * n2).sum(axis=1)
        ukp = uk - n2 * q[:, None]
        v3p = v3 + n2 * q[:, None]
        gain = f0(ukp) * f0(v3p) * f0(other)
        loss = f0(a) * f0(b) * f0(v3)
        return 2.0 * 2.0 * np.pi * np.abs(q) * (gain / f0(v3) - loss / f0(v3))

    w1 = v[None, :] - v2
    q1 = (w1 * n1).sum(axis=1)
    vp = v[None, :] - n1 * q1[:, None]
    v2p = v2 + n1 * q1[:, None]
    va = np.broadcast_to(v, (samples, 3))
    est = 2.0 * np.pi * np.abs(q1) * (g_hat(vp, v2p) - g_hat(va, v2)) / f0(v2)
    est *= kernel_const * spec.t**2 / 2.0
    return float(est.mean()), float(est.std(ddof=1) / math.sqrt(samples))


def first_order_landau_prediction(
    f0: VelocityGrid, B: KineticConstant, t: float
) -> VelocityGrid:
    """f0 + t * Q_L(f0, f0): the first-order short-time solution for homogeneous data."""
    if t < 0:
        raise InvalidParameterError("t must be nonnegative")
    if t == 0:
        return f0
    q = ql_apply(f0, B)
    return VelocityGrid(f0.v_max, f0.values + t * q.values, density=False)
