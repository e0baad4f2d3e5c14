"""Core domain state.

Microscopic N-particle configurations, the simulation domain (periodic box or
free space), the two scaling regimes (low density / weak coupling) and radial
pair potentials.  Everything here is an immutable value; simulation steps
return new objects.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np

from .errors import (
    InconsistentStateError,
    InvalidParameterError,
    UnsupportedRegimeError,
)


class Mode(enum.Enum):
    HARD_SPHERE = "hard-sphere"
    SMOOTH_POTENTIAL = "smooth-potential"


class RegimeKind(enum.Enum):
    LOW_DENSITY = "low-density"
    WEAK_COUPLING = "weak-coupling"


@dataclass(frozen=True)
class PeriodicBox:
    """Cubic torus of side `side`; coordinates live in [0, side)."""

    side: float = 1.0

    def __post_init__(self):
        if not (self.side > 0 and math.isfinite(self.side)):
            raise InvalidParameterError(f"box side must be positive, got {self.side}")


@dataclass(frozen=True)
class FreeSpace:
    """Unbounded domain; used for two-body scattering tests only."""


Domain = Union[PeriodicBox, FreeSpace]


def minimal_image(delta: np.ndarray, box: Domain) -> np.ndarray:
    """Map displacement components into (-L/2, L/2] for a periodic box.

    Identity for free space.  The boundary convention keeps +L/2: the image
    offset is ceil(d/L - 1/2), so exactly -L/2 wraps to +L/2.
    """
    delta = np.asarray(delta, dtype=float)
    if isinstance(box, FreeSpace):
        return delta
    L = box.side
    return delta - L * np.ceil(delta / L - 0.5)


def wrap_positions(x: np.ndarray, box: Domain) -> np.ndarray:
    """Map coordinates into [0, L) (identity for free space)."""
    if isinstance(box, FreeSpace):
        return np.asarray(x, dtype=float)
    return np.mod(x, box.side)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ParticleEnsemble:
    """Microscopic state: N positions and velocities, diameter/range epsilon.

    In HARD_SPHERE mode `epsilon` is the sphere diameter; in SMOOTH_POTENTIAL
    mode it is the interaction range entering phi(x/epsilon).
    """

    positions: np.ndarray
    velocities: np.ndarray
    epsilon: float
    box: Domain = field(default_factory=PeriodicBox)
    mode: Mode = Mode.HARD_SPHERE

    def __post_init__(self):
        pos = _readonly(self.positions)
        vel = _readonly(self.velocities)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)
        if pos.ndim != 2 or pos.shape[1] != 3 or vel.shape != pos.shape:
            raise InvalidParameterError(
                f"positions/velocities must be matching (N, 3) arrays, got "
                f"{pos.shape} and {vel.shape}"
            )
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidParameterError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    def with_state(self, positions=None, velocities=None) -> "ParticleEnsemble":
        return replace(
            self,
            positions=self.positions if positions is None else positions,
            velocities=self.velocities if velocities is None else velocities,
        )

    def min_pair_distance(self) -> float:
        """Brute-force minimal-image distance over all pairs (oracle-grade)."""
        n = self.n_particles
        if n < 2:
            return math.inf
        i, j = np.triu_indices(n, k=1)
        d = minimal_image(self.positions[i] - self.positions[j], self.box)
        return float(np.sqrt((d * d).sum(axis=1).min()))

    def validate(self, overlap_tol: float | None = None) -> None:
        """Raise InconsistentStateError on any violated invariant."""
        if not np.all(np.isfinite(self.positions)) or not np.all(np.isfinite(self.velocities)):
            raise InconsistentStateError("non-finite coordinates in ensemble")
        if isinstance(self.box, PeriodicBox):
            L = self.box.side
            if np.any(self.positions < 0) or np.any(self.positions >= L):
                raise InconsistentStateError("positions outside [0, L)")
        if self.mode is Mode.HARD_SPHERE and self.n_particles > 1:
            tol = 1e-12 * self.epsilon if overlap_tol is None else overlap_tol
            dmin = self.min_pair_distance()
            if dmin < self.epsilon - tol:
                raise InconsistentStateError(
                    f"hard-core overlap: min distance {dmin:.17g} < diameter {self.epsilon}"
                )

    def kinetic_energy(self) -> float:
        """Sum of |v_i|^2 / 2."""
        return 0.5 * float((self.velocities**2).sum())

    def v_rms(self) -> float:
        return float(np.sqrt((self.velocities**2).sum(axis=1).mean()))


@dataclass(frozen=True)
class ScalingRegime:
    """The (epsilon, N, coupling) triple of a scaling limit.

    Low density fixes N = round(1 / (lambda * epsilon^2)) with coupling
    exponent 0 (hard spheres); weak coupling fixes N = round(epsilon^-3)
    with potential amplitude epsilon^(1/2).
    """

    kind: RegimeKind
    epsilon: float
    n_particles: int
    coupling_exponent: float
    mean_free_path: float | None = None


def make_regime(kind: RegimeKind, epsilon: float, lam: float = 1.0) -> ScalingRegime:
    """Build a self-consistent scaling regime; `lam` is ignored for weak coupling."""
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise InvalidParameterError(f"epsilon must be positive, got {epsilon}")
    if kind is RegimeKind.LOW_DENSITY:
        if not (lam > 0 and math.isfinite(lam)):
            raise InvalidParameterError(f"lambda must be positive, got {lam}")
        n = round(1.0 / (lam * epsilon**2))
        if n < 1:
            raise InvalidParameterError(
                f"regime (epsilon={epsilon}, lambda={lam}) gives no particles"
            )
        return ScalingRegime(kind, epsilon, n, 0.0, mean_free_path=lam)
    if kind is RegimeKind.WEAK_COUPLING:
        n = round(epsilon**-3)
        if n < 1:
            raise InvalidParameterError(f"regime epsilon={epsilon} gives no particles")
        return ScalingRegime(kind, epsilon, n, 0.5, mean_free_path=None)
    raise InvalidParameterError(f"unknown regime kind {kind!r}")


def effective_potential(base: "RadialPotential", regime: ScalingRegime) -> tuple[float, float]:
    """(amplitude factor, length factor) = (epsilon^(1/2), epsilon).

    The pair energy is amplitude * phi(r / length).  Only defined for the
    weak-coupling regime; hard spheres carry no smooth potential.
    """
    if regime.kind is not RegimeKind.WEAK_COUPLING:
        raise UnsupportedRegimeError(
            "effective_potential is defined for the weak-coupling regime only"
        )
    return (math.sqrt(regime.epsilon), regime.epsilon)


@dataclass(frozen=True)
class RadialPotential:
    """Spherically symmetric two-body potential with compact support.

    `value` and `derivative` take a scalar or array radius r >= 0; both vanish
    for r >= cutoff.  The derivative is validated against central finite
    differences of `value` at construction.
    """

    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    cutoff: float = 1.0
    smoothness_class: int = 2
    name: str = "custom"

    def __post_init__(self):
        if not (self.cutoff > 0):
            raise InvalidParameterError("cutoff must be positive")
        if self.smoothness_class < 2:
            raise InvalidParameterError("smoothness_class must be >= 2")
        self.validate_derivative()
        if math.isfinite(self.cutoff):
            r = np.linspace(self.cutoff, 2.0 * self.cutoff, 7)
            if np.any(np.abs(self.value(r)) > 0) or np.any(np.abs(self.derivative(r)) > 0):
                raise InvalidParameterError("potential does not vanish beyond its cutoff")

    def validate_derivative(self, rtol: float = 1e-6) -> None:
        rmax = self.cutoff if math.isfinite(self.cutoff) else 3.0
        r = np.linspace(0.05, 0.95, 13) * rmax
        dr = 1e-6 * rmax
        fd = (self.value(r + dr) - self.value(r - dr)) / (2 * dr)
        an = self.derivative(r)
        scale = np.max(np.abs(an)) + np.max(np.abs(fd)) + 1e-300
        if np.max(np.abs(fd - an)) > rtol * scale:
            raise InvalidParameterError("derivative inconsistent with value (finite differences)")

    def scaled(self, factor: float) -> "RadialPotential":
        """New potential factor * phi (same support)."""
        v, d = self.value, self.derivative
        return RadialPotential(
            value=lambda r, _v=v, _f=factor: _f * _v(r),
            derivative=lambda r, _d=d, _f=factor: _f * _d(r),
            cutoff=self.cutoff,
            smoothness_class=self.smoothness_class,
            name=f"{factor:g}*{self.name}",
        )


def bump_potential(amplitude: float = 1.0, cutoff: float = 1.0) -> RadialPotential:
    """Default repulsive C^3 bump: amplitude * (1 - (r/cutoff)^2)^4 inside the cutoff."""

    def value(r):
        r = np.asarray(r, dtype=float)
        s = np.clip(r / cutoff, 0.0, 1.0)
        return amplitude * (1.0 - s**2) ** 4

    def derivative(r):
        r = np.asarray(r, dtype=float)
        s = r / cutoff
        inside = s < 1.0
        out = np.zeros_like(s)
        si = s[inside]
        out[inside] = amplitude * (-8.0 * si / cutoff) * (1.0 - si**2) ** 3
        return out

    return RadialPotential(value, derivative, cutoff=cutoff, smoothness_class=3, name="bump")


def gaussian_potential(amplitude: float = 1.0, width: float = 1.0) -> RadialPotential:
    """Test-only Gaussian amplitude * exp(-r^2 / (2 width^2)); no compact support."""

    def value(r):
        r = np.asarray(r, dtype=float)
        return amplitude * np.exp(-(r**2) / (2 * width**2))

    def derivative(r):
        r = np.asarray(r, dtype=float)
        return amplitude * (-r / width**2) * np.exp(-(r**2) / (2 * width**2))

    return RadialPotential(value, derivative, cutoff=math.inf, smoothness_class=6, name="gaussian")
