"""Weak-coupling N-body dynamics.

Smooth pair potential rescaled to amplitude sqrt(epsilon) and range epsilon,
integrated by velocity Verlet.  Pair search uses a cell list whose side tiles
the box exactly, so no interacting pair is missed across periodic seams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, ConfigurationError, InvalidParameterError
from .state import (
    Mode,
    ParticleEnsemble,
    PeriodicBox,
    RadialPotential,
    minimal_image,
)


def _grouped_ranges(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenation of arange(starts[k], starts[k]+counts[k]) over k."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    group = np.repeat(np.arange(len(counts)), counts)
    bases = np.concatenate(([0], np.cumsum(counts)[:-1]))
    within = np.arange(total) - bases[group]
    return starts[group] + within


_HALF_STENCIL = np.array(
    [
        (1, 0, 0), (0, 1, 0), (0, 0, 1),
        (1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1),
        (0, 1, 1), (0, 1, -1),
        (1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1),
    ],
    dtype=np.int64,
)


def candidate_pairs(positions: np.ndarray, cutoff: float, box: PeriodicBox) -> tuple[np.ndarray, np.ndarray]:
    """Unordered candidate pairs from cell binning (superset of pairs within cutoff)."""
    n = positions.shape[0]
    L = box.side
    n_c = int(L / cutoff + 1e-12)
    if n_c < 3 or n < 16:
        i, j = np.triu_indices(n, k=1)
        return i.astype(np.int64), j.astype(np.int64)
    side = L / n_c
    cells = np.floor(positions / side).astype(np.int64)
    np.clip(cells, 0, n_c - 1, out=cells)
    lin = (cells[:, 0] * n_c + cells[:, 1]) * n_c + cells[:, 2]
    order = np.argsort(lin, kind="stable")
    counts = np.bincount(lin, minlength=n_c**3)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))

    pair_i: list[np.ndarray] = []
    pair_j: list[np.ndarray] = []

    # intra-cell pairs: each sorted particle with the later ones in its segment
    s = np.arange(n)
    seg_end = starts[lin[order]] + counts[lin[order]]
    c_intra = seg_end - s - 1
    pair_i.append(np.repeat(order, c_intra))
    pair_j.append(order[_grouped_ranges(s + 1, c_intra)])

    # half stencil across neighbouring cells
    for off in _HALF_STENCIL:
        nb = np.mod(cells + off, n_c)
        lin_nb = (nb[:, 0] * n_c + nb[:, 1]) * n_c + nb[:, 2]
        c_nb = counts[lin_nb]
        pair_i.append(np.repeat(np.arange(n), c_nb))
        pair_j.append(order[_grouped_ranges(starts[lin_nb], c_nb)])

    return np.concatenate(pair_i), np.concatenate(pair_j)


@dataclass(frozen=True)
class ForceField:
    """Rescaled pair interaction amplitude * phi(r / epsilon) with cell bookkeeping."""

    potential: RadialPotential
    epsilon: float
    amplitude: float | None = None
    cell_size: float | None = None

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise InvalidParameterError("epsilon must be positive")
        if self.amplitude is None:
            object.__setattr__(self, "amplitude", math.sqrt(self.epsilon))
        if not math.isfinite(self.interaction_range):
            raise ConfigurationError("cell-list dynamics needs a compactly supported potential")
        if self.cell_size is not None and self.cell_size < self.interaction_range:
            raise ConfigurationError(
                f"cell size {self.cell_size} smaller than interaction range "
                f"{self.interaction_range}"
            )

    @property
    def interaction_range(self) -> float:
        return self.epsilon * self.potential.cutoff

    def dt_max(self, ensemble: ParticleEnsemble) -> float:
        """Resolve an interaction crossing by at least ~20 steps."""
        vmax = math.sqrt(float((ensemble.velocities**2).sum(axis=1).max()))
        if vmax == 0:
            return math.inf
        return self.interaction_range / (20.0 * vmax)

    def pair_table(self, ensemble: ParticleEnsemble):
        """(i, j, dx, r) for all pairs strictly inside the interaction range."""
        rng = self.interaction_range
        i, j = candidate_pairs(ensemble.positions, rng, ensemble.box)
        dx = minimal_image(ensemble.positions[i] - ensemble.positions[j], ensemble.box)
        r2 = (dx * dx).sum(axis=1)
        keep = r2 < rng * rng
        dx = dx[keep]
        return i[keep], j[keep], dx, np.sqrt(r2[keep])


def accelerations(ensemble: ParticleEnsemble, field: ForceField) -> np.ndarray:
    """a_i = -(amplitude/epsilon) sum_j phi'(r_ij/eps) (x_i - x_j)/r_ij, pairwise antisymmetric."""
    if ensemble.mode is not Mode.SMOOTH_POTENTIAL:
        raise InvalidParameterError("accelerations requires smooth-potential mode")
    acc = np.zeros_like(ensemble.positions)
    i, j, dx, r = field.pair_table(ensemble)
    if len(i):
        dphi = field.potential.derivative(r / field.epsilon)
        factor = -(field.amplitude / field.epsilon) * dphi / r
        f = factor[:, None] * dx
        np.add.at(acc, i, f)
        np.add.at(acc, j, -f)
    return acc


def total_energy(ensemble: ParticleEnsemble, field: ForceField) -> float:
    """Kinetic sum |v|^2/2 plus amplitude * sum over pairs of phi(r/eps)."""
    if ensemble.mode is not Mode.SMOOTH_POTENTIAL:
        raise InvalidParameterError("total_energy requires smooth-potential mode")
    _, _, _, r = field.pair_table(ensemble)
    pot = field.amplitude * float(field.potential.value(r / field.epsilon).sum()) if len(r) else 0.0
    return ensemble.kinetic_energy() + pot


def _check_finite(x: np.ndarray, v: np.ndarray, step: int, dt: float) -> None:
    if not (np.isfinite(x).all() and np.isfinite(v).all()):
        raise BlowUpError(f"non-finite state at step {step} (dt={dt})")


def verlet_step(
    ensemble: ParticleEnsemble,
    field: ForceField,
    dt: float,
    accel: np.ndarray | None = None,
) -> ParticleEnsemble:
    """One velocity-Verlet step; symplectic and time-reversible up to roundoff."""
    if dt <= 0:
        raise InvalidParameterError("dt must be positive")
    bound = field.dt_max(ensemble)
    if dt > bound:
        raise ConfigurationError(f"dt={dt} exceeds dt_max={bound:.6g} for this state")
    a0 = accelerations(ensemble, field) if accel is None else accel
    v_half = ensemble.velocities + 0.5 * dt * a0
    x_new = ensemble.positions + dt * v_half
    if isinstance(ensemble.box, PeriodicBox):
        x_new = np.mod(x_new, ensemble.box.side)
    trial = ensemble.with_state(positions=x_new, velocities=v_half)
    a1 = accelerations(trial, field)
    v_new = v_half + 0.5 * dt * a1
    _check_finite(x_new, v_new, 0, dt)
    return ensemble.with_state(positions=x_new, velocities=v_new)


def integrate(
    ensemble: ParticleEnsemble,
    field: ForceField,
    dt: float,
    n_steps: int,
    snapshot_stride: int = 0,
    snapshot_path=None,
    checkpoints: dict[int, ParticleEnsemble] | None = None,
) -> ParticleEnsemble:
    """Run n_steps of velocity Verlet, reusing forces between steps.

    snapshot_stride > 0 streams (time, id, x, v) rows to snapshot_path; passing
    a dict as `checkpoints` stores copies of the state keyed by step index.
    """
    if dt <= 0 or n_steps < 0:
        raise InvalidParameterError("dt must be positive and n_steps nonnegative")
    bound = field.dt_max(ensemble)
    if dt > bound:
        raise ConfigurationError(f"dt={dt} exceeds dt_max={bound:.6g} for this state")
    x = np.array(ensemble.positions)
    v = np.array(ensemble.velocities)
    periodic = isinstance(ensemble.box, PeriodicBox)
    state = ensemble
    a = accelerations(state, field)

    snap = open(snapshot_path, "w", newline="") if snapshot_path is not None else None
    if snap is not None:
        snap.write("time,id,x,y,z,vx,vy,vz\n")
    try:
        for step in range(1, n_steps + 1):
            v += 0.5 * dt * a
            x += dt * v
            if periodic:
                np.mod(x, ensemble.box.side, out=x)
            state = state.with_state(positions=x, velocities=v)
            a = accelerations(state, field)
            v += 0.5 * dt * a
            _check_finite(x, v, step, dt)
            state = state.with_state(positions=x, velocities=v)
            if checkpoints is not None and step in checkpoints:
                checkpoints[step] = state
            if snap is not None and snapshot_stride and step % snapshot_stride == 0:
                t = step * dt
                for pid in range(state.n_particles):
                    px, py, pz = (float(c) for c in x[pid])
                    vx, vy, vz = (float(c) for c in v[pid])
                    snap.write(
                        f"{t!r},{pid},{px!r},{py!r},{pz!r},{vx!r},{vy!r},{vz!r}\n"
                    )
    finally:
        if snap is not None:
            snap.close()
    return state
