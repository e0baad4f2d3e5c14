"""Estimators connecting particle data to kinetic descriptions.

Empirical one-particle marginals, the two-particle factorization defect
("chaos metric"), conserved moments, the H functional with plug-in bias
accounting, and the fitted-Maxwellian distance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import DegenerateFitError, InvalidInputError, InvalidParameterError
from .landau import VelocityGrid
from .state import ParticleEnsemble


@dataclass(frozen=True)
class HistogramSpec:
    """Uniform binning of [-v_max, v_max]^3 with `bins` cells per axis."""

    v_max: float
    bins: int

    def __post_init__(self):
        if not (self.v_max > 0 and self.bins >= 1):
            raise InvalidParameterError("need v_max > 0 and bins >= 1")

    @property
    def width(self) -> float:
        return 2.0 * self.v_max / self.bins

    @property
    def bin_volume(self) -> float:
        return self.width**3

    def edges(self) -> np.ndarray:
        return -self.v_max + self.width * np.arange(self.bins + 1)

    def centers(self) -> np.ndarray:
        return -self.v_max + self.width * (np.arange(self.bins) + 0.5)

    def index_of(self, v: np.ndarray) -> np.ndarray:
        """Flat bin index per sample, -1 when out of range."""
        v = np.atleast_2d(v)
        i = np.floor((v + self.v_max) / self.width).astype(np.int64)
        ok = np.all((i >= 0) & (i < self.bins), axis=1)
        flat = (i[:, 0] * self.bins + i[:, 1]) * self.bins + i[:, 2]
        return np.where(ok, flat, -1)


@dataclass(frozen=True)
class Histogram3D:
    """Counts over a HistogramSpec; normalized density sums to the in-range fraction."""

    spec: HistogramSpec
    counts: np.ndarray
    n_total: int
    n_out_of_range: int = 0

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        if c.shape != (self.spec.bins,) * 3:
            raise InvalidParameterError("counts shape must match the binning")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    @property
    def in_range_fraction(self) -> float:
        return 1.0 - self.n_out_of_range / self.n_total if self.n_total else 0.0

    def probabilities(self) -> np.ndarray:
        if self.n_total == 0:
            raise InvalidInputError("empty histogram")
        return self.counts / self.n_total

    def density(self) -> np.ndarray:
        return self.probabilities() / self.spec.bin_volume

    def merged(self, other: "Histogram3D") -> "Histogram3D":
        if other.spec != self.spec:
            raise InvalidParameterError("cannot merge histograms with different binnings")
        return Histogram3D(
            self.spec,
            self.counts + other.counts,
            self.n_total + other.n_total,
            self.n_out_of_range + other.n_out_of_range,
        )


def histogram_velocities(velocities: np.ndarray, spec: HistogramSpec) -> Histogram3D:
    v = np.atleast_2d(np.asarray(velocities, dtype=float))
    if len(v) == 0:
        raise InvalidInputError("no samples to histogram")
    idx = spec.index_of(v)
    inr = idx >= 0
    counts = np.bincount(idx[inr], minlength=spec.bins**3).reshape((spec.bins,) * 3)
    return Histogram3D(spec, counts, n_total=len(v), n_out_of_range=int((~inr).sum()))


def empirical_marginal_1(source, spec: HistogramSpec) -> Histogram3D:
    """Velocity histogram over all particles (the empirical one-particle marginal)."""
    if isinstance(source, ParticleEnsemble):
        if source.n_particles == 0:
            raise InvalidInputError("empty ensemble")
        v = source.velocities
    else:
        v = np.atleast_2d(np.asarray(source, dtype=float))
        if len(v) == 0:
            raise InvalidInputError("no particles")
    hist = histogram_velocities(v, spec)
    if hist.in_range_fraction < 0.99:
        warnings.warn(
            f"binning covers only {hist.in_range_fraction:.1%} of samples",
            stacklevel=2,
        )
    return hist


@dataclass(frozen=True)
class ChaosMetric:
    """L1 defect ||f2 - f1 (x) f1|| with its independent-data noise floor."""

    value: float
    noise_floor: float
    n_replicas: int
    in_range_fraction: float

    @property
    def excess(self) -> float:
        return max(self.value - self.noise_floor, 0.0)


def _pair_bin_stats(bin_idx: list[np.ndarray], k3: int) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Accumulate single and ordered-pair bin counts over replicas.

    Ordered pair counts per replica are c (x) c - diag(c), which is exact for
    all i != j pairs without enumerating them.
    """
    f1 = np.zeros(k3)
    f2 = np.zeros((k3, k3))
    n1 = 0
    n2 = 0
    for idx in bin_idx:
        inr = idx[idx >= 0]
        c = np.bincount(inr, minlength=k3).astype(float)
        f1 += c
        f2 += np.outer(c, c)
        f2[np.diag_indices(k3)] -= c
        n1 += len(inr)
        n2 += len(inr) * (len(inr) - 1)
    return f1, f2, n1, n2


def chaos_metric(
    replicas,
    spec: HistogramSpec,
    min_replicas: int = 100,
    n_shuffles: int = 3,
    rng: np.random.Generator | None = None,
) -> ChaosMetric:
    """Estimate ||f2 - f1 (x) f1||_1 on a coarse product binning over replicas.

    f2 is averaged over distinct ordered particle pairs and replicas.  The
    noise floor is measured by pooling all velocities and re-splitting them at
    random (which destroys within-replica pair correlations but keeps f1),
    and is reported alongside the defect.
    """
    if spec.bins > 8:
        raise InvalidParameterError("chaos metric uses at most 8 bins per axis")
    velocities = [
        r.velocities if isinstance(r, ParticleEnsemble) else np.atleast_2d(np.asarray(r))
        for r in replicas
    ]
    if len(velocities) < min_replicas:
        raise InvalidInputError(
            f"chaos metric needs at least {min_replicas} replicas, got {len(velocities)}"
        )
    if rng is None:
        rng = np.random.Generator(np.random.Philox(key=np.array([11, 11], dtype=np.uint64)))
    k3 = spec.bins**3

    def metric_of(vel_list) -> tuple[float, float]:
        idx = [spec.index_of(v) for v in vel_list]
        f1, f2, n1, n2 = _pair_bin_stats(idx, k3)
        if n1 == 0 or n2 == 0:
            raise InvalidInputError("no in-range samples for the chaos metric")
        p1 = f1 / n1
        p2 = f2 / n2
        defect = float(np.abs(p2 - np.outer(p1, p1)).sum())
        total = sum(len(v) for v in vel_list)
        return defect, n1 / total

    value, in_range = metric_of(velocities)

    pooled = np.concatenate(velocities, axis=0)
    sizes = [len(v) for v in velocities]
    floors = []
    for _ in range(n_shuffles):
        perm = rng.permutation(len(pooled))
        shuffled = []
        at = 0
        for s in sizes:
            shuffled.append(pooled[perm[at : at + s]])
            at += s
        floors.append(metric_of(shuffled)[0])
    return ChaosMetric(value, float(np.mean(floors)), len(velocities), in_range)


def moments(source) -> tuple[float, np.ndarray, float]:
    """(mass, momentum, energy) with the sum |v|^2 energy convention (no 1/2).

    Particle sources are exact averages of (1, v, |v|^2); grids and histograms
    integrate against their node/bin measure.
    """
    if isinstance(source, ParticleEnsemble):
        v = source.velocities
        if len(v) == 0:
            raise InvalidInputError("empty ensemble")
        return 1.0, v.mean(axis=0), float((v**2).sum(axis=1).mean())
    if isinstance(source, VelocityGrid):
        w = source.h**3
        nodes = source.nodes().reshape(-1, 3)
        f = source.values.reshape(-1)
        mass = float(f.sum()) * w
        mom = (f[:, None] * nodes).sum(axis=0) * w
        ene = float((f * (nodes**2).sum(axis=1)).sum()) * w
        return mass, mom, ene
    if isinstance(source, Histogram3D):
        p = source.probabilities().reshape(-1)
        c = source.spec.centers()
        X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
        ctr = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
        mass = float(p.sum())
        mom = (p[:, None] * ctr).sum(axis=0)
        ene = float((p * (ctr**2).sum(axis=1)).sum())
        return mass, mom, ene
    v = np.atleast_2d(np.asarray(source, dtype=float))
    if len(v) == 0:
        raise InvalidInputError("no samples")
    return 1.0, v.mean(axis=0), float((v**2).sum(axis=1).mean())


@dataclass(frozen=True)
class HEstimate:
    """Plug-in H = sum p log(p / vol) with the Miller--Madow-style correction reported."""

    value: float
    bias_correction: float
    standard_error: float

    @property
    def corrected(self) -> float:
        return self.value - self.bias_correction


def h_estimate(hist: Histogram3D) -> HEstimate:
    p = hist.probabilities().reshape(-1)
    occ = p > 0
    w = hist.spec.bin_volume
    g = np.log(p[occ] / w)
    value = float((p[occ] * g).sum())
    k_occ = int(occ.sum())
    bias = (k_occ - 1) / (2.0 * hist.n_total)
    var = float((p[occ] * g * g).sum() - value**2)
    se = math.sqrt(max(var, 0.0) / hist.n_total)
    return HEstimate(value, bias, se)


def fit_maxwellian_moments(hist: Histogram3D) -> tuple[float, np.ndarray, float]:
    """(rho, u, beta) by moment matching on the in-range histogram mass.

    The bin-center second moment carries the Sheppard excess w^2/12 per axis,
    which is subtracted before inverting for beta.
    """
    mass, mom, ene = moments(hist)
    if mass <= 0:
        raise DegenerateFitError("histogram carries no in-range mass")
    u = mom / mass
    var = (ene / mass - float(u @ u)) / 3.0 - hist.spec.width**2 / 12.0
    if var <= 0:
        raise DegenerateFitError("zero velocity variance; Maxwellian fit is degenerate")
    return 1.0, u, 1.0 / var


def _gaussian_bin_masses(edges: np.ndarray, mean: float, beta: float) -> np.ndarray:
    z = (edges - mean) * math.sqrt(beta / 2.0)
    cdf = 0.5 * (1.0 + erf(z))
    return np.diff(cdf)


def maxwellian_distance(hist: Histogram3D) -> float:
    """L1 distance between the histogram and the bin-averaged moment-fitted Maxwellian."""
    rho, u, beta = fit_maxwellian_moments(hist)
    edges = hist.spec.edges()
    mx = _gaussian_bin_masses(edges, u[0], beta)
    my = _gaussian_bin_masses(edges, u[1], beta)
    mz = _gaussian_bin_masses(edges, u[2], beta)
    model = rho * mx[:, None, None] * my[None, :, None] * mz[None, None, :]
    p = hist.probabilities()
    out_p = 1.0 - float(p.sum())
    out_m = rho - float(model.sum())
    return float(np.abs(p - model).sum()) + abs(out_p - out_m)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One row of the moments/entropy time series (fixed CSV schema in report)."""

    time: float
    mass: float
    momentum: tuple[float, float, float]
    energy: float
    h_value: float = math.nan
    h_bias: float = math.nan
    h_se: float = math.nan
    chaos_metric: float = math.nan
    chaos_floor: float = math.nan
    maxwellian_l1: float = math.nan
    n_events: int = 0

    def __post_init__(self):
        for name in ("time", "mass", "energy"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")
        if not all(math.isfinite(c) for c in self.momentum):
            raise InvalidParameterError("momentum must be finite")


def law_bin_masses(law, spec: HistogramSpec) -> np.ndarray:
    """Exact bin masses of a Maxwellian or mixture law (product of erf factors)."""
    from .sampling import MaxwellianParams, MixtureOfMaxwellians

    comps = law.components if isinstance(law, MixtureOfMaxwellians) else ((1.0, law),)
    edges = spec.edges()
    out = np.zeros((spec.bins,) * 3)
    for w, comp in comps:
        axes = [_gaussian_bin_masses(edges, comp.u[ax], comp.beta) for ax in range(3)]
        out += w * comp.rho * axes[0][:, None, None] * axes[1][None, :, None] * axes[2][None, None, :]
    return out


def grid_bin_masses(grid: VelocityGrid, spec: HistogramSpec) -> np.ndarray:
    """Node-sum masses of a velocity grid accumulated onto histogram bins."""
    nodes = grid.nodes().reshape(-1, 3)
    idx = spec.index_of(nodes)
    vals = grid.values.reshape(-1) * grid.h**3
    out = np.zeros(spec.bins**3)
    ok = idx >= 0
    np.add.at(out, idx[ok], vals[ok])
    return out.reshape((spec.bins,) * 3)


def record_from_velocities(
    time: float,
    velocities: np.ndarray,
    spec: HistogramSpec,
    n_events: int = 0,
) -> DiagnosticsRecord:
    """Standard per-checkpoint record: moments, H estimate, Maxwellian distance."""
    mass, mom, ene = moments(velocities)
    hist = histogram_velocities(velocities, spec)
    hh = h_estimate(hist)
    return DiagnosticsRecord(
        time=time,
        mass=mass,
        momentum=tuple(mom),
        energy=ene,
        h_value=hh.value,
        h_bias=hh.bias_correction,
        h_se=hh.standard_error,
        maxwellian_l1=maxwellian_distance(hist),
        n_events=n_events,
    )
