"""Deterministic solver for the homogeneous Landau equation on a velocity grid.

The collision operator is evaluated in divergence form with midpoint fluxes,
so the discrete mass of the output telescopes to zero exactly; momentum and
energy moments vanish at second order in the grid step.  The pairwise
v1-integral is a lattice convolution and is evaluated with FFTs; a direct-sum
evaluation of the same arithmetic is kept as an oracle for tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .errors import InvalidParameterError, StabilityError
from .sampling import MaxwellianParams, VelocityLaw, velocity_law_density
from .scattering import KineticConstant


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform cubic grid on [-v_max, v_max]^3 with an odd number of nodes per axis.

    `density` grids clamp tiny negative values to zero (clamps are counted in
    `n_clamped`); derivative fields are stored with density=False and may be
    negative.
    """

    v_max: float
    values: np.ndarray
    density: bool = True
    n_clamped: int = 0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 3 or len(set(vals.shape)) != 1:
            raise InvalidParameterError("grid values must be a cubic (M, M, M) array")
        if vals.shape[0] % 2 == 0 or vals.shape[0] < 3:
            raise InvalidParameterError("points per axis must be odd and >= 3")
        if not (self.v_max > 0):
            raise InvalidParameterError("v_max must be positive")
        if self.density:
            neg = vals < 0
            nneg = int(neg.sum())
            if nneg:
                vals[neg] = 0.0
                object.__setattr__(self, "n_clamped", self.n_clamped + nneg)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return 2.0 * self.v_max / (self.m - 1)

    @property
    def u_floor(self) -> float:
        return 0.5 * self.h

    def axis(self) -> np.ndarray:
        return -self.v_max + self.h * np.arange(self.m)

    def nodes(self) -> np.ndarray:
        g = self.axis()
        X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
        return np.stack([X, Y, Z], axis=-1)

    def mass(self) -> float:
        return float(self.values.sum()) * self.h**3

    def with_values(self, values: np.ndarray, density: bool | None = None) -> "VelocityGrid":
        return VelocityGrid(
            self.v_max, values, density=self.density if density is None else density
        )

    def normalized(self) -> "VelocityGrid":
        m = self.mass()
        if m <= 0:
            raise InvalidParameterError("cannot normalize a grid with nonpositive mass")
        return self.with_values(self.values / m)

    def l1_norm(self) -> float:
        return float(np.abs(self.values).sum()) * self.h**3

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw velocities from the piecewise-constant density the grid represents."""
        p = self.values.reshape(-1)
        p = p / p.sum()
        flat = rng.choice(len(p), size=n, p=p)
        idx = np.stack(np.unravel_index(flat, self.values.shape), axis=1)
        centers = -self.v_max + self.h * idx
        return centers + self.h * (rng.random((n, 3)) - 0.5)

    def interpolate(self, v: np.ndarray) -> np.ndarray:
        """Trilinear interpolation; zero outside the grid."""
        v = np.atleast_2d(v)
        m = self.m
        s = (v + self.v_max) / self.h
        inside = ((s >= 0) & (s <= m - 1)).all(axis=1)
        i0 = np.floor(s).astype(np.int64)
        np.clip(i0, 0, m - 2, out=i0)
        frac = s - i0
        lin = (i0[:, 0] * m + i0[:, 1]) * m + i0[:, 2]
        corner = np.array([0, 1, m, m + 1, m * m, m * m + 1, m * m + m, m * m + m + 1])
        vals8 = self.values.reshape(-1)[lin[:, None] + corner[None, :]]
        fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
        wx = np.stack([1.0 - fx, fx], axis=1)
        wy = np.stack([1.0 - fy, fy], axis=1)
        wz = np.stack([1.0 - fz, fz], axis=1)
        w8 = (wx[:, :, None, None] * wy[:, None, :, None] * wz[:, None, None, :]).reshape(-1, 8)
        return (vals8 * w8).sum(axis=1) * inside


def grid_from_law(law: VelocityLaw, m: int, v_max: float) -> VelocityGrid:
    g = VelocityGrid(v_max, np.zeros((m, m, m)))
    vals = velocity_law_density(law, g.nodes())
    return VelocityGrid(v_max, vals)


def maxwellian_grid(params: MaxwellianParams, m: int, v_max: float) -> VelocityGrid:
    return grid_from_law(params, m, v_max)


def _kernel_hats(m: int, v_max: float, pad: int) -> list[list[np.ndarray]]:
    """rfftn of the B=1 kernel a_{alpha gamma} sampled on the face-difference lattice."""
    h = 2.0 * v_max / (m - 1)
    u_floor = 0.5 * h
    k = np.fft.fftfreq(pad, d=1.0 / pad)  # signed lattice offsets 0, 1, ..., -1
    hats: list[list[np.ndarray]] = []
    for alpha in range(3):
        coords = []
        for axis in range(3):
            c = k * h + (0.5 * h if axis == alpha else 0.0)
            coords.append(c)
        D = np.meshgrid(*coords, indexing="ij")
        U2 = D[0] ** 2 + D[1] ** 2 + D[2] ** 2
        Um = np.sqrt(U2)
        Uc = np.maximum(Um, u_floor)
        inv = 1.0 / Uc
        row = []
        for gamma in range(3):
            if gamma == alpha:
                ker = inv * (1.0 - D[alpha] * D[alpha] / np.maximum(U2, u_floor**2))
            else:
                ker = inv * (0.0 - D[alpha] * D[gamma] / np.maximum(U2, u_floor**2))
            row.append(sfft.rfftn(ker))
        hats.append(row)
    return hats


_KERNEL_CACHE: dict[tuple, list[list[np.ndarray]]] = {}


def _cached_kernels(m: int, v_max: float, pad: int):
    key = (m, round(float(v_max), 12), pad)
    if key not in _KERNEL_CACHE:
        if len(_KERNEL_CACHE) > 6:
            _KERNEL_CACHE.clear()
        _KERNEL_CACHE[key] = _kernel_hats(m, v_max, pad)
    return _KERNEL_CACHE[key]


def _face_fields(f: np.ndarray, h: float, alpha: int, grads: list[np.ndarray]):
    """(f_face, df_face[3]) on the faces normal to axis alpha."""
    sl_lo = [slice(None)] * 3
    sl_hi = [slice(None)] * 3
    sl_lo[alpha] = slice(0, -1)
    sl_hi[alpha] = slice(1, None)
    lo, hi = tuple(sl_lo), tuple(sl_hi)
    f_face = 0.5 * (f[lo] + f[hi])
    df = []
    for gamma in range(3):
        if gamma == alpha:
            df.append((f[hi] - f[lo]) / h)
        else:
            g = grads[gamma]
            df.append(0.5 * (g[lo] + g[hi]))
    return f_face, df


def _divergence(flux_by_axis: list[np.ndarray], h: float, m: int) -> np.ndarray:
    q = np.zeros((m, m, m))
    for alpha, F in enumerate(flux_by_axis):
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[alpha] = slice(0, m - 1)
        sl_hi[alpha] = slice(1, m)
        q[tuple(sl_lo)] += F / h
        q[tuple(sl_hi)] -= F / h
    return q


def ql_fluxes(f: VelocityGrid, B: KineticConstant) -> list[np.ndarray]:
    """Midpoint face fluxes of Q_L(f, f), one array per axis.

    Flux at a face: F_alpha = h^3 [ sum_g A_{alpha g} d_g f|_face - f|_face b_alpha ],
    A = conv(a, f), b = sum_g conv(a_{alpha g}, d_g f); the 1/|U| kernel is
    clamped at u_floor = h/2 (never active on the face lattice itself).
    """
    m, h = f.m, f.h
    pad = sfft.next_fast_len(2 * m - 1, real=True)
    hats = _cached_kernels(m, f.v_max, pad)
    vals = f.values
    grads = list(np.gradient(vals, h))

    fhat = sfft.rfftn(vals, s=(pad, pad, pad))
    ghat = [sfft.rfftn(g, s=(pad, pad, pad)) for g in grads]

    fluxes = []
    for alpha in range(3):
        f_face, df_face = _face_fields(vals, h, alpha, grads)
        shape = list(vals.shape)
        shape[alpha] -= 1
        cut = tuple(slice(0, s) for s in shape)
        A = [sfft.irfftn(hats[alpha][g] * fhat, s=(pad, pad, pad))[cut] for g in range(3)]
        bhat = hats[alpha][0] * ghat[0] + hats[alpha][1] * ghat[1] + hats[alpha][2] * ghat[2]
        b = sfft.irfftn(bhat, s=(pad, pad, pad))[cut]
        F = h**3 * (A[0] * df_face[0] + A[1] * df_face[1] + A[2] * df_face[2] - f_face * b)
        fluxes.append(B.value * F)
    return fluxes


def ql_apply(f: VelocityGrid, B: KineticConstant, check_normalization: bool = True) -> VelocityGrid:
    """Time-derivative field Q_L(f, f): divergence of the midpoint face fluxes.

    The discrete mass of the output telescopes to zero exactly; momentum and
    energy moments are O(h^2).
    """
    if check_normalization and abs(f.mass() - 1.0) > 1e-6:
        raise InvalidParameterError(f"grid mass {f.mass():.8g} not normalized within 1e-6")
    return VelocityGrid(f.v_max, _divergence(ql_fluxes(f, B), f.h, f.m), density=False)


def ql_apply_direct(f: VelocityGrid, B: KineticConstant, chunk: int = 512) -> VelocityGrid:
    """Direct-sum evaluation of the same discretization (test oracle, small grids)."""
    m, h = f.m, f.h
    u_floor = f.u_floor
    vals = f.values
    grads = list(np.gradient(vals, h))
    nodes = f.nodes().reshape(-1, 3)
    fflat = vals.reshape(-1)
    gflat = np.stack([g.reshape(-1) for g in grads], axis=1)

    fluxes = []
    for alpha in range(3):
        f_face, df_face = _face_fields(vals, h, alpha, grads)
        shape = list(vals.shape)
        shape[alpha] -= 1
        g = f.axis()
        ax = [g.copy(), g.copy(), g.copy()]
        ax[alpha] = g[:-1] + 0.5 * h
        FX, FY, FZ = np.meshgrid(ax[0], ax[1], ax[2], indexing="ij")
        faces = np.stack([FX, FY, FZ], axis=-1).reshape(-1, 3)
        A = np.zeros((len(faces), 3))
        bb = np.zeros(len(faces))
        for lo in range(0, len(faces), chunk):
            fc = faces[lo : lo + chunk]
            U = fc[:, None, :] - nodes[None, :, :]
            U2 = (U * U).sum(axis=2)
            Um = np.sqrt(U2)
            inv = 1.0 / np.maximum(Um, u_floor)
            U2c = np.maximum(U2, u_floor**2)
            for gamma in range(3):
                ker = inv * ((1.0 if gamma == alpha else 0.0) - U[:, :, alpha] * U[:, :, gamma] / U2c)
                A[lo : lo + chunk, gamma] = ker @ fflat
                bb[lo : lo + chunk] += ker @ gflat[:, gamma]
        A = A.reshape(tuple(shape) + (3,))
        bb = bb.reshape(tuple(shape))
        F = h**3 * (
            A[..., 0] * df_face[0] + A[..., 1] * df_face[1] + A[..., 2] * df_face[2] - f_face * bb
        )
        fluxes.append(B.value * F)
    return VelocityGrid(f.v_max, _divergence(fluxes, h, m), density=False)


def landau_stability_bound(f: VelocityGrid, B: KineticConstant, c_stab: float = 0.1) -> float:
    """dt bound c * h^2 * u_floor / B for the explicit scheme."""
    if B.value == 0:
        return math.inf
    return c_stab * f.h**2 * f.u_floor / B.value


def _limit_fluxes(
    fluxes: list[np.ndarray], f: np.ndarray, h: float, dt: float, safety: float = 0.9
) -> list[np.ndarray]:
    """Scale down face fluxes so no cell is drained below zero within one dt.

    Each cell's outgoing faces are scaled by a common factor <= 1, so
    telescoping (exact mass conservation) is preserved; inactive wherever the
    tail is resolved, so the interior discretization order is untouched.
    """
    m = f.shape[0]
    outflow = np.zeros_like(f)
    # cell update is f += (dt/h)(F_upper - F_lower): positive flux at the upper
    # face drains the upper cell, negative flux at it drains the lower cell
    for alpha, F in enumerate(fluxes):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[alpha] = slice(0, m - 1)
        hi[alpha] = slice(1, m)
        outflow[tuple(hi)] += np.maximum(F, 0.0)
        outflow[tuple(lo)] += np.maximum(-F, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(outflow > 0, safety * f * (h / dt) / np.where(outflow > 0, outflow, 1.0), 1.0)
    s = np.clip(s, 0.0, 1.0)
    limited = []
    for alpha, F in enumerate(fluxes):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[alpha] = slice(0, m - 1)
        hi[alpha] = slice(1, m)
        donor = np.where(F > 0, s[tuple(hi)], s[tuple(lo)])
        limited.append(F * donor)
    return limited


def landau_step(
    f: VelocityGrid,
    B: KineticConstant,
    dt: float,
    c_stab: float = 0.1,
    clamp_budget: float = 1e-8,
) -> VelocityGrid:
    """One Heun (RK2) step with donor-cell positivity limiting.

    The stage-averaged fluxes are limited so no cell is overdrafted, then any
    residual negative values are clamped to zero with a mass renormalization
    that must stay within clamp_budget per step.
    """
    if dt < 0:
        raise InvalidParameterError("dt must be nonnegative")
    if dt == 0:
        return f
    bound = landau_stability_bound(f, B, c_stab)
    if dt > bound:
        raise StabilityError(f"dt={dt} above stability bound {bound:.6g}; reduce dt")
    mass0 = f.mass()
    flux1 = ql_fluxes(f, B)
    k1 = _divergence(flux1, f.h, f.m)
    mid = f.with_values(f.values + dt * k1, density=False)
    flux2 = ql_fluxes(mid, B)
    avg = [0.5 * (a + b) for a, b in zip(flux1, flux2)]
    avg = _limit_fluxes(avg, f.values, f.h, dt)
    new = f.values + dt * _divergence(avg, f.h, f.m)
    neg = new < 0
    clamped_mass = -float(new[neg].sum()) * f.h**3
    if clamped_mass > clamp_budget * mass0:
        raise StabilityError(
            f"clamped mass fraction {clamped_mass / mass0:.3g} above {clamp_budget}; reduce dt"
        )
    new = np.where(neg, 0.0, new)
    total = float(new.sum()) * f.h**3
    if total > 0:
        new *= mass0 / total
    return VelocityGrid(f.v_max, new, density=True, n_clamped=int(neg.sum()))


def h_functional_grid(f: VelocityGrid) -> float:
    """h^3 sum f log f with 0 log 0 = 0."""
    vals = f.values
    if np.any(vals < 0):
        raise InvalidParameterError("H functional needs a nonnegative grid")
    pos = vals > 0
    return float((vals[pos] * np.log(vals[pos])).sum()) * f.h**3
