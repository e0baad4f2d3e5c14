"""Stochastic particle (DSMC) solver for the hard-sphere Boltzmann equation.

No-time-counter majorant scheme: candidate pairs are drawn at the majorant
rate and accepted with probability (w.n)_+ / v_maj with n uniform on the
sphere, which reproduces the hard-sphere collision kernel exactly.  A direct
deterministic quadrature of the collision operator on a velocity grid is
provided as the kinetic-side oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, InvalidParameterError
from .landau import VelocityGrid
from .state import PeriodicBox

try:
    import numba as _nb

    _HAVE_NUMBA = True
except ImportError:
    _HAVE_NUMBA = False


@dataclass(frozen=True)
class DsmcState:
    """Particle velocities (and positions in spatial mode) plus scheme bookkeeping."""

    velocities: np.ndarray
    mean_free_path: float
    majorant: float
    positions: np.ndarray | None = None
    box: PeriodicBox = PeriodicBox(1.0)
    cells_per_axis: int | None = None
    n_collisions: int = 0
    n_candidates: int = 0
    n_majorant_violations: int = 0
    n_conflict_skips: int = 0

    def __post_init__(self):
        v = np.array(self.velocities, dtype=float)
        v.flags.writeable = False
        object.__setattr__(self, "velocities", v)
        if self.positions is not None:
            x = np.array(self.positions, dtype=float)
            x.flags.writeable = False
            object.__setattr__(self, "positions", x)
            if x.shape != v.shape:
                raise InvalidParameterError("positions and velocities must match in shape")
        if not (self.mean_free_path > 0):
            raise InvalidParameterError("mean free path must be positive")

    @property
    def n_particles(self) -> int:
        return self.velocities.shape[0]

    @property
    def spatial(self) -> bool:
        return self.positions is not None


def _majorant_of(velocities: np.ndarray, headroom: float = 1.05) -> float:
    vmax = math.sqrt(float((velocities**2).sum(axis=1).max()))
    return headroom * 2.0 * vmax


def make_homogeneous_state(velocities: np.ndarray, mean_free_path: float) -> DsmcState:
    return DsmcState(velocities, mean_free_path, _majorant_of(np.asarray(velocities)))


def make_spatial_state(
    velocities: np.ndarray,
    positions: np.ndarray,
    mean_free_path: float,
    box: PeriodicBox = PeriodicBox(1.0),
    cells_per_axis: int | None = None,
) -> DsmcState:
    if cells_per_axis is None:
        # cube cells of side >= lambda / 10
        cells_per_axis = max(1, int(10.0 * box.side / mean_free_path))
    return DsmcState(
        velocities,
        mean_free_path,
        _majorant_of(np.asarray(velocities)),
        positions=positions,
        box=box,
        cells_per_axis=cells_per_axis,
    )


def mean_relative_speed(state: DsmcState, rng: np.random.Generator, n_pairs: int = 512) -> float:
    n = state.n_particles
    i = rng.integers(n, size=n_pairs)
    j = (i + 1 + rng.integers(n - 1, size=n_pairs)) % n
    return float(np.linalg.norm(state.velocities[i] - state.velocities[j], axis=1).mean())


def nominal_mean_free_time(state: DsmcState, rng: np.random.Generator | None = None) -> float:
    """lambda / (pi * <|v - v1|>): inverse per-particle collision rate."""
    if rng is None:
        rng = np.random.Generator(np.random.Philox(key=np.array([7, 7], dtype=np.uint64)))
    wbar = mean_relative_speed(state, rng)
    return state.mean_free_path / (math.pi * wbar)


def dsmc_collision_step(
    state: DsmcState,
    dt: float,
    rng: np.random.Generator,
    max_expected_per_particle: float = 0.2,
) -> DsmcState:
    """One collision substep over all cells.

    Within each cell, ~ N_c (N_c - 1)/2 * 4 pi v_maj dt / (lambda N V_c)
    candidate pairs are drawn; each is accepted with probability
    (w.n)_+ / v_maj with n uniform on S^2 and updated elastically.
    """
    if dt <= 0:
        raise InvalidParameterError("dt must be positive")
    n = state.n_particles
    if n < 2:
        return state
    lam = state.mean_free_path
    v = np.array(state.velocities)

    wbar = mean_relative_speed(state, rng)
    expected = math.pi * wbar * dt / lam
    if expected > max_expected_per_particle:
        raise ConfigurationError(
            f"expected {expected:.3g} collisions per particle per step exceeds "
            f"{max_expected_per_particle}; reduce dt"
        )

    vmaj = state.majorant
    violations = state.n_majorant_violations
    bound = _majorant_of(v, headroom=1.0)
    if vmaj < bound:
        violations += 1
        vmaj = 1.05 * bound

    if state.spatial and state.cells_per_axis and state.cells_per_axis > 1:
        nc_ax = state.cells_per_axis
        side = state.box.side / nc_ax
        cells = np.floor(state.positions / side).astype(np.int64)
        np.clip(cells, 0, nc_ax - 1, out=cells)
        lin = (cells[:, 0] * nc_ax + cells[:, 1]) * nc_ax + cells[:, 2]
        order = np.argsort(lin, kind="stable")
        counts = np.bincount(lin, minlength=nc_ax**3)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        vol = side**3
        groups = [
            order[starts[c] : starts[c] + counts[c]] for c in np.nonzero(counts >= 2)[0]
        ]
    else:
        vol = state.box.side**3
        groups = [np.arange(n)]

    n_cand = state.n_candidates
    n_coll = state.n_collisions
    n_skip = state.n_conflict_skips

    for members in groups:
        nc = len(members)
        rate = nc * (nc - 1) / 2.0 * 4.0 * math.pi * vmaj * dt / (lam * n * vol)
        m_cand = int(rate) + (1 if rng.random() < rate - int(rate) else 0)
        if m_cand == 0:
            continue
        n_cand += m_cand
        ii = rng.integers(nc, size=m_cand)
        jj = (ii + 1 + rng.integers(nc - 1, size=m_cand)) % nc
        gi = members[ii]
        gj = members[jj]
        nvec = rng.standard_normal((m_cand, 3))
        nvec /= np.linalg.norm(nvec, axis=1)[:, None]
        w = v[gi] - v[gj]
        proj = (w * nvec).sum(axis=1)
        u = rng.random(m_cand)
        accepted = np.nonzero(proj > u * vmaj)[0]
        if len(accepted) == 0:
            continue
        used = np.zeros(nc, dtype=bool)
        for k in accepted:
            a, b = ii[k], jj[k]
            if used[a] or used[b]:
                n_skip += 1
                continue
            used[a] = used[b] = True
            ga, gb = members[a], members[b]
            g = float(nvec[k] @ (v[ga] - v[gb]))
            d = nvec[k] * g
            v[ga] = v[ga] - d
            v[gb] = v[gb] + d
            n_coll += 1

    return replace(
        state,
        velocities=v,
        majorant=vmaj,
        n_collisions=n_coll,
        n_candidates=n_cand,
        n_majorant_violations=violations,
        n_conflict_skips=n_skip,
    )


def transport_step(state: DsmcState, dt: float) -> DsmcState:
    """Free flight of positions with periodic wrap; no-op in homogeneous mode."""
    if dt < 0:
        raise InvalidParameterError("dt must be nonnegative")
    if not state.spatial:
        return state
    x = np.mod(state.positions + state.velocities * dt, state.box.side)
    return replace(state, positions=x)


def _trapezoid_weights(m: int) -> np.ndarray:
    w = np.ones(m)
    w[0] = w[-1] = 0.5
    return w


if _HAVE_NUMBA:

    @_nb.njit(cache=True, fastmath=False, inline="always")
    def _trilinear(values, v_max, h, m, x, y, z):
        sx = (x + v_max) / h
        sy = (y + v_max) / h
        sz = (z + v_max) / h
        if sx < 0 or sy < 0 or sz < 0 or sx > m - 1 or sy > m - 1 or sz > m - 1:
            return 0.0
        ix = min(int(math.floor(sx)), m - 2)
        iy = min(int(math.floor(sy)), m - 2)
        iz = min(int(math.floor(sz)), m - 2)
        fx = sx - ix
        fy = sy - iy
        fz = sz - iz
        c00 = values[ix, iy, iz] * (1 - fz) + values[ix, iy, iz + 1] * fz
        c01 = values[ix, iy + 1, iz] * (1 - fz) + values[ix, iy + 1, iz + 1] * fz
        c10 = values[ix + 1, iy, iz] * (1 - fz) + values[ix + 1, iy, iz + 1] * fz
        c11 = values[ix + 1, iy + 1, iz] * (1 - fz) + values[ix + 1, iy + 1, iz + 1] * fz
        c0 = c00 * (1 - fy) + c01 * fy
        c1 = c10 * (1 - fy) + c11 * fy
        return c0 * (1 - fx) + c1 * fx

    @_nb.njit(cache=True, parallel=True)
    def _qb_kernel(values, v_max, h, points, nodes, fvals, wt, cosv, sinv, cw, phis, pw, lam):
        n_pts = points.shape[0]
        n_nodes = nodes.shape[0]
        n_cos = cosv.shape[0]
        n_phi = phis.shape[0]
        m = values.shape[0]
        out = np.zeros(n_pts)
        for pi in _nb.prange(n_pts):
            vx, vy, vz = points[pi, 0], points[pi, 1], points[pi, 2]
            fv = _trilinear(values, v_max, h, m, vx, vy, vz)
            total = 0.0
            for kk in range(n_nodes):
                wx = vx - nodes[kk, 0]
                wy = vy - nodes[kk, 1]
                wz = vz - nodes[kk, 2]
                wmag = math.sqrt(wx * wx + wy * wy + wz * wz)
                if wmag == 0.0:
                    continue
                hx, hy, hz = wx / wmag, wy / wmag, wz / wmag
                # frame: e1 = cross(what, e_k), k = argmin |what_k| (first on ties)
                ax, ay, az = abs(hx), abs(hy), abs(hz)
                if ax <= ay and ax <= az:
                    e1x, e1y, e1z = 0.0, hz, -hy
                elif ay <= az:
                    e1x, e1y, e1z = -hz, 0.0, hx
                else:
                    e1x, e1y, e1z = hy, -hx, 0.0
                nrm = math.sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
                e1x, e1y, e1z = e1x / nrm, e1y / nrm, e1z / nrm
                e2x = hy * e1z - hz * e1y
                e2y = hz * e1x - hx * e1z
                e2z = hx * e1y - hy * e1x
                loss = fv * fvals[kk]
                acc = 0.0
                for ci in range(n_cos):
                    c = cosv[ci]
                    s = sinv[ci]
                    g = wmag * c
                    gsum = 0.0
                    for qi in range(n_phi):
                        cp = math.cos(phis[qi])
                        sp = math.sin(phis[qi])
                        nx = c * hx + s * (cp * e1x + sp * e2x)
                        ny = c * hy + s * (cp * e1y + sp * e2y)
                        nz = c * hz + s * (cp * e1z + sp * e2z)
                        vpx, vpy, vpz = vx - nx * g, vy - ny * g, vz - nz * g
                        v1x = nodes[kk, 0] + nx * g
                        v1y = nodes[kk, 1] + ny * g
                        v1z = nodes[kk, 2] + nz * g
                        gain = _trilinear(values, v_max, h, m, vpx, vpy, vpz) * _trilinear(
                            values, v_max, h, m, v1x, v1y, v1z
                        )
                        gsum += gain - loss
                    acc += cw[ci] * pw * g * gsum
                total += wt[kk] * acc
            out[pi] = total / lam
        return out


def qb_quadrature_at(
    f: VelocityGrid,
    points: np.ndarray,
    lam: float,
    n_cos: int = 8,
    n_phi: int = 8,
    block_elems: int = 2_000_000,
) -> np.ndarray:
    """Deterministic collision-operator values at arbitrary velocity points.

    Trapezoidal sum over grid nodes for v1, product Gauss--Legendre x uniform
    rule on the impact hemisphere, trilinear interpolation for post-collision
    values off the grid.
    """
    from numpy.polynomial.legendre import leggauss

    points = np.atleast_2d(np.asarray(points, dtype=float))
    m, h = f.m, f.h
    w1 = _trapezoid_weights(m)
    wt = (w1[:, None, None] * w1[None, :, None] * w1[None, None, :]).reshape(-1) * h**3
    nodes = f.nodes().reshape(-1, 3)
    fvals = f.values.reshape(-1)

    xc, wc = leggauss(n_cos)
    cos = 0.5 * (xc + 1.0)
    cw = 0.5 * wc
    phi = np.arange(n_phi) * (2.0 * np.pi / n_phi)
    pw = 2.0 * np.pi / n_phi
    sin = np.sqrt(1.0 - cos**2)
    angw = (cw[:, None] * pw * np.ones(n_phi)[None, :]).reshape(-1)

    # nodes where f1 is negligible contribute neither gain nor loss (energy
    # conservation keeps the gain factor at the same smallness)
    keep = fvals > 1e-13 * fvals.max()
    nodes = nodes[keep]
    fvals = fvals[keep]
    wt = wt[keep]

    if _HAVE_NUMBA and len(points) * len(nodes) > 64_000:
        return _qb_kernel(
            f.values,
            f.v_max,
            h,
            points,
            nodes,
            fvals,
            wt,
            cos,
            sin,
            cw,
            phi,
            pw,
            lam,
        )

    k = len(nodes)
    q = n_cos * n_phi
    # angle unit vectors in the local (what, e1, e2) frame, flattened to (Q, 3)
    c_loc = np.repeat(cos, n_phi)
    s1_loc = np.repeat(sin, n_phi) * np.tile(np.cos(phi), n_cos)
    s2_loc = np.repeat(sin, n_phi) * np.tile(np.sin(phi), n_cos)
    angw = np.repeat(cw, n_phi) * pw

    block = max(1, block_elems // max(k * q, 1))
    out = np.empty(len(points))
    f_at_points = f.interpolate(points)
    for lo in range(0, len(points), block):
        pts = points[lo : lo + block]
        p = len(pts)
        w = pts[:, None, :] - nodes[None, :, :]
        wmag = np.sqrt((w * w).sum(axis=2))
        ok = wmag > 0
        what = w / np.where(ok, wmag, 1.0)[:, :, None]
        helper = np.zeros((p, k, 3))
        np.put_along_axis(helper, np.argmin(np.abs(what), axis=2)[:, :, None], 1.0, axis=2)
        e1 = np.cross(what, helper)
        norm1 = np.sqrt((e1 * e1).sum(axis=2))
        e1 /= np.where(norm1 > 0, norm1, 1.0)[:, :, None]
        e2 = np.cross(what, e1)
        nvec = (
            what[:, :, None, :] * c_loc[None, None, :, None]
            + e1[:, :, None, :] * s1_loc[None, None, :, None]
            + e2[:, :, None, :] * s2_loc[None, None, :, None]
        )
        g = (wmag * ok)[:, :, None] * c_loc[None, None, :]
        shift = nvec * g[:, :, :, None]
        both = np.concatenate(
            [pts[:, None, None, :] - shift, nodes[None, :, None, :] + shift], axis=0
        ).reshape(-1, 3)
        interp = f.interpolate(both).reshape(2, p, k, q)
        gain = interp[0] * interp[1]
        loss = (f_at_points[lo : lo + block][:, None] * fvals[None, :])[:, :, None]
        contrib = (g * (gain - loss)) @ angw
        out[lo : lo + block] = (contrib * wt[None, :] * ok).sum(axis=1)
    return out / lam


def qb_quadrature(f: VelocityGrid, v: np.ndarray, lam: float, n_cos: int = 8, n_phi: int = 8) -> float:
    """Collision-operator value at a grid node (off-node input is an error)."""
    v = np.asarray(v, dtype=float)
    s = (v + f.v_max) / f.h
    if np.any(np.abs(s - np.round(s)) > 1e-9) or np.any((s < -1e-9) | (s > f.m - 1 + 1e-9)):
        raise InvalidParameterError(f"velocity {v} is not a grid node")
    return float(qb_quadrature_at(f, v[None, :], lam, n_cos=n_cos, n_phi=n_phi)[0])


def qb_quadrature_grid(f: VelocityGrid, lam: float, n_cos: int = 8, n_phi: int = 8) -> VelocityGrid:
    """Collision operator evaluated on every grid node (derivative field)."""
    vals = qb_quadrature_at(f, f.nodes().reshape(-1, 3), lam, n_cos=n_cos, n_phi=n_phi)
    return VelocityGrid(f.v_max, vals.reshape(f.values.shape), density=False)
