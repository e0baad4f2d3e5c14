"""Two-body scattering maps and the diffusion kernel they induce.

The transfer matrix a(U) = (B/|U|) (I - Uhat Uhat) is computed two independent
ways: from the radial Fourier transform of the potential, and by direct
quadrature of the force autocorrelation along straight crossings.  The second
route carries no Fourier convention and is the ground truth that fixes the
kinetic constant's normalization: B = pi^2 * int_0^inf phihat(rho)^2 rho^3 drho
under the symmetric (2 pi)^(-3/2) transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import (
    AccuracyError,
    CaptureError,
    InvalidParameterError,
    SingularRelativeVelocityError,
    UnreliableEstimateError,
)
from .state import RadialPotential

try:
    import numba as _nb

    _HAVE_NUMBA = True
except ImportError:
    _HAVE_NUMBA = False

DEFAULT_U_FLOOR = 1e-12


@dataclass(frozen=True)
class KineticConstant:
    """Scalar B >= 0 encoding the microscopic potential, plus its provenance."""

    value: float
    potential_id: str = "unknown"

    def __post_init__(self):
        if not (self.value >= 0):
            raise InvalidParameterError("kinetic constant must be nonnegative")


@dataclass(frozen=True)
class TransferMatrix:
    """Symmetric PSD 3x3 matrix annihilating the relative-velocity direction."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.shape != (3, 3):
            raise InvalidParameterError("transfer matrix must be 3x3")
        m.flags.writeable = False
        object.__setattr__(self, "entries", m)

    def validate(self, uhat: np.ndarray | None = None, tol: float = 1e-12) -> None:
        m = self.entries
        scale = np.abs(m).max() + 1e-300
        if np.abs(m - m.T).max() > tol * scale:
            raise InvalidParameterError("transfer matrix not symmetric")
        eig = np.linalg.eigvalsh(m)
        if eig.min() < -tol * scale:
            raise InvalidParameterError("transfer matrix not PSD")
        if uhat is not None and np.linalg.norm(m @ uhat) > tol * scale:
            raise InvalidParameterError("transfer matrix does not annihilate Uhat")


def landau_matrix(U: np.ndarray, B: KineticConstant, u_floor: float = DEFAULT_U_FLOOR) -> TransferMatrix:
    """(B/|U|) (I - Uhat tensor Uhat)."""
    U = np.asarray(U, dtype=float)
    umag = float(np.linalg.norm(U))
    if umag <= u_floor:
        raise SingularRelativeVelocityError(f"|U| = {umag} at or below floor {u_floor}")
    uhat = U / umag
    return TransferMatrix((B.value / umag) * (np.eye(3) - np.outer(uhat, uhat)))


def drift_vector(U: np.ndarray, B: KineticConstant, u_floor: float = DEFAULT_U_FLOOR) -> np.ndarray:
    """First-order drift -2 B U / |U|^3; magnitude 2B/|U|^2 = trace(a)/|U|."""
    U = np.asarray(U, dtype=float)
    umag = float(np.linalg.norm(U))
    if umag <= u_floor:
        raise SingularRelativeVelocityError(f"|U| = {umag} at or below floor {u_floor}")
    return -2.0 * B.value * U / umag**3


def radial_fourier_transform(potential: RadialPotential, rho: np.ndarray, n_nodes: int = 256) -> np.ndarray:
    """Symmetric-convention transform of a radial function.

    phihat(rho) = (2 pi)^(-3/2) * 4 pi * int_0^inf r^2 phi(r) sinc(rho r) dr,
    with sinc(z) = sin(z)/z; finite at rho = 0.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    rmax = potential.cutoff if math.isfinite(potential.cutoff) else 10.0
    xg, wg = leggauss(n_nodes)
    r = 0.5 * rmax * (xg + 1.0)
    w = 0.5 * rmax * wg
    vals = potential.value(r) * r * r * w
    z = rho[:, None] * r[None, :]
    sinc = np.sinc(z / np.pi)
    return (2.0 * np.pi) ** -1.5 * 4.0 * np.pi * (sinc * vals[None, :]).sum(axis=1)


def kinetic_constant(
    potential: RadialPotential,
    rtol: float = 1e-8,
    rho_max: float = 256.0,
    n_nodes: int = 128,
) -> KineticConstant:
    """B = pi^2 * int_0^inf phihat(rho)^2 rho^3 drho.

    The pi^2 normalization is calibrated against the force-autocorrelation
    oracle (transfer_matrix_oracle), which carries no transform convention.
    Integration proceeds over doubling segments until the tail is below rtol.
    """
    xg, wg = leggauss(n_nodes)
    total = 0.0
    lo, hi = 0.0, 4.0
    converged = False
    while hi <= rho_max:
        rho = 0.5 * (hi - lo) * (xg + 1.0) + lo
        w = 0.5 * (hi - lo) * wg
        ph = radial_fourier_transform(potential, rho)
        seg = float((ph * ph * rho**3 * w).sum())
        total += seg
        if total > 0 and abs(seg) <= rtol * abs(total):
            converged = True
            break
        lo, hi = hi, 2.0 * hi
    if not converged:
        raise AccuracyError(
            f"kinetic-constant quadrature tail above rtol={rtol} at rho_max={rho_max}"
        )
    return KineticConstant(value=math.pi**2 * total, potential_id=potential.name)


def transfer_matrix_oracle(
    potential: RadialPotential,
    U: np.ndarray,
    n_radial: int = 64,
    n_angle: int = 96,
    n_line: int = 128,
) -> TransferMatrix:
    """a(U) from the force autocorrelation along straight crossings.

    Uses the exact cylinder substitution: with G(xi) = int F(xi + tau Uhat) dtau
    over the chord, a(U) = (1/(2|U|)) * int_{plane perp U} G(xi) (x) G(xi) d^2 xi.
    Positive semidefinite by construction; no Fourier factors anywhere.
    """
    U = np.asarray(U, dtype=float)
    umag = float(np.linalg.norm(U))
    if umag <= 0:
        raise SingularRelativeVelocityError("oracle needs |U| > 0")
    rmax = potential.cutoff if math.isfinite(potential.cutoff) else 8.0
    uhat = U / umag
    e1 = np.zeros(3)
    e1[int(np.argmin(np.abs(uhat)))] = 1.0
    e1 = np.cross(uhat, e1)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(uhat, e1)

    xq, wq = leggauss(n_radial)
    q = 0.5 * rmax * (xq + 1.0)
    qw = 0.5 * rmax * wq
    theta = np.arange(n_angle) * (2.0 * np.pi / n_angle)
    tw = 2.0 * np.pi / n_angle
    xt, wt = leggauss(n_line)

    acc = np.zeros((3, 3))
    for qi, qwi in zip(q, qw):
        half = math.sqrt(max(rmax * rmax - qi * qi, 0.0))
        if half == 0.0:
            continue
        tau = half * xt
        tauw = half * wt
        xi = qi * (np.cos(theta)[:, None] * e1[None, :] + np.sin(theta)[:, None] * e2[None, :])
        pts = xi[:, None, :] + tau[None, :, None] * uhat[None, None, :]
        r = np.sqrt((pts * pts).sum(axis=2))
        with np.errstate(invalid="ignore", divide="ignore"):
            fac = np.where(r > 0, -potential.derivative(r) / np.where(r > 0, r, 1.0), 0.0)
        F = fac[:, :, None] * pts
        G = (F * tauw[None, :, None]).sum(axis=1)
        acc += qi * qwi * tw * np.einsum("ka,kb->ab", G, G)
    return TransferMatrix(acc / (2.0 * umag))


_FORCE_TABLE_N = 4097


if _HAVE_NUMBA:

    @_nb.njit(cache=True, parallel=True)
    def _transfer_kernel(y0, w0, g, c, dphi_tab, dr_tab, dmax, tau_max, base_dt):
        m = y0.shape[0]
        p_exit_w = np.empty((m, 3))
        captured = np.zeros(m, dtype=np.bool_)
        c2 = c * c
        for s in _nb.prange(m):
            gs = g[s]
            dt = min(base_dt, 0.2 / math.sqrt(gs * dmax / c + 1e-30))
            yx, yy_, yz = y0[s, 0], y0[s, 1], y0[s, 2]
            wx, wy, wz = w0[s, 0], w0[s, 1], w0[s, 2]
            t = 0.0
            while t < tau_max:
                # rk4 on (y, w); force from the tabulated radial derivative
                k1vx, k1vy, k1vz = _accel_tab(yx, yy_, yz, gs, dphi_tab, dr_tab)
                ax = yx + 0.5 * dt * wx
                ay = yy_ + 0.5 * dt * wy
                az = yz + 0.5 * dt * wz
                k2vx, k2vy, k2vz = _accel_tab(ax, ay, az, gs, dphi_tab, dr_tab)
                w2x = wx + 0.5 * dt * k1vx
                w2y = wy + 0.5 * dt * k1vy
                w2z = wz + 0.5 * dt * k1vz
                bx = yx + 0.5 * dt * w2x
                by = yy_ + 0.5 * dt * w2y
                bz = yz + 0.5 * dt * w2z
                k3vx, k3vy, k3vz = _accel_tab(bx, by, bz, gs, dphi_tab, dr_tab)
                w3x = wx + 0.5 * dt * k2vx
                w3y = wy + 0.5 * dt * k2vy
                w3z = wz + 0.5 * dt * k2vz
                cx = yx + dt * w3x
                cy = yy_ + dt * w3y
                cz = yz + dt * w3z
                k4vx, k4vy, k4vz = _accel_tab(cx, cy, cz, gs, dphi_tab, dr_tab)
                w4x = wx + dt * k3vx
                w4y = wy + dt * k3vy
                w4z = wz + dt * k3vz
                yx += (dt / 6.0) * (wx + 2 * w2x + 2 * w3x + w4x)
                yy_ += (dt / 6.0) * (wy + 2 * w2y + 2 * w3y + w4y)
                yz += (dt / 6.0) * (wz + 2 * w2z + 2 * w3z + w4z)
                wx += (dt / 6.0) * (k1vx + 2 * k2vx + 2 * k3vx + k4vx)
                wy += (dt / 6.0) * (k1vy + 2 * k2vy + 2 * k3vy + k4vy)
                wz += (dt / 6.0) * (k1vz + 2 * k2vz + 2 * k3vz + k4vz)
                t += dt
                if yx * yx + yy_ * yy_ + yz * yz >= c2:
                    break
            captured[s] = yx * yx + yy_ * yy_ + yz * yz < c2
            p_exit_w[s, 0] = wx
            p_exit_w[s, 1] = wy
            p_exit_w[s, 2] = wz
        return p_exit_w, captured

    @_nb.njit(cache=True, inline="always")
    def _accel_tab(x, y, z, g, dphi_tab, dr_tab):
        r = math.sqrt(x * x + y * y + z * z)
        nmax = dphi_tab.shape[0] - 1
        s = r / dr_tab
        i = int(s)
        if i >= nmax or r == 0.0:
            return 0.0, 0.0, 0.0
        fr = s - i
        dphi = dphi_tab[i] * (1.0 - fr) + dphi_tab[i + 1] * fr
        fac = -g * dphi / r
        return fac * x, fac * y, fac * z


def _force_table(potential: RadialPotential) -> tuple[np.ndarray, float]:
    c = potential.cutoff
    r = np.linspace(0.0, c, _FORCE_TABLE_N)
    return potential.derivative(r), c / (_FORCE_TABLE_N - 1)


def _transfer_batch(
    potential: RadialPotential,
    epsilon: float,
    U: np.ndarray,
    n: np.ndarray,
    tau_max: float = 100.0,
    base_steps: int = 480,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Scaled reduced scattering for a batch of entries.

    Returns (p, captured, max_energy_error).  The reduced relative coordinate
    obeys y'' = -g phi'(|y|) yhat with g = 2 sqrt(eps) / |U|^2, entering at
    y = cutoff * n with y' = -Uhat; the trajectory stops at the first step
    outside the support (the force vanishes there, freezing the exit velocity).
    Both execution paths read phi' from the same dense radial table.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n = np.atleast_2d(np.asarray(n, dtype=float))
    m = U.shape[0]
    c = potential.cutoff
    umag = np.linalg.norm(U, axis=1)
    if np.any(umag <= 0):
        raise InvalidParameterError("two-body transfer needs |U| > 0")
    if np.any((n * U).sum(axis=1) <= 0):
        raise InvalidParameterError("entry requires the incoming condition n.U > 0")
    uhat = U / umag[:, None]
    g = 2.0 * math.sqrt(epsilon) / umag**2

    dphi_tab, dr_tab = _force_table(potential)
    dmax = float(np.abs(dphi_tab).max())
    y = c * n.astype(float)
    w = -uhat

    if _HAVE_NUMBA and m >= 8:
        w_exit, captured = _transfer_kernel(
            y, w, g, c, dphi_tab, dr_tab, dmax, tau_max, c / base_steps
        )
    else:
        w_exit = w.copy()
        y_cur = y.copy()
        captured = np.zeros(m, dtype=bool)

        def accel(yy, gg):
            r = np.sqrt((yy * yy).sum(axis=1))
            dphi = np.interp(r, np.arange(_FORCE_TABLE_N) * dr_tab, dphi_tab, right=0.0)
            safe = np.where(r > 0, r, 1.0)
            return (-gg * dphi / safe)[:, None] * yy

        for s in range(m):
            gs = g[s : s + 1]
            dt = min(c / base_steps, 0.2 / math.sqrt(g[s] * dmax / c + 1e-30))
            ys = y_cur[s : s + 1].copy()
            ws = w_exit[s : s + 1].copy()
            t = 0.0
            while t < tau_max:
                k1v = accel(ys, gs)
                k2v = accel(ys + 0.5 * dt * ws, gs)
                w2 = ws + 0.5 * dt * k1v
                k3v = accel(ys + 0.5 * dt * w2, gs)
                w3 = ws + 0.5 * dt * k2v
                k4v = accel(ys + dt * w3, gs)
                w4 = ws + dt * k3v
                ys = ys + (dt / 6.0) * (ws + 2 * w2 + 2 * w3 + w4)
                ws = ws + (dt / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
                t += dt
                if float((ys * ys).sum()) >= c * c:
                    break
            captured[s] = float((ys * ys).sum()) < c * c
            w_exit[s] = ws[0]

    speed2 = (w_exit * w_exit).sum(axis=1)
    ok = ~captured
    max_err = float(np.abs(speed2[ok] - 1.0).max()) if ok.any() else 0.0
    p = -0.5 * (umag[:, None] * w_exit + U)
    p[captured] = np.nan
    return p, captured, max_err


def two_body_transfer(
    potential: RadialPotential,
    epsilon: float,
    U: np.ndarray,
    n: np.ndarray,
    tau_max: float = 100.0,
    energy_rtol: float = 1e-8,
) -> np.ndarray:
    """Total transferred momentum p of one reduced two-body crossing.

    p enters the collision update as v -> v + p, v1 -> v1 - p; exact energy
    conservation of the reduced problem is equivalent to p.U = -|p|^2.
    """
    if not math.isfinite(potential.cutoff):
        raise InvalidParameterError("two-body transfer needs a compactly supported potential")
    p, captured, err = _transfer_batch(
        potential, epsilon, np.asarray(U)[None, :], np.asarray(n)[None, :], tau_max=tau_max
    )
    if captured[0]:
        raise CaptureError(f"no exit from the interaction ball within tau_max={tau_max}")
    if err > energy_rtol:
        raise AccuracyError(f"reduced-energy error {err:.3g} above {energy_rtol}")
    return p[0]


@dataclass(frozen=True)
class TestFunction:
    """Velocity test function with analytic derivatives (polynomial x Gaussian class)."""

    fn: callable
    grad: callable
    hess: callable
    name: str = "u"


def tf_quadratic(Q: np.ndarray, name: str = "quadratic") -> TestFunction:
    """u(v) = v . Q v for a symmetric 3x3 Q."""
    Q = 0.5 * (np.asarray(Q, dtype=float) + np.asarray(Q, dtype=float).T)

    return TestFunction(
        fn=lambda v: np.einsum("...a,ab,...b->...", v, Q, v),
        grad=lambda v: 2.0 * np.einsum("ab,...b->...a", Q, v),
        hess=lambda v: np.broadcast_to(2.0 * Q, np.shape(v)[:-1] + (3, 3)),
        name=name,
    )


TF_ONE = TestFunction(
    fn=lambda v: np.ones(np.shape(v)[:-1]),
    grad=lambda v: np.zeros(np.shape(v)),
    hess=lambda v: np.zeros(np.shape(v)[:-1] + (3, 3)),
    name="1",
)

TF_VX = TestFunction(
    fn=lambda v: np.asarray(v)[..., 0],
    grad=lambda v: np.broadcast_to(np.array([1.0, 0.0, 0.0]), np.shape(v)).copy(),
    hess=lambda v: np.zeros(np.shape(v)[:-1] + (3, 3)),
    name="v_x",
)

TF_SPEED2 = tf_quadratic(np.eye(3), name="|v|^2")
TF_VX2 = tf_quadratic(np.diag([1.0, 0.0, 0.0]), name="v_x^2")
TF_VXVY = tf_quadratic(np.array([[0.0, 0.5, 0.0], [0.5, 0.0, 0.0], [0.0, 0.0, 0.0]]), name="v_x v_y")


def _hemisphere_rule(w: np.ndarray, n_cos: int, n_phi: int) -> tuple[np.ndarray, np.ndarray]:
    """Product rule for int_{S+} dn with S+ = {n: w.n >= 0}, frame-aligned with w.

    Returns nodes (K, n_cos*n_phi, 3) and weights (n_cos*n_phi,) so that
    sum_k W_k F(n_k) ~ int_0^1 dc int_0^2pi dphi F(n(c, phi)).
    """
    w = np.atleast_2d(w)
    wmag = np.linalg.norm(w, axis=1)
    what = w / np.where(wmag > 0, wmag, 1.0)[:, None]
    helper = np.zeros_like(what)
    helper[np.arange(len(w)), np.argmin(np.abs(what), axis=1)] = 1.0
    e1 = np.cross(what, helper)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(what, e1)

    xc, wc = leggauss(n_cos)
    cos = 0.5 * (xc + 1.0)
    cw = 0.5 * wc
    phi = np.arange(n_phi) * (2.0 * np.pi / n_phi)
    pw = 2.0 * np.pi / n_phi
    sin = np.sqrt(1.0 - cos**2)

    # (K, n_cos, n_phi, 3)
    nodes = (
        cos[None, :, None, None] * what[:, None, None, :]
        + (sin[None, :, None, None] * np.cos(phi)[None, None, :, None]) * e1[:, None, None, :]
        + (sin[None, :, None, None] * np.sin(phi)[None, None, :, None]) * e2[:, None, None, :]
    )
    weights = np.repeat(cw, n_phi) * pw
    return nodes.reshape(len(w), -1, 3), weights


@dataclass
class GrazingEstimate:
    """Monte Carlo weak-form estimate with its uncertainty and diagnostics."""

    value: float
    standard_error: float
    n_samples: int
    n_captured: int
    sample_values: np.ndarray = field(repr=False, default=None)


@dataclass
class TransferTable:
    """Per-pair hemisphere rule and transferred momenta for one epsilon.

    Building the table is the expensive part (a reduced scattering ODE per
    rule node); evaluating different test functions against it is cheap.
    """

    epsilon: float
    v: np.ndarray
    v1: np.ndarray
    keep: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    p: np.ndarray
    captured: np.ndarray
    n_captured: int


def grazing_transfer_table(
    potential: RadialPotential,
    epsilon: float,
    v: np.ndarray,
    v1: np.ndarray,
    n_cos: int = 8,
    n_phi: int = 8,
    max_capture_frac: float = 0.01,
) -> TransferTable:
    """Integrate every (pair, impact-vector) crossing once for this epsilon."""
    w = v - v1
    wmag = np.linalg.norm(w, axis=1)
    keep = wmag > 1e-12
    nodes, weights = _hemisphere_rule(w[keep], n_cos, n_phi)
    kq = nodes.shape[1]
    nk = int(keep.sum())
    flat_U = np.repeat(w[keep], kq, axis=0)
    p, captured, _ = _transfer_batch(potential, epsilon, flat_U, nodes.reshape(-1, 3))
    n_captured = int(captured.sum())
    if n_captured > max_capture_frac * len(flat_U):
        raise UnreliableEstimateError(
            f"capture rate {n_captured / len(flat_U):.3%} above {max_capture_frac:.0%}"
        )
    p = np.where(captured[:, None], 0.0, p).reshape(nk, kq, 3)
    return TransferTable(
        epsilon, v, v1, keep, nodes, weights, p, captured.reshape(nk, kq), n_captured
    )


def grazing_estimate_from_table(table: TransferTable, u: TestFunction) -> GrazingEstimate:
    """<u, Q_B^eps(f,f)> evaluated against a precomputed transfer table."""
    v, v1, keep = table.v, table.v1, table.keep
    kq = table.nodes.shape[1]
    w = (v - v1)[keep]
    vk = np.repeat(v[keep][:, None, :], kq, axis=1)
    v1k = np.repeat(v1[keep][:, None, :], kq, axis=1)
    du = u.fn(vk + table.p) + u.fn(v1k - table.p) - u.fn(vk) - u.fn(v1k)
    du = np.where(table.captured, 0.0, du)
    proj = np.einsum("kqa,ka->kq", table.nodes, w)
    per_pair = (table.weights[None, :] * proj * du).sum(axis=1) / (2.0 * table.epsilon)
    vals = np.zeros(len(v))
    vals[keep] = per_pair
    mean = float(vals.mean())
    n = len(v)
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return GrazingEstimate(mean, se, n, int(table.captured.sum()), sample_values=vals)


def grazing_weak_form(
    potential: RadialPotential,
    epsilon: float,
    f,
    u: TestFunction,
    samples: int,
    rng: np.random.Generator,
    n_cos: int = 8,
    n_phi: int = 8,
    max_capture_frac: float = 0.01,
    pair_samples: tuple[np.ndarray, np.ndarray] | None = None,
) -> GrazingEstimate:
    """Monte Carlo estimate of <u, Q_B^eps(f, f)>.

    (v, v1) pairs are drawn from f (a velocity law or a VelocityGrid); the
    impact-vector integral uses a fixed hemisphere rule per pair so that the
    estimate at different epsilon values can share random numbers exactly.
    Pass `pair_samples` to reuse previously drawn pairs.
    """
    from . import landau as _landau
    from . import sampling as _sampling

    if pair_samples is not None:
        v, v1 = pair_samples
    elif isinstance(f, _landau.VelocityGrid):
        v = f.sample(samples, rng)
        v1 = f.sample(samples, rng)
    else:
        v = _sampling.sample_velocity(f, rng, size=samples)
        v1 = _sampling.sample_velocity(f, rng, size=samples)

    table = grazing_transfer_table(
        potential, epsilon, v, v1, n_cos=n_cos, n_phi=n_phi, max_capture_frac=max_capture_frac
    )
    return grazing_estimate_from_table(table, u)


def landau_weak_reference(
    B: KineticConstant,
    v: np.ndarray,
    v1: np.ndarray,
    u: TestFunction,
) -> GrazingEstimate:
    """<u, Q_L(f,f)> estimated on the same (v, v1) pairs as the weak form.

    Per-sample integrand: drift(U).(grad u(v) - grad u(v1))
    + (1/2) a(U) : (D2 u(v) + D2 u(v1)), symmetrized in the pair exchange.
    """
    v = np.atleast_2d(v)
    v1 = np.atleast_2d(v1)
    U = v - v1
    umag = np.linalg.norm(U, axis=1)
    keep = umag > 1e-12
    Uk = U[keep]
    uk = umag[keep]
    uhat = Uk / uk[:, None]

    dgrad = u.grad(v[keep]) - u.grad(v1[keep])
    drift = -2.0 * B.value * Uk / uk[:, None] ** 3
    first = (drift * dgrad).sum(axis=1)

    hsum = 0.5 * (u.hess(v[keep]) + u.hess(v1[keep]))
    tr_h = np.trace(hsum, axis1=1, axis2=2)
    quad = np.einsum("ka,kab,kb->k", uhat, hsum, uhat)
    second = (B.value / uk) * (tr_h - quad)

    vals = np.zeros(len(v))
    vals[keep] = first + second
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.inf
    return GrazingEstimate(mean, se, len(v), 0, sample_values=vals)
