"""Event-driven hard-sphere dynamics.

Free flight plus instantaneous elastic collisions at distance epsilon, on a
torus or in free space.  Scheduling uses a priority queue with lazy
invalidation via per-particle version stamps; contact prediction considers
periodic images within one box period and is valid up to a moving horizon
(L - eps) / w_cap, after which all pairs are re-predicted.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InconsistentStateError,
    InvalidParameterError,
    RunawayCollisionsError,
)
from .state import (
    Domain,
    FreeSpace,
    Mode,
    ParticleEnsemble,
    PeriodicBox,
    minimal_image,
    wrap_positions,
)

_OFFSETS_UNIT = np.array(
    [[i, j, k] for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)],
    dtype=float,
)

_OFFSETS_SQ = (_OFFSETS_UNIT * _OFFSETS_UNIT).sum(axis=1)


def elastic_collide(v: np.ndarray, v1: np.ndarray, n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elastic exchange of the normal velocity component.

    v' = v - n [n.(v - v1)], v1' = v1 + n [n.(v - v1)]; requires |n| = 1 and
    the incoming condition n.(v - v1) >= 0.
    """
    v = np.asarray(v, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    n = np.asarray(n, dtype=float)
    if abs(float(n @ n) - 1.0) > 1e-12:
        raise InvalidParameterError("impact vector must be a unit vector")
    g = float(n @ (v - v1))
    if g < -1e-12 * (np.linalg.norm(v - v1) + 1e-300):
        raise InvalidParameterError("pair is not incoming: n.(v - v1) < 0")
    d = n * g
    return v - d, v1 + d


def _contact_times(
    r: np.ndarray,
    u: np.ndarray,
    eps: float,
    box_side: float | None,
    t_cap: float,
    g_tol: float,
) -> np.ndarray:
    """Earliest contact time per candidate pair, inf where none.

    r, u are (K, 3) raw relative positions/velocities; box_side enables the 27
    periodic images within one box period (None for free space).  Only roots
    with inward approach speed above g_tol and 0 < t <= t_cap count.  The
    stable root form c / (sqrt(disc) - b) avoids cancellation at eps << |r|.
    """
    r = np.atleast_2d(r)
    u = np.atleast_2d(u)
    a = (u * u).sum(axis=1)
    ru = (r * u).sum(axis=1)
    rr = (r * r).sum(axis=1)
    eps2 = eps * eps

    if box_side is None:
        b = ru[None, :]
        c = (rr - eps2)[None, :]
    else:
        L = box_side
        b = ru[None, :] + (_OFFSETS_UNIT * L) @ u.T
        c = rr[None, :] + 2.0 * ((_OFFSETS_UNIT * L) @ r.T) + (_OFFSETS_SQ * L * L)[:, None] - eps2

    disc = b * b - a[None, :] * c
    ok = (b < 0) & (disc > 0)
    sq = np.sqrt(np.where(ok, disc, 1.0))
    t = c / (sq - b)
    ok &= (sq > g_tol * eps) & (t > 0) & (t <= t_cap)
    return np.where(ok, t, np.inf).min(axis=0)


def next_contact_time(
    x: np.ndarray,
    v: np.ndarray,
    x1: np.ndarray,
    v1: np.ndarray,
    epsilon: float,
    box: Domain,
) -> tuple[float, np.ndarray] | None:
    """Earliest future contact of one pair, or None.

    Periodic images within one box period are considered.  Returns (t, n) with
    n the unit impact vector from the first particle's center to the second's
    at contact.
    """
    x = np.asarray(x, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    v = np.asarray(v, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    sep = np.linalg.norm(minimal_image(x1 - x, box))
    if sep < epsilon * (1 - 1e-9):
        raise InconsistentStateError(
            f"overlapping input: separation {sep:.17g} < epsilon {epsilon}"
        )
    r = (x1 - x)[None, :]
    u = (v1 - v)[None, :]
    offsets = None if isinstance(box, FreeSpace) else _OFFSETS_UNIT * box.side
    if offsets is None:
        cand = _contact_times(r, u, epsilon, None, np.inf, 0.0)
        best_t = float(cand[0])
        best_off = np.zeros(3)
    else:
        best_t = np.inf
        best_off = None
        for off in offsets:
            t = float(_contact_times(r + off, u, epsilon, None, np.inf, 0.0)[0])
            if t < best_t:
                best_t, best_off = t, off
    if not np.isfinite(best_t):
        return None
    n = (r[0] + best_off + u[0] * best_t) / epsilon
    n = n / np.linalg.norm(n)
    return best_t, n


@dataclass(frozen=True)
class CollisionEvent:
    """A scheduled or executed contact of pair (i, j), i < j."""

    pair: tuple[int, int]
    time: float
    impact_vector: np.ndarray
    stamp: tuple[int, int] = (0, 0)

    def __post_init__(self):
        i, j = self.pair
        if not (0 <= i < j):
            raise InvalidParameterError("pair must satisfy 0 <= i < j")
        n = np.asarray(self.impact_vector, dtype=float)
        if abs(float(n @ n) - 1.0) > 1e-12:
            raise InvalidParameterError("impact vector must be a unit vector")
        object.__setattr__(self, "impact_vector", n)


class EventQueue:
    """Time-ordered pending events with per-particle version stamps.

    Events are never deleted; a popped entry is discarded as stale exactly when
    either particle's stamp has advanced since the push.
    """

    def __init__(self, n_particles: int):
        self._heap: list[tuple[float, int, int, int, int]] = []
        self.stamps = np.zeros(n_particles, dtype=np.int64)
        self._last_popped = -math.inf

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: float, i: int, j: int) -> None:
        if i > j:
            i, j = j, i
        heapq.heappush(self._heap, (time, i, j, int(self.stamps[i]), int(self.stamps[j])))

    def invalidate(self, i: int) -> None:
        self.stamps[i] += 1

    def clear(self) -> None:
        self._heap.clear()

    def next_time(self) -> float:
        return self._heap[0][0] if self._heap else math.inf

    def pop_valid(self, t_max: float = math.inf) -> tuple[float, int, int] | None:
        """Pop the earliest non-stale event with time <= t_max, else None."""
        heap = self._heap
        while heap and heap[0][0] <= t_max:
            t, i, j, si, sj = heapq.heappop(heap)
            if t < self._last_popped:
                raise InconsistentStateError("event queue returned events out of order")
            self._last_popped = t
            if si == self.stamps[i] and sj == self.stamps[j]:
                return t, i, j
        return None


@dataclass
class EventLog:
    """Executed collisions of one evolve call, in execution order."""

    times: np.ndarray
    pairs: np.ndarray
    normals: np.ndarray
    n_grazing: int = 0
    n_resyncs: int = 0

    @property
    def n_events(self) -> int:
        return len(self.times)

    def __iter__(self):
        for k in range(self.n_events):
            yield CollisionEvent(
                pair=(int(self.pairs[k, 0]), int(self.pairs[k, 1])),
                time=float(self.times[k]),
                impact_vector=self.normals[k],
            )


class _Scheduler:
    def __init__(self, ensemble: ParticleEnsemble, grazing_tol: float, horizon_margin: float):
        self.x = np.array(ensemble.positions)
        self.v = np.array(ensemble.velocities)
        self.n = ensemble.n_particles
        self.eps = ensemble.epsilon
        self.box = ensemble.box
        self.periodic = isinstance(ensemble.box, PeriodicBox)
        self.box_side = ensemble.box.side if self.periodic else None
        self.t = 0.0
        self.g_tol = grazing_tol
        self.margin = horizon_margin
        self.queue = EventQueue(self.n)
        self.pred_time = np.full(self.n, np.inf)
        self.pred_partner = np.full(self.n, -1, dtype=np.int64)
        self.horizon_end = 0.0
        self.w_cap = np.inf
        self.n_resyncs = 0
        # pairs whose last contact was a grazing no-op, keyed to the stamps at
        # that moment: they are not re-scheduled until either particle changes
        self.graze_skip: dict[tuple[int, int], tuple[int, int]] = {}
        if self.periodic and self.eps >= ensemble.box.side:
            raise InvalidParameterError("sphere diameter must be smaller than the box side")

    def _advance_to(self, t_new: float) -> None:
        dt = t_new - self.t
        if dt > 0:
            self.x += self.v * dt
            if self.periodic:
                np.mod(self.x, self.box.side, out=self.x)
        self.t = t_new

    def _rows(self, ks: list[int]) -> np.ndarray:
        """Absolute contact times of each listed particle against everyone.

        Returns (len(ks), N); the self entry is inf.  Batched into one solver
        call to keep per-event overhead flat.
        """
        ks = list(ks)
        r = (self.x[None, :, :] - self.x[ks][:, None, :]).reshape(-1, 3)
        u = (self.v[None, :, :] - self.v[ks][:, None, :]).reshape(-1, 3)
        t = _contact_times(r, u, self.eps, self.box_side, self.horizon_end - self.t, 0.0)
        t = t.reshape(len(ks), self.n) + self.t
        for row, k in enumerate(ks):
            t[row, k] = np.inf
        if self.graze_skip:
            self._apply_graze_skip_rows(ks, t)
        return t

    def _apply_graze_skip_rows(self, ks: list[int], t: np.ndarray) -> None:
        stamps = self.queue.stamps
        stale = []
        for (a, b), (sa, sb) in self.graze_skip.items():
            if stamps[a] != sa or stamps[b] != sb:
                stale.append((a, b))
                continue
            for row, k in enumerate(ks):
                if k == a:
                    t[row, b] = np.inf
                elif k == b:
                    t[row, a] = np.inf
        for key in stale:
            del self.graze_skip[key]

    def _set_pred_from_row(self, k: int, row: np.ndarray) -> None:
        p = int(np.argmin(row))
        if np.isfinite(row[p]):
            self.pred_time[k] = row[p]
            self.pred_partner[k] = p
            self.queue.push(row[p], k, p)
        else:
            self.pred_time[k] = np.inf
            self.pred_partner[k] = -1

    def resync(self, t_end: float) -> None:
        self.n_resyncs += 1
        speeds2 = (self.v**2).sum(axis=1)
        if self.periodic and self.n >= 2 and speeds2.max() > 0:
            L = self.box.side
            top2 = np.partition(speeds2, self.n - 2)[-2:]
            self.top_speed = math.sqrt(float(top2[1]))
            # pair relative speed is bounded by the sum of the two top speeds
            self.w_cap = (math.sqrt(float(top2[0])) + self.top_speed) * self.margin
            self.horizon_end = min(self.t + (L - self.eps) / self.w_cap, t_end)
        else:
            self.top_speed = math.inf
            self.w_cap = np.inf
            self.horizon_end = t_end
        self.queue.clear()
        self.pred_time.fill(np.inf)
        self.pred_partner.fill(-1)
        if self.n < 2:
            return
        i_idx, j_idx = np.triu_indices(self.n, k=1)
        t_rel = _contact_times(
            self.x[j_idx] - self.x[i_idx],
            self.v[j_idx] - self.v[i_idx],
            self.eps,
            self.box_side,
            self.horizon_end - self.t,
            0.0,
        )
        tmat = np.full((self.n, self.n), np.inf)
        tmat[i_idx, j_idx] = t_rel
        tmat[j_idx, i_idx] = t_rel
        if self.graze_skip:
            stamps = self.queue.stamps
            for (a, b), (sa, sb) in list(self.graze_skip.items()):
                if stamps[a] == sa and stamps[b] == sb:
                    tmat[a, b] = tmat[b, a] = np.inf
                else:
                    del self.graze_skip[(a, b)]
        tmin = tmat.min(axis=1)
        pmin = tmat.argmin(axis=1)
        finite = np.isfinite(tmin)
        self.pred_time[finite] = tmin[finite] + self.t
        self.pred_partner[finite] = pmin[finite]
        for k in np.nonzero(finite)[0]:
            self.queue.push(self.pred_time[k], int(k), int(self.pred_partner[k]))

    def after_collision(self, i: int, j: int) -> None:
        """Refresh predictions touched by a velocity change of pair (i, j)."""
        retarget = [
            int(a)
            for a in np.nonzero((self.pred_partner == i) | (self.pred_partner == j))[0]
            if a != i and a != j
        ]
        rows = self._rows([i, j] + retarget)
        self._set_pred_from_row(i, rows[0])
        self._set_pred_from_row(j, rows[1])
        for row, a in zip(rows[2:], retarget):
            self._set_pred_from_row(a, row)
        # contacts with the two movers may now precede other particles' entries
        cand = np.minimum(rows[0], rows[1])
        for a in np.nonzero(cand < self.pred_time)[0]:
            a = int(a)
            if a == i or a == j:
                continue
            p = i if rows[0][a] <= rows[1][a] else j
            self.pred_time[a] = cand[a]
            self.pred_partner[a] = p
            self.queue.push(cand[a], a, p)
        # a collision can raise the top speed past the horizon assumption
        s_new = math.sqrt(max(float(self.v[i] @ self.v[i]), float(self.v[j] @ self.v[j])))
        if self.periodic and s_new + self.top_speed > self.w_cap:
            self.horizon_end = self.t


def evolve(
    ensemble: ParticleEnsemble,
    duration: float,
    *,
    max_events: int | None = None,
    check_interval: int = 0,
    trace_path=None,
    grazing_tol_factor: float = 1e-12,
    horizon_margin: float = 1.1,
) -> tuple[ParticleEnsemble, EventLog]:
    """Advance a hard-sphere ensemble by event-driven integration.

    Returns the final state and the log of executed collisions.  Grazing
    contacts with normal approach speed below grazing_tol_factor * v_rms are
    executed as no-ops and counted.  check_interval > 0 re-validates the
    hard-core invariant by brute force every that many events.
    """
    if ensemble.mode is not Mode.HARD_SPHERE:
        raise InvalidParameterError("evolve requires a hard-sphere ensemble")
    if duration < 0:
        raise InvalidParameterError("duration must be nonnegative")
    ensemble.validate(overlap_tol=1e-9 * ensemble.epsilon)
    n = ensemble.n_particles
    if max_events is None:
        max_events = 50_000 + 2_000 * n
    g_tol = grazing_tol_factor * (ensemble.v_rms() if n else 0.0)

    sched = _Scheduler(ensemble, g_tol, horizon_margin)
    times: list[float] = []
    pairs: list[tuple[int, int]] = []
    normals: list[np.ndarray] = []
    n_grazing = 0

    trace_file = open(trace_path, "w", newline="") if trace_path is not None else None
    if trace_file is not None:
        trace_file.write("time,i,j,nx,ny,nz\n")
    try:
        t_end = duration
        sched.horizon_end = 0.0
        executed = 0
        while True:
            ev = sched.queue.pop_valid(sched.horizon_end)
            if ev is None:
                sched._advance_to(min(sched.horizon_end, t_end))
                if sched.t >= t_end:
                    break
                sched.resync(t_end)
                continue
            t_ev, i, j = ev
            sched._advance_to(t_ev)
            r = minimal_image(sched.x[j] - sched.x[i], sched.box)
            dist = float(np.linalg.norm(r))
            if abs(dist - sched.eps) > 1e-9 * sched.eps:
                raise InconsistentStateError(
                    f"pair ({i},{j}) executed at distance {dist:.17g}, expected {sched.eps}"
                )
            nvec = r / dist
            g = float(nvec @ (sched.v[i] - sched.v[j]))
            sched.queue.invalidate(i)
            sched.queue.invalidate(j)
            if g < g_tol:
                n_grazing += 1
                sched.graze_skip[(i, j)] = (
                    int(sched.queue.stamps[i]),
                    int(sched.queue.stamps[j]),
                )
            else:
                d = nvec * g
                sched.v[i] -= d
                sched.v[j] += d
                executed += 1
                if executed > max_events:
                    raise RunawayCollisionsError(
                        f"exceeded max_events={max_events} at t={sched.t:.6g} "
                        f"(suspected numerical Zeno)"
                    )
                times.append(t_ev)
                pairs.append((i, j))
                normals.append(nvec)
                if trace_file is not None:
                    trace_file.write(
                        f"{float(t_ev)!r},{i},{j},"
                        f"{float(nvec[0])!r},{float(nvec[1])!r},{float(nvec[2])!r}\n"
                    )
                if check_interval and executed % check_interval == 0:
                    _spot_check(sched)
            sched.after_collision(i, j)
    finally:
        if trace_file is not None:
            trace_file.close()

    log = EventLog(
        times=np.array(times, dtype=float),
        pairs=np.array(pairs, dtype=np.int64).reshape(-1, 2),
        normals=np.array(normals, dtype=float).reshape(-1, 3),
        n_grazing=n_grazing,
        n_resyncs=sched.n_resyncs,
    )
    out = ensemble.with_state(positions=sched.x, velocities=sched.v)
    return out, log


def _spot_check(sched: _Scheduler) -> None:
    i, j = np.triu_indices(sched.n, k=1)
    d = minimal_image(sched.x[i] - sched.x[j], sched.box)
    dmin = math.sqrt(float((d * d).sum(axis=1).min()))
    if dmin < sched.eps * (1 - 1e-9):
        raise InconsistentStateError(
            f"hard-core invariant violated at t={sched.t}: min distance {dmin:.17g}"
        )


def reverse_test(ensemble: ParticleEnsemble, duration: float, **evolve_kwargs) -> float:
    """Forward run, velocity flip, backward run, flip again; max state deviation."""
    fwd, _ = evolve(ensemble, duration, **evolve_kwargs)
    flipped = fwd.with_state(velocities=-fwd.velocities)
    back, _ = evolve(flipped, duration, **evolve_kwargs)
    final = back.with_state(velocities=-back.velocities)
    dx = minimal_image(final.positions - ensemble.positions, ensemble.box)
    dv = final.velocities - ensemble.velocities
    return float(max(np.abs(dx).max(), np.abs(dv).max()))
