import csv
import math

import numpy as np
from kinlim.landau import grid_from_law

from kinlim import DiagnosticsRecord, MaxwellianParams, maxwellian_grid
from kinlim.report import (
    DIAGNOSTICS_COLUMNS,
    compare_report,
    write_csv,
    write_diagnostics_csv,
    write_grid_csv,
)


def test_diagnostics_csv_schema_and_round_trip(tmp_path):
    records = [
        DiagnosticsRecord(
            time=0.5,
            mass=1.0,
            momentum=(0.1, -0.2, 0.0),
            energy=3.0,
            h_value=-1.5,
            h_bias=0.001,
            h_se=0.003,
            maxwellian_l1=0.04,
            n_events=42,
        ),
        DiagnosticsRecord(time=1.0, mass=1.0, momentum=(0, 0, 0), energy=3.0),
    ]
    path = tmp_path / "diag.csv"
    write_diagnostics_csv(path, records)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0].keys()) == DIAGNOSTICS_COLUMNS
    assert float(rows[0]["time"]) == 0.5
    assert float(rows[0]["px"]) == 0.1
    assert int(rows[0]["n_events"]) == 42
    # not-computed entries serialize as empty cells
    assert rows[1]["h"] == ""
    assert "\r" not in path.read_bytes().decode()


def test_grid_snapshot_csv(tmp_path):
    g = maxwellian_grid(MaxwellianParams(beta=1.0), 5, 2.0)
    path = tmp_path / "grid.csv"
    write_grid_csv(path, g)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 125
    assert set(rows[0]) == {"vx", "vy", "vz", "f"}
    assert float(rows[0]["vx"]) == -2.0
    # mass reconstructed from the snapshot matches the grid
    total = sum(float(r["f"]) for r in rows) * g.h**3
    assert math.isclose(total, g.mass(), rel_tol=1e-12)


def test_compare_dsmc_vs_qb_driven_moment_trajectories(tmp_path):
    """DSMC moments vs an RK2-on-quadrature trajectory at matching times."""
    from kinlim import dsmc_collision_step, make_homogeneous_state, two_beam_mixture
    from kinlim.diagnostics import moments
    from kinlim.dsmc import qb_quadrature_grid
    from kinlim.landau import VelocityGrid, grid_from_law
    from kinlim.rng import stream
    from kinlim.sampling import sample_velocity

    law = two_beam_mixture(1.0, 4.0)
    n_checks, dt, sub = 3, 0.05, 2

    # particle side
    rng = stream(91, 0)
    state = make_homogeneous_state(sample_velocity(law, rng, size=40_000), 1.0)
    rows_a = []
    for k in range(n_checks + 1):
        mass, mom, ene = moments(state.velocities)
        rows_a.append((k * dt, mass, mom[0], mom[1], mom[2], ene))
        if k < n_checks:
            for _ in range(sub):
                state = dsmc_collision_step(state, dt / sub, rng)

    # kinetic side: explicit RK2 on the direct collision-operator quadrature
    f = grid_from_law(law, 9, 3.5).normalized()
    rows_b = []
    for k in range(n_checks + 1):
        mass, mom, ene = moments(f)
        rows_b.append((k * dt, mass, mom[0], mom[1], mom[2], ene))
        if k < n_checks:
            q1 = qb_quadrature_grid(f, 1.0, n_cos=5, n_phi=4).values
            mid = VelocityGrid(f.v_max, f.values + dt * q1, density=False)
            q2 = qb_quadrature_grid(mid, 1.0, n_cos=5, n_phi=4).values
            f = VelocityGrid(f.v_max, f.values + 0.5 * dt * (q1 + q2))

    header = ("t", "mass", "px", "py", "pz", "energy")
    path_a = tmp_path / "dsmc_moments.csv"
    path_b = tmp_path / "qb_moments.csv"
    write_csv(path_a, header, rows_a)
    write_csv(path_b, header, rows_b)

    # combined tolerance: the quadrature's own moment defect integrated over
    # the horizon (measured at t=0) plus MC noise on the particle side
    f0 = grid_from_law(law, 9, 3.5).normalized()
    q0 = qb_quadrature_grid(f0, 1.0, n_cos=5, n_phi=4)
    dm, dp, de = moments(q0)
    horizon = n_checks * dt
    mc = 0.02
    tols = {
        "mass": 2.5 * abs(dm) * horizon + mc,
        "px": 2.5 * float(np.abs(dp).max()) * horizon + mc,
        "py": 2.5 * float(np.abs(dp).max()) * horizon + mc,
        "pz": 2.5 * float(np.abs(dp).max()) * horizon + mc,
        "energy": 2.5 * abs(de) * horizon + mc,
    }
    report = compare_report(path_a, path_b, columns=list(tols))
    for col in report.columns:
        assert col.max_deviation <= tols[col.column], (col.column, col.max_deviation, tols)


def test_write_csv_headers_only(tmp_path):
    path = tmp_path / "empty.csv"
    write_csv(path, ("a", "b"), [])
    assert path.read_text() == "a,b\n"
