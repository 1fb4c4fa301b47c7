import math

import numpy as np
import pytest

from biot_cgp.assembly import build_operators
from biot_cgp.errors import (
    COLUMNS,
    ErrorReport,
    ErrorRow,
    broken_grad_error,
    eoc,
    linf_l2_error,
    measure_errors,
)
from biot_cgp.mesh import unit_square_mesh
from biot_cgp.mms import ManufacturedSolution, default_parameters
from biot_cgp.timestepping import FieldSources, SlabState, TimeMesh, Trajectory, initial_state, run
from biot_cgp.quadrature import gauss_lobatto_rule

# ||grad phi||_{L2}^2 = 2 (int a'^2)(int a^2) = 2 (2/105)(1/630)
PROFILE_NORM = math.sqrt(4 / 66150)


def test_eoc_examples():
    assert eoc([4.0, 1.0]) == [pytest.approx(2.0)]
    assert eoc([2.781e-3, 7.373e-4])[0] == pytest.approx(1.92, abs=5e-3)
    assert eoc([9.725e-4, 1.446e-4])[0] == pytest.approx(2.75, abs=5e-3)
    with pytest.raises(ValueError):
        eoc([1.0])
    with pytest.raises(ValueError):
        eoc([1.0, 0.0])
    with pytest.raises(ValueError):
        eoc([1.0, -2.0])


@pytest.fixture(scope="module")
def ops():
    return build_operators(unit_square_mesh(5), 1, default_parameters())


def trajectory_from(ops, field_fn, k=1, T=1.0, n=10):
    """Trajectory whose nodes interpolate field_fn(x, y, t) (a BDM-valued u) at GL times."""
    tm = TimeMesh.uniform(T, n)
    V = ops.vspace
    slabs = []
    for i in range(n):
        nodes = np.zeros((k + 1, 3 * ops.nv + ops.np_))
        for j, t in enumerate(tm.gl_times(i, k)):
            nodes[j, :ops.nv] = V.restrict(V.interpolate(lambda x, y: field_fn(x, y, t)))
        slabs.append(SlabState(i, tm.boundaries[i], tm.taus[i], nodes, ops.nv, ops.np_))
    return Trajectory(tm, slabs)


def quad_field(x, y, t):
    """(1 + t) (x (1 - x), y (1 - y)): inside BDM_2 with zero normal trace."""
    x, y = np.broadcast_arrays(x, y)
    return np.asarray(1 + t)[..., None] * np.stack([x * (1 - x), y * (1 - y)], axis=-1)


def quad_grad(x, y, t):
    x, y = np.broadcast_arrays(x, y)
    G = np.zeros(x.shape + (2, 2))
    G[..., 0, 0] = 1 - 2 * x
    G[..., 1, 1] = 1 - 2 * y
    return np.asarray(1 + t)[..., None, None] * G


def test_reproduced_field_has_zero_error(ops):
    traj = trajectory_from(ops, quad_field)
    assert linf_l2_error(traj, ops, quad_field, "u") <= 1e-12
    assert broken_grad_error(traj, ops, quad_grad) <= 1e-10


def test_zero_discrete_field_gives_solution_norm(ops):
    sol = ManufacturedSolution(ops.params)
    traj = trajectory_from(ops, lambda x, y, t: np.zeros(np.broadcast(x, y).shape + (2,)))
    err = linf_l2_error(traj, ops, sol.u, "u", quad_degree=16)
    # the sample set contains t = 1/2 where |sin(pi t)| = 1
    assert err == pytest.approx(PROFILE_NORM, rel=1e-10)


def test_unknown_field_rejected(ops):
    traj = trajectory_from(ops, quad_field, n=1)
    with pytest.raises(KeyError):
        linf_l2_error(traj, ops, quad_field, "q")


@pytest.fixture(scope="module")
def benchmark_level0(ops):
    sol = ManufacturedSolution(ops.params)
    X0 = initial_state(ops, *sol.initial_data())
    traj = run(TimeMesh.uniform(1.0, 10), X0, ops, 1, FieldSources(ops, sol.f, sol.g))
    return traj, sol


def test_benchmark_gradient_error_near_reference(ops, benchmark_level0):
    traj, sol = benchmark_level0
    err = broken_grad_error(traj, ops, sol.grad_u)
    assert 7.682e-3 / 3 <= err <= 7.682e-3 * 3


def test_sampling_is_resolved(ops, benchmark_level0):
    traj, sol = benchmark_level0
    e100 = measure_errors(traj, ops, sol, samples=100)
    e200 = measure_errors(traj, ops, sol, samples=200)
    for c in COLUMNS:
        assert abs(e200[c] - e100[c]) <= 0.01 * e100[c]


def test_report_layout():
    rep = ErrorReport(1, 1)
    for j, e in enumerate([4e-2, 1e-2, 2.5e-3]):
        rep.rows.append(ErrorRow(j, 0.1 / 2**j, 0.28 / 2**j, {c: e for c in COLUMNS}))
    rows = rep.table_rows()
    assert len(rows) == 3 and len(rows[0]) == 11
    assert rows[0][4] == "--" and float(rows[1][4]) == pytest.approx(2.0)
    assert rep.rates("p")[0] is None and rep.rates("p")[2] == pytest.approx(2.0)
    single = ErrorReport(1, 1, rep.rows[:1])
    assert single.rates("v") == [None]
