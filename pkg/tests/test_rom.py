import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relaxrom.fom import CoefficientState, RelaxationSolver, SolverConfig
from relaxrom.problems import burgers_flux, linear_flux, shifted_sine, sine
from relaxrom.rom import (ReducedBasisPair, ReducedState, SnapshotSet, collect_snapshots,
                          integrate_reduced, lift_state, pod, reduce_state, step_reduced,
                          write_singular_values_csv)


@pytest.fixture(scope="module")
def small_burgers():
    s = RelaxationSolver(burgers_flux(), SolverConfig(lam=2.0, eps=1e-3, N=32))
    return s, s.integrate(shifted_sine(), 0.01, stride=1)


def test_collect_counts(small_burgers):
    s, traj = small_burgers
    assert collect_snapshots([traj]).count == 20 + 1
    assert collect_snapshots([traj, traj]).count == 42
    assert collect_snapshots([traj], stride=5).count == 5


def test_collect_rejects_mixed_n(small_burgers):
    _, traj = small_burgers
    other = RelaxationSolver(burgers_flux(), SolverConfig(lam=2.0, eps=1e-3, N=16)).integrate(
        shifted_sine(), 0.002, stride=1)
    with pytest.raises(ValueError, match="different N"):
        collect_snapshots([traj, other])
    with pytest.raises(ValueError):
        collect_snapshots([])


def test_stationary_linear_run_has_rank_one():
    s = RelaxationSolver(linear_flux(1.0), SolverConfig(lam=1.0, eps=1e-3, N=20))
    snaps = collect_snapshots([s.integrate(sine(), 0.05, stride=5)])
    np.testing.assert_allclose(snaps.plus, snaps.plus[:, :1] * np.ones(snaps.count), atol=1e-10)
    basis = pod(snaps, rank=1)
    assert basis.normalized()[1] < 1e-10


def test_snapshot_validation():
    with pytest.raises(ValueError):
        SnapshotSet(np.ones((4, 3)), np.ones((4, 2)))
    with pytest.raises(ValueError):
        SnapshotSet(np.full((4, 3), np.nan), np.ones((4, 3)))


def test_pod_rank_one():
    d = np.random.default_rng(0).normal(size=8)
    P = np.outer(d, [1.0, 2.0, -0.5, 3.0])
    b = pod(SnapshotSet(P, P), rank=1)
    assert np.sum(b.sv_plus > 1e-12 * b.sv_plus[0]) == 1
    assert abs(abs(b.V_plus[:, 0] @ d) / np.linalg.norm(d) - 1) < 1e-12


def _principal_cosines(A, B):
    return np.linalg.svd(A.T @ B, compute_uv=False)


def test_pod_matches_dense_svd():
    rng = np.random.default_rng(1)
    P, M = rng.normal(size=(2, 6, 10))
    b = pod(SnapshotSet(P, M), rank=3)
    U = np.linalg.svd(P)[0][:, :3]
    angles = np.arccos(np.clip(_principal_cosines(b.V_plus, U), -1, 1))
    assert np.max(angles) <= 1e-7  # arccos amplifies rounding; the cosines agree to 1e-14
    assert np.max(np.abs(1 - _principal_cosines(b.V_plus, U))) <= 1e-10
    np.testing.assert_allclose(b.sv_minus, np.linalg.svd(M, compute_uv=False))


def test_pod_full_rank_is_identity_on_span():
    rng = np.random.default_rng(2)
    P = rng.normal(size=(6, 9))
    b = pod(SnapshotSet(P, P), rank=6)
    np.testing.assert_allclose(b.V_plus @ b.V_plus.T @ P, P, atol=1e-12)


def test_pod_rank_errors_and_energy():
    rng = np.random.default_rng(3)
    snaps = SnapshotSet(rng.normal(size=(6, 4)), rng.normal(size=(6, 4)))
    for r in (0, 5):
        with pytest.raises(ValueError):
            pod(snaps, rank=r)
    with pytest.raises(ValueError):
        pod(snaps)
    with pytest.raises(ValueError):
        pod(snaps, rank=2, energy=0.9)
    b = pod(snaps, energy=1.0)
    assert b.ranks == (4, 4)
    e = b.sv_plus**2 / np.sum(b.sv_plus**2)
    r = pod(snaps, energy=0.6).ranks[0]
    assert np.sum(e[:r]) >= 0.6 - 1e-12 or np.sum(b.sv_minus[:r]**2) / np.sum(b.sv_minus**2) >= 0.6


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(2, 15), st.integers(0, 2**31))
def test_orthonormality_and_eckart_young(N, S, seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(N, S)) * np.logspace(0, -3, S)
    M = rng.normal(size=(N, S))
    for r in range(1, min(N, S) + 1):
        b = pod(SnapshotSet(P, M), rank=r)
        assert b.orthonormality_error() <= 1e-10
        resid = P - b.V_plus @ (b.V_plus.T @ P)
        tail = np.sum(b.sv_plus[r:] ** 2)
        assert np.sum(resid**2) == pytest.approx(tail, rel=1e-8, abs=1e-12)
        assert np.all(np.diff(b.sv_plus) <= 1e-12)


def test_reduce_lift_examples():
    rng = np.random.default_rng(4)
    V, _ = np.linalg.qr(rng.normal(size=(10, 3)))
    b = ReducedBasisPair(V, V)
    z = lift_state(b, ReducedState(0.0, np.zeros(3), np.zeros(3)))
    assert not np.any(z.plus) and not np.any(z.minus)
    a = V @ rng.normal(size=3)
    st_ = CoefficientState(0.1, a, 2 * a)
    back = lift_state(b, reduce_state(b, st_))
    np.testing.assert_allclose(back.plus, a, atol=1e-12)
    perp = rng.normal(size=10)
    perp -= V @ (V.T @ perp)
    np.testing.assert_allclose(reduce_state(b, CoefficientState(0, perp, perp)).plus, 0, atol=1e-12)
    r = ReducedState(0.0, rng.normal(size=3), rng.normal(size=3))
    np.testing.assert_allclose(reduce_state(b, lift_state(b, r)).plus, r.plus, atol=1e-12)
    with pytest.raises(ValueError):
        reduce_state(b, CoefficientState(0, np.ones(9), np.ones(9)))
    with pytest.raises(ValueError):
        lift_state(b, ReducedState(0, np.ones(2), np.ones(3)))


def test_non_orthonormal_basis_rejected():
    with pytest.raises(ValueError, match="orthonormal"):
        ReducedBasisPair(np.ones((4, 2)), np.eye(4)[:, :2])


def test_identity_basis_reproduces_full(small_burgers):
    s, traj = small_burgers
    b = ReducedBasisPair.identity(32)
    r = reduce_state(b, traj.states[0])
    for full in traj.states[1:6]:
        r = step_reduced(r, b, s)
        np.testing.assert_allclose(r.plus, full.plus, atol=1e-10)
        np.testing.assert_allclose(r.minus, full.minus, atol=1e-10)
    red = integrate_reduced(s, shifted_sine(), b, 0.01, stride=1)
    np.testing.assert_allclose(red.final_lifted.plus, traj.final.plus, atol=1e-8)


def test_training_trajectory_is_reproduced(small_burgers):
    s, traj = small_burgers
    snaps = collect_snapshots([traj])
    rank = np.linalg.matrix_rank(snaps.plus)
    b = pod(snaps, rank=min(rank, snaps.count))
    red = integrate_reduced(s, shifted_sine(), b, 0.01, stride=1)
    for full, lifted in zip(traj.states, red.lifted()):
        err = np.sqrt(np.sum((full.plus - lifted.plus)**2) + np.sum((full.minus - lifted.minus)**2))
        assert err <= 1e-6


def test_linear_reduced_stationary():
    s = RelaxationSolver(linear_flux(1.0), SolverConfig(lam=1.0, eps=1e-3, N=24))
    a0 = s.project_initial(sine()).plus
    V = (a0 / np.linalg.norm(a0))[:, None]
    b = ReducedBasisPair(V, np.eye(24)[:, :1])
    red = integrate_reduced(s, sine(), b, 0.05, stride=10)
    for r in red.states:
        np.testing.assert_allclose(r.plus, red.states[0].plus, atol=1e-10)
        np.testing.assert_allclose(r.minus, 0.0, atol=1e-10)


def test_zero_basis_gives_zero_solution():
    s = RelaxationSolver(linear_flux(1.0), SolverConfig(lam=1.0, eps=1e-3, N=24))
    red = integrate_reduced(s, sine(), ReducedBasisPair.zero(24, 1), 0.02)
    assert not np.any(red.final_lifted.plus) and not np.any(red.final_lifted.minus)


def test_centered_pod_roundtrip():
    rng = np.random.default_rng(5)
    P = rng.normal(size=(8, 5)) + 3.0
    b = pod(SnapshotSet(P, P), rank=4, center=True)
    for col in P.T:
        back = lift_state(b, reduce_state(b, CoefficientState(0, col, col)))
        np.testing.assert_allclose(back.plus, col, atol=1e-12)


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    b = pod(SnapshotSet(rng.normal(size=(7, 9)), rng.normal(size=(7, 9))), rank=3)
    b.save(tmp_path)
    assert open(tmp_path / "basis_plus.txt").readline().startswith("# rows=7 cols=3")
    c = ReducedBasisPair.load(tmp_path)
    np.testing.assert_array_equal(c.V_plus, b.V_plus)
    np.testing.assert_array_equal(c.V_minus, b.V_minus)
    (tmp_path / "basis_minus.txt").write_text("garbage\n1 2\n")
    with pytest.raises(ValueError):
        ReducedBasisPair.load(tmp_path)


def test_singular_value_csv(tmp_path):
    path = tmp_path / "sv.csv"
    write_singular_values_csv(path, [4.0, 2.0, 1.0])
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["index", "sigma", "sigma_rel"]
    assert rows[2] == ["2", "2", "0.5"]
