import warnings

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from gmapkit.metrics import ICP, PROCRUSTES, icp_align, mse_n, mse_v, procrustes_align

import oracles


def test_procrustes_identity(rng):
    X = rng.normal(size=(40, 3))
    a = procrustes_align(X, X)
    assert np.abs(a.rotation - np.eye(3)).max() < 1e-10
    assert np.abs(a.translation).max() < 1e-10
    assert a.rms_after < 1e-10
    assert a.method == PROCRUSTES


def test_procrustes_recovers_rigid_motion(rng):
    X = rng.normal(size=(60, 3)) * 30
    R0 = Rotation.random(random_state=5).as_matrix()
    T0 = rng.normal(size=3) * 10
    a = procrustes_align(X, X @ R0.T + T0)
    assert np.abs(a.rotation - R0).max() < 1e-8
    assert np.abs(a.translation - T0).max() < 1e-8
    assert np.linalg.det(a.rotation) == pytest.approx(1.0, abs=1e-12)
    assert a.rms_after <= a.rms_before + 1e-12


def test_procrustes_beats_random_perturbations(rng):
    X = rng.normal(size=(50, 3))
    Y = X @ Rotation.random(random_state=2).as_matrix().T + rng.normal(scale=0.05, size=X.shape)
    a = procrustes_align(X, Y)
    best = oracles.rigid_objective(a.rotation, a.translation, X, Y)
    for _ in range(10_000):
        dR = Rotation.from_rotvec(rng.normal(scale=0.05, size=3)).as_matrix()
        dT = rng.normal(scale=0.02, size=3)
        assert best <= oracles.rigid_objective(dR @ a.rotation, a.translation + dT, X, Y) + 1e-12


def test_procrustes_input_errors(rng):
    with pytest.raises(ValueError, match="3 points"):
        procrustes_align(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError, match="counts"):
        procrustes_align(rng.normal(size=(5, 3)), rng.normal(size=(6, 3)))
    line = np.outer(np.arange(5.0), [1, 2, 3])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        a = procrustes_align(line, line + 1)
    assert a.degenerate
    assert any("collinear" in str(w.message) for w in caught)


def cube_cloud(rng, n=2000):
    return rng.uniform(-50, 50, size=(n, 3))


def test_icp_identical_clouds(rng):
    X = cube_cloud(rng, 500)
    a = icp_align(X, X)
    assert a.iterations == 1
    assert a.rms_after == 0.0
    assert a.method == ICP


def test_icp_recovers_small_motion(rng):
    X = cube_cloud(rng)
    R0 = Rotation.from_rotvec(np.deg2rad(4.0) * np.array([0.3, -0.5, 0.81]) / 1.0).as_matrix()
    T0 = np.array([0.8, -0.4, 0.3])
    Y = X @ R0.T + T0
    a = icp_align(X, Y, max_iter=100)
    assert np.abs(a.rotation - R0).max() < 1e-4
    assert np.abs(a.translation - T0).max() < 1e-4 * 50


@pytest.mark.parametrize("seed", range(5))
def test_icp_rms_never_increases(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(300, 3))
    Y = rng.normal(size=(250, 3)) * [2, 1, 0.5]
    a = icp_align(X, Y, max_iter=30)
    h = np.array(a.rms_history)
    assert np.all(np.diff(h) <= 1e-12)
    assert a.rms_after <= a.rms_before + 1e-12
    R = a.rotation
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9


def test_icp_on_identical_ordering_agrees_with_procrustes(rng):
    X = cube_cloud(rng, 400)
    p, i = procrustes_align(X, X), icp_align(X, X)
    assert np.allclose(p.rotation, i.rotation) and np.allclose(p.translation, i.translation)


def test_mse_v_examples(rng):
    X = rng.normal(size=(100, 3))
    assert mse_v(X, X) == 0
    assert mse_v(X, X + [0.84, 0, 0]) == pytest.approx(0.84, abs=1e-12)
    Y = rng.normal(size=(100, 3))
    assert abs(mse_v(X, Y) - oracles.mean_distance_loop(X, Y)) < 1e-12
    assert mse_v(X, X + [0, 0.5, 0], squared=True) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        mse_v(X, Y[:-1])


def test_mse_v_rigid_invariance(rng):
    X = rng.normal(size=(80, 3))
    Y = X + rng.normal(scale=0.1, size=X.shape)
    base = mse_v(procrustes_align(X, Y).apply(X), Y)
    R = Rotation.random(random_state=9).as_matrix()
    T = rng.normal(size=3) * 100
    Xm, Ym = X @ R.T + T, Y @ R.T + T
    assert abs(mse_v(procrustes_align(Xm, Ym).apply(Xm), Ym) - base) < 1e-8


def test_mse_n_examples(rng):
    N = rng.normal(size=(10, 3))
    assert mse_n(N, N) == pytest.approx(0.0, abs=1e-6)
    z = np.tile([0.0, 0.0, 1.0], (10, 1))
    assert mse_n(z, np.tile([1.0, 0.0, 0.0], (10, 1))) == pytest.approx(90.0)
    other = z.copy()
    other[3] = [0, 0, -1]
    assert mse_n(z, other) == pytest.approx(18.0)
    # lengths do not matter
    assert mse_n(3 * z, other) == pytest.approx(18.0)


def test_mse_n_loop_oracle(rng):
    A, B = rng.normal(size=(200, 3)), rng.normal(size=(200, 3))
    assert abs(mse_n(A, B) - oracles.mean_angle_loop(A, B)) < 1e-10


def test_mse_n_skips_zero_normals():
    A = np.array([[0, 0, 1.0], [0, 0, 0], [1, 0, 0]])
    B = np.array([[0, 0, 1.0], [0, 1, 0], [0, 1, 0]])
    value, skipped = mse_n(A, B, return_skipped=True)
    assert skipped == 1
    assert value == pytest.approx(45.0)


def test_alignment_result_dict(rng):
    X = rng.normal(size=(10, 3))
    d = procrustes_align(X, X + 1).to_dict()
    assert set(d) == {"method", "rotation", "translation", "rms_before", "rms_after", "iterations"}
    assert d["translation"] == pytest.approx([1, 1, 1])
