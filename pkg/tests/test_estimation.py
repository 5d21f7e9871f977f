import itertools
import json

import numpy as np
import pytest

from physchan.channel import Path, synthesize_channel
from physchan.errors import InvalidArgumentError, RankDeficientError, SingularSystemError
from physchan.estimation import (
    GridSpec,
    adjacent_coherence,
    build_dictionary,
    coherent_grid_step,
    grid_axis,
    lmmse_estimate,
    ls_estimate,
    omp_estimate,
    omp_path,
    oracle_rmse,
    oracle_variance,
    pair_dictionary,
    project_onto_model,
    projection_bias_curve,
    relative_bias,
)
from physchan.geometry import AntennaArray, Direction, Sector, make_ula, make_upa
from physchan.observation import ObservationSetup, build_ls_optimal, observe


def _grid(array, step_deg=2.0):
    return build_dictionary(array, make_ula(1, 0.5, 1.0), GridSpec(Sector(), np.deg2rad(step_deg)))


def test_ls_noiseless_recovers(rng):
    s = build_ls_optimal(8, 2, 10, 2, 1.0)
    h = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    np.testing.assert_allclose(ls_estimate(s, s.M @ h), h, rtol=1e-10)
    np.testing.assert_array_equal(ls_estimate(s, np.zeros(20)), 0)


def test_ls_scalar():
    s = ObservationSetup(np.array([[2.0]]), np.eye(1), 0.1, 4.0)
    assert ls_estimate(s, np.array([3.0 + 1j]))[0] == pytest.approx((3.0 + 1j) / 2.0)


def test_ls_batch_columns(rng):
    s = build_ls_optimal(4, 1, 4, 1, 1.0)
    Y = rng.standard_normal((4, 3)) + 0j
    batch = ls_estimate(s, Y)
    for k in range(3):
        np.testing.assert_allclose(batch[:, k], ls_estimate(s, Y[:, k]))


def test_ls_rank_deficient():
    X = np.ones((2, 2)) / np.sqrt(2)
    s = ObservationSetup(X, np.eye(1), 0.1, 1.0)
    with pytest.raises(RankDeficientError):
        ls_estimate(s, np.zeros(2))


def test_lmmse_scalar_formula():
    m, r, sigma2, y = 1.5, 2.0, 0.3, 0.7 - 0.2j
    s = ObservationSetup(np.array([[m]]), np.eye(1), sigma2, m ** 2)
    expected = r * m * y / (m * m * r + sigma2)
    assert lmmse_estimate(s, np.array([[r]]), np.array([y]))[0] == pytest.approx(expected)


def test_lmmse_limits(rng):
    s = build_ls_optimal(4, 1, 4, 1, 1.0, noise_power=0.1)
    y = rng.standard_normal(4) + 0j
    np.testing.assert_array_equal(lmmse_estimate(s, np.zeros((4, 4)), y), 0)
    loud = s.with_noise(1e12)
    assert np.linalg.norm(lmmse_estimate(loud, np.eye(4), y)) < 1e-10
    with pytest.raises(SingularSystemError):
        lmmse_estimate(s.with_noise(0.0), np.zeros((4, 4)), y)


def test_grid_atom_count(upa8):
    D = _grid(upa8, 2.0)
    assert len(D) == 61 * 31
    assert len(grid_axis(0, 1, 0.25)) == 5


def test_single_antenna_dictionary(single):
    D = build_dictionary(single, single)
    np.testing.assert_allclose(D.atoms, [[1.0]])


def test_atom_direction_mapping(upa8):
    rx = make_ula(2, 0.5, 1.0)
    D = build_dictionary(upa8, rx, GridSpec(step=np.deg2rad(10)), GridSpec(step=np.deg2rad(30)))
    k = 17
    dod, doa = D.directions(k)
    ch = synthesize_channel([Path(1.0, 0.0, dod, doa)], upa8, rx)
    np.testing.assert_allclose(D.atoms[:, k], ch.h, atol=1e-12)


def test_on_grid_atom_collinear(upa8, single):
    D = _grid(upa8, 4.0)
    dod, _ = D.directions(123)
    h = synthesize_channel([Path(0.8, 1.0, dod, Direction(0, 0))], upa8, single).h
    corr = np.abs(D.atoms.conj().T @ h) / np.linalg.norm(h)
    assert corr[123] == pytest.approx(1.0)
    assert corr.argmax() == 123


def test_coherent_step(upa8):
    step = coherent_grid_step(upa8, Sector())
    assert adjacent_coherence(upa8, Sector(), step) >= 0.97
    assert any(np.rad2deg(step) == pytest.approx(d) for d in (5.0, 4.0, 3.0, 2.5, 2.0, 1.5, 1.25, 1.0, 0.75, 0.5, 0.25))


def test_omp_exact_single_path(upa8, single):
    D = _grid(upa8, 4.0)
    dod, _ = D.directions(50)
    h = synthesize_channel([Path(0.5, 0.3, dod, Direction(0, 0))], upa8, single).h
    est = omp_estimate(D, None, h, 1)
    assert est.indices == [50]
    assert est.residual_norm < 1e-12
    np.testing.assert_allclose(est.h_hat, h, atol=1e-12)


def test_omp_two_paths_matches_brute_force(upa8, single):
    D = _grid(upa8, 10.0)
    k1, k2 = 12, 70
    gains = [1.0, 0.5j]
    paths = [Path(abs(g), np.angle(g), D.directions(k)[0], Direction(0, 0)) for g, k in zip(gains, (k1, k2))]
    h = synthesize_channel(paths, upa8, single).h
    est = omp_estimate(D, None, h, 2)
    assert sorted(est.indices) == [k1, k2]
    coef = dict(zip(est.indices, est.coefficients))
    assert coef[k1] == pytest.approx(1.0, abs=1e-8)
    assert coef[k2] == pytest.approx(0.5j, abs=1e-8)
    residuals = {
        S: np.linalg.norm(h - D.atoms[:, S] @ np.linalg.lstsq(D.atoms[:, S], h, rcond=None)[0])
        for S in itertools.combinations(range(len(D)), 2)
    }
    assert min(residuals, key=residuals.get) == (k1, k2)


def _tiny():
    arr = make_ula(4, 0.5, 1.0)
    pairs = [(Direction(a, 0.0), Direction(0, 0)) for a in np.deg2rad([15, 45, 75, 105, 135, 165])]
    return pair_dictionary(arr, make_ula(1, 0.5, 1.0), pairs)


def _best_pair_residual(D, h):
    return min(
        np.linalg.norm(h - D.atoms[:, list(S)] @ np.linalg.lstsq(D.atoms[:, list(S)], h, rcond=None)[0])
        for S in itertools.combinations(range(len(D)), 2)
    )


def test_omp_tiny_instance_close_to_exhaustive():
    D = _tiny()
    noise = 0.05 * np.array([1 - 1j, -0.5j, 0.3, 0.8 + 0.2j])
    h = D.atoms[:, [1, 3]] @ np.array([1.0, 0.6j]) + noise
    omp = np.linalg.norm(h - omp_estimate(D, None, h, 2).h_hat)
    assert omp <= 1.1 * _best_pair_residual(D, h)


def test_omp_tiny_instances_mostly_near_exhaustive():
    # greedy selection is not optimal in general (coherent atoms), but it
    # should be close on most random 2-sparse-plus-noise instances
    D = _tiny()
    rng = np.random.default_rng(3)
    ok = 0
    for _ in range(100):
        i, j = rng.choice(6, 2, replace=False)
        c = np.exp(2j * np.pi * rng.uniform(size=2)) * rng.uniform(0.5, 1, 2)
        h = D.atoms[:, [i, j]] @ c + 0.05 * (rng.standard_normal(4) + 1j * rng.standard_normal(4))
        omp = np.linalg.norm(h - omp_estimate(D, None, h, 2).h_hat)
        ok += omp <= 1.1 * _best_pair_residual(D, h)
    assert ok >= 70


def test_omp_residual_monotone_and_path_consistent(upa8, single, rng):
    D = _grid(upa8, 4.0)
    h = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    steps = list(omp_path(D, h, 12))
    norms = [s.residual_norm for s in steps]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))
    assert steps[-1].residual_history == norms
    for p in (3, 7):
        np.testing.assert_allclose(omp_estimate(D, None, h, p).h_hat, steps[p - 1].h_hat)
    with pytest.raises(InvalidArgumentError):
        list(omp_path(D, h, 0))


def test_omp_full_support_is_projection():
    rng = np.random.default_rng(4)
    arr = make_ula(3, 0.5, 1.0)
    pairs = [(Direction(a, 0.0), Direction(0, 0)) for a in (-1.0, 0.0, 1.0)]
    D = pair_dictionary(arr, make_ula(1, 0.5, 1.0), pairs)
    h = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    est = omp_estimate(D, None, h, 3)
    coef = np.linalg.lstsq(D.atoms, h, rcond=None)[0]
    np.testing.assert_allclose(est.h_hat, D.atoms @ coef, atol=1e-10)


def test_omp_with_sensing(upa8, single, rng):
    D = _grid(upa8, 4.0)
    s = build_ls_optimal(64, 1, 64, 1, 1.0)
    dod, _ = D.directions(77)
    h = synthesize_channel([Path(1.0, 0.0, dod, Direction(0, 0))], upa8, single).h
    est = omp_estimate(D, s.M, s.M @ h, 1)
    assert est.indices == [77]
    np.testing.assert_allclose(est.h_hat, h, atol=1e-10)


def test_sparse_estimate_json(upa8, single):
    D = _grid(upa8, 4.0)
    est = omp_estimate(D, None, D.atoms[:, 5] * 2, 1)
    data = json.loads(est.to_json())
    assert data["p"] == 1
    assert data["paths"][0]["coefficient"] == pytest.approx([2.0, 0.0])


def test_oracle_on_model_and_variance(upa8, single):
    D = _grid(upa8, 4.0)
    h = 0.7 * D.atoms[:, 200] + 0.2 * D.atoms[:, 400]
    bias, var, rmse = oracle_rmse(D, h, 2, 100.0, True)
    assert bias == pytest.approx(0.0, abs=1e-20)
    assert var == 2 * 2 / 100.0
    assert rmse == pytest.approx(0.04)
    assert oracle_variance(4, 100.0, False) == pytest.approx(0.12)
    b_inf, _, r_inf = oracle_rmse(D, h, 1, 1e15, True)
    assert r_inf == pytest.approx(b_inf, abs=1e-12)


def test_projection_bias_curve_nonincreasing(upa8, rng):
    D = _grid(upa8, 4.0)
    h = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    curve = projection_bias_curve(D, h, 15)
    assert np.all(np.diff(curve) <= 1e-12)
    assert curve[4] == pytest.approx(relative_bias(h, project_onto_model(D, h, 5).h_hat))
