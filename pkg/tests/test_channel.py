import numpy as np
import pytest

from physchan.channel import (
    Path,
    PathGenConfig,
    db_to_linear,
    generate_paths,
    psnr,
    psnr_db,
    read_paths_jsonl,
    solve_noise_for_psnr,
    synthesize_channel,
    uniform_paths,
    unvec,
    vec,
    write_paths_jsonl,
)
from physchan.errors import InvalidArgumentError, NoValidNoiseError
from physchan.geometry import Direction, Sector, make_ula, make_upa, steering_vector


def _path(c=1.0, dod=(0.1, 0.2), doa=(-0.3, 0.1)):
    return Path(abs(c), np.angle(c), Direction(*dod), Direction(*doa))


def test_path_phase_normalized():
    p = Path(1.0, -np.pi / 2, Direction(0, 0), Direction(0, 0))
    assert p.phi == pytest.approx(1.5 * np.pi)
    assert p.gain == pytest.approx(-1j)
    assert p.with_gain(2j).rho == pytest.approx(2.0)
    with pytest.raises(InvalidArgumentError):
        Path(-1.0, 0.0, Direction(0, 0), Direction(0, 0))


def test_vec_is_column_major():
    H = np.array([[1, 2], [3, 4]])
    np.testing.assert_array_equal(vec(H), [1, 3, 2, 4])
    np.testing.assert_array_equal(unvec(vec(H), 2, 2), H)


def test_scalar_channel(single):
    ch = synthesize_channel([_path(0.7 + 0.2j)], single, single)
    np.testing.assert_allclose(ch.H, [[0.7 + 0.2j]])


def test_single_path_rank_one(upa8):
    rx = make_ula(4, 0.5, 1.0)
    ch = synthesize_channel([_path(0.3j)], upa8, rx)
    assert ch.shape == (4, 64)
    assert np.linalg.matrix_rank(ch.H) == 1
    assert np.sqrt(ch.frobenius_sq) == pytest.approx(0.3)


def test_two_identical_paths_add(upa8):
    rx = make_ula(3, 0.5, 1.0)
    c = 0.4 - 0.1j
    ch = synthesize_channel([_path(c), _path(c)], upa8, rx)
    e_r = steering_vector(rx, Direction(-0.3, 0.1))
    e_t = steering_vector(upa8, Direction(0.1, 0.2))
    np.testing.assert_allclose(ch.H, 2 * c * np.outer(e_r, e_t.conj()))


def test_h_matches_kron_atoms(upa8):
    rx = make_ula(3, 0.5, 1.0)
    p = _path(1.0)
    ch = synthesize_channel([p], upa8, rx)
    atom = np.kron(steering_vector(upa8, p.dod).conj(), steering_vector(rx, p.doa))
    np.testing.assert_allclose(ch.h, atom)


def test_synthesize_requires_paths(single):
    with pytest.raises(InvalidArgumentError):
        synthesize_channel([], single, single)


def test_psnr_values(single):
    ch = synthesize_channel([_path(1.0)], single, single)
    assert psnr(ch, 1.0, 1.0) == 1.0
    assert psnr_db(ch, 1.0, 1.0) == 0.0
    assert psnr(ch, 2.0, 1.0) == 2 * psnr(ch, 1.0, 1.0)
    assert solve_noise_for_psnr(ch, 1.0, 100.0) == pytest.approx(0.01)
    ch2 = synthesize_channel([_path(2.0)], single, single)
    assert solve_noise_for_psnr(ch2, 1.0, 1.0) == pytest.approx(4.0)


def test_psnr_round_trip(rng, upa8, single):
    ch = synthesize_channel(uniform_paths(10, Sector(), rng), upa8, single)
    for target in (0.5, 10.0, 1e3):
        assert psnr(ch, 0.3, solve_noise_for_psnr(ch, 0.3, target)) == pytest.approx(target, rel=1e-12)


def test_zero_channel_has_no_valid_noise(single):
    ch = synthesize_channel([_path(0.0)], single, single)
    with pytest.raises(NoValidNoiseError):
        solve_noise_for_psnr(ch, 1.0, 10.0)
    with pytest.raises(InvalidArgumentError):
        psnr(ch, 1.0, 0.0)


def test_db_to_linear():
    np.testing.assert_allclose(db_to_linear([0, 10, 20]), [1, 10, 100])


def test_generator_single_path(single, upa8):
    paths = generate_paths(PathGenConfig(1, 1, 0.01))
    assert len(paths) == 1
    assert np.linalg.matrix_rank(synthesize_channel(paths, upa8, make_ula(4, 0.5, 1.0)).H) == 1


def test_generator_deterministic_and_normalized():
    cfg = PathGenConfig(60, 5, np.deg2rad(3), rng_seed=7, gain_scale=0.5)
    a, b = generate_paths(cfg), generate_paths(cfg)
    assert a == b
    assert sum(p.rho ** 2 for p in a) == pytest.approx(0.25)
    assert {p.cluster for p in a} == set(range(5))


def test_generator_cluster_spread():
    spread = np.deg2rad(2.0)
    stds = []
    for seed in range(100):
        paths = generate_paths(PathGenConfig(60, 6, spread, rng_seed=seed))
        for k in range(6):
            el = np.array([p.dod.elevation for p in paths if p.cluster == k])
            az = np.array([p.dod.azimuth for p in paths if p.cluster == k])
            stds.extend([el.std(ddof=1), az.std(ddof=1)])
    assert np.mean(stds) == pytest.approx(spread, rel=0.3)


def test_generator_validation():
    with pytest.raises(InvalidArgumentError):
        PathGenConfig(3, 5, 0.1)
    with pytest.raises(InvalidArgumentError):
        PathGenConfig(10, 2, 0.1, gain_decay=0.0)
    with pytest.raises(InvalidArgumentError):
        PathGenConfig(10, 2, -0.1)


def test_jsonl_round_trip(tmp_path):
    paths = generate_paths(PathGenConfig(20, 3, 0.05, rng_seed=3))
    target = tmp_path / "paths.jsonl"
    write_paths_jsonl(paths, target)
    back = read_paths_jsonl(target)
    assert [(p.rho, p.phi, p.dod, p.doa) for p in back] == [(p.rho, p.phi, p.dod, p.doa) for p in paths]


def test_jsonl_missing_field(tmp_path):
    target = tmp_path / "bad.jsonl"
    target.write_text('{"rho": 1.0}\n')
    with pytest.raises(InvalidArgumentError):
        read_paths_jsonl(target)
