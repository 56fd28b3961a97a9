import numpy as np
import pytest
from oracles import desk_scenario

from mirs_isac.channels import build_cascaded_channels, element_positions, min_distance, position_projection
from mirs_isac.initialization import (
    InitConfig,
    PackingError,
    fallback_beamformer,
    init_phase_filters,
    init_point,
    init_positions,
    sdr_constraints,
    solve_sdr,
)
from mirs_isac.metrics import constraint_values


def test_single_array_sits_at_center():
    np.testing.assert_allclose(init_positions(1, 0.9, 0.1), 0.0, atol=1e-12)


def test_two_by_two_grid():
    lam = 0.1499
    A = 6 * lam
    centers = position_projection(init_positions(4, A, lam / 2), A).reshape(-1, 2)
    np.testing.assert_allclose(centers, [[A / 4, A / 4], [3 * A / 4, A / 4], [A / 4, 3 * A / 4], [3 * A / 4, 3 * A / 4]])
    dists = [np.linalg.norm(p - q) for i, p in enumerate(centers) for q in centers[i + 1:]]
    assert min(dists) >= lam / 2


def test_packing_error():
    with pytest.raises(PackingError):
        init_positions(36, 1.0, 0.5)
    with pytest.raises(ValueError):
        init_positions(0, 1.0, 0.1)


def test_jittered_grid_keeps_spacing():
    A, d = 6 * 0.1499, min_distance(2, 0.1499)
    centers = position_projection(init_positions(4, A, d, np.random.default_rng(0)), A).reshape(-1, 2)
    assert min(np.linalg.norm(p - q) for i, p in enumerate(centers) for q in centers[i + 1:]) >= d
    assert np.all((centers > 0) & (centers < A))


def test_phase_filters_unit_and_deterministic():
    phi, V = init_phase_filters(8, 4, 1, 2, np.random.default_rng(3))
    np.testing.assert_allclose(np.abs(phi), 1.0)
    np.testing.assert_allclose(np.linalg.norm(V, axis=0), 1.0)
    assert V.shape == (20, 2)
    phi2, V2 = init_phase_filters(8, 4, 1, 2, np.random.default_rng(3))
    np.testing.assert_array_equal(phi, phi2)
    np.testing.assert_array_equal(V, V2)


def _channels(seed, **changes):
    sc = desk_scenario(seed, **changes)
    rng = np.random.default_rng(seed)
    phi, V = init_phase_filters(sc.N, sc.M, sc.K_c, sc.K_t, rng)
    u = init_positions(sc.n_ctrl, sc.A, sc.d_min)
    return sc, V, build_cascaded_channels(phi, element_positions(u, sc), sc)


@pytest.mark.parametrize("seed", range(3))
def test_single_constraint_closed_form(seed):
    sc, V, ch = _channels(seed)
    P, b = sdr_constraints(ch, V, sc)
    X = solve_sdr(P[:1], b[:1])
    expected = (2.0 ** sc.gamma[0] - 1.0) * sc.sigma_c2[0] / np.linalg.norm(ch.h_C[0]) ** 2
    assert np.trace(X).real == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_sdr_constraints_encode_sinr(seed):
    from mirs_isac.metrics import comm_rate, radar_sinr

    sc, V, ch = _channels(seed, K_t=2)
    W = fallback_beamformer(ch, V, sc)
    w = W.T.reshape(-1)
    P, b = sdr_constraints(ch, V, sc)
    q = np.array([np.vdot(w, Pk @ w).real for Pk in P])
    assert np.all(q >= b)
    sinr_c, _ = comm_rate(W, ch.h_C[0], sc.sigma_c2[0], 0)
    assert sinr_c >= 2.0 ** sc.gamma[0] - 1.0 - 1e-9
    for k in range(sc.K_t):
        assert radar_sinr(W, V[:, k], ch.H_S, sc.rcs, sc.T, sc.K_t, sc.sigma_S2, k) >= sc.chi[k] * (1 - 1e-9)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("a", [1, 2])
def test_init_point_is_feasible_and_deterministic(seed, a):
    sc = desk_scenario(seed, a=a)
    X = init_point(sc, InitConfig(seed=seed))
    cons = constraint_values(X, sc)
    assert cons.max_violation <= 1e-6
    assert X.is_valid()
    X2 = init_point(sc, InitConfig(seed=seed))
    np.testing.assert_array_equal(X.W, X2.W)
    np.testing.assert_array_equal(X.u, X2.u)


def test_init_config_validation():
    with pytest.raises(ValueError):
        InitConfig(sdr_randomizations=0)
    with pytest.raises(ValueError):
        InitConfig(fallback_margin=1.0)
