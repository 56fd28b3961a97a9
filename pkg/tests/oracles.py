"""Independent reference computations used by the tests.

Each oracle recomputes a quantity the slow, literal way (scalar loops, dense
matrices, explicit symbol streams) without calling the code under test.
"""

from __future__ import annotations

import numpy as np

from mirs_isac.channels import Scenario
from mirs_isac.config import ScenarioConfig, generate_scenario
from mirs_isac.manifold import FACTORS, ProductPoint

# --- channels -----------------------------------------------------------------


def bs_irs_elementwise(positions, sc: Scenario) -> np.ndarray:
    """``G[n, m] = sum_l sigma_l exp(j k (rho_t,l b_m - rho_r,l . t_n))`` by scalar loops."""
    t = np.asarray(positions, dtype=float).reshape(-1, 2)
    k = 2.0 * np.pi / sc.wavelength
    G = np.zeros((len(t), sc.M), dtype=complex)
    for n in range(len(t)):
        for m in range(sc.M):
            for l in range(sc.L):
                phase = sc.rho_t[l] * sc.b[m] - (sc.rho_r[l, 0] * t[n, 0] + sc.rho_r[l, 1] * t[n, 1])
                G[n, m] += sc.sigma_G[l] * np.exp(1j * k * phase)
    return G


def irs_cu_elementwise(positions, sc: Scenario) -> np.ndarray:
    """``f_k[n] = sum_l sigma_k,l exp(j k rho_r,l . t_n)`` by scalar loops."""
    t = np.asarray(positions, dtype=float).reshape(-1, 2)
    k = 2.0 * np.pi / sc.wavelength
    f = np.zeros((sc.K_c, len(t)), dtype=complex)
    for c in range(sc.K_c):
        for n in range(len(t)):
            for l in range(sc.L):
                f[c, n] += sc.sigma_f[c, l] * np.exp(1j * k * (sc.rho_r[l] @ t[n]))
    return f


def comm_sinr_scalar(W, h, sigma2, k) -> float:
    """CU SINR from explicit sums over beamformer columns."""
    def gain(col):
        return abs(sum(np.conj(h[m]) * W[m, col] for m in range(W.shape[0]))) ** 2

    interference = sum(gain(j) for j in range(W.shape[1]) if j != k)
    return gain(k) / (interference + sigma2)


# --- radar --------------------------------------------------------------------


def orthogonal_symbols(J: int, T: int, rng) -> np.ndarray:
    """``S`` of shape (J, T) with ``S S^H = T I`` exactly."""
    Z = rng.standard_normal((T, J)) + 1j * rng.standard_normal((T, J))
    Q, _ = np.linalg.qr(Z)
    return np.sqrt(T) * Q.conj().T


def shift_matrix(T: int, R: int, r: int) -> np.ndarray:
    """Delay matrix ``J[i, j] = 1`` when ``j - i = r - 1``, shape (T, T+R-1)."""
    Jm = np.zeros((T, T + R - 1))
    for i in range(T):
        Jm[i, i + r - 1] = 1.0
    return Jm


def radar_sinr_symbol_level(W, V, H_S, rcs, sigma_S2, T, R, bins, rng) -> np.ndarray:
    """Output SINR of every target from an explicit pulsed transmission.

    The echo of target ``j`` is delayed by its range bin, every target gets
    its own delayed matched filter, and the receive filter acts on the
    vectorized sum. Signal terms are computed noiselessly; the noise power
    is the exact variance of ``v^H n_S`` for white noise of power ``sigma_S2``.
    """
    M, J = W.shape
    K_t = len(H_S)
    S = orthogonal_symbols(J, T, rng)
    shifts = [shift_matrix(T, R, r) for r in bins]
    # per-target echo after its own matched filter: a_j H_j W S J_j (S J_j)^H
    echoes = []
    for j in range(K_t):
        SJ = S @ shifts[j]
        echoes.append(rcs[j] * (H_S[j] @ W @ S @ shifts[j] @ SJ.conj().T).reshape(-1, order="F"))
    # noise n_S = sum_j vec(N_j J_j^H S^H); vec(N A) has covariance sigma^2 (A^T A^*) kron I_M
    noise_cov = np.zeros((M * J, M * J), dtype=complex)
    for j in range(K_t):
        A = shifts[j].T @ S.conj().T
        noise_cov += sigma_S2 * np.kron(A.T @ A.conj(), np.eye(M))
    sinr = np.zeros(K_t)
    for k in range(K_t):
        v = V[:, k]
        powers = np.array([abs(np.vdot(v, e)) ** 2 for e in echoes])
        noise = np.real(np.vdot(v, noise_cov @ v))
        sinr[k] = powers[k] / (powers.sum() - powers[k] + noise)
    return sinr


# --- quasi-Newton -------------------------------------------------------------


def dense_inverse_hessian(S, Y) -> np.ndarray:
    """Inverse-Hessian approximation from pairs (oldest first) by the explicit recursion.

    ``H <- Z^T H Z + delta s s^T`` with ``Z = I - delta y s^T`` and
    ``H_0 = (s.y / y.y) I`` taken from the newest pair.
    """
    n = len(S[0])
    H = (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1]) * np.eye(n)
    for s, y in zip(S, Y):
        delta = 1.0 / (s @ y)
        Z = np.eye(n) - delta * np.outer(y, s)
        H = Z.T @ H @ Z + delta * np.outer(s, s)
    return H


# --- finite differences -------------------------------------------------------


def fd_block(f, X: ProductPoint, name: str, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of ``f`` in one factor, ``2 df/dz*`` for complex factors.

    The directional derivative along ``D`` equals ``Re <g, D>``, so the real
    and imaginary coordinates give ``Re g`` and ``Im g``.
    """
    base = getattr(X, name)
    out = np.zeros(base.shape, dtype=base.dtype)
    units = (1.0, 1j) if np.iscomplexobj(base) else (1.0,)
    for idx in np.ndindex(base.shape):
        for unit in units:
            plus, minus = base.copy(), base.copy()
            plus[idx] += step * unit
            minus[idx] -= step * unit
            d = (f(X.replace(**{name: plus})) - f(X.replace(**{name: minus}))) / (2.0 * step)
            out[idx] += d * unit
    return out


def fd_gradient(f, X: ProductPoint, step: float = 1e-6) -> dict:
    return {name: fd_block(f, X, name, step) for name in FACTORS}


# --- scenarios and points -----------------------------------------------------


def desk_scenario(seed: int = 0, **changes) -> Scenario:
    return generate_scenario(ScenarioConfig().with_updates(**changes), seed)


def random_point(sc: Scenario, rng, w_scale: float = 1.0, u_scale: float = 1.0) -> ProductPoint:
    J = sc.J
    W = w_scale * (rng.standard_normal((sc.M, J)) + 1j * rng.standard_normal((sc.M, J)))
    V = rng.standard_normal((sc.M * J, sc.K_t)) + 1j * rng.standard_normal((sc.M * J, sc.K_t))
    V /= np.linalg.norm(V, axis=0)
    phi = np.exp(1j * rng.uniform(0, 2 * np.pi, sc.N))
    u = u_scale * rng.standard_normal(2 * sc.n_ctrl)
    return ProductPoint(W, V, phi, u)


def gradient_instance(seed: int, a: int, w_jitter: float = 0.3):
    """Random desk instance in power units with constraints on both sides of zero.

    Returns ``(X, scenario)``. The beamformer is the initial one rescaled by a
    random factor plus noise; filters and phases are random and the centers
    are jittered around the packing grid.
    """
    from mirs_isac.initialization import InitConfig, init_point
    from mirs_isac.penalty import power_units

    rng = np.random.default_rng([seed, a, 0xFD])
    sc = desk_scenario(seed, a=a)
    X, sc, _ = power_units(init_point(sc, InitConfig(seed=seed)), sc)
    base = random_point(sc, rng)
    W = rng.uniform(0.5, 1.5) * X.W + w_jitter * base.W / np.sqrt(base.W.size)
    return X.replace(W=W, V=base.V, phi=base.phi, u=X.u + 0.5 * rng.standard_normal(X.u.shape)), sc


def near_branch(h, u: float, margin: float) -> bool:
    """Whether any constraint value sits within ``margin`` of an LQ branch point."""
    h = np.asarray(h)
    return bool(np.any(np.abs(h) < margin) or np.any(np.abs(h - u) < margin))


class BranchCrossing(Exception):
    """A finite-difference stencil point landed on another LQ branch."""


def _branches(h, u):
    return np.stack([h > 0, h > u])


def relative_block_errors(X, sc, params, step: float = 1e-4) -> dict:
    """Relative error of each analytic gradient block against finite differences.

    The reference is the Richardson extrapolation ``(4 D(h/2) - D(h)) / 3`` of
    central differences, which is accurate to O(h^4) while keeping roundoff
    small for blocks whose gradient is tiny next to the objective. The power
    and penalty terms are differenced separately for the same reason. Raises
    :class:`BranchCrossing` when any stencil point changes the LQ branch of
    any constraint, since the objective is only C^1 there.
    """
    from mirs_isac.gradients import euclidean_gradient
    from mirs_isac.metrics import constraint_values, lq_penalty, transmit_power

    base = _branches(constraint_values(X, sc).all, params.u)

    def penalty(Y):
        h = constraint_values(Y, sc).all
        if not np.array_equal(_branches(h, params.u), base):
            raise BranchCrossing
        return params.rho * float(np.sum(lq_penalty(h, params.u))) if h.size else 0.0

    def richardson(f):
        coarse, fine = fd_gradient(f, X, step), fd_gradient(f, X, step / 2)
        return {name: (4.0 * fine[name] - coarse[name]) / 3.0 for name in FACTORS}

    grad = euclidean_gradient(X, sc, params)
    fd_power, fd_penalty = richardson(transmit_power), richardson(penalty)
    out = {}
    for name in FACTORS:
        g, f = getattr(grad, name), fd_power[name] + fd_penalty[name]
        scale = max(np.linalg.norm(g), np.linalg.norm(f))
        out[name] = float(np.linalg.norm(g - f) / scale) if scale > 0 else 0.0
    return out
