"""Starting point for the penalty method.

Positions come from a grid packing, phases and receive filters are random, and
the beamformer is obtained from a semidefinite relaxation of the power
minimisation at those fixed values. The relaxation is solved through its dual,
and a rank-one beamformer is recovered by Gaussian randomization. A
zero-forcing construction with power control is the fallback.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, nnls

from .channels import (
    ChannelSet,
    Scenario,
    build_cascaded_channels,
    expand_array_positions,
    inverse_position_projection,
    position_projection,
)
from .manifold import ProductPoint
from .metrics import filter_blocks

log = logging.getLogger(__name__)

POWER_CAP_W = 1e6


class InitializationError(RuntimeError):
    pass


class PackingError(InitializationError):
    """The requested number of arrays does not fit in the region."""


@dataclass(frozen=True)
class InitConfig:
    seed: int = 0
    sdr_enabled: bool = True
    sdr_randomizations: int = 1
    fallback_margin: float = 1.1
    admm_iters: int = 3000
    admm_tol: float = 1e-7
    position_jitter: bool = False

    def __post_init__(self):
        if self.sdr_randomizations < 1:
            raise ValueError("need at least one randomization")
        if self.fallback_margin <= 1:
            raise ValueError("fallback margin must exceed 1")


def init_positions(n_ctrl: int, A: float, d_min: float, rng=None) -> np.ndarray:
    """Raw coordinates of ``n_ctrl`` centers on a square grid in ``(0, A)^2``.

    Centers sit in the middle of the cells of an ``n x n`` grid with
    ``n = ceil(sqrt(n_ctrl))``, so neighbours are ``A/n`` apart. Passing
    ``rng`` adds a small jitter that keeps every pair at least ``d_min`` apart.
    """
    if n_ctrl < 1:
        raise ValueError("need at least one array")
    n_side = int(np.ceil(np.sqrt(n_ctrl)))
    spacing = A / n_side
    if n_side > 1 and spacing < d_min:
        raise PackingError(
            f"{n_ctrl} arrays need spacing {d_min:.4g} m but a {A:.4g} m region gives {spacing:.4g} m"
        )
    idx = np.arange(n_ctrl)
    centers = np.column_stack([(idx % n_side + 0.5) * spacing, (idx // n_side + 0.5) * spacing])
    if rng is not None and n_side > 1:
        slack = spacing - d_min
        centers = centers + rng.uniform(-slack / 4, slack / 4, centers.shape)
    return inverse_position_projection(centers.reshape(-1), A)


def init_phase_filters(N: int, M: int, K_c: int, K_t: int, rng):
    """Random unit-modulus phases and unit-norm receive filters."""
    phi = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, N))
    V = rng.standard_normal((M * (M + K_c), K_t)) + 1j * rng.standard_normal((M * (M + K_c), K_t))
    V /= np.linalg.norm(V, axis=0)
    return phi, V


# --- quadratic forms on w = vec(W) -------------------------------------------


def sdr_constraints(channels: ChannelSet, V, sc: Scenario):
    """Matrices ``P_k`` and bounds ``b_k`` so that ``w^H P_k w >= b_k`` encodes every QoS constraint.

    ``w`` stacks the beamformer columns. Communication uses ``g_k = 2^Gamma - 1``.
    """
    M, J = sc.M, sc.J
    P, b = [], []
    for k in range(sc.K_c):
        R = np.outer(channels.h_C[k], np.conj(channels.h_C[k]))  # h h^H
        g = 2.0 ** sc.gamma[k] - 1.0
        sel = -g * np.ones(J)
        sel[k] = 1.0
        P.append(np.kron(np.diag(sel), R))
        b.append(g * sc.sigma_c2[k])
    blocks = filter_blocks(V, M, J)
    for i in range(sc.K_t):
        Q = np.zeros((M * J, M * J), dtype=complex)
        for j in range(sc.K_t):
            # v^H (I kron H_j) w = c^H w
            c = (np.conj(channels.H_S[j]).T @ blocks[i]).T.reshape(-1)
            weight = sc.T * sc.rcs[j] ** 2 * (1.0 if j == i else -sc.chi[i])
            Q += weight * np.outer(c, np.conj(c))
        P.append(Q)
        b.append(sc.chi[i] * sc.K_t * sc.sigma_S2 * np.vdot(V[:, i], V[:, i]).real)
    return P, np.array(b)


def _inner(A, B):
    return float(np.real(np.vdot(A, B)))


def solve_sdp_admm(P, b, n: int, iters: int = 3000, tol: float = 1e-7, rho: float = 1.0):
    """``min tr(X)`` s.t. ``tr(P_k X) >= b_k``, ``X`` Hermitian PSD, by ADMM.

    The affine step is a projection onto an intersection of halfspaces,
    computed from its small nonnegative dual. Returns ``(X, converged)``.
    """
    m = len(P)
    Gram = np.array([[_inner(Pk, Pl) for Pl in P] for Pk in P])
    Gram += 1e-12 * np.trace(Gram) / max(m, 1) * np.eye(m)
    Rchol = np.linalg.cholesky(Gram).T  # Gram = R^T R

    def project_halfspaces(Y):
        slack = b - np.array([_inner(Pk, Y) for Pk in P])
        if np.all(slack <= 0):
            return Y
        target = np.linalg.solve(Rchol.T, slack)
        lam, _ = nnls(Rchol, target)
        return Y + sum(l * Pk for l, Pk in zip(lam, P))

    eye = np.eye(n)
    Z = np.zeros((n, n), dtype=complex)
    U = np.zeros_like(Z)
    for it in range(iters):
        X = project_halfspaces(Z - U - eye / rho)
        Z_old = Z
        S = X + U
        S = 0.5 * (S + S.conj().T)
        vals, vecs = np.linalg.eigh(S)
        Z = (vecs * np.maximum(vals, 0.0)) @ vecs.conj().T
        U = U + X - Z
        r = np.linalg.norm(X - Z)
        s = rho * np.linalg.norm(Z - Z_old)
        scale = max(np.linalg.norm(Z), 1.0)
        if r < tol * scale and s < tol * scale:
            return Z, True
        # residual balancing
        if r > 10.0 * s:
            rho *= 2.0
            U /= 2.0
        elif s > 10.0 * r:
            rho /= 2.0
            U *= 2.0
    return Z, False


def sdp_power_bound(P, b) -> float:
    """Lower bound ``max_k b_k / lambda_max(P_k)`` on the relaxed optimum."""
    bound = max(bk / max(np.linalg.eigvalsh(Pk)[-1], 1e-300) for Pk, bk in zip(P, b))
    return float(bound) if bound > 0 else 1.0


def _top_eig(P, lam):
    vals, vecs = np.linalg.eigh(sum(l * Pk for l, Pk in zip(lam, P)))
    u = vecs[:, -1]
    return vals, vecs, np.array([np.real(np.vdot(u, Pk @ u)) for Pk in P])


def solve_sdp_dual(P, iters: int = 500):
    """Dual of ``min tr(X)`` s.t. ``tr(P_k X) >= 1``: ``max sum(lam)`` s.t. ``sum lam_k P_k <= I``.

    Solved with SLSQP using ``d lambda_max / d lam_k = u^H P_k u``. Returns the
    multipliers, rescaled so that the top eigenvalue is exactly one.
    """
    m = len(P)
    lam0 = np.ones(m) / max(_top_eig(P, np.ones(m))[0][-1], 1e-300)
    res = minimize(
        lambda lam: (-lam.sum(), -np.ones(m)),
        lam0,
        jac=True,
        method="SLSQP",
        bounds=[(0.0, None)] * m,
        constraints=[dict(type="ineq", fun=lambda lam: 1.0 - _top_eig(P, lam)[0][-1],
                          jac=lambda lam: -_top_eig(P, lam)[2])],
        options=dict(ftol=1e-12, maxiter=iters),
    )
    lam = np.maximum(res.x, 0.0)
    top = _top_eig(P, lam)[0][-1]
    return lam / top if top > 0 else lam


def solve_sdr(P, b, eig_tol: float = 1e-4, admm_iters: int = 3000):
    """Relaxed optimum ``X`` of ``min tr(X)`` s.t. ``tr(P_k X) >= b_k``, ``X`` PSD.

    Complementary slackness puts ``X`` on the top eigenspace of the dual
    matrix. A one-dimensional eigenspace fixes ``X`` up to scale; otherwise the
    small problem restricted to that eigenspace is solved by ADMM.
    """
    scale = sdp_power_bound(P, b)
    Pn = [Pk * (scale / bk) for Pk, bk in zip(P, b)]
    lam = solve_sdp_dual(Pn)
    vals, vecs, _ = _top_eig(Pn, lam)
    basis = vecs[:, vals >= vals[-1] - eig_tol * max(abs(vals[-1]), 1.0)]
    reduced = [basis.conj().T @ Pk @ basis for Pk in Pn]
    r = basis.shape[1]
    if r == 1:
        q = np.array([Rk[0, 0].real for Rk in reduced])
        if np.all(q > 0):
            Y = np.array([[np.max(1.0 / q)]])
        else:
            r = 0
    if r > 1:
        Y, _ = solve_sdp_admm(reduced, np.ones(len(P)), r, admm_iters)
    if r == 0:
        raise InitializationError("relaxation has no feasible point on the dual eigenspace")
    return scale * (basis @ Y @ basis.conj().T)


def _rescale(w, P, b):
    """Smallest scaling of ``w`` meeting every constraint, or ``None``."""
    q = np.array([np.real(np.vdot(w, Pk @ w)) for Pk in P])
    if np.any(q <= 0):
        return None
    # tiny over-scaling absorbs rounding in the quadratic forms
    return w * np.sqrt(max(np.max(b / q), 0.0) * (1.0 + 1e-9))


def randomize(Xsdp, P, b, count: int, rng):
    """Best rank-one candidate among the principal eigenvector and ``count`` Gaussian draws."""
    vals, vecs = np.linalg.eigh(Xsdp)
    vals = np.maximum(vals, 0.0)
    root = vecs * np.sqrt(vals)
    n = Xsdp.shape[0]
    candidates = [vecs[:, -1] * np.sqrt(vals[-1])]
    for _ in range(count):
        r = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
        candidates.append(root @ r)
    best = None
    for w in candidates:
        w = _rescale(w, P, b)
        if w is not None and (best is None or np.vdot(w, w).real < np.vdot(best, best).real):
            best = w
    return best


def _null_direction(target, others):
    """Unit vector maximizing ``|target . w|`` subject to ``others @ w = 0``."""
    d = np.conj(target)
    if len(others):
        others = np.asarray(others)
        d = d - np.linalg.pinv(others) @ (others @ d)
    n = np.linalg.norm(d)
    if n < 1e-9 * np.linalg.norm(target):
        d, n = np.conj(target), np.linalg.norm(target)
    return d / n


def _functionals(channels: ChannelSet, V, sc: Scenario):
    """Every linear term of the QoS constraints as a row acting on ``w = vec(W)``.

    Returns ``comm`` of shape (K_c, J, M*J), where ``comm[k, b] . w = h_C,k^H w_b``,
    and ``sense`` of shape (K_t, K_t, M*J), where ``sense[l, j] . w = v_l^H (I kron H_j) w``.
    """
    M, J = sc.M, sc.J
    comm = np.zeros((sc.K_c, J, M * J), dtype=complex)
    for b in range(J):
        comm[:, b, b * M:(b + 1) * M] = np.conj(channels.h_C)
    blocks = filter_blocks(V, M, J)
    sense = np.zeros((sc.K_t, sc.K_t, M * J), dtype=complex)
    for l in range(sc.K_t):
        for j in range(sc.K_t):
            sense[l, j] = (np.conj(blocks[l]).T @ channels.H_S[j]).reshape(-1)
    return comm, sense


def fallback_beamformer(channels: ChannelSet, V, sc: Scenario, margin: float = 1.1):
    """Zero-forcing beamformer in the stacked space ``w = vec(W)``.

    Each CU and each target gets a direction that maximizes its own useful
    term while nulling every other linear term of the constraints, where the
    null space allows it. The constraints then decouple and the powers follow
    in closed form. The result is scaled by ``margin`` until every constraint holds.
    """
    M, J = sc.M, sc.J
    comm, sense = _functionals(channels, V, sc)
    rows = {("c", k, b): comm[k, b] for k in range(sc.K_c) for b in range(J)}
    rows.update({("s", l, j): sense[l, j] for l in range(sc.K_t) for j in range(sc.K_t)})
    services = [(("c", k, k), (2.0 ** sc.gamma[k] - 1.0) * sc.sigma_c2[k]) for k in range(sc.K_c)]
    services += [
        (("s", i, i), sc.chi[i] * sc.K_t * sc.sigma_S2 * np.vdot(V[:, i], V[:, i]).real
         / (sc.T * sc.rcs[i] ** 2))
        for i in range(sc.K_t)
    ]
    w = np.zeros(M * J, dtype=complex)
    for key, need in services:
        target = rows[key]
        d = _null_direction(target, [r for other, r in rows.items() if other != key])
        w += d * np.sqrt(need / max(np.abs(target @ d) ** 2, 1e-300))

    P, b = sdr_constraints(channels, V, sc)
    while True:
        q = np.array([np.real(np.vdot(w, Pk @ w)) for Pk in P])
        if np.all(q >= b):
            return w.reshape(J, M).T
        if np.vdot(w, w).real > POWER_CAP_W:
            raise InitializationError("fallback beamformer exceeds the power cap")
        w = w * np.sqrt(margin)


def init_beamforming_sdr(channels: ChannelSet, V0, sc: Scenario, cfg: InitConfig = InitConfig(), rng=None):
    """Beamformer meeting every QoS constraint at fixed phases, filters and positions."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    if cfg.sdr_enabled:
        P, b = sdr_constraints(channels, V0, sc)
        try:
            W = fallback_beamformer(channels, V0, sc, cfg.fallback_margin)
        except InitializationError:
            W = None
        try:
            Xs = solve_sdr(P, b, admm_iters=cfg.admm_iters)
        except InitializationError:
            Xs = None
        w = None if Xs is None else randomize(Xs, P, b, cfg.sdr_randomizations, rng)
        if w is not None:
            Wsdr = w.reshape(sc.J, sc.M).T
            if W is None or np.sum(np.abs(Wsdr) ** 2) <= np.sum(np.abs(W) ** 2):
                return Wsdr
        log.debug("SDR extraction %s; using fallback", "failed" if w is None else "worse")
        if W is not None:
            return W
    return fallback_beamformer(channels, V0, sc, cfg.fallback_margin)


def init_point(sc: Scenario, cfg: InitConfig = InitConfig()) -> ProductPoint:
    """Full starting point for ``sc``, drawn from its own RNG stream ``cfg.seed``."""
    rng = np.random.default_rng([cfg.seed, 0x1217])
    u = init_positions(sc.n_ctrl, sc.A, sc.d_min, rng if cfg.position_jitter else None)
    phi, V = init_phase_filters(sc.N, sc.M, sc.K_c, sc.K_t, rng)
    positions = expand_array_positions(position_projection(u, sc.A), sc.a, sc.N, sc.wavelength)
    channels = build_cascaded_channels(phi, positions, sc)
    W = init_beamforming_sdr(channels, V, sc, cfg, rng)
    return ProductPoint(W, V, phi, u)
