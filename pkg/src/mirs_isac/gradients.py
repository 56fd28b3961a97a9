"""Euclidean and Riemannian gradients of the smoothed penalty objective.

Convention: for a real function ``g`` and complex variable ``z`` the Euclidean
gradient is ``2 dg/dz*``, so that the directional derivative along ``D`` is
``Re <grad, D>``. In particular ``||W||^2`` has gradient ``2W``.

The gradient is assembled by a reverse sweep through the quantities cached in
:class:`~mirs_isac.metrics.Evaluation`::

    rates / SINRs -> (s, z) -> (W, V, rows h_C^H, rows h_S^H)
                  -> (phi, G, f, h_r) -> element positions -> centers -> u_raw

Each penalty term is seeded with ``rho * P'(h_i)`` and terms with ``h_i <= 0``
are skipped.
"""

from __future__ import annotations

import logging

import numpy as np

from .channels import Scenario, sigmoid
from .manifold import FACTORS, ProductPoint, TangentVector, inner_product, norm, project_tangent
from .metrics import LN2, Evaluation, PenaltyParams, blocks_to_filters, evaluate, smoothed_objective

log = logging.getLogger(__name__)


class SingularGeometryError(ArithmeticError):
    """Two array centers coincide, so the distance gradient is undefined."""


class EuclideanGradient(TangentVector):
    """Ambient gradient; not tangent in general."""


def lq_penalty_derivative(x, u: float):
    """Derivative of the linear-quadratic penalty with respect to ``x``."""
    if u <= 0:
        raise ValueError("smoothing parameter must be > 0")
    x = np.asarray(x, dtype=float)
    out = np.where(x <= 0, 0.0, np.where(x <= u, x / u, 1.0))
    return out if out.ndim else float(out)


def _backprop(ev: Evaluation, sc: Scenario, w_comm, w_sense, w_dist, power_weight=1.0):
    """Gradient of ``power_weight*||W||^2 + sum w_i h_i`` at the evaluated point."""
    X = ev.X
    M, J = sc.M, sc.J
    gW = 2.0 * power_weight * X.W
    g_rows_c = np.zeros((sc.K_c, M), dtype=complex)
    g_rows_s = np.zeros((sc.K_t, M), dtype=complex)
    g_blocks = np.zeros((sc.K_t, M, J), dtype=complex)
    g_vnoise = np.zeros(sc.K_t)

    # communication: h = Gamma - log2(1 + sinr)
    for k in np.flatnonzero(w_comm):
        seed = -w_comm[k] / ((1.0 + ev.sinr_c[k]) * LN2)
        I = ev.interf_c[k]
        S = ev.sinr_c[k] * I
        gs = -2.0 * S / I**2 * ev.s[k]
        gs[k] = 2.0 * ev.s[k, k] / I
        gs *= seed
        gW += np.outer(np.conj(ev.rows_c[k]), gs)
        g_rows_c[k] += np.conj(X.W) @ gs

    # sensing: h = chi - sinr
    weights = sc.T * sc.rcs**2
    for i in np.flatnonzero(w_sense):
        seed = -w_sense[i]
        den = ev.den_s[i]
        gz = -ev.num_s[i] / den**2 * weights * 2.0 * ev.z[i]
        gz[i] = weights[i] * 2.0 * ev.z[i, i] / den
        gz *= seed
        g_vnoise[i] += seed * (-ev.num_s[i] / den**2) * sc.K_t * sc.sigma_S2 * 2.0
        # z_ij = sum_b p_ijb q_jb
        gp = np.conj(ev.q) * gz[:, None]  # (K_t channels, J)
        gq = np.conj(ev.p[i]) * gz[:, None]
        gW += np.conj(ev.rows_s).T @ gq
        g_rows_s += gq @ np.conj(X.W).T
        # p_ijb = sum_m r_jm conj(B_i[m, b])
        g_rows_s += gp @ ev.blocks[i].T
        g_blocks[i] += ev.rows_s.T @ np.conj(gp)

    gV = blocks_to_filters(g_blocks) + X.V * g_vnoise[None, :]
    gphi, g_centers = rows_backward(ev, sc, g_rows_c, g_rows_s)

    active = np.flatnonzero(w_dist)
    if active.size:
        d = ev.dists[active]
        if np.any(d == 0.0):
            raise SingularGeometryError("coincident array centers")
        unit = ev.diffs[active] / d[:, None]
        contrib = -w_dist[active][:, None] * unit
        np.add.at(g_centers, ev.pair_i[active], contrib)
        np.add.at(g_centers, ev.pair_j[active], -contrib)

    return EuclideanGradient(gW, gV, gphi, centers_to_raw(g_centers, X.u, sc))


def centers_to_raw(g_centers, u_raw, sc: Scenario) -> np.ndarray:
    """Chain a gradient on projected centers (n_ctrl, 2) through the sigmoid map."""
    sg = sigmoid(u_raw)
    return g_centers.reshape(-1) * sc.A * sg * (1.0 - sg)


def rows_backward(ev: Evaluation, sc: Scenario, g_rows_c, g_rows_s):
    """Push gradients on the channel rows ``h_C^H``, ``h_S^H`` back to ``phi`` and the centers.

    Returns ``(g_phi, g_centers)`` with ``g_centers`` of shape (n_ctrl, 2).
    """
    X = ev.X
    N, M = sc.N, sc.M
    gG = np.zeros((N, M), dtype=complex)
    gphi = np.zeros(N, dtype=complex)
    gf = np.zeros((sc.K_c, N), dtype=complex)
    ghr = np.zeros((sc.K_t, N), dtype=complex)
    if sc.K_c:
        Gc = ev.G @ np.conj(g_rows_c).T  # (N, K_c)
        gphi += np.sum(np.conj(ev.f).T * Gc, axis=1)
        gf += (np.conj(X.phi)[:, None] * Gc).T
        gG += (X.phi[:, None] * ev.f.T) @ g_rows_c
    if sc.K_t:
        Gs = ev.G @ np.conj(g_rows_s).T
        gphi += np.sum(np.conj(ev.h_r).T * Gs, axis=1)
        ghr += (np.conj(X.phi)[:, None] * Gs).T
        gG += (X.phi[:, None] * ev.h_r.T) @ g_rows_s

    # channels -> element positions (real)
    kw = sc.wavenumber
    g_pos = np.zeros((N, 2))
    for c in range(2):
        dG = (ev.E * (-1j * kw * sc.rho_r[:, c]) * sc.sigma_G) @ ev.Gt
        g_pos[:, c] += np.real(np.sum(np.conj(gG) * dG, axis=1))
        if sc.K_c:
            df = (np.conj(ev.E) * (1j * kw * sc.rho_r[:, c])) @ sc.sigma_f.T  # (N, K_c)
            g_pos[:, c] += np.real(np.sum(np.conj(gf).T * df, axis=1))
        if sc.K_t:
            dhr = 1j * kw * sc.rho_I[:, c][:, None] * ev.h_r  # (K_t, N)
            g_pos[:, c] += np.real(np.sum(np.conj(ghr) * dhr, axis=0))

    aa = sc.a * sc.a
    g_centers = g_pos.reshape(sc.n_ctrl, aa, 2).sum(axis=1)
    return gphi, g_centers


def penalty_weights(ev: Evaluation, params: PenaltyParams):
    cons = ev.constraints
    return tuple(
        params.rho * lq_penalty_derivative(h, params.u) if h.size else np.zeros(0)
        for h in (cons.h_comm, cons.h_sense, cons.h_dist)
    )


def euclidean_gradient(
    X: ProductPoint, scenario: Scenario, params: PenaltyParams, ev: Evaluation | None = None
) -> EuclideanGradient:
    """Euclidean gradient of the smoothed objective at ``X``.

    Pass a cached ``ev`` (from :func:`~mirs_isac.metrics.evaluate`) to avoid
    recomputing the channels.
    """
    ev = evaluate(X, scenario) if ev is None else ev
    w_comm, w_sense, w_dist = penalty_weights(ev, params)
    grad = _backprop(ev, scenario, w_comm, w_sense, w_dist)
    if log.isEnabledFor(logging.DEBUG):
        _dump_constraint_norms(ev, scenario, w_comm, w_sense, w_dist)
    return grad


def constraint_gradient(ev: Evaluation, scenario: Scenario, kind: str, index: int):
    """Euclidean gradient of the single constraint ``h_{kind}[index]``."""
    sizes = {"comm": scenario.K_c, "sense": scenario.K_t, "dist": ev.dists.size}
    weights = {name: np.zeros(n) for name, n in sizes.items()}
    weights[kind][index] = 1.0
    return _backprop(ev, scenario, weights["comm"], weights["sense"], weights["dist"], 0.0)


def _dump_constraint_norms(ev, scenario, w_comm, w_sense, w_dist):
    log.debug("%-6s %5s %12s %12s %12s", "kind", "idx", "h", "weight", "|grad h|")
    cons = ev.constraints
    for kind, h, w in (("comm", cons.h_comm, w_comm), ("sense", cons.h_sense, w_sense),
                       ("dist", cons.h_dist, w_dist)):
        for i in np.flatnonzero(w):
            g = constraint_gradient(ev, scenario, kind, int(i))
            log.debug("%-6s %5d %12.4e %12.4e %12.4e", kind, i, h[i], w[i], norm(g))


def riemannian_gradient(X: ProductPoint, E: TangentVector) -> TangentVector:
    """Project the Euclidean gradient onto the tangent space at ``X``."""
    return project_tangent(X, E)


def check_gradients(X: ProductPoint, scenario: Scenario, params: PenaltyParams, step: float = 1e-6,
                    rng=None) -> dict:
    """Relative error between the analytic and a central-difference directional derivative.

    One random direction per factor; returns ``{factor: relative error}``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    grad = euclidean_gradient(X, scenario, params)
    errors = {}
    for name in FACTORS:
        base = getattr(X, name)
        d = rng.standard_normal(base.shape)
        if np.iscomplexobj(base):
            d = d + 1j * rng.standard_normal(base.shape)
        direction = TangentVector(**{n: (d if n == name else np.zeros_like(getattr(X, n))) for n in FACTORS})
        fd = (smoothed_objective(X.replace(**{name: base + step * d}), scenario, params)
              - smoothed_objective(X.replace(**{name: base - step * d}), scenario, params)) / (2 * step)
        exact = inner_product(grad, direction)
        errors[name] = abs(fd - exact) / max(abs(exact), abs(fd), 1e-300)
    return errors
