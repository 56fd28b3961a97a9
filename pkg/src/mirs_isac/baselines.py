"""Three-stage separate-design baseline.

1. Positions and phases climb the sum channel gain ``sum_k ||h_C,k||^2``.
2. Each receive filter is the generalized Rayleigh-quotient maximizer of its
   target SINR for a reference beamformer.
3. The beamformer comes from the semidefinite relaxation with many Gaussian
   randomizations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .channels import Scenario, build_cascaded_channels, element_positions
from .gradients import centers_to_raw, rows_backward
from .initialization import InitConfig, init_beamforming_sdr, init_point
from .manifold import ProductPoint
from .metrics import evaluate


@dataclass(frozen=True)
class SepConfig:
    ascent_iters: int = 200
    randomizations: int = 500
    min_step: float = 1e-10


def sum_channel_gain(X: ProductPoint, sc: Scenario) -> float:
    ev = evaluate(X, sc)
    return float(np.sum(np.abs(ev.rows_c) ** 2))


def _gain_gradient(X: ProductPoint, sc: Scenario):
    """Riemannian gradient of the sum gain in ``(phi, u)``."""
    ev = evaluate(X, sc)
    gphi, g_centers = rows_backward(ev, sc, 2.0 * ev.rows_c, np.zeros((sc.K_t, sc.M), complex))
    gphi = gphi - np.real(gphi * np.conj(X.phi)) * X.phi
    return gphi, centers_to_raw(g_centers, X.u, sc)


def maximize_channel_gain(X: ProductPoint, sc: Scenario, iters: int = 200, min_step: float = 1e-10):
    """Gradient ascent over phases and positions, rejecting steps that break the spacing.

    Returns the improved point and the number of accepted steps.
    """
    scale = 1.0 / max(sum_channel_gain(X, sc), 1e-300)
    f = sum_channel_gain(X, sc) * scale
    step, accepted = 1.0, 0
    for _ in range(iters):
        gphi, gu = _gain_gradient(X, sc)
        gphi, gu = gphi * scale, gu * scale
        gnorm2 = np.vdot(gphi, gphi).real + gu @ gu
        if gnorm2 == 0.0:
            break
        while step > min_step:
            phi = X.phi + step * gphi
            cand = X.replace(phi=phi / np.abs(phi), u=X.u + step * gu)
            ev = evaluate(cand, sc)
            f_new = float(np.sum(np.abs(ev.rows_c) ** 2)) * scale
            spaced = ev.dists.size == 0 or ev.constraints.h_dist.max() <= 0.0
            if spaced and f_new >= f + 1e-4 * step * gnorm2:
                X, f = cand, f_new
                accepted += 1
                step *= 2.0
                break
            step *= 0.5
        else:
            break
    return X, accepted


def rayleigh_filters(W, channels, sc: Scenario) -> np.ndarray:
    """Receive filters maximizing each target SINR for the beamformer ``W``."""
    M, J = sc.M, sc.J
    # a_j = (I kron H_j) w, so that v^H a_j is the filtered echo of target j
    echoes = np.array([(channels.H_S[j] @ W).T.reshape(-1) for j in range(sc.K_t)])
    V = np.zeros((M * J, sc.K_t), dtype=complex)
    for i in range(sc.K_t):
        B = sc.K_t * sc.sigma_S2 * np.eye(M * J, dtype=complex)
        for j in range(sc.K_t):
            if j != i:
                B += sc.T * sc.rcs[j] ** 2 * np.outer(echoes[j], np.conj(echoes[j]))
        v = np.linalg.solve(B, echoes[i])
        V[:, i] = v / np.linalg.norm(v)
    return V


def separate_design(sc: Scenario, init: InitConfig = InitConfig(), cfg: SepConfig = SepConfig()):
    """Run the three stages; returns ``(X, ascent_steps)``."""
    X = init_point(sc, init)
    X, steps = maximize_channel_gain(X, sc, cfg.ascent_iters, cfg.min_step)
    rng = np.random.default_rng([init.seed, 0x5E9])
    channels = build_cascaded_channels(X.phi, element_positions(X.u, sc), sc)
    W_ref = init_beamforming_sdr(channels, X.V, sc, init, rng)
    V = rayleigh_filters(W_ref, channels, sc)
    W = init_beamforming_sdr(channels, V, sc, replace(init, sdr_randomizations=cfg.randomizations), rng)
    return ProductPoint(W, V, X.phi, X.u), steps


