"""Communication rate, radar SINR, constraint functions and the smoothed objective.

The filtered radar term ``v^H (I kron H) w`` is never formed with a Kronecker
product: with ``v`` reshaped block-wise into an ``M x (K_c+M)`` matrix it is
``sum_b v_b^H H w_b``, and with the rank-one ``H = r^T r`` it reduces further to
``sum_b (r . conj(v_b)) (r . w_b)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import (
    Scenario,
    arrival_frm,
    bs_frm,
    bs_steering,
    expand_array_positions,
    irs_steering,
    position_projection,
)
from .manifold import ProductPoint

LN2 = np.log(2.0)


@dataclass(frozen=True)
class PenaltyParams:
    rho: float
    u: float

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("penalty weight must be >= 0")
        if self.u <= 0:
            raise ValueError("smoothing parameter must be > 0")


@dataclass(frozen=True)
class ConstraintSet:
    """Constraint values; the problem is feasible when every entry is <= 0."""

    h_comm: np.ndarray
    h_sense: np.ndarray
    h_dist: np.ndarray

    @property
    def all(self) -> np.ndarray:
        return np.concatenate([self.h_comm, self.h_sense, self.h_dist])

    @property
    def max_violation(self) -> float:
        values = self.all
        return float(max(values.max(), 0.0)) if values.size else 0.0

    def feasible(self, tol: float = 0.0) -> bool:
        values = self.all
        return bool(values.size == 0 or values.max() <= tol)


def filter_blocks(V, M: int, J: int) -> np.ndarray:
    """Reshape each filter column into its ``M x J`` block matrix, shape (K_t, M, J)."""
    K_t = V.shape[1]
    return V.T.reshape(K_t, J, M).transpose(0, 2, 1)


def blocks_to_filters(blocks) -> np.ndarray:
    """Inverse of :func:`filter_blocks`."""
    K_t, M, J = blocks.shape
    return blocks.transpose(0, 2, 1).reshape(K_t, J * M).T


def comm_rate(W, h_C_k, sigma2: float, k: int):
    """SINR and achievable rate (bits/s/Hz) of CU ``k``.

    Every beamformer column other than ``k`` (including the sensing streams)
    counts as interference.
    """
    gains = np.abs(np.conj(h_C_k) @ W) ** 2
    interference = gains.sum() - gains[k] + sigma2
    sinr = gains[k] / interference
    return float(sinr), float(np.log2(1.0 + sinr))


def radar_sinr(W, v_k, H_S, rcs, T: int, K_t: int, sigma_S2: float, k: int) -> float:
    """Output SINR of target ``k`` for receive filter ``v_k``."""
    v_k = np.asarray(v_k, dtype=complex)
    if not np.any(v_k):
        raise ValueError("receive filter must be nonzero")
    M, J = W.shape
    blocks = v_k.reshape(J, M).T
    # sum_b v_b^H H w_b for every target channel H
    terms = np.array([np.sum(np.conj(blocks) * (H @ W)) for H in H_S])
    weighted = T * np.asarray(rcs) ** 2 * np.abs(terms) ** 2
    interference = weighted.sum() - weighted[k]
    return float(weighted[k] / (interference + K_t * sigma_S2 * np.vdot(v_k, v_k).real))


def lq_penalty(x, u: float):
    """Linear-quadratic smoothing of ``max(0, x)``."""
    if u <= 0:
        raise ValueError("smoothing parameter must be > 0")
    x = np.asarray(x, dtype=float)
    out = np.where(x <= 0, 0.0, np.where(x <= u, x * x / (2.0 * u), x - u / 2.0))
    return out if out.ndim else float(out)


@dataclass
class Evaluation:
    """Every intermediate quantity of one objective evaluation at ``X``.

    Kept around so the gradient can back-propagate through the same values.
    """

    X: ProductPoint
    centers: np.ndarray  # (n_ctrl, 2) projected centers
    positions: np.ndarray  # (N, 2) element positions
    E: np.ndarray  # (N, L) exp(-j k rho_r . t_n)
    Gt: np.ndarray  # (L, M)
    G: np.ndarray  # (N, M)
    f: np.ndarray  # (K_c, N)
    h_d: np.ndarray  # (K_t, M)
    h_r: np.ndarray  # (K_t, N)
    rows_c: np.ndarray  # (K_c, M) = h_C,k^H
    rows_s: np.ndarray  # (K_t, M) = h_S,k^H
    s: np.ndarray  # (K_c, J) rows_c @ W
    sinr_c: np.ndarray
    interf_c: np.ndarray
    rate: np.ndarray
    blocks: np.ndarray  # (K_t, M, J)
    q: np.ndarray  # (K_t, J) rows_s @ W
    p: np.ndarray  # (K_t filter, K_t channel, J)
    z: np.ndarray  # (K_t, K_t)
    num_s: np.ndarray
    den_s: np.ndarray
    sinr_s: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    diffs: np.ndarray  # (P, 2) center differences
    dists: np.ndarray  # (P,)
    constraints: ConstraintSet


def evaluate(X: ProductPoint, sc: Scenario) -> Evaluation:
    centers_flat = position_projection(X.u, sc.A)
    positions = expand_array_positions(centers_flat, sc.a, sc.N, sc.wavelength).reshape(-1, 2)
    centers = centers_flat.reshape(-1, 2)

    E = np.conj(arrival_frm(positions, sc)).T  # (N, L)
    Gt = bs_frm(sc)
    G = (E * sc.sigma_G) @ Gt
    f = np.conj(E) @ sc.sigma_f.T
    f = f.T  # (K_c, N)
    h_d = np.sqrt(sc.alpha_d)[:, None] * bs_steering(sc)
    h_r = np.sqrt(sc.alpha_r)[:, None] * irs_steering(positions, sc)

    phic = np.conj(X.phi)
    rows_c = (phic[None, :] * np.conj(f)) @ G
    rows_s = np.conj(h_d) + (phic[None, :] * np.conj(h_r)) @ G

    W = X.W
    s = rows_c @ W
    gains = np.abs(s) ** 2
    idx = np.arange(sc.K_c)
    signal = gains[idx, idx]
    interf = gains.sum(axis=1) - signal + sc.sigma_c2
    sinr_c = signal / interf
    rate = np.log2(1.0 + sinr_c)

    blocks = filter_blocks(X.V, sc.M, sc.J)
    q = rows_s @ W
    p = np.einsum("jm,imb->ijb", rows_s, np.conj(blocks))
    z = np.einsum("ijb,jb->ij", p, q)
    weights = sc.T * sc.rcs**2
    zz = weights[None, :] * np.abs(z) ** 2
    tdx = np.arange(sc.K_t)
    num_s = zz[tdx, tdx]
    vnorm2 = np.sum(np.abs(X.V) ** 2, axis=0)
    den_s = zz.sum(axis=1) - num_s + sc.K_t * sc.sigma_S2 * vnorm2
    sinr_s = num_s / den_s

    pair_i, pair_j = np.triu_indices(sc.n_ctrl, 1)
    diffs = centers[pair_i] - centers[pair_j]
    dists = np.sqrt(np.sum(diffs**2, axis=1))

    cons = ConstraintSet(
        h_comm=sc.gamma - rate,
        h_sense=sc.chi - sinr_s,
        h_dist=sc.d_min - dists,
    )
    return Evaluation(
        X=X, centers=centers, positions=positions, E=E, Gt=Gt, G=G, f=f, h_d=h_d, h_r=h_r,
        rows_c=rows_c, rows_s=rows_s, s=s, sinr_c=sinr_c, interf_c=interf, rate=rate,
        blocks=blocks, q=q, p=p, z=z, num_s=num_s, den_s=den_s, sinr_s=sinr_s,
        pair_i=pair_i, pair_j=pair_j, diffs=diffs, dists=dists, constraints=cons,
    )


def constraint_values(X: ProductPoint, scenario: Scenario) -> ConstraintSet:
    return evaluate(X, scenario).constraints


def transmit_power(X: ProductPoint) -> float:
    return float(np.sum(np.abs(X.W) ** 2))


def penalized_value(ev: Evaluation, params: PenaltyParams) -> float:
    penalty = np.sum(lq_penalty(ev.constraints.all, params.u)) if ev.constraints.all.size else 0.0
    return transmit_power(ev.X) + params.rho * float(penalty)


def smoothed_objective(X: ProductPoint, scenario: Scenario, params: PenaltyParams) -> float:
    """``||W||_F^2 + rho * sum_i P(h_i(X), u)``."""
    return penalized_value(evaluate(X, scenario), params)


def to_dbm(watts: float) -> float:
    return 10.0 * np.log10(watts) + 30.0 if watts > 0 else float("-inf")
