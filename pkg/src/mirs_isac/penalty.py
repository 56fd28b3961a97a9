"""Exact-penalty outer loop around the L-RBFGS inner solver.

Each round minimises ``||W||^2 + rho * sum P(h_i, u)`` from the previous
solution. ``rho`` grows only while some constraint is violated, and the
smoothing ``u`` and inner tolerance ``eps`` shrink geometrically to their
floors. The loop stops once the iterate has settled, is feasible and both
schedules have bottomed out.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

from .channels import Scenario
from .manifold import ProductPoint
from .metrics import PenaltyParams, constraint_values, to_dbm, transmit_power
from .rbfgs import InnerConfig, InnerTrace, solve_inner

FEASIBILITY_TOL = 1e-6


@dataclass(frozen=True)
class OuterConfig:
    rho_init: float = 1.0
    theta_rho: float = 10.0
    u_init: float = 1.0
    theta_u: float = 0.25
    u_min: float = 1e-4
    eps_init: float = 1e-8
    theta_eps: float = 0.25
    eps_min: float = 1e-10
    tau_conv: float = 1e-5
    max_outer: int = 50
    feas_tol: float = FEASIBILITY_TOL
    # rounds run to a gradient tolerance; the step test alone stops far from stationarity
    inner: InnerConfig = InnerConfig(max_iter=3000, grad_tol=1e-3)
    normalize_power: bool = True

    def __post_init__(self):
        if self.theta_rho <= 1:
            raise ValueError("theta_rho must exceed 1")
        if not (0 < self.theta_u < 1 and 0 < self.theta_eps < 1):
            raise ValueError("decay factors must lie in (0, 1)")
        if min(self.rho_init, self.u_init, self.u_min, self.eps_init, self.eps_min) <= 0:
            raise ValueError("penalty schedule values must be positive")
        if self.max_outer < 1:
            raise ValueError("need at least one outer round")


@dataclass(frozen=True)
class PenaltyState:
    rho: float
    u: float
    eps: float

    @classmethod
    def initial(cls, cfg: OuterConfig) -> "PenaltyState":
        return cls(cfg.rho_init, cfg.u_init, cfg.eps_init)


def update_parameters(state: PenaltyState, violated: bool, cfg: OuterConfig) -> PenaltyState:
    return PenaltyState(
        rho=state.rho * cfg.theta_rho if violated else state.rho,
        u=max(cfg.theta_u * state.u, cfg.u_min),
        eps=max(cfg.theta_eps * state.eps, cfg.eps_min),
    )


@dataclass
class SolveReport:
    X: ProductPoint
    power_watts: float
    power_dBm: float
    feasible: bool
    max_violation: float
    outer_iters: int
    inner_iters_total: int
    wall_time: float
    converged: bool
    trace: list = field(default_factory=list)  # one dict per outer round
    inner_traces: list = field(default_factory=list)  # InnerTrace per round


def power_units(X0: ProductPoint, scenario: Scenario):
    """Equivalent problem measured in units of the starting power.

    Every SINR is unchanged under ``W -> s W`` together with ``noise -> s^2 noise``,
    so solving with ``W / sqrt(P0)`` and noise ``/ P0`` keeps the beamformer on
    the same O(1) scale as the other factors. Returns the scaled point and
    scenario plus ``P0``.
    """
    p0 = transmit_power(X0)
    if not p0 > 0:
        return X0, scenario, 1.0
    scaled = scenario.with_updates(sigma_c2=scenario.sigma_c2 / p0, sigma_S2=scenario.sigma_S2 / p0)
    return X0.replace(W=X0.W / p0**0.5), scaled, p0


def solve(
    X0: ProductPoint,
    scenario: Scenario,
    cfg: OuterConfig = OuterConfig(),
    frozen=(),
) -> SolveReport:
    """Run the penalty method from ``X0``; ``frozen`` factors keep their initial value.

    With ``cfg.normalize_power`` the inner objective (and the ``g`` columns
    of the traces) are in units of the starting power.
    """
    start = time.perf_counter()
    state = PenaltyState.initial(cfg)
    unit = 1.0
    if cfg.normalize_power:
        X0, scenario, unit = power_units(X0, scenario)
    X = X0
    rows, inner_traces = [], []
    inner_total = 0
    converged = False
    for rnd in range(1, cfg.max_outer + 1):
        params = PenaltyParams(state.rho, state.u)
        X_new, trace = solve_inner(X, scenario, params, replace(cfg.inner, eps=state.eps), frozen)
        inner_traces.append(trace)
        inner_total += trace.iterations
        step = X_new.distance(X)
        X = X_new
        violation = constraint_values(X, scenario).max_violation
        violated = violation > cfg.feas_tol
        power = transmit_power(X) * unit
        rows.append(dict(
            round=rnd, rho=state.rho, u=state.u, eps=state.eps, inner_iters=trace.iterations,
            g_final=float(trace.objective[-1]), power_dBm=to_dbm(power),
            max_violation=violation, feasible=not violated,
        ))
        if (step < cfg.tau_conv and not violated and state.u <= cfg.u_min
                and state.eps <= cfg.eps_min):
            converged = True
            break
        state = update_parameters(state, violated, cfg)

    violation = constraint_values(X, scenario).max_violation
    X = X.replace(W=X.W * unit**0.5)
    power = transmit_power(X)
    return SolveReport(
        X=X,
        power_watts=power,
        power_dBm=to_dbm(power),
        feasible=violation <= cfg.feas_tol,
        max_violation=violation,
        outer_iters=len(rows),
        inner_iters_total=inner_total,
        wall_time=time.perf_counter() - start,
        converged=converged,
        trace=rows,
        inner_traces=inner_traces,
    )


__all__ = [
    "FEASIBILITY_TOL",
    "InnerTrace",
    "OuterConfig",
    "PenaltyState",
    "SolveReport",
    "solve",
    "update_parameters",
]
