"""Limited-memory Riemannian BFGS on the product manifold.

Directions come from the two-loop recursion over stored curvature pairs. The
step is chosen by Armijo backtracking through the retraction, and new pairs
are admitted under the cautious rule. Stored pairs are re-projected onto the
tangent space of every new iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channels import Scenario
from .gradients import euclidean_gradient, riemannian_gradient
from .manifold import (
    DegenerateRetractionError,
    Layout,
    ProductPoint,
    TangentVector,
    inner_product,
    retract,
)
from .metrics import PenaltyParams, evaluate, penalized_value


class LineSearchError(RuntimeError):
    """Backtracking hit its cap without satisfying the Armijo condition."""


@dataclass(frozen=True)
class MemoryPair:
    S: TangentVector
    Y: TangentVector
    delta: float  # 1 / <S, Y>


@dataclass
class SolverMemory:
    """Curvature pairs, oldest first, kept as flat real arrays (see :class:`Layout`)."""

    capacity: int = 10
    layout: Layout | None = None
    S: list = field(default_factory=list)
    Y: list = field(default_factory=list)
    delta: list = field(default_factory=list)

    def __len__(self):
        return len(self.S)

    @property
    def pairs(self) -> tuple:
        return tuple(
            MemoryPair(self.layout.unflatten(s), self.layout.unflatten(y), d)
            for s, y, d in zip(self.S, self.Y, self.delta)
        )

    def transport_to(self, X: ProductPoint) -> None:
        """Project every pair onto the tangent space at ``X``; drop pairs losing curvature."""
        if not self.S:
            return
        m = len(self.S)
        moved = self.layout.project(X, np.stack(self.S + self.Y))
        S, Y = moved[:m], moved[m:]
        sy = np.einsum("ij,ij->i", S, Y)
        keep = sy > 0
        self.S = list(S[keep])
        self.Y = list(Y[keep])
        self.delta = list(1.0 / sy[keep])

    def push(self, s: np.ndarray, y: np.ndarray, sy: float) -> None:
        if len(self.S) >= self.capacity:
            del self.S[0], self.Y[0], self.delta[0]
        self.S.append(s)
        self.Y.append(y)
        self.delta.append(1.0 / sy)


@dataclass(frozen=True)
class InnerConfig:
    eps: float = 1e-6
    max_iter: int = 100
    tau_init: float = 1.0
    sigma: float = 1e-4
    backtrack: float = 0.5
    memory: int = 10
    max_backtracks: int = 50
    grad_tol: float = 0.0
    cautious_c: float = 1e-4

    def __post_init__(self):
        if not (0 < self.sigma < 1 and 0 < self.backtrack < 1):
            raise ValueError("Armijo parameters must lie in (0, 1)")
        if self.eps <= 0 or self.max_iter < 1 or self.tau_init <= 0 or self.memory < 1:
            raise ValueError("inner configuration values must be positive")


def _two_loop_flat(g: np.ndarray, memory: SolverMemory) -> np.ndarray:
    if not memory.S:
        return -g
    p = g.copy()
    coeffs = []
    for s, y, d in zip(reversed(memory.S), reversed(memory.Y), reversed(memory.delta)):
        c = d * (s @ p)
        coeffs.append(c)
        p -= c * y
    s_new, y_new = memory.S[-1], memory.Y[-1]
    p *= (s_new @ y_new) / (y_new @ y_new)
    for s, y, d, c in zip(memory.S, memory.Y, memory.delta, reversed(coeffs)):
        p += (c - d * (y @ p)) * s
    return -p


def two_loop_direction(grad: TangentVector, memory: SolverMemory) -> TangentVector:
    """Quasi-Newton direction ``-H grad`` from the stored pairs.

    The initial inverse Hessian is ``<S,Y>/<Y,Y>`` of the newest stored pair,
    or the identity when the memory is empty.
    """
    if not memory.S:
        return -grad
    return memory.layout.unflatten(_two_loop_flat(memory.layout.flatten(grad), memory))


def armijo_search(
    X: ProductPoint,
    d: TangentVector,
    grad: TangentVector,
    objective: Callable[[ProductPoint], float],
    cfg: InnerConfig,
    g0: float | None = None,
):
    """Backtrack ``alpha = tau * gamma^n`` until the Armijo condition holds.

    Returns ``(alpha, X_new, g_new, n_backtracks)``.
    """
    slope = inner_product(grad, d)
    if not slope < 0:
        raise ValueError("direction is not a descent direction")
    g0 = objective(X) if g0 is None else g0
    alpha = cfg.tau_init
    for n in range(cfg.max_backtracks + 1):
        try:
            X_new = retract(X, d, alpha)
        except DegenerateRetractionError:
            alpha *= cfg.backtrack
            continue
        g_new = objective(X_new)
        if g_new <= g0 + cfg.sigma * alpha * slope:
            return alpha, X_new, g_new, n
        alpha *= cfg.backtrack
    raise LineSearchError(f"no Armijo step after {cfg.max_backtracks} backtracks")


def _update_flat(memory, X_new, s, g_new, g_old_t, g_old_norm, cautious_c):
    memory.transport_to(X_new)
    s_norm = np.sqrt(s @ s)
    if s_norm == 0.0:
        return False
    s, y = s / s_norm, (g_new - g_old_t) / s_norm
    sy = s @ y
    if sy > 0 and sy >= cautious_c * (s @ s) * g_old_norm:
        memory.push(s, y, sy)
        return True
    return False


def update_memory(
    memory: SolverMemory,
    X_new: ProductPoint,
    step: TangentVector,
    grad_new: TangentVector,
    grad_old_transported: TangentVector,
    grad_old_norm: float,
    cautious_c: float = 1e-4,
) -> bool:
    """Admit the pair ``(step, grad_new - T(grad_old))`` if it passes the cautious test.

    Both are normalised by ``||step||``. Retained pairs are transported to
    ``X_new`` either way, and pairs whose transported curvature ``<S, Y>`` is
    no longer positive are dropped. Returns whether the new pair was stored.
    """
    if memory.layout is None:
        memory.layout = Layout.from_point(X_new)
    lay = memory.layout
    return _update_flat(memory, X_new, lay.flatten(step), lay.flatten(grad_new),
                        lay.flatten(grad_old_transported), grad_old_norm, cautious_c)


@dataclass
class InnerTrace:
    rows: list = field(default_factory=list)
    stalled: bool = False
    converged: bool = False

    @property
    def objective(self) -> np.ndarray:
        return np.array([r["g"] for r in self.rows])

    @property
    def iterations(self) -> int:
        return max(len(self.rows) - 1, 0)


class Problem:
    """Objective and Riemannian gradient of the smoothed penalty problem.

    ``frozen`` names factors (``"W"``, ``"V"``, ``"phi"``, ``"u"``) held at
    their current value by zeroing their gradient.
    """

    def __init__(self, scenario: Scenario, params: PenaltyParams, frozen=()):
        self.scenario = scenario
        self.params = params
        self.frozen = tuple(frozen)
        self._cache = None

    def _eval(self, X):
        if self._cache is None or self._cache[0] is not X:
            self._cache = (X, evaluate(X, self.scenario))
        return self._cache[1]

    def value(self, X: ProductPoint) -> float:
        return penalized_value(self._eval(X), self.params)

    def max_violation(self, X: ProductPoint) -> float:
        return self._eval(X).constraints.max_violation

    def gradient(self, X: ProductPoint) -> TangentVector:
        egrad = euclidean_gradient(X, self.scenario, self.params, ev=self._eval(X))
        return riemannian_gradient(X, egrad).masked(self.frozen)


def minimize(problem, X0: ProductPoint, cfg: InnerConfig):
    """Algorithm loop shared by :func:`solve_inner` and the tests.

    ``problem`` needs ``value(X)``, ``gradient(X)`` (Riemannian, tangent at X)
    and optionally ``max_violation(X)``.
    """
    lay = Layout.from_point(X0)
    memory = SolverMemory(capacity=cfg.memory, layout=lay)
    trace = InnerTrace()
    violation = getattr(problem, "max_violation", lambda X: float("nan"))
    X = X0
    g = problem.value(X)
    grad = lay.flatten(problem.gradient(X))
    gnorm = float(np.sqrt(grad @ grad))
    trace.rows.append(dict(iter=0, g=g, grad_norm=gnorm, alpha=0.0, n_backtracks=0,
                           max_violation=violation(X), memory_len=0))
    for it in range(1, cfg.max_iter + 1):
        if gnorm <= cfg.grad_tol:
            trace.converged = True
            break
        d = _two_loop_flat(grad, memory)
        if not grad @ d < 0:
            d = -grad
        try:
            alpha, X_new, g_new, nbt = armijo_search(
                X, lay.unflatten(d), lay.unflatten(grad), problem.value, cfg, g0=g
            )
        except LineSearchError:
            trace.stalled = True
            break
        grad_new = lay.flatten(problem.gradient(X_new))
        step_size = X_new.distance(X)
        moved = lay.project(X_new, np.stack([alpha * d, grad]))
        _update_flat(memory, X_new, moved[0], grad_new, moved[1], gnorm, cfg.cautious_c)
        X, g, grad = X_new, g_new, grad_new
        gnorm = float(np.sqrt(grad @ grad))
        trace.rows.append(dict(iter=it, g=g, grad_norm=gnorm, alpha=alpha, n_backtracks=nbt,
                               max_violation=violation(X), memory_len=len(memory)))
        if step_size <= cfg.eps:
            trace.converged = True
            break
    return X, trace


def solve_inner(
    X0: ProductPoint,
    scenario: Scenario,
    params: PenaltyParams,
    cfg: InnerConfig = InnerConfig(),
    frozen=(),
):
    """Minimise the smoothed penalty objective at fixed ``(rho, u)`` from ``X0``."""
    return minimize(Problem(scenario, params, frozen), X0, cfg)
