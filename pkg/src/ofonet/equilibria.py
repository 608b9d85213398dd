"""Reference solutions: global optimum, decentralized fixed point, Nash checks.

The steady-state design problem is min_u Phi(u, Hu + d).  Its unique
minimizer u_star zeroes the full gradient grad_u + H^T grad_y(Hu + d).
The decentralized controller instead converges to the zero u_inf of the
pseudo-gradient

    F(u) = grad_u(u) + H_diag^T grad_y(Hu + d),

whose zeros are exactly the Nash equilibria of the game in which player
i minimizes phi_i1(u_i) + phi_i2([Hu + d]_i) over its own input.  Both
points are computed here to tolerances well below anything the
trajectory tests assert against.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import objective as obj_mod
from .errors import DimensionMismatch, NoConvergence, SingularMatrix
from .objective import QuadraticObjective, SeparableObjective
from .plant import SensitivityModel

__all__ = [
    "SOLVE_TOL",
    "MAX_ITER",
    "SolutionKind",
    "EquilibriumSolution",
    "global_optimum",
    "decentralized_fixed_point",
    "nash_residual",
    "best_response_check",
]

SOLVE_TOL = 1e-10
MAX_ITER = 10**6


class SolutionKind(enum.Enum):
    GLOBAL_OPTIMUM = "global_optimum"
    DECENTRALIZED_FIXED_POINT = "decentralized_fixed_point"


@dataclass(frozen=True)
class EquilibriumSolution:
    """A solved operating point together with its defining residual.

    ``uniqueness_certified`` is False when the diagonal-dominance margin
    that guarantees a unique fixed point could not be verified; the
    point returned is then merely the one the solver found.
    """

    u: NDArray[np.float64]
    y: NDArray[np.float64]
    residual: float
    kind: SolutionKind
    uniqueness_certified: bool = True

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if u.shape != y.shape or u.ndim != 1:
            raise DimensionMismatch(
                f"u and y must be vectors of equal length, got {u.shape}, {y.shape}"
            )
        u.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "residual", float(self.residual))


def _check_d(d, n: int) -> NDArray[np.float64]:
    d = np.asarray(d, dtype=float)
    if d.shape != (n,):
        raise DimensionMismatch(f"d must have length {n}, got shape {d.shape}")
    return d


def _full_gradient(obj, model, d, u):
    y = model.H @ u + d
    return obj_mod.grad_u(obj, u) + model.H.T @ obj_mod.grad_y(obj, y)


def _pseudo_gradient(obj, model, d, u):
    y = model.H @ u + d
    return obj_mod.grad_u(obj, u) + model.H_diag.T @ obj_mod.grad_y(obj, y)


def _coupling_margin(obj, model):
    # Same inequality as analysis.coupling_condition; duplicated in scalar
    # form here to keep this module independent of the certificate layer.
    sv = np.linalg.svd(model.H, compute_uv=False)
    lhs = float(np.linalg.svd(model.H - model.H_diag, compute_uv=False)[0])
    rhs = float((obj.m_u + sv[-1] ** 2 * obj.m_y) / (sv[0] * obj.L_y))
    return lhs <= rhs, sv


def _iterate(grad_fn, u0, tau):
    u = u0.copy()
    for k in range(MAX_ITER):
        g = grad_fn(u)
        res = float(np.linalg.norm(g))
        if not np.isfinite(res):
            raise NoConvergence(k, res)
        if res <= SOLVE_TOL:
            return u, res
        u = u - tau * g
    raise NoConvergence(MAX_ITER, float(np.linalg.norm(grad_fn(u))))


def global_optimum(obj: SeparableObjective, model: SensitivityModel, d) -> EquilibriumSolution:
    """Solve for the unique minimizer of the steady-state design problem.

    Quadratic objectives are solved exactly through the normal equations
    (gamma1 I + gamma2 H^T H) u = gamma2 H^T (y_ref - d); anything else
    runs a fixed-step gradient iteration to residual SOLVE_TOL.
    """
    n = model.n
    d = _check_d(d, n)
    H = model.H
    if isinstance(obj, QuadraticObjective):
        lhs = obj.gamma1 * np.eye(n) + obj.gamma2 * H.T @ H
        rhs = obj.gamma2 * H.T @ (obj.y_ref - d)
        try:
            u = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrix(f"normal equations are singular: {exc}") from exc
    else:
        sv = np.linalg.svd(H, compute_uv=False)
        m = obj.m_u + sv[-1] ** 2 * obj.m_y
        L = obj.L_u + sv[0] ** 2 * obj.L_y
        u, _ = _iterate(lambda v: _full_gradient(obj, model, d, v), np.zeros(n), m / L**2)
    residual = float(np.linalg.norm(_full_gradient(obj, model, d, u)))
    return EquilibriumSolution(
        u=u, y=H @ u + d, residual=residual, kind=SolutionKind.GLOBAL_OPTIMUM
    )


def decentralized_fixed_point(
    obj: SeparableObjective, model: SensitivityModel, d
) -> EquilibriumSolution:
    """Solve for the zero of the pseudo-gradient (the Nash equilibrium).

    When the diagonal-dominance margin fails, the solver still runs but
    the result carries ``uniqueness_certified=False`` instead of raising:
    exploration beyond the certified regime is allowed, just unlabeled.
    """
    n = model.n
    d = _check_d(d, n)
    H, Hd = model.H, model.H_diag
    certified, sv = _coupling_margin(obj, model)
    if isinstance(obj, QuadraticObjective):
        lhs = obj.gamma1 * np.eye(n) + obj.gamma2 * Hd @ H
        rhs = obj.gamma2 * Hd @ (obj.y_ref - d)
        try:
            u = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrix(f"fixed-point equations are singular: {exc}") from exc
    else:
        m = obj.m_u + sv[-1] ** 2 * obj.m_y
        c = float(np.linalg.svd(H - Hd, compute_uv=False)[0]) * sv[0] * obj.L_y
        sigma_hd = float(np.max(np.abs(np.diag(Hd)))) if n else 0.0
        L = obj.L_u + sigma_hd * sv[0] * obj.L_y
        # m - c > 0 makes tau provably contractive; otherwise best effort.
        tau = (m - c) / L**2 if m > c else m / L**2
        u, _ = _iterate(lambda v: _pseudo_gradient(obj, model, d, v), np.zeros(n), tau)
    residual = float(np.linalg.norm(_pseudo_gradient(obj, model, d, u)))
    return EquilibriumSolution(
        u=u,
        y=H @ u + d,
        residual=residual,
        kind=SolutionKind.DECENTRALIZED_FIXED_POINT,
        uniqueness_certified=certified,
    )


def nash_residual(obj: SeparableObjective, model: SensitivityModel, d, u) -> float:
    """Norm of the pseudo-gradient at u; zero iff u is a Nash equilibrium."""
    n = model.n
    d = _check_d(d, n)
    u = np.asarray(u, dtype=float)
    if u.shape != (n,):
        raise DimensionMismatch(f"u must have length {n}, got shape {u.shape}")
    return float(np.linalg.norm(_pseudo_gradient(obj, model, d, u)))


def _player_cost(obj, model, d, u, i):
    y_i = float(model.H[i] @ u + d[i])
    return obj.input_costs[i][0](float(u[i])) + obj.output_costs[i][0](y_i)


def best_response_check(
    obj: SeparableObjective,
    model: SensitivityModel,
    d,
    u,
    i: int,
    grid_radius: float,
    tol: float = 1e-8,
) -> bool:
    """Brute-force unilateral-deviation test for player i.

    Scans 201 evenly spaced deviations of u_i over
    [-grid_radius, +grid_radius] and reports whether none of them lowers
    player i's own cost by more than ``tol``.  Deliberately independent
    of the gradient machinery so it can serve as its oracle.
    """
    n = model.n
    d = _check_d(d, n)
    u = np.asarray(u, dtype=float)
    if u.shape != (n,):
        raise DimensionMismatch(f"u must have length {n}, got shape {u.shape}")
    if not 0 <= i < n:
        raise DimensionMismatch(f"agent index {i} out of range for n={n}")
    if grid_radius <= 0.0:
        raise ValueError(f"grid_radius must be positive, got {grid_radius}")
    base = _player_cost(obj, model, d, u, i)
    trial = u.copy()
    for delta in np.linspace(-grid_radius, grid_radius, 201):
        trial[i] = u[i] + delta
        if _player_cost(obj, model, d, trial, i) < base - tol:
            return False
    return True
