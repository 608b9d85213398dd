"""Separable per-agent objectives with declared smoothness and convexity moduli.

Each agent i carries an input cost phi_i1(u_i) and an output cost
phi_i2(y_i); the global objective is the sum over agents.  The moduli
(L_u, m_u, L_y, m_y) are declared by the caller and bound every agent;
the library validates them by sampling but never infers them, since
inference from point evaluations is ill-posed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionMismatch

__all__ = [
    "ScalarCost",
    "SeparableObjective",
    "QuadraticObjective",
    "grad_u",
    "grad_y",
    "value",
]

# A scalar cost is a (value, derivative) pair of callables float -> float.
ScalarCost = tuple[Callable[[float], float], Callable[[float], float]]


@dataclass(frozen=True)
class SeparableObjective:
    """Sum of per-agent input and output costs.

    Attributes
    ----------
    input_costs : tuple of (callable, callable)
        Per-agent (phi_i1, dphi_i1) pairs.
    output_costs : tuple of (callable, callable)
        Per-agent (phi_i2, dphi_i2) pairs.
    L_u, m_u : float
        Smoothness and strong-convexity moduli bounding every input cost.
    L_y, m_y : float
        Same for the output costs.
    """

    input_costs: tuple[ScalarCost, ...]
    output_costs: tuple[ScalarCost, ...]
    L_u: float
    m_u: float
    L_y: float
    m_y: float

    def __post_init__(self):
        if len(self.input_costs) != len(self.output_costs):
            raise DimensionMismatch(
                f"{len(self.input_costs)} input costs vs "
                f"{len(self.output_costs)} output costs"
            )
        if len(self.input_costs) == 0:
            raise DimensionMismatch("objective needs at least one agent")
        if not (0.0 < self.m_u <= self.L_u):
            raise ValueError(f"need 0 < m_u <= L_u, got m_u={self.m_u}, L_u={self.L_u}")
        if not (0.0 < self.m_y <= self.L_y):
            raise ValueError(f"need 0 < m_y <= L_y, got m_y={self.m_y}, L_y={self.L_y}")

    @property
    def n(self) -> int:
        """Number of agents."""
        return len(self.input_costs)


class QuadraticObjective(SeparableObjective):
    """Quadratic tracking objective 0.5 (gamma1 ||u||^2 + gamma2 ||y - y_ref||^2).

    The per-agent moduli collapse to L_u = m_u = gamma1 and
    L_y = m_y = gamma2, so every certificate is tight for this family.
    """

    gamma1: float
    gamma2: float
    y_ref: NDArray[np.float64]

    def __init__(self, gamma1: float, gamma2: float, y_ref):
        gamma1 = float(gamma1)
        gamma2 = float(gamma2)
        if gamma1 <= 0.0 or gamma2 <= 0.0:
            raise ValueError(f"weights must be positive, got ({gamma1}, {gamma2})")
        y_ref = np.asarray(y_ref, dtype=float)
        if y_ref.ndim != 1 or y_ref.size == 0:
            raise DimensionMismatch("y_ref must be a nonempty vector")
        if not np.all(np.isfinite(y_ref)):
            raise ValueError("y_ref contains non-finite entries")
        input_costs = tuple(
            (
                lambda a, g=gamma1: 0.5 * g * a * a,
                lambda a, g=gamma1: g * a,
            )
            for _ in range(y_ref.size)
        )
        output_costs = tuple(
            (
                lambda b, g=gamma2, r=float(ri): 0.5 * g * (b - r) ** 2,
                lambda b, g=gamma2, r=float(ri): g * (b - r),
            )
            for ri in y_ref
        )
        super().__init__(input_costs, output_costs, gamma1, gamma1, gamma2, gamma2)
        y_ref = y_ref.copy()
        y_ref.setflags(write=False)
        object.__setattr__(self, "gamma1", gamma1)
        object.__setattr__(self, "gamma2", gamma2)
        object.__setattr__(self, "y_ref", y_ref)


def _check_len(vec, n: int, name: str) -> NDArray[np.float64]:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (n,):
        raise DimensionMismatch(f"{name} must have length {n}, got shape {vec.shape}")
    return vec


def grad_u(obj: SeparableObjective, u) -> NDArray[np.float64]:
    """Gradient of the summed input cost; component i is dphi_i1(u_i)."""
    u = _check_len(u, obj.n, "u")
    if isinstance(obj, QuadraticObjective):
        return obj.gamma1 * u
    return np.array([df(float(ui)) for (_, df), ui in zip(obj.input_costs, u)])


def grad_y(obj: SeparableObjective, y) -> NDArray[np.float64]:
    """Gradient of the summed output cost; component i is dphi_i2(y_i)."""
    y = _check_len(y, obj.n, "y")
    if isinstance(obj, QuadraticObjective):
        return obj.gamma2 * (y - obj.y_ref)
    return np.array([df(float(yi)) for (_, df), yi in zip(obj.output_costs, y)])


def value(obj: SeparableObjective, u, y) -> float:
    """Total cost sum_i phi_i1(u_i) + phi_i2(y_i)."""
    u = _check_len(u, obj.n, "u")
    y = _check_len(y, obj.n, "y")
    if isinstance(obj, QuadraticObjective):
        return float(
            0.5 * obj.gamma1 * np.dot(u, u)
            + 0.5 * obj.gamma2 * np.sum((y - obj.y_ref) ** 2)
        )
    total = 0.0
    for (f, _), ui in zip(obj.input_costs, u):
        total += f(float(ui))
    for (f, _), yi in zip(obj.output_costs, y):
        total += f(float(yi))
    return float(total)
