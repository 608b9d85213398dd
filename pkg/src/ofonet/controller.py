"""One-step update maps of the gradient feedback controllers.

The centralized update descends along the true steady-state sensitivity,

    u+ = u - eta (grad_u(u) + H^T grad_y(y)),

while the decentralized one replaces H by its diagonal, so each agent
only needs its own measurement and self-sensitivity:

    u_i+ = u_i - eta (dphi_i1(u_i) + H_ii dphi_i2(y_i)).

Both consume the measured output y and never recompute it from u, so
the same step functions serve the algebraic and the dynamic closed loop.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import objective as obj_mod
from .errors import DimensionMismatch
from .objective import SeparableObjective
from .plant import SensitivityModel

__all__ = ["Mode", "ControllerConfig", "centralized_step", "decentralized_step"]


class Mode(enum.Enum):
    CENTRALIZED = "centralized"
    DECENTRALIZED = "decentralized"


@dataclass(frozen=True)
class ControllerConfig:
    mode: Mode
    eta: float

    def __post_init__(self):
        if not isinstance(self.mode, Mode):
            raise ValueError(f"mode must be a Mode member, got {self.mode!r}")
        if not (self.eta > 0.0 and np.isfinite(self.eta)):
            raise ValueError(f"step size must be positive and finite, got {self.eta}")


def _check_vec(vec, n: int, name: str) -> NDArray[np.float64]:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (n,):
        raise DimensionMismatch(f"{name} must have length {n}, got shape {vec.shape}")
    return vec


def centralized_step(
    cfg: ControllerConfig,
    obj: SeparableObjective,
    model: SensitivityModel,
    u,
    y,
) -> NDArray[np.float64]:
    """Full-information update using the complete sensitivity H."""
    if cfg.mode is not Mode.CENTRALIZED:
        raise ValueError(f"config mode is {cfg.mode}, expected CENTRALIZED")
    n = model.n
    u = _check_vec(u, n, "u")
    y = _check_vec(y, n, "y")
    return u - cfg.eta * (obj_mod.grad_u(obj, u) + model.H.T @ obj_mod.grad_y(obj, y))


def decentralized_step(
    cfg: ControllerConfig,
    obj: SeparableObjective,
    model: SensitivityModel,
    u,
    y,
) -> NDArray[np.float64]:
    """Communication-free update using only the diagonal of H.

    Computed agent-wise: component i reads only (u_i, y_i, H_ii), which
    makes the decoupling structural rather than incidental.
    """
    if cfg.mode is not Mode.DECENTRALIZED:
        raise ValueError(f"config mode is {cfg.mode}, expected DECENTRALIZED")
    n = model.n
    u = _check_vec(u, n, "u")
    y = _check_vec(y, n, "y")
    h_ii = np.diag(model.H_diag)
    out = np.empty(n)
    for i in range(n):
        dphi1 = obj.input_costs[i][1]
        dphi2 = obj.output_costs[i][1]
        out[i] = u[i] - cfg.eta * (
            dphi1(float(u[i])) + h_ii[i] * dphi2(float(y[i]))
        )
    return out
