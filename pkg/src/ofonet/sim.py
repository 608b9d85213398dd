"""Closed-loop execution of controller-plant interconnections.

Two loop kinds share one controller implementation.  The algebraic loop
evaluates the steady-state map directly,

    y_k = H u_k + d,    u_{k+1} = controller(u_k, y_k),

while the dynamic loop runs the full plant recursion: at iteration k the
controller reads y_k computed from (x_k, u_k), then the input and the
state both advance once (synchronous interconnection).

Runs early-stop when successive iterates move less than EARLY_STOP_TOL
and raise NonFinite, carrying the finite prefix, when an iterate
diverges.  Trajectories round-trip through CSV at 17 significant digits
so identical configurations reproduce byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .controller import ControllerConfig, Mode, centralized_step, decentralized_step
from .errors import DimensionMismatch, NonFinite
from .plant import LtiPlant, SensitivityModel, compute_sensitivity

__all__ = [
    "EARLY_STOP_TOL",
    "DEFAULT_STEPS",
    "RunInfo",
    "Trajectory",
    "ErrorMetrics",
    "run_algebraic",
    "run_lti",
    "metrics",
    "write_trajectory_csv",
]

EARLY_STOP_TOL = 1e-12
DEFAULT_STEPS = 10**5


@dataclass(frozen=True)
class RunInfo:
    mode: Mode
    eta: float
    plant_kind: str  # "algebraic" or "lti"
    iterations: int  # controller updates performed
    early_stopped: bool
    seed: Optional[int] = None


@dataclass(frozen=True)
class Trajectory:
    """Recorded closed-loop iterates; row k holds (u_k, y_k[, x_k])."""

    u_series: NDArray[np.float64]
    y_series: NDArray[np.float64]
    x_series: Optional[NDArray[np.float64]]
    info: RunInfo

    def __post_init__(self):
        u = np.asarray(self.u_series, dtype=float)
        y = np.asarray(self.y_series, dtype=float)
        if u.shape != y.shape:
            raise DimensionMismatch(
                f"u_series and y_series shapes differ: {u.shape} vs {y.shape}"
            )
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise ValueError("trajectory contains non-finite entries")
        object.__setattr__(self, "u_series", u)
        object.__setattr__(self, "y_series", y)
        if self.x_series is not None:
            x = np.asarray(self.x_series, dtype=float)
            if x.shape[0] != u.shape[0]:
                raise DimensionMismatch(
                    f"x_series has {x.shape[0]} rows, expected {u.shape[0]}"
                )
            if not np.all(np.isfinite(x)):
                raise ValueError("state series contains non-finite entries")
            object.__setattr__(self, "x_series", x)

    def __len__(self) -> int:
        return self.u_series.shape[0]


@dataclass(frozen=True)
class ErrorMetrics:
    """Per-step errors; ``absolute`` is set when the reference is zero."""

    rel_err_u: NDArray[np.float64]
    combined_sq: Optional[NDArray[np.float64]]
    absolute: bool = False


def _step_fn(cfg: ControllerConfig):
    if cfg.mode is Mode.CENTRALIZED:
        return centralized_step
    return decentralized_step


def _init_vec(value, n: int, name: str) -> NDArray[np.float64]:
    if value is None:
        return np.zeros(n)
    vec = np.asarray(value, dtype=float)
    if vec.shape != (n,):
        raise DimensionMismatch(f"{name} must have length {n}, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"{name} contains non-finite entries")
    return vec


def _partial(u_list, y_list, x_list, info):
    if not u_list:
        return None
    x = np.array(x_list) if x_list is not None else None
    return Trajectory(
        u_series=np.array(u_list), y_series=np.array(y_list), x_series=x, info=info
    )


def run_algebraic(
    model: SensitivityModel,
    obj,
    d,
    cfg: ControllerConfig,
    u0=None,
    steps: int = DEFAULT_STEPS,
    seed: Optional[int] = None,
) -> Trajectory:
    """Run the steady-state (algebraic) closed loop for up to ``steps`` updates."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    n = model.n
    d = _init_vec(d, n, "d")
    u = _init_vec(u0, n, "u0")
    take = _step_fn(cfg)
    u_list: list = []
    y_list: list = []
    early = False
    iterations = 0

    def info(k):
        return RunInfo(cfg.mode, cfg.eta, "algebraic", k, early, seed)

    # overflow past float range is the divergence signal, not an error
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            y = model.H @ u + d
            if not np.all(np.isfinite(y)):
                raise NonFinite(k, _partial(u_list, y_list, None, info(iterations)))
            u_list.append(u)
            y_list.append(y)
            u_next = take(cfg, obj, model, u, y)
            iterations += 1
            if not np.all(np.isfinite(u_next)):
                raise NonFinite(k + 1, _partial(u_list, y_list, None, info(iterations)))
            delta = float(np.linalg.norm(u_next - u))
            u = u_next
            if delta < EARLY_STOP_TOL:
                early = True
                break
    u_list.append(u)
    y_list.append(model.H @ u + d)
    return Trajectory(
        u_series=np.array(u_list),
        y_series=np.array(y_list),
        x_series=None,
        info=info(iterations),
    )


def run_lti(
    plant: LtiPlant,
    obj,
    cfg: ControllerConfig,
    x0=None,
    u0=None,
    steps: int = DEFAULT_STEPS,
    seed: Optional[int] = None,
) -> Trajectory:
    """Run the closed loop against the full plant dynamics.

    Early stop requires both the input and the state increments to fall
    below EARLY_STOP_TOL, so a still-settling plant keeps the run alive
    even once the controller has effectively frozen.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    model = compute_sensitivity(plant)
    x = _init_vec(x0, plant.n_state, "x0")
    u = _init_vec(u0, plant.n, "u0")
    take = _step_fn(cfg)
    u_list: list = []
    y_list: list = []
    x_list: list = []
    early = False
    iterations = 0

    def info(k):
        return RunInfo(cfg.mode, cfg.eta, "lti", k, early, seed)

    # overflow past float range is the divergence signal, not an error
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            x_next, y = plant.A @ x + plant.B @ u, plant.C @ x + plant.D @ u + plant.d
            if not np.all(np.isfinite(y)):
                raise NonFinite(k, _partial(u_list, y_list, x_list, info(iterations)))
            u_list.append(u)
            y_list.append(y)
            x_list.append(x)
            u_next = take(cfg, obj, model, u, y)
            iterations += 1
            if not (np.all(np.isfinite(u_next)) and np.all(np.isfinite(x_next))):
                raise NonFinite(k + 1, _partial(u_list, y_list, x_list, info(iterations)))
            delta_u = float(np.linalg.norm(u_next - u))
            delta_x = float(np.linalg.norm(x_next - x))
            u, x = u_next, x_next
            if delta_u < EARLY_STOP_TOL and delta_x < EARLY_STOP_TOL:
                early = True
                break
    u_list.append(u)
    y_list.append(plant.C @ x + plant.D @ u + plant.d)
    x_list.append(x)
    return Trajectory(
        u_series=np.array(u_list),
        y_series=np.array(y_list),
        x_series=np.array(x_list),
        info=info(iterations),
    )


def metrics(
    trajectory: Trajectory, u_ref, model: Optional[SensitivityModel] = None
) -> ErrorMetrics:
    """Per-step error metrics against a reference input.

    rel_err_u is ||u_k - u_ref|| / ||u_ref|| (absolute when the
    reference is zero, flagged).  For dynamic runs with a model the
    combined squared error ||x_k - H_x u_k||^2 + ||u_k - u_ref||^2 is
    attached; the reference should then be the decentralized fixed point.
    """
    u_ref = np.asarray(u_ref, dtype=float)
    u = trajectory.u_series
    if u_ref.shape != (u.shape[1],):
        raise DimensionMismatch(
            f"u_ref must have length {u.shape[1]}, got shape {u_ref.shape}"
        )
    # norms of a diverging tail may overflow to inf; that is the metric
    with np.errstate(over="ignore", invalid="ignore"):
        err = np.linalg.norm(u - u_ref, axis=1)
        ref_norm = float(np.linalg.norm(u_ref))
        absolute = ref_norm == 0.0
        rel = err if absolute else err / ref_norm
        combined = None
        if trajectory.x_series is not None and model is not None:
            resid = trajectory.x_series - trajectory.u_series @ model.H_x.T
            combined = np.sum(resid**2, axis=1) + err**2
    return ErrorMetrics(rel_err_u=rel, combined_sq=combined, absolute=absolute)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(
    path, trajectory: Trajectory, err: ErrorMetrics, decimate: int = 1
) -> None:
    """Write a trajectory with its metrics as locale-independent CSV.

    Columns: k, u_1..u_n, y_1..y_n, x_1..x_m (dynamic runs), rel_err_u,
    combined_sq (when present).  ``decimate`` keeps every k-th row;
    metrics must already be computed on the undecimated series.
    """
    if decimate < 1:
        raise ValueError(f"decimate must be >= 1, got {decimate}")
    n = trajectory.u_series.shape[1]
    header = ["k"]
    header += [f"u_{i + 1}" for i in range(n)]
    header += [f"y_{i + 1}" for i in range(n)]
    if trajectory.x_series is not None:
        header += [f"x_{i + 1}" for i in range(trajectory.x_series.shape[1])]
    header.append("rel_err_u")
    if err.combined_sq is not None:
        header.append("combined_sq")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(0, len(trajectory), decimate):
            row = [str(k)]
            row += [_fmt(v) for v in trajectory.u_series[k]]
            row += [_fmt(v) for v in trajectory.y_series[k]]
            if trajectory.x_series is not None:
                row += [_fmt(v) for v in trajectory.x_series[k]]
            row.append(_fmt(err.rel_err_u[k]))
            if err.combined_sq is not None:
                row.append(_fmt(err.combined_sq[k]))
            fh.write(",".join(row) + "\n")
