"""Discrete-time LTI network plant and its steady-state sensitivity model.

The plant is the interconnection target of the feedback optimizers:

    x_{k+1} = A x_k + B u_k
    y_k     = C x_k + D u_k + d

with one scalar input and one scalar output per agent.  The state may
have a higher dimension than the number of agents (rectangular B and C),
which is what networked physical models such as the DC grid produce.

The steady-state sensitivity H = C (I - A)^{-1} B + D maps constant
inputs to steady-state outputs, y = H u + d; its diagonal part H_diag is
all the decentralized controller gets to use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, DimensionMismatch, SingularMatrix

__all__ = [
    "SCHUR_TOL",
    "LtiPlant",
    "SensitivityModel",
    "is_schur_stable",
    "compute_sensitivity",
    "step",
    "steady_state_output",
    "plant_from_dict",
]

# Margin on the unit circle below which a spectral radius counts as stable.
SCHUR_TOL = 1e-9


def _as_matrix(value, name: str) -> NDArray[np.float64]:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def is_schur_stable(A) -> tuple[bool, float]:
    """Check discrete-time asymptotic stability of a transition matrix.

    Parameters
    ----------
    A : array_like
        Square matrix.

    Returns
    -------
    stable : bool
        True iff the spectral radius is below ``1 - SCHUR_TOL``.
    radius : float
        The spectral radius max |eig(A)|.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    radius = float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0
    return radius < 1.0 - SCHUR_TOL, radius


@dataclass(frozen=True)
class LtiPlant:
    """Asymptotically stable discrete-time LTI plant with output disturbance.

    Attributes
    ----------
    A : ndarray, shape (n_state, n_state)
        State transition matrix; spectral radius strictly below 1.
    B : ndarray, shape (n_state, n)
        Input matrix.
    C : ndarray, shape (n, n_state)
        Output matrix.
    D : ndarray, shape (n, n)
        Feedthrough.
    d : ndarray, shape (n,)
        Constant output disturbance.
    """

    A: NDArray[np.float64]
    B: NDArray[np.float64]
    C: NDArray[np.float64]
    D: NDArray[np.float64]
    d: NDArray[np.float64]

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        D = _as_matrix(self.D, "D")
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 1:
            raise DimensionMismatch(f"d must be a vector, got ndim={d.ndim}")
        if not np.all(np.isfinite(d)):
            raise ValueError("d contains non-finite entries")
        n_state = A.shape[0]
        if A.shape[1] != n_state:
            raise DimensionMismatch(f"A must be square, got shape {A.shape}")
        n = B.shape[1]
        if B.shape[0] != n_state:
            raise DimensionMismatch(
                f"B must have {n_state} rows to match A, got shape {B.shape}"
            )
        if C.shape != (n, n_state):
            raise DimensionMismatch(
                f"C must have shape ({n}, {n_state}), got {C.shape}"
            )
        if D.shape != (n, n):
            raise DimensionMismatch(f"D must have shape ({n}, {n}), got {D.shape}")
        if d.shape != (n,):
            raise DimensionMismatch(f"d must have length {n}, got {d.shape}")
        stable, radius = is_schur_stable(A)
        if not stable:
            raise ValueError(
                f"A is not Schur stable (spectral radius {radius:.6g}); "
                "(I - A) would be singular or ill-conditioned"
            )
        for name, arr in (("A", A), ("B", B), ("C", C), ("D", D), ("d", d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        """Number of agents (inputs and outputs)."""
        return self.B.shape[1]

    @property
    def n_state(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class SensitivityModel:
    """Steady-state input-output sensitivity of an LTI plant.

    Attributes
    ----------
    H : ndarray, shape (n, n)
        Steady-state gain C (I - A)^{-1} B + D.
    H_diag : ndarray, shape (n, n)
        Diagonal matrix holding the diagonal of H.
    H_x : ndarray, shape (n_state, n)
        State sensitivity (I - A)^{-1} B.
    """

    H: NDArray[np.float64]
    H_diag: NDArray[np.float64]
    H_x: NDArray[np.float64]

    def __post_init__(self):
        H = _as_matrix(self.H, "H")
        H_diag = _as_matrix(self.H_diag, "H_diag")
        H_x = _as_matrix(self.H_x, "H_x")
        n = H.shape[0]
        if H.shape != (n, n):
            raise DimensionMismatch(f"H must be square, got shape {H.shape}")
        if H_diag.shape != (n, n):
            raise DimensionMismatch(
                f"H_diag must have shape ({n}, {n}), got {H_diag.shape}"
            )
        if H_x.shape[1] != n:
            raise DimensionMismatch(
                f"H_x must have {n} columns, got shape {H_x.shape}"
            )
        off = H_diag - np.diag(np.diag(H_diag))
        if np.any(off != 0.0):
            raise ValueError("H_diag has nonzero off-diagonal entries")
        if np.any(np.diag(H_diag) != np.diag(H)):
            raise ValueError("diagonal of H_diag differs from diagonal of H")
        for name, arr in (("H", H), ("H_diag", H_diag), ("H_x", H_x)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.H.shape[0]


def compute_sensitivity(plant: LtiPlant) -> SensitivityModel:
    """Derive the steady-state sensitivity model of a stable plant.

    Solves (I - A) X = B column-wise rather than forming an explicit
    inverse, then sets H = C X + D.

    Raises
    ------
    SingularMatrix
        If (I - A) is numerically singular, which means an unstable or
        marginally stable plant slipped past validation.
    """
    n_state = plant.n_state
    try:
        H_x = np.linalg.solve(np.eye(n_state) - plant.A, plant.B)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(f"(I - A) is singular: {exc}") from exc
    H = plant.C @ H_x + plant.D
    return SensitivityModel(H=H, H_diag=np.diag(np.diag(H)), H_x=H_x)


def step(plant: LtiPlant, x, u) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Advance the plant one sample: returns (x_next, y) for state x, input u."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (plant.n_state,):
        raise DimensionMismatch(
            f"state must have length {plant.n_state}, got {x.shape}"
        )
    if u.shape != (plant.n,):
        raise DimensionMismatch(f"input must have length {plant.n}, got {u.shape}")
    x_next = plant.A @ x + plant.B @ u
    y = plant.C @ x + plant.D @ u + plant.d
    return x_next, y


def plant_from_dict(data: dict) -> LtiPlant:
    """Build a plant from parsed JSON with keys "A", "B", "C", "D", "d".

    Matrices are row-major nested arrays of finite doubles.  Any
    malformed entry is rejected with ConfigError naming the offending key.
    """
    if not isinstance(data, dict):
        raise ConfigError("plant specification must be a JSON object")
    required = ("A", "B", "C", "D", "d")
    for key in required:
        if key not in data:
            raise ConfigError(f"plant specification is missing key '{key}'")
    unknown = set(data) - set(required)
    if unknown:
        raise ConfigError(f"unknown plant keys: {sorted(unknown)}")
    parsed = {}
    for key in required:
        try:
            arr = np.asarray(data[key], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"plant key '{key}' is not numeric: {exc}") from exc
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"plant key '{key}' contains non-finite entries")
        want = 1 if key == "d" else 2
        if arr.ndim != want:
            raise ConfigError(
                f"plant key '{key}' must be {want}-dimensional, got ndim={arr.ndim}"
            )
        parsed[key] = arr
    try:
        return LtiPlant(**parsed)
    except (DimensionMismatch, ValueError) as exc:
        raise ConfigError(f"inconsistent plant specification: {exc}") from exc


def steady_state_output(model: SensitivityModel, u, d) -> NDArray[np.float64]:
    """Steady-state output H u + d for a constant input u."""
    u = np.asarray(u, dtype=float)
    d = np.asarray(d, dtype=float)
    if u.shape != (model.n,):
        raise DimensionMismatch(f"input must have length {model.n}, got {u.shape}")
    if d.shape != (model.n,):
        raise DimensionMismatch(
            f"disturbance must have length {model.n}, got {d.shape}"
        )
    return model.H @ u + d
