"""DC power-grid case study: assembly, discretization, and the G-sweep.

The network couples node voltages V (capacitive nodes with conductance
G) and line currents f (inductive lines with resistance R) through the
incidence matrix B:

    C_cap dV/dt = -G V - B f + I_inj
    L_ind df/dt =  B^T V - R f

assembled as E dz/dt = K z + [I; 0] I_inj with K = [[-G, -B], [B^T, -R]].
The node-balance signs above make K Hurwitz for positive parameters;
writing the voltage block with +G instead produces right-half-plane
eigenvalues, so only this sign realizes the stable physical model.

Euler-forward discretization with step ``eps`` gives A_d = I + eps E^{-1} K.
The controllable input is the current adjustment u = I_c on top of the
constant injection I_star - delta_I; the plant state is stored as the
deviation from the injection-only equilibrium, which moves the constant
injection into an effective output disturbance H (I_star - delta_I) + d_meas.
The steady-state sensitivity is recomputed from the realized discrete
matrices rather than any closed form, so the closed-loop layers see a
self-consistent y = H u + d.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import analysis, sim
from .analysis import Convention
from .controller import ControllerConfig, Mode
from .equilibria import decentralized_fixed_point, global_optimum
from .errors import (
    ConfigError,
    CouplingTooStrong,
    DimensionMismatch,
    NotCertifiable,
    UnstableDiscretization,
)
from .objective import QuadraticObjective
from .plant import LtiPlant, SensitivityModel, is_schur_stable

__all__ = [
    "GridSpec",
    "default_topology",
    "incidence",
    "assemble_plant",
    "grid_objective",
    "sweep_g",
    "write_sweep_csv",
    "spec_to_dict",
    "spec_from_dict",
]

DEFAULT_EDGES = ((1, 4), (2, 4), (3, 4), (4, 5), (5, 6), (5, 7), (5, 8), (1, 2), (6, 7))


def _positive_vector(value, length, name):
    vec = np.asarray(value, dtype=float)
    if vec.shape != (length,):
        raise DimensionMismatch(f"{name} must have length {length}, got {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"{name} contains non-finite entries")
    return vec


@dataclass(frozen=True)
class GridSpec:
    """Physical parameters and topology of the DC grid.

    Edges are 1-based node pairs; each column of the incidence matrix
    gets +1 at the lower-index endpoint and -1 at the higher one.
    """

    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    c_cap: NDArray[np.float64]
    l_ind: NDArray[np.float64]
    r_line: NDArray[np.float64]
    g_node: NDArray[np.float64]
    i_star: NDArray[np.float64]
    delta_i: NDArray[np.float64]
    d_meas: NDArray[np.float64]
    eps: float = 0.1
    gamma1: float = 1.0
    gamma2: float = 1.0

    def __post_init__(self):
        n = self.n_nodes
        if n < 2:
            raise ValueError(f"need at least 2 nodes, got {n}")
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        e = len(edges)
        adjacency = [set() for _ in range(n)]
        for i, j in edges:
            if not (1 <= i <= n and 1 <= j <= n):
                raise ValueError(f"edge ({i}, {j}) references a node outside 1..{n}")
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            adjacency[i - 1].add(j - 1)
            adjacency[j - 1].add(i - 1)
        # connectivity via breadth-first search from node 1
        seen = {0}
        frontier = [0]
        while frontier:
            node = frontier.pop()
            for nxt in adjacency[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        if len(seen) != n:
            missing = sorted(k + 1 for k in range(n) if k not in seen)
            raise ValueError(f"edge list does not connect nodes {missing} to node 1")
        object.__setattr__(self, "edges", edges)
        for name, length, positive in (
            ("c_cap", n, True),
            ("l_ind", e, True),
            ("r_line", e, True),
            ("g_node", n, True),
            ("i_star", n, False),
            ("delta_i", n, False),
            ("d_meas", n, False),
        ):
            vec = _positive_vector(getattr(self, name), length, name)
            if positive and not np.all(vec > 0.0):
                raise ValueError(f"{name} must be strictly positive")
            vec.setflags(write=False)
            object.__setattr__(self, name, vec)
        if not (self.eps > 0.0 and np.isfinite(self.eps)):
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.gamma1 <= 0.0 or self.gamma2 <= 0.0:
            raise ValueError("objective weights must be positive")

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def default_topology() -> GridSpec:
    """Two-hub 8-node network with 9 edges and the default parameters.

    Hub node 4 connects to nodes 1-3, hub node 5 to nodes 6-8, edge
    (4, 5) bridges the hubs, and (1, 2), (6, 7) complete the edge count.
    Unit capacitances, inductances, conductances, and injections; line
    resistance 10; Euler step 0.1; unit objective weights.
    """
    n, e = 8, len(DEFAULT_EDGES)
    return GridSpec(
        n_nodes=n,
        edges=DEFAULT_EDGES,
        c_cap=np.ones(n),
        l_ind=np.ones(e),
        r_line=10.0 * np.ones(e),
        g_node=np.ones(n),
        i_star=np.ones(n),
        delta_i=np.ones(n),
        d_meas=np.zeros(n),
    )


def incidence(spec: GridSpec) -> NDArray[np.float64]:
    """Node-by-edge incidence matrix, +1 at the lower-index endpoint."""
    mat = np.zeros((spec.n_nodes, spec.n_edges))
    for col, (i, j) in enumerate(spec.edges):
        low, high = min(i, j), max(i, j)
        mat[low - 1, col] = 1.0
        mat[high - 1, col] = -1.0
    return mat


def _raw_matrices(spec: GridSpec):
    n, e = spec.n_nodes, spec.n_edges
    b_inc = incidence(spec)
    k_mat = np.block(
        [
            [-np.diag(spec.g_node), -b_inc],
            [b_inc.T, -np.diag(spec.r_line)],
        ]
    )
    e_inv = np.concatenate([1.0 / spec.c_cap, 1.0 / spec.l_ind])
    a_d = np.eye(n + e) + spec.eps * (e_inv[:, None] * k_mat)
    b_d = np.zeros((n + e, n))
    b_d[:n, :] = np.diag(spec.eps / spec.c_cap)
    c_d = np.hstack([np.eye(n), np.zeros((n, e))])
    return a_d, b_d, c_d


def _sensitivity_from(a_d, b_d, c_d) -> SensitivityModel:
    # (I - A_d) = -eps E^{-1} K is invertible for any eps, stable or not,
    # so the steady-state map exists even when the discretization is too
    # coarse to simulate.
    h_x = np.linalg.solve(np.eye(a_d.shape[0]) - a_d, b_d)
    h = c_d @ h_x
    return SensitivityModel(H=h, H_diag=np.diag(np.diag(h)), H_x=h_x)


def assemble_plant(spec: GridSpec) -> tuple[LtiPlant, SensitivityModel, NDArray[np.float64]]:
    """Discretize the grid and wrap it as a stable LTI plant.

    Returns the plant (deviation-state realization), its sensitivity
    model, and the effective output disturbance H (i_star - delta_i) + d_meas.

    Raises
    ------
    UnstableDiscretization
        If the Euler step is too large for the chosen parameters.
    """
    a_d, b_d, c_d = _raw_matrices(spec)
    stable, radius = is_schur_stable(a_d)
    if not stable:
        raise UnstableDiscretization(radius)
    model = _sensitivity_from(a_d, b_d, c_d)
    d_eff = model.H @ (spec.i_star - spec.delta_i) + spec.d_meas
    plant = LtiPlant(
        A=a_d,
        B=b_d,
        C=c_d,
        D=np.zeros((spec.n_nodes, spec.n_nodes)),
        d=d_eff,
    )
    return plant, model, d_eff


def grid_objective(spec: GridSpec, model: SensitivityModel) -> QuadraticObjective:
    """Voltage-tracking objective with reference H i_star + d_meas."""
    y_ref = model.H @ spec.i_star + spec.d_meas
    return QuadraticObjective(gamma1=spec.gamma1, gamma2=spec.gamma2, y_ref=y_ref)


def _sweep_row(spec: GridSpec, g: float, eta: float, steps: int) -> dict:
    if not (g > 0.0 and np.isfinite(g)):
        return {"g": g, "note": "conductance must be positive"}
    spec_g = dataclasses.replace(spec, g_node=g * np.ones(spec.n_nodes))
    row: dict = {"g": g, "note": ""}
    plant = None
    try:
        plant, model, d_eff = assemble_plant(spec_g)
    except UnstableDiscretization as exc:
        a_d, b_d, c_d = _raw_matrices(spec_g)
        model = _sensitivity_from(a_d, b_d, c_d)
        d_eff = model.H @ (spec_g.i_star - spec_g.delta_i) + spec_g.d_meas
        row["note"] = f"unstable discretization (spectral radius {exc.spectral_radius:.6g})"
    obj = grid_objective(spec_g, model)
    satisfied, lhs, rhs = analysis.coupling_condition(obj, model)
    row["coupling_ok"] = satisfied
    row["coupling_lhs"] = lhs
    row["coupling_rhs"] = rhs
    star = global_optimum(obj, model, d_eff)
    fixed = decentralized_fixed_point(obj, model, d_eff)
    norm_star = float(np.linalg.norm(star.u))
    rel_sub = float(np.linalg.norm(star.u - fixed.u))
    row["rel_subopt"] = rel_sub / norm_star if norm_star > 0.0 else rel_sub
    for convention, key in ((Convention.TIGHT, "bound_tight"), (Convention.PAPER, "bound_paper")):
        consts = analysis.monotonicity_constants(obj, model, convention)
        sub = analysis.suboptimality_bound(obj, model, d_eff, fixed.u, consts)
        scaled = sub.bound / norm_star if norm_star > 0.0 else sub.bound
        row[f"{key}_rel"] = scaled if np.isfinite(scaled) else None
        row[f"{key}_applicable"] = sub.applicable
    cfg = ControllerConfig(mode=Mode.DECENTRALIZED, eta=eta)
    traj = sim.run_algebraic(model, obj, d_eff, cfg, steps=steps)
    final = traj.u_series[-1]
    ref = float(np.linalg.norm(fixed.u))
    err = float(np.linalg.norm(final - fixed.u))
    row["loop_final_err"] = err / ref if ref > 0.0 else err
    row["lam_max_xi"] = None
    row["eta_star"] = None
    if plant is not None:
        try:
            cert = analysis.xi_matrix(plant, obj, model, eta, Convention.TIGHT)
            row["lam_max_xi"] = cert.lam_max
            row["eta_star"] = cert.eta_star
        except (CouplingTooStrong, NotCertifiable) as exc:
            if row["note"]:
                row["note"] += "; "
            row["note"] += f"dynamic certificate unavailable ({exc})"
    return row


def sweep_g(
    g_values,
    eta: float,
    steps: int = sim.DEFAULT_STEPS,
    spec: GridSpec | None = None,
    parallel: bool = False,
) -> list[dict]:
    """Evaluate the sub-optimality trade-off across node conductances.

    For each G the grid is reassembled, both reference points solved,
    the decentralized loop run, and the certificates recorded.  Failures
    annotate their row; the sweep itself never aborts.
    """
    base = spec if spec is not None else default_topology()
    values = [float(g) for g in g_values]
    if parallel:
        with ThreadPoolExecutor() as pool:
            rows = list(pool.map(lambda g: _sweep_row(base, g, eta, steps), values))
    else:
        rows = [_sweep_row(base, g, eta, steps) for g in values]
    return rows


SWEEP_COLUMNS = [
    "g",
    "coupling_ok",
    "coupling_lhs",
    "coupling_rhs",
    "rel_subopt",
    "bound_tight_rel",
    "bound_tight_applicable",
    "bound_paper_rel",
    "bound_paper_applicable",
    "lam_max_xi",
    "eta_star",
    "loop_final_err",
    "note",
]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_sweep_csv(path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row.get(col)) for col in SWEEP_COLUMNS) + "\n")


def spec_to_dict(spec: GridSpec) -> dict:
    return {
        "n_nodes": spec.n_nodes,
        "edges": [list(edge) for edge in spec.edges],
        "c_cap": spec.c_cap.tolist(),
        "l_ind": spec.l_ind.tolist(),
        "r_line": spec.r_line.tolist(),
        "g_node": spec.g_node.tolist(),
        "i_star": spec.i_star.tolist(),
        "delta_i": spec.delta_i.tolist(),
        "d_meas": spec.d_meas.tolist(),
        "eps": spec.eps,
        "gamma1": spec.gamma1,
        "gamma2": spec.gamma2,
    }


def spec_from_dict(data: dict) -> GridSpec:
    """Build a GridSpec from parsed JSON, defaulting absent fields.

    Raises ConfigError naming the offending key on bad shapes or values.
    """
    if not isinstance(data, dict):
        raise ConfigError("grid spec must be a JSON object")
    defaults = default_topology()
    known = set(spec_to_dict(defaults))
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown grid spec keys: {sorted(unknown)}")
    n = int(data.get("n_nodes", defaults.n_nodes))
    edges = tuple(tuple(edge) for edge in data.get("edges", defaults.edges))
    e = len(edges)
    merged = {"n_nodes": n, "edges": edges}
    fallback = {
        "c_cap": np.ones(n),
        "l_ind": np.ones(e),
        "r_line": 10.0 * np.ones(e),
        "g_node": np.ones(n),
        "i_star": np.ones(n),
        "delta_i": np.ones(n),
        "d_meas": np.zeros(n),
        "eps": defaults.eps,
        "gamma1": defaults.gamma1,
        "gamma2": defaults.gamma2,
    }
    for key, default in fallback.items():
        merged[key] = data.get(key, default)
    try:
        return GridSpec(**merged)
    except (ValueError, DimensionMismatch) as exc:
        raise ConfigError(f"invalid grid spec: {exc}") from exc
