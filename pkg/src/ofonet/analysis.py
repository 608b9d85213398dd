"""Closed-form stability and sub-optimality certificates.

Three layers of guarantees for the decentralized loop, all derived from
singular values of the sensitivity and the declared objective moduli:

* monotonicity constants (m, c, L) of the pseudo-gradient and the
  diagonal-dominance condition m > c in its singular-value form;
* the algebraic-loop contraction rate rho(eta) and the admissible step
  interval, plus the distance bound between the decentralized fixed
  point and the global optimum;
* the dynamic-loop certificate: a 2x2 matrix Xi(eta) whose largest
  eigenvalue bounds the per-step decay of the combined squared error
  ||x - H_x u||^2 + ||u - u_inf||^2, with the critical step size
  eta_star below which lam_max(Xi) < 1.

Every constant exists in two conventions.  The N-scaled convention
multiplies the aggregate moduli by the agent count N; the blockwise
(tight) convention drops that factor, which the separable structure
permits.  Both agree on the diagonal-dominance condition (N cancels),
but the N-scaled sub-optimality bound can undershoot the true distance;
the tight convention is therefore the checked default, with the
N-scaled values always reported alongside for comparison.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from . import objective as obj_mod
from .equilibria import decentralized_fixed_point, global_optimum
from .errors import CouplingTooStrong, NotCertifiable
from .objective import SeparableObjective
from .plant import LtiPlant, SensitivityModel

__all__ = [
    "SVAL_TOL",
    "TRACK_SLACK",
    "Convention",
    "Branch",
    "MonotonicityConstants",
    "ContractionRate",
    "TrackingCheck",
    "SuboptimalityBound",
    "LtiRateCertificate",
    "monotonicity_constants",
    "coupling_condition",
    "contraction_rate",
    "tracking_inequality_check",
    "suboptimality_bound",
    "xi_matrix",
    "eta_star",
    "monotonicity_gap_test",
    "build_report",
]

# Singular values below SVAL_TOL * sigma_max are treated as exact zeros.
SVAL_TOL = 1e-12
# Additive slack on per-step trajectory inequalities.
TRACK_SLACK = 1e-9


class Convention(enum.Enum):
    """Constant convention: N-scaled aggregates vs blockwise-tight ones."""

    PAPER = "paper"
    TIGHT = "tight"


class Branch(enum.Enum):
    ETA1 = "eta1"
    ETA2 = "eta2"


@dataclass(frozen=True)
class MonotonicityConstants:
    """Strong-monotonicity modulus m, coupling penalty c, smoothness L.

    m - c is the effective modulus of the pseudo-gradient; L bounds the
    Lipschitz constant of the full steady-state gradient.
    """

    m: float
    c: float
    L: float
    sigma_max_h: float
    sigma_min_h: float
    sigma_max_offdiag: float
    convention: Convention

    def __post_init__(self):
        if not (self.m > 0.0 and self.L > 0.0):
            raise ValueError(f"m and L must be positive, got m={self.m}, L={self.L}")
        if self.c < 0.0:
            raise ValueError(f"c must be nonnegative, got {self.c}")
        if self.sigma_min_h > self.sigma_max_h:
            raise ValueError("sigma_min_h exceeds sigma_max_h")


@dataclass(frozen=True)
class ContractionRate:
    """rho(eta) for the algebraic loop and the admissible open interval.

    ``eta_upper`` is the interval's upper end 2(m-c)/(L^2-m^2); it is
    +inf with ``degenerate=True`` when L = m makes the formula divide by
    zero, in which case admissibility rests on rho < 1 alone.
    """

    rho: float
    admissible: bool
    eta_upper: float
    degenerate: bool = False


@dataclass(frozen=True)
class TrackingCheck:
    """Per-step verdicts of the linear tracking inequality along a run."""

    one_step_ok: NDArray[np.bool_]
    telescoped_ok: NDArray[np.bool_]
    rho: float
    admissible: bool
    bias: float


@dataclass(frozen=True)
class SuboptimalityBound:
    bound: float
    applicable: bool


@dataclass(frozen=True)
class LtiRateCertificate:
    """Decay certificate for the closed loop with plant dynamics.

    lam_max bounds the one-step contraction factor of the combined
    squared error at the given eta.  eta_star is the critical step
    (None when the instance is not certifiable), capped at m'/L'.
    """

    xi: NDArray[np.float64]
    lam_max: float
    m_prime: float
    l_prime: float
    a1: float
    a2: float
    a3: float
    a4: float
    t: float
    eta: float
    convention: Convention
    eta_star: Optional[float] = None
    branch: Optional[Branch] = None

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        if xi.shape != (2, 2):
            raise ValueError(f"xi must be 2x2, got shape {xi.shape}")
        if abs(xi[0, 1] - xi[1, 0]) > 0.0:
            raise ValueError("xi must be symmetric")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)


def _svals(M) -> NDArray[np.float64]:
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if s.size and s[0] > 0.0:
        s = np.where(s < SVAL_TOL * s[0], 0.0, s)
    return s


def _sigma_min_sq(M) -> float:
    # Smallest eigenvalue of M^T M: zero whenever M has more columns
    # than rows, regardless of its nonzero singular values.
    M = np.asarray(M, dtype=float)
    if M.shape[1] > M.shape[0]:
        return 0.0
    s = _svals(M)
    return float(s[-1] ** 2)


def _n_factor(n: int, convention: Convention) -> float:
    return float(n) if convention is Convention.PAPER else 1.0


def monotonicity_constants(
    obj: SeparableObjective,
    model: SensitivityModel,
    convention: Convention = Convention.TIGHT,
) -> MonotonicityConstants:
    """Compute (m, c, L) from the sensitivity spectrum and the moduli.

    m = m_u + sigma_min(H)^2 m_y, c = sigma_max(H - H_diag) sigma_max(H) L_y,
    L = L_u + sigma_max(H)^2 L_y, each multiplied by N under the
    N-scaled convention.
    """
    s = _svals(model.H)
    sigma_max_h = float(s[0])
    sigma_min_h = float(s[-1])
    sigma_off = float(_svals(model.H - model.H_diag)[0])
    k = _n_factor(model.n, convention)
    return MonotonicityConstants(
        m=k * (obj.m_u + sigma_min_h**2 * obj.m_y),
        c=k * sigma_off * sigma_max_h * obj.L_y,
        L=k * (obj.L_u + sigma_max_h**2 * obj.L_y),
        sigma_max_h=sigma_max_h,
        sigma_min_h=sigma_min_h,
        sigma_max_offdiag=sigma_off,
        convention=convention,
    )


def coupling_condition(
    obj: SeparableObjective, model: SensitivityModel
) -> tuple[bool, float, float]:
    """Diagonal-dominance condition in its convention-free form.

    Returns (satisfied, lhs, rhs) for
    sigma_max(H - H_diag) <= (m_u + sigma_min(H)^2 m_y) / (sigma_max(H) L_y),
    which is m > c with the agent-count factor cancelled.
    """
    s = _svals(model.H)
    lhs = float(_svals(model.H - model.H_diag)[0])
    rhs = float((obj.m_u + s[-1] ** 2 * obj.m_y) / (s[0] * obj.L_y))
    return lhs <= rhs, lhs, rhs


def contraction_rate(consts: MonotonicityConstants, eta: float) -> ContractionRate:
    """Linear rate rho = sqrt(1 - 2 m eta + L^2 eta^2) + c eta.

    The step is admissible when it lies in the open interval
    (0, 2(m-c)/(L^2-m^2)) and rho < 1; both are checked numerically
    rather than trusting either to imply the other.
    """
    m, c, L = consts.m, consts.c, consts.L
    if m <= c:
        raise CouplingTooStrong(f"m={m:.6g} <= c={c:.6g}")
    degenerate = L == m
    eta_upper = math.inf if degenerate else 2.0 * (m - c) / (L**2 - m**2)
    radicand = 1.0 - 2.0 * m * eta + (L * eta) ** 2
    rho = math.sqrt(radicand) + c * eta if radicand >= 0.0 else math.nan
    admissible = bool(0.0 < eta < eta_upper and not math.isnan(rho) and rho < 1.0)
    return ContractionRate(
        rho=rho, admissible=admissible, eta_upper=eta_upper, degenerate=degenerate
    )


def tracking_inequality_check(
    trajectory,
    obj: SeparableObjective,
    model: SensitivityModel,
    u_star,
    y_star,
    consts: MonotonicityConstants,
    eta: float,
) -> TrackingCheck:
    """Verify the linear tracking inequality along a decentralized run.

    For each step the one-step form
        ||u_{k+1} - u*|| <= rho ||u_k - u*|| + eta * bias + TRACK_SLACK
    and the telescoped form
        ||u_k - u*|| <= rho^k ||u_0 - u*|| + eta * bias * sum_{j<k} rho^j
    are evaluated, where bias = ||(H^T - H_diag) grad_y(y*)||.  With an
    inadmissible eta the flags are still produced, just not meaningful
    as a certificate; ``admissible`` says which case applies.
    """
    u_star = np.asarray(u_star, dtype=float)
    y_star = np.asarray(y_star, dtype=float)
    m, c, L = consts.m, consts.c, consts.L
    radicand = 1.0 - 2.0 * m * eta + (L * eta) ** 2
    rho = math.sqrt(radicand) + c * eta if radicand >= 0.0 else math.nan
    admissible = bool(not math.isnan(rho) and 0.0 < rho < 1.0)
    bias = float(
        np.linalg.norm((model.H.T - model.H_diag) @ obj_mod.grad_y(obj, y_star))
    )
    u_series = np.asarray(trajectory.u_series, dtype=float)
    dist = np.linalg.norm(u_series - u_star, axis=1)
    n_steps = len(dist) - 1
    one_step = np.zeros(max(n_steps, 0), dtype=bool)
    for k in range(n_steps):
        one_step[k] = dist[k + 1] <= rho * dist[k] + eta * bias + TRACK_SLACK
    telescoped = np.zeros(len(dist), dtype=bool)
    geo = 0.0  # sum_{j<k} rho^j
    pw = 1.0  # rho^k
    for k in range(len(dist)):
        telescoped[k] = dist[k] <= pw * dist[0] + eta * bias * geo + TRACK_SLACK
        geo += pw
        pw *= rho
    return TrackingCheck(
        one_step_ok=one_step,
        telescoped_ok=telescoped,
        rho=rho,
        admissible=admissible,
        bias=bias,
    )


def suboptimality_bound(
    obj: SeparableObjective,
    model: SensitivityModel,
    d,
    u_inf,
    consts: MonotonicityConstants,
) -> SuboptimalityBound:
    """Distance bound ||u* - u_inf|| <= ||(H^T - H_diag) grad_y(y_inf)|| / sqrt(2m - 1).

    ``applicable`` requires 2m > 1 together with the diagonal-dominance
    condition; the number is returned either way since it stays
    informative outside the certified regime.
    """
    u_inf = np.asarray(u_inf, dtype=float)
    d = np.asarray(d, dtype=float)
    y_inf = model.H @ u_inf + d
    lead = float(
        np.linalg.norm((model.H.T - model.H_diag) @ obj_mod.grad_y(obj, y_inf))
    )
    two_m = 2.0 * consts.m
    satisfied, _, _ = coupling_condition(obj, model)
    if two_m > 1.0:
        bound = lead * math.sqrt(1.0 / (two_m - 1.0))
        applicable = satisfied
    else:
        bound = math.inf
        applicable = False
    return SuboptimalityBound(bound=bound, applicable=applicable)


def _xi_constants(plant, obj, model, convention):
    k = _n_factor(model.n, convention)
    consts = monotonicity_constants(obj, model, convention)
    sigma_h = consts.sigma_max_h
    sigma_hd = float(np.max(np.abs(np.diag(model.H_diag))))
    sigma_c = float(_svals(plant.C)[0])
    sigma_c_min_sq = _sigma_min_sq(plant.C)
    sigma_off = consts.sigma_max_offdiag
    lam_h = float(_svals(model.H_x)[0] ** 2 + 1.0)
    s_a = float(_svals(model.H_x.T @ plant.A)[0])
    alpha = k * obj.L_u + k * obj.L_y * sigma_hd * sigma_h
    beta = k * obj.L_y * sigma_hd * sigma_c
    m_prime = 2.0 * (consts.m - consts.c)
    l_prime = lam_h * alpha**2
    a1 = lam_h * beta * alpha
    a2 = (
        s_a * alpha
        + 2.0 * k * obj.m_y * sigma_c * sigma_h
        + k * obj.L_y * sigma_c * (sigma_off + sigma_h)
    )
    a3 = lam_h * beta**2
    a4 = 2.0 * (
        s_a * sigma_hd * sigma_c - (k * obj.m_y * sigma_c_min_sq - k * obj.L_y * sigma_c**2)
    )
    t = 1.0 - float(_svals(plant.A)[0] ** 2)
    return m_prime, l_prime, a1, a2, a3, a4, t


def _eta_star_from_constants(m_prime, l_prime, a1, a2, a3, a4, t):
    if m_prime <= 0.0:
        raise NotCertifiable(f"m' = {m_prime:.6g} <= 0 (coupling too strong)")
    if t <= 0.0:
        raise NotCertifiable(f"t = {t:.6g} <= 0 (sigma_max(A) >= 1)")
    disc = a3 * m_prime + 2.0 * a1 * a2 - a4 * l_prime
    lin = a4 * m_prime + a2**2 + t * l_prime
    if disc > 0.0:
        root = math.sqrt(lin**2 + 4.0 * t * m_prime * disc)
        value = (root - lin) / (2.0 * disc)
        branch = Branch.ETA1
    elif lin > 0.0:
        value = t * m_prime / lin
        branch = Branch.ETA2
    else:
        # Both quadratic and linear coefficients nonpositive: the decay
        # condition holds for every positive step below the cap.
        value = math.inf
        branch = Branch.ETA2
    return min(value, m_prime / l_prime), branch


def xi_matrix(
    plant: LtiPlant,
    obj: SeparableObjective,
    model: SensitivityModel,
    eta: float,
    convention: Convention = Convention.TIGHT,
) -> LtiRateCertificate:
    """Assemble Xi(eta) and its largest eigenvalue for the dynamic loop.

    Xi = [[sigma_max(A)^2 + a3 eta^2 + a4 eta,  a1 eta^2 + a2 eta],
          [a1 eta^2 + a2 eta,                  1 - m' eta + L' eta^2]].

    The eigenvalue comes from the 2x2 closed form.  eta_star and its
    branch are attached when the instance is certifiable, else left None.
    """
    m_prime, l_prime, a1, a2, a3, a4, t = _xi_constants(plant, obj, model, convention)
    if m_prime <= 0.0:
        raise CouplingTooStrong(f"m' = {m_prime:.6g} <= 0")
    lam_a = 1.0 - t
    off = a1 * eta**2 + a2 * eta
    xi = np.array(
        [
            [lam_a + a3 * eta**2 + a4 * eta, off],
            [off, 1.0 - m_prime * eta + l_prime * eta**2],
        ]
    )
    half_sum = 0.5 * (xi[0, 0] + xi[1, 1])
    half_diff = 0.5 * (xi[0, 0] - xi[1, 1])
    lam_max = half_sum + math.hypot(half_diff, off)
    try:
        star, branch = _eta_star_from_constants(m_prime, l_prime, a1, a2, a3, a4, t)
    except NotCertifiable:
        star, branch = None, None
    return LtiRateCertificate(
        xi=xi,
        lam_max=float(lam_max),
        m_prime=m_prime,
        l_prime=l_prime,
        a1=a1,
        a2=a2,
        a3=a3,
        a4=a4,
        t=t,
        eta=float(eta),
        convention=convention,
        eta_star=star,
        branch=branch,
    )


def eta_star(
    plant: LtiPlant,
    obj: SeparableObjective,
    model: SensitivityModel,
    convention: Convention = Convention.TIGHT,
) -> tuple[float, Branch]:
    """Critical step size below which lam_max(Xi) < 1.

    Two-branch closed form selected by the sign of
    a3 m' + 2 a1 a2 - a4 L', additionally capped at m'/L' (the cap is
    what keeps the (2,2) block of Xi a contraction).
    """
    consts = _xi_constants(plant, obj, model, convention)
    return _eta_star_from_constants(*consts)


def monotonicity_gap_test(
    obj: SeparableObjective,
    model: SensitivityModel,
    d,
    consts: MonotonicityConstants,
    trials: int,
    rng: np.random.Generator,
) -> float:
    """Empirical check of (m - c)-strong monotonicity of the pseudo-gradient.

    Draws ``trials`` random pairs in [-10, 10]^n and returns the minimum
    of <F(u1) - F(u2), u1 - u2> - (m - c) ||u1 - u2||^2; nonnegative up
    to roundoff when the constants are valid for the instance.
    """
    d = np.asarray(d, dtype=float)
    n = model.n
    margin = consts.m - consts.c

    def pseudo(u):
        return obj_mod.grad_u(obj, u) + model.H_diag.T @ obj_mod.grad_y(
            obj, model.H @ u + d
        )

    worst = math.inf
    for _ in range(trials):
        u1 = rng.uniform(-10.0, 10.0, size=n)
        u2 = rng.uniform(-10.0, 10.0, size=n)
        diff = u1 - u2
        gap = float(np.dot(pseudo(u1) - pseudo(u2), diff) - margin * np.dot(diff, diff))
        worst = min(worst, gap)
    return worst


def _rate_entry(consts, eta):
    try:
        rate = contraction_rate(consts, eta)
    except CouplingTooStrong as exc:
        return {"eta": eta, "error": str(exc)}
    return {
        "eta": eta,
        "rho": None if math.isnan(rate.rho) else rate.rho,
        "admissible": rate.admissible,
        "eta_upper": None if math.isinf(rate.eta_upper) else rate.eta_upper,
        "degenerate": rate.degenerate,
    }


def build_report(
    obj: SeparableObjective,
    model: SensitivityModel,
    d,
    eta: float,
    eta_grid,
    plant: Optional[LtiPlant] = None,
) -> dict:
    """Aggregate every certificate into one JSON-serializable report.

    Both conventions are evaluated: constants, the rate table over
    ``eta_grid``, the sub-optimality bound against the solved fixed
    point, and (when a plant is supplied) the dynamic-loop certificate
    at ``eta`` with its critical step size.
    """
    d = np.asarray(d, dtype=float)
    satisfied, lhs, rhs = coupling_condition(obj, model)
    star = global_optimum(obj, model, d)
    inf_sol = decentralized_fixed_point(obj, model, d)
    distance = float(np.linalg.norm(star.u - inf_sol.u))
    norm_star = float(np.linalg.norm(star.u))
    report = {
        "n": model.n,
        "coupling": {"satisfied": satisfied, "lhs": lhs, "rhs": rhs},
        "equilibrium": {
            "u_star": star.u.tolist(),
            "u_inf": inf_sol.u.tolist(),
            "distance": distance,
            "relative_distance": distance / norm_star if norm_star > 0.0 else None,
            "uniqueness_certified": inf_sol.uniqueness_certified,
        },
        "conventions": {},
    }
    for convention in (Convention.TIGHT, Convention.PAPER):
        consts = monotonicity_constants(obj, model, convention)
        sub = suboptimality_bound(obj, model, d, inf_sol.u, consts)
        entry = {
            "constants": {
                "m": consts.m,
                "c": consts.c,
                "L": consts.L,
                "sigma_max_h": consts.sigma_max_h,
                "sigma_min_h": consts.sigma_min_h,
                "sigma_max_offdiag": consts.sigma_max_offdiag,
            },
            "rate_table": [_rate_entry(consts, float(e)) for e in eta_grid],
            "rate_at_eta": _rate_entry(consts, float(eta)),
            "suboptimality": {
                "bound": None if math.isinf(sub.bound) else sub.bound,
                "applicable": sub.applicable,
                "relative_bound": (
                    sub.bound / norm_star
                    if norm_star > 0.0 and not math.isinf(sub.bound)
                    else None
                ),
            },
        }
        if plant is not None:
            try:
                cert = xi_matrix(plant, obj, model, eta, convention)
                entry["lti"] = {
                    "eta": cert.eta,
                    "xi": cert.xi.tolist(),
                    "lam_max": cert.lam_max,
                    "m_prime": cert.m_prime,
                    "l_prime": cert.l_prime,
                    "a1": cert.a1,
                    "a2": cert.a2,
                    "a3": cert.a3,
                    "a4": cert.a4,
                    "t": cert.t,
                    "eta_star": cert.eta_star,
                    "branch": cert.branch.value if cert.branch else None,
                }
            except CouplingTooStrong as exc:
                entry["lti"] = {"error": str(exc)}
        report["conventions"][convention.value] = entry
    return report
