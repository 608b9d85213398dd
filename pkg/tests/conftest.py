"""Shared builders for the test suite.

The static-plant construction (A = 0, B = H, C = I, D = 0) realizes any
prescribed sensitivity H exactly, so algebraic-level facts can be tested
through the same code path as dynamic ones.
"""

import numpy as np
import pytest

from ofonet.analysis import coupling_condition
from ofonet.objective import QuadraticObjective
from ofonet.plant import LtiPlant, compute_sensitivity

REF_H = np.array([[1.0, 0.5], [0.0, 1.0]])
REF_D = np.array([1.0, 1.0])


def static_plant(h, d):
    """Plant with sensitivity exactly h: one integrator-free state per node."""
    h = np.asarray(h, dtype=float)
    n = h.shape[0]
    plant = LtiPlant(
        A=np.zeros((n, n)),
        B=h,
        C=np.eye(n),
        D=np.zeros((n, n)),
        d=np.asarray(d, dtype=float),
    )
    return plant, compute_sensitivity(plant)


def reference_instance():
    """The 2x2 upper-triangular coupling instance used throughout."""
    plant, model = static_plant(REF_H, REF_D)
    obj = QuadraticObjective(gamma1=1.0, gamma2=1.0, y_ref=np.zeros(2))
    return plant, model, obj, REF_D.copy()


def random_weakly_coupled(rng, n=None, gamma2_max=2.0):
    """Random instance satisfying the diagonal-dominance condition.

    Off-diagonal coupling is halved until the condition holds with a 20%
    margin, which always terminates because the left side scales linearly
    with the coupling while the right side stays bounded away from zero.
    """
    if n is None:
        n = int(rng.integers(2, 7))
    diag = rng.uniform(0.8, 1.5, n)
    off = rng.standard_normal((n, n))
    np.fill_diagonal(off, 0.0)
    gamma1 = float(rng.uniform(0.5, 2.0))
    gamma2 = float(rng.uniform(0.5, gamma2_max))
    y_ref = rng.uniform(-1.0, 1.0, n)
    d = rng.uniform(-1.0, 1.0, n)
    obj = QuadraticObjective(gamma1=gamma1, gamma2=gamma2, y_ref=y_ref)
    scale = 0.5
    for _ in range(200):
        h = np.diag(diag) + scale * off
        plant, model = static_plant(h, d)
        ok, lhs, rhs = coupling_condition(obj, model)
        if ok and lhs <= 0.8 * rhs:
            return plant, model, obj, d
        scale *= 0.5
    raise AssertionError("coupling shrink did not terminate")


def random_stable_instance(rng, n=None, gamma2_max=1.0):
    """Random Schur-stable dynamic plant whose sensitivity is weakly coupled.

    With C = H (I - A) and B = I the steady-state map is exactly H, so the
    algebraic certificates carry over to the dynamic loop unchanged.
    """
    _, model0, obj, d = random_weakly_coupled(rng, n=n, gamma2_max=gamma2_max)
    n = model0.n
    raw = rng.standard_normal((n, n))
    target = float(rng.uniform(0.3, 0.85))
    a = raw * (target / np.linalg.svd(raw, compute_uv=False)[0])
    plant = LtiPlant(
        A=a,
        B=np.eye(n),
        C=model0.H @ (np.eye(n) - a),
        D=np.zeros((n, n)),
        d=d,
    )
    return plant, compute_sensitivity(plant), obj, d


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
