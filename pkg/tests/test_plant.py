import numpy as np
import numpy.testing as npt
import pytest
from conftest import random_stable_instance

from ofonet.errors import ConfigError, DimensionMismatch
from ofonet.plant import (
    SCHUR_TOL,
    LtiPlant,
    SensitivityModel,
    compute_sensitivity,
    is_schur_stable,
    plant_from_dict,
    steady_state_output,
    step,
)


def scalar_plant():
    return LtiPlant(
        A=[[0.5]], B=[[1.0]], C=[[1.0]], D=[[0.0]], d=[1.0]
    )


def test_is_schur_stable_diagonal():
    stable, radius = is_schur_stable(np.diag([0.5, -0.9]))
    assert stable
    assert radius == pytest.approx(0.9)


def test_is_schur_stable_rejects_nonsquare():
    with pytest.raises(DimensionMismatch):
        is_schur_stable(np.zeros((2, 3)))


def test_is_schur_stable_boundary():
    # radius exactly 1 - tol/2 sits inside the rejection band
    stable, _ = is_schur_stable(np.diag([1.0 - SCHUR_TOL / 2]))
    assert not stable
    stable, _ = is_schur_stable(np.diag([1.0 - 2 * SCHUR_TOL]))
    assert stable


def test_unstable_plant_rejected():
    with pytest.raises(ValueError):
        LtiPlant(A=[[1.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]], d=[0.0])


def test_shape_validation():
    with pytest.raises(DimensionMismatch):
        LtiPlant(A=np.zeros((2, 2)), B=np.zeros((3, 1)), C=np.zeros((1, 2)),
                 D=np.zeros((1, 1)), d=np.zeros(1))
    with pytest.raises(DimensionMismatch):
        LtiPlant(A=np.zeros((2, 2)), B=np.zeros((2, 1)), C=np.zeros((1, 2)),
                 D=np.zeros((1, 1)), d=np.zeros(3))


def test_scalar_sensitivity():
    model = compute_sensitivity(scalar_plant())
    npt.assert_allclose(model.H, [[2.0]])
    npt.assert_allclose(model.H_x, [[2.0]])
    npt.assert_allclose(model.H_diag, [[2.0]])


def test_step_oracle():
    plant = scalar_plant()
    x_next, y = step(plant, np.array([2.0]), np.array([1.0]))
    npt.assert_allclose(x_next, [2.0])
    npt.assert_allclose(y, [3.0])


def test_fixed_input_converges_to_sensitivity(rng):
    plant = scalar_plant()
    model = compute_sensitivity(plant)
    u = np.array([1.0])
    x = rng.standard_normal(1)
    for _ in range(500):
        x, y = step(plant, x, u)
    npt.assert_allclose(y, model.H @ u + plant.d, atol=1e-10)


def test_steady_state_output_oracle():
    h = np.array([[1.0, 0.5], [0.0, 1.0]])
    model = SensitivityModel(H=h, H_diag=np.diag(np.diag(h)), H_x=h)
    out = steady_state_output(model, np.array([1.0, 1.0]), np.array([1.0, 1.0]))
    npt.assert_allclose(out, [2.5, 2.0])


def test_rectangular_plant_shapes(rng):
    # more states than channels, as in the grid realization
    a = np.diag(rng.uniform(-0.5, 0.5, 5))
    b = rng.standard_normal((5, 2))
    c = rng.standard_normal((2, 5))
    plant = LtiPlant(A=a, B=b, C=c, D=np.zeros((2, 2)), d=np.zeros(2))
    model = compute_sensitivity(plant)
    assert model.H.shape == (2, 2)
    assert model.H_x.shape == (5, 2)
    npt.assert_allclose(model.H, c @ np.linalg.solve(np.eye(5) - a, b), atol=1e-12)


def test_sensitivity_matches_long_run(rng):
    plant, model, _, d = random_stable_instance(rng)
    u = rng.standard_normal(model.n)
    x = np.zeros(plant.n_state)
    for _ in range(2000):
        x, y = step(plant, x, u)
    npt.assert_allclose(y, model.H @ u + d, atol=1e-8)


def test_model_rejects_wrong_diagonal():
    h = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        SensitivityModel(H=h, H_diag=np.eye(2) * 2.0, H_x=h)
    with pytest.raises(ValueError):
        SensitivityModel(H=h, H_diag=h, H_x=h)  # off-diagonal entries present


def test_arrays_frozen():
    plant = scalar_plant()
    with pytest.raises(ValueError):
        plant.A[0, 0] = 0.0


def test_plant_from_dict_roundtrip():
    data = {
        "A": [[0.0, 0.0], [0.0, 0.0]],
        "B": [[1.0, 0.5], [0.0, 1.0]],
        "C": [[1.0, 0.0], [0.0, 1.0]],
        "D": [[0.0, 0.0], [0.0, 0.0]],
        "d": [1.0, 1.0],
    }
    plant = plant_from_dict(data)
    npt.assert_allclose(compute_sensitivity(plant).H, data["B"])


@pytest.mark.parametrize(
    "mutate, key",
    [
        (lambda d: d.pop("C"), "C"),
        (lambda d: d.update(extra=[1.0]), "extra"),
        (lambda d: d.update(A=[[0.0], [0.0]]), "A"),
        (lambda d: d.update(d="nope"), "d"),
        (lambda d: d.update(B=[[float("nan"), 0.0], [0.0, 1.0]]), "B"),
    ],
)
def test_plant_from_dict_rejects(mutate, key):
    data = {
        "A": [[0.0, 0.0], [0.0, 0.0]],
        "B": [[1.0, 0.5], [0.0, 1.0]],
        "C": [[1.0, 0.0], [0.0, 1.0]],
        "D": [[0.0, 0.0], [0.0, 0.0]],
        "d": [1.0, 1.0],
    }
    mutate(data)
    with pytest.raises(ConfigError, match=key):
        plant_from_dict(data)
