import numpy as np
import numpy.testing as npt
import pytest
from conftest import static_plant

from ofonet.controller import ControllerConfig, Mode, centralized_step, decentralized_step
from ofonet.objective import QuadraticObjective


def unit_objective(n):
    return QuadraticObjective(gamma1=1.0, gamma2=1.0, y_ref=np.zeros(n))


def test_centralized_scalar_oracle():
    _, model = static_plant([[2.0]], [0.0])
    cfg = ControllerConfig(mode=Mode.CENTRALIZED, eta=0.1)
    out = centralized_step(cfg, unit_objective(1), model, np.array([1.0]), np.array([2.0]))
    npt.assert_allclose(out, [0.5])


def test_centralized_2x2_oracle():
    _, model = static_plant([[1.0, 0.5], [0.0, 1.0]], [0.0, 0.0])
    cfg = ControllerConfig(mode=Mode.CENTRALIZED, eta=0.1)
    out = centralized_step(
        cfg, unit_objective(2), model, np.array([1.0, 1.0]), np.array([1.5, 1.0])
    )
    npt.assert_allclose(out, [0.75, 0.725])


def test_decentralized_scalar_coincides_with_centralized():
    _, model = static_plant([[2.0]], [0.0])
    cfg = ControllerConfig(mode=Mode.DECENTRALIZED, eta=0.1)
    out = decentralized_step(cfg, unit_objective(1), model, np.array([1.0]), np.array([2.0]))
    npt.assert_allclose(out, [0.5])


def test_decentralized_2x2_oracle():
    _, model = static_plant([[1.0, 0.5], [0.0, 1.0]], [0.0, 0.0])
    cfg = ControllerConfig(mode=Mode.DECENTRALIZED, eta=0.1)
    out = decentralized_step(
        cfg, unit_objective(2), model, np.array([1.0, 1.0]), np.array([1.5, 1.0])
    )
    npt.assert_allclose(out, [0.75, 0.8])


def test_mode_mismatch_rejected():
    _, model = static_plant([[2.0]], [0.0])
    cen = ControllerConfig(mode=Mode.CENTRALIZED, eta=0.1)
    dec = ControllerConfig(mode=Mode.DECENTRALIZED, eta=0.1)
    u, y = np.array([1.0]), np.array([2.0])
    with pytest.raises(ValueError):
        centralized_step(dec, unit_objective(1), model, u, y)
    with pytest.raises(ValueError):
        decentralized_step(cen, unit_objective(1), model, u, y)


def test_config_validation():
    with pytest.raises(ValueError):
        ControllerConfig(mode=Mode.CENTRALIZED, eta=0.0)
    with pytest.raises(ValueError):
        ControllerConfig(mode=Mode.CENTRALIZED, eta=-0.1)
    with pytest.raises(ValueError):
        ControllerConfig(mode=Mode.DECENTRALIZED, eta=float("inf"))


def test_decentralized_ignores_off_diagonal(rng):
    # the decentralized update may depend on H only through its diagonal
    diag = np.diag(rng.uniform(0.5, 2.0, 4))
    off = rng.standard_normal((4, 4))
    np.fill_diagonal(off, 0.0)
    _, model_a = static_plant(diag, np.zeros(4))
    _, model_b = static_plant(diag + off, np.zeros(4))
    cfg = ControllerConfig(mode=Mode.DECENTRALIZED, eta=0.07)
    obj = unit_objective(4)
    u = rng.standard_normal(4)
    y = rng.standard_normal(4)
    npt.assert_allclose(
        decentralized_step(cfg, obj, model_a, u, y),
        decentralized_step(cfg, obj, model_b, u, y),
        atol=1e-15,
    )


def test_steps_agree_when_h_diagonal(rng):
    h = np.diag(rng.uniform(0.5, 2.0, 3))
    _, model = static_plant(h, np.zeros(3))
    obj = unit_objective(3)
    u = rng.standard_normal(3)
    y = rng.standard_normal(3)
    cen = centralized_step(
        ControllerConfig(mode=Mode.CENTRALIZED, eta=0.05), obj, model, u, y
    )
    dec = decentralized_step(
        ControllerConfig(mode=Mode.DECENTRALIZED, eta=0.05), obj, model, u, y
    )
    npt.assert_allclose(cen, dec, atol=1e-15)
