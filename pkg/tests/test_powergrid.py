"""DC-grid case study: topology, discretization, and the conductance sweep."""

import numpy as np
import numpy.testing as npt
import pytest

import ofonet.powergrid as pg
from ofonet.controller import ControllerConfig, Mode
from ofonet.equilibria import decentralized_fixed_point
from ofonet.errors import ConfigError, UnstableDiscretization
from ofonet.objective import QuadraticObjective
from ofonet.plant import is_schur_stable
from ofonet.sim import run_lti


def test_default_topology_shape():
    spec = pg.default_topology()
    assert spec.n_nodes == 8
    assert spec.n_edges == 9
    degrees = np.zeros(8, dtype=int)
    for i, j in spec.edges:
        degrees[i - 1] += 1
        degrees[j - 1] += 1
    npt.assert_array_equal(degrees, [2, 2, 1, 4, 4, 2, 2, 1])


def test_incidence_matrix():
    spec = pg.default_topology()
    e = pg.incidence(spec)
    assert e.shape == (8, 9)
    npt.assert_array_equal(e.sum(axis=0), np.zeros(9))
    npt.assert_array_equal(np.abs(e).sum(axis=0), 2 * np.ones(9))


def test_default_discretization_stable():
    spec = pg.default_topology()
    plant, model, d_eff = pg.assemble_plant(spec)
    assert plant.n_state == 17
    assert model.n == 8
    _, radius = is_schur_stable(plant.A)
    assert radius == pytest.approx(0.9, abs=1e-12)


def test_sensitivity_spectrum_frozen_values():
    spec = pg.default_topology()
    _, model, _ = pg.assemble_plant(spec)
    s = np.linalg.svd(model.H, compute_uv=False)
    assert s[0] == pytest.approx(1.0, abs=1e-6)
    assert s[-1] == pytest.approx(0.639151, abs=1e-6)
    off = np.linalg.svd(model.H - model.H_diag, compute_uv=False)
    assert off[0] == pytest.approx(0.183855, abs=1e-6)


def test_effective_disturbance_composition():
    spec = pg.default_topology()
    _, model, d_eff = pg.assemble_plant(spec)
    expected = model.H @ (spec.i_star - spec.delta_i) + spec.d_meas
    npt.assert_allclose(d_eff, expected, atol=1e-12)


def test_grid_objective_reference():
    spec = pg.default_topology()
    _, model, _ = pg.assemble_plant(spec)
    obj = pg.grid_objective(spec, model)
    assert isinstance(obj, QuadraticObjective)
    npt.assert_allclose(obj.y_ref, model.H @ spec.i_star + spec.d_meas, atol=1e-12)


def test_closed_loop_settles_at_fixed_point():
    spec = pg.default_topology()
    plant, model, d_eff = pg.assemble_plant(spec)
    obj = pg.grid_objective(spec, model)
    cfg = ControllerConfig(mode=Mode.DECENTRALIZED, eta=0.05)
    traj = run_lti(plant, obj, cfg, steps=10**5)
    fp = decentralized_fixed_point(obj, model, d_eff)
    npt.assert_allclose(traj.u_series[-1], fp.u, atol=1e-8)


def test_unstable_conductance_raises():
    spec = pg.default_topology()
    bad = pg.spec_from_dict({**pg.spec_to_dict(spec), "g_node": [20.0] * 8})
    with pytest.raises(UnstableDiscretization) as info:
        pg.assemble_plant(bad)
    assert info.value.spectral_radius >= 1.0 - 1e-9


def test_sweep_columns_and_notes():
    rows = pg.sweep_g([1.0, 20.0], eta=0.05, steps=2000)
    assert [r["g"] for r in rows] == [1.0, 20.0]
    for row in rows:
        assert set(pg.SWEEP_COLUMNS) <= set(row)
    assert rows[0]["note"] == ""
    assert "unstable discretization" in rows[1]["note"]
    # certificates still computed from the algebraic map on unstable rows
    assert rows[1]["coupling_ok"]
    assert rows[1]["rel_subopt"] > 0.0


def test_sweep_parallel_matches_serial():
    serial = pg.sweep_g([1.0, 5.0], eta=0.05, steps=2000)
    parallel = pg.sweep_g([1.0, 5.0], eta=0.05, steps=2000, parallel=True)
    for a, b in zip(serial, parallel):
        assert a == b


def test_sweep_csv_cells(tmp_path):
    rows = pg.sweep_g([1.0], eta=0.05, steps=2000)
    path = tmp_path / "sweep.csv"
    pg.write_sweep_csv(path, rows)
    text = path.read_text().splitlines()
    assert text[0] == ",".join(pg.SWEEP_COLUMNS)
    cells = text[1].split(",")
    assert cells[pg.SWEEP_COLUMNS.index("coupling_ok")] == "true"
    assert cells[pg.SWEEP_COLUMNS.index("note")] == ""


def test_spec_roundtrip_and_defaults():
    spec = pg.default_topology()
    again = pg.spec_from_dict(pg.spec_to_dict(spec))
    assert pg.spec_to_dict(again) == pg.spec_to_dict(spec)
    # absent fields fall back to the published defaults
    sparse = pg.spec_from_dict({"g_node": [2.0] * 8})
    npt.assert_allclose(sparse.g_node, 2.0 * np.ones(8))
    assert sparse.n_nodes == 8


def test_spec_from_dict_rejects():
    with pytest.raises(ConfigError, match="bogus"):
        pg.spec_from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        pg.spec_from_dict({"c_cap": [1.0]})  # wrong length
    with pytest.raises(ConfigError):
        pg.spec_from_dict({"eps": -0.1})


def test_spec_validation():
    with pytest.raises(ValueError):
        pg.GridSpec(
            n_nodes=3,
            edges=((1, 2),),  # node 3 disconnected
            c_cap=np.ones(3),
            l_ind=np.ones(1),
            r_line=np.ones(1),
            g_node=np.ones(3),
            i_star=np.zeros(3),
            delta_i=np.zeros(3),
            d_meas=np.zeros(3),
        )
    with pytest.raises(ValueError):
        pg.GridSpec(
            n_nodes=2,
            edges=((1, 1),),  # self loop
            c_cap=np.ones(2),
            l_ind=np.ones(1),
            r_line=np.ones(1),
            g_node=np.ones(2),
            i_star=np.zeros(2),
            delta_i=np.zeros(2),
            d_meas=np.zeros(2),
        )


def test_suboptimality_shrinks_with_conductance():
    rows = pg.sweep_g([1.0, 10.0], eta=0.05, steps=2000)
    assert rows[1]["rel_subopt"] < rows[0]["rel_subopt"]
    star_like = [r["bound_tight_rel"] >= r["rel_subopt"] for r in rows]
    assert all(star_like)
