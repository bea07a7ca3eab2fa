import pytest
import yaml

from aimgrid.scenario import (BUNDLED, ScenarioError, dump_schema, load_scenario, parse_scenario,
                              schema)
from aimgrid.sim import GRID_RATES


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_load_and_round_trip(name):
    sc = load_scenario(name)
    again = parse_scenario(yaml.safe_load(sc.to_yaml()))
    assert again.to_dict() == sc.to_dict()
    assert again.fingerprint() == sc.fingerprint()


def test_grid_scenario_matches_builtin_config():
    sc = load_scenario("grid_3x3")
    cfg = sc.sim_config()
    assert cfg.injection_rates == GRID_RATES
    assert cfg.duration == 3600.0 and cfg.testbed == "D"
    assert len(cfg.topology.intersections) == 9
    p = sc.scheduler_params()
    assert p.v_avg == sc.simulation["v_avg"] and p.t_gap2 == 7.5


def test_case_study_vehicles():
    sc = load_scenario("case_study_two_intersections")
    vs = sc.case_vehicles()
    assert len(vs) == 18 and vs[0].distance == 690.0 and vs[0].velocity is None


def test_all_errors_reported_together():
    doc = {"testbed": "E", "seed": -1, "bogus": 1,
           "simulation": {"dt": "fast"}, "scheduler": {"v_avg": 10.0}}
    with pytest.raises(ScenarioError) as info:
        parse_scenario(doc)
    errs = info.value.errors
    assert len(errs) >= 5
    text = "\n".join(errs)
    assert "testbed" in text and "seed" in text and "'bogus'" in text and "simulation.dt" in text
    assert any("scheduler.v_avg" in e and "simulation section" in e for e in errs)


def test_semantic_checks():
    with pytest.raises(ScenarioError, match="use C or D"):
        parse_scenario({"kind": "case_study", "testbed": "A",
                        "vehicles": [{"id": 1, "intersection": 1, "movement": "EB", "distance": 10}]})
    with pytest.raises(ScenarioError, match="only allowed"):
        parse_scenario({"vehicles": [{"id": 1, "intersection": 1, "movement": "EB", "distance": 10}]})
    with pytest.raises(ScenarioError, match="no intersection 5"):
        parse_scenario({"kind": "case_study", "topology": {"kind": "line", "count": 2},
                        "vehicles": [{"id": 1, "intersection": 5, "movement": "EB", "distance": 10}]})
    with pytest.raises(ScenarioError, match="movement"):
        parse_scenario({"kind": "case_study",
                        "vehicles": [{"id": 1, "intersection": 1, "movement": "UP", "distance": 10}]})
    with pytest.raises(ScenarioError, match="simulation"):
        parse_scenario({"simulation": {"injection_rates": [1.0, 2.0]}})
    with pytest.raises(ScenarioError, match="must be a mapping"):
        parse_scenario([1, 2])


def test_nullable_keys():
    sc = parse_scenario({"scheduler": {"big_m": None, "max_nodes": 20}, "output": None})
    assert sc.scheduler["big_m"] is None and sc.scheduler["max_nodes"] == 20
    assert sc.output_dir().endswith("scenario")
    with pytest.raises(ScenarioError):
        parse_scenario({"scheduler": {"t_gap2": None}})


def test_fingerprint_ignores_testbed_and_output_only():
    sc = load_scenario("grid_3x3")
    assert sc.with_overrides(testbed="A", output="/tmp/x").fingerprint() == sc.fingerprint()
    assert sc.with_overrides(seed=1).fingerprint() != sc.fingerprint()
    assert sc.with_overrides(duration=60.0).fingerprint() != sc.fingerprint()


def test_missing_file_and_bad_yaml(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(str(tmp_path / "nope.yaml"))
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    with pytest.raises(ScenarioError, match="YAML"):
        load_scenario(str(bad))


def test_schema_dump_parses_back():
    doc = yaml.safe_load(dump_schema())
    assert set(doc) == set(schema())
    top = doc.pop("top")
    top.pop("vehicles")
    sc = parse_scenario({**top, **doc})
    assert sc.to_dict()["simulation"] == schema()["simulation"]
