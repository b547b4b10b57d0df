import pytest
import yaml

from mpfsim import config
from mpfsim.core import ConfigError, VehicleClass
from mpfsim.engine import ScenarioConfig
from mpfsim.models import Topology


def test_defaults_round_trip_to_scenario():
    doc = config.default_document()
    assert config.document_to_scenario(doc) == ScenarioConfig()


def test_defaults_survive_yaml_round_trip():
    doc = config.default_document()
    again = yaml.safe_load(config.dump_yaml(doc))
    assert again == doc
    # and the reloaded document is still fully schema-valid
    config.merge_document(config.default_document(), again)


def test_merge_rejects_unknown_keys_with_full_path():
    base = config.default_document()
    with pytest.raises(ConfigError) as err:
        config.merge_document(base, {"controler": {"alpha": 2.0}})
    assert "controler" in str(err.value)
    with pytest.raises(ConfigError) as err:
        config.merge_document(base, {"controller": {"alpa": 2.0}})
    assert "controller.alpa" in str(err.value)


def test_merge_checks_leaf_types():
    base = config.default_document()
    with pytest.raises(ConfigError):
        config.merge_document(base, {"mpr": "half"})
    with pytest.raises(ConfigError):
        config.merge_document(base, {"mpr": True})  # bool is not a number here
    with pytest.raises(ConfigError):
        config.merge_document(base, {"corridor": {"n_edges": 2.5}})
    with pytest.raises(ConfigError):
        config.merge_document(base, {"controller": {"mix_sensor_rank1": 1}})
    with pytest.raises(ConfigError) as err:
        config.merge_document(base, {"controller": {"topology": "chain"}})
    assert "PF or MPF" in str(err.value)


def test_merge_does_not_mutate_base():
    base = config.default_document()
    merged = config.merge_document(base, {"seed": 99})
    assert base["seed"] == ScenarioConfig().seed
    assert merged["seed"] == 99


def test_initial_vehicles_validation():
    base = config.default_document()
    good = [{"class": "CAV", "x_m": 50.0, "v_mps": 20.0}]
    merged = config.merge_document(base, {"initial_vehicles": good})
    assert merged["initial_vehicles"] == good
    for bad in (
        {"initial_vehicles": "none"},
        {"initial_vehicles": [42]},
        {"initial_vehicles": [{"class": "bus", "x_m": 0.0, "v_mps": 0.0}]},
        {"initial_vehicles": [{"class": "CAV", "x_m": 0.0, "v_mps": 0.0, "lane": 2}]},
        {"initial_vehicles": [{"class": "CAV", "x_m": "far", "v_mps": 0.0}]},
    ):
        with pytest.raises(ConfigError):
            config.merge_document(base, bad)


def test_schema_leaf_lookup():
    assert config.schema_leaf("controller.beta") == "float"
    assert config.schema_leaf("corridor.n_edges") == "int"
    with pytest.raises(ConfigError):
        config.schema_leaf("controller.gamma")
    with pytest.raises(ConfigError) as err:
        config.schema_leaf("controller")
    assert "section" in str(err.value)


def test_set_value_and_set_option():
    doc = config.default_document()
    config.set_value(doc, "controller.beta", 4)
    assert doc["controller"]["beta"] == 4.0
    config.apply_set_option(doc, "channel.per=0.7")
    assert doc["channel"]["per"] == 0.7
    config.apply_set_option(doc, "controller.mix_sensor_rank1=false")
    assert doc["controller"]["mix_sensor_rank1"] is False
    config.apply_set_option(doc, "controller.topology=PF")
    assert doc["controller"]["topology"] == "PF"
    with pytest.raises(ConfigError):
        config.apply_set_option(doc, "channel.per")  # no '='
    with pytest.raises(ConfigError):
        config.apply_set_option(doc, "channel.per=[0.1,")  # broken YAML
    with pytest.raises(ConfigError):
        config.apply_set_option(doc, "channel.range=100")  # unknown key


def test_effective_document_precedence():
    file_doc = {
        "schema_version": config.SCHEMA_VERSION,
        "seed": 5,
        "controller": {"beta": 2.0},
    }
    doc = config.effective_document(file_doc, sets=["controller.beta=2.5"], seed=11)
    assert doc["controller"]["beta"] == 2.5  # --set beats the file
    assert doc["seed"] == 11  # --seed beats both
    assert doc["controller"]["alpha"] == 1.0  # untouched default


def test_effective_document_requires_schema_version():
    with pytest.raises(ConfigError) as err:
        config.effective_document({"seed": 5})
    assert "schema_version" in str(err.value)
    with pytest.raises(ConfigError):
        config.effective_document({"schema_version": 999})


def test_scenario_errors_carry_section_prefix():
    doc = config.default_document()
    config.set_value(doc, "controller.alpha", -1.0)
    with pytest.raises(ConfigError) as err:
        config.document_to_scenario(doc)
    assert str(err.value).startswith("controller.alpha")

    doc = config.default_document()
    config.set_value(doc, "corridor.n_edges", 0)
    with pytest.raises(ConfigError) as err:
        config.document_to_scenario(doc)
    assert str(err.value).startswith("corridor.")


def test_staleness_error_points_at_channel_key():
    # staleness lives under `channel:` in the file even though the runtime
    # carries it on the controller config
    doc = config.default_document()
    config.set_value(doc, "channel.staleness_s", -0.5)
    with pytest.raises(ConfigError) as err:
        config.document_to_scenario(doc)
    assert str(err.value).startswith("channel.staleness_s")


def test_scenario_wiring_reaches_runtime_objects():
    doc = config.default_document()
    config.set_value(doc, "controller.topology", "PF")
    config.set_value(doc, "controller.catchup_factor", 1.25)
    config.set_value(doc, "idm.headway_s", 1.2)
    config.set_value(doc, "vehicle.length_m", 5.0)
    config.set_value(doc, "corridor.length_m", 3000.0)
    config.set_value(doc, "corridor.n_edges", 6)
    doc["initial_vehicles"] = [{"class": "HDV", "x_m": 120.0, "v_mps": 22.0}]
    sc = config.document_to_scenario(doc)
    assert sc.controller.topology is Topology.PF
    assert sc.controller.catchup_factor == 1.25
    assert sc.idm.T == 1.2
    assert sc.vehicle.length == 5.0
    assert sc.corridor.length == 3000.0
    assert sc.corridor.n_edges == 6
    assert sc.initial_vehicles == (
        (VehicleClass.HDV, 120.0, 22.0),
    )


def test_load_yaml_errors(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("seed: 3\n")
    assert config.load_yaml(str(p)) == {"seed": 3}
    p.write_text("")
    assert config.load_yaml(str(p)) == {}
    p.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError) as err:
        config.load_yaml(str(p))
    assert "mapping" in str(err.value)
    with pytest.raises(ConfigError):
        config.load_yaml(str(tmp_path / "missing.yaml"))


def test_load_sweep_document(tmp_path):
    p = tmp_path / "sweep.yaml"
    p.write_text(
        "schema_version: 1\n"
        "seed: 7\n"
        "replications: 2\n"
        "base:\n  demand_veh_h: 1200\n"
        "axes:\n  controller.beta: [1, 2]\n  channel.per: [0.0, 0.7]\n"
    )
    doc = config.load_sweep_document(str(p))
    assert doc["axes"]["controller.beta"] == [1, 2]

    p.write_text("schema_version: 1\naxes: {controller.beta: []}\n")
    with pytest.raises(ConfigError):
        config.load_sweep_document(str(p))
    p.write_text("schema_version: 1\naxes: {controller.gamma: [1]}\n")
    with pytest.raises(ConfigError):
        config.load_sweep_document(str(p))
    p.write_text("schema_version: 1\nreplications: 0\n")
    with pytest.raises(ConfigError):
        config.load_sweep_document(str(p))
    p.write_text("schema_version: 1\nrows: 3\n")
    with pytest.raises(ConfigError) as err:
        config.load_sweep_document(str(p))
    assert "rows" in str(err.value)
    p.write_text("axes: {}\n")
    with pytest.raises(ConfigError):
        config.load_sweep_document(str(p))
