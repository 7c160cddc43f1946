import copy
import json
import math

import pytest

from conftest import ROOT
from core.errors import ConfigError
from core.scenario import (
    SCENARIO_FORMAT,
    build_scenario,
    export_scene,
    load_scenario,
    load_scenario_config,
    sample_trajectory,
    scenario_from_json,
    scenario_to_json,
    with_bs_count,
    with_slots,
)


# ----------------------------
# Descriptor parsing
# ----------------------------
def test_missing_field_is_named(small_config):
    del small_config["street"]["width"]
    with pytest.raises(ConfigError, match=r"street\.width"):
        build_scenario(small_config)


def test_invalid_field_value_is_named(small_config):
    small_config["trajectory"]["slots"] = "many"
    with pytest.raises(ConfigError, match=r"trajectory\.slots"):
        build_scenario(small_config)


def test_bad_box_reports_its_index(small_config):
    small_config["buildings"]["boxes"][1]["hi"] = [1.0, 2.0]
    with pytest.raises(ConfigError, match=r"buildings\.boxes\[1\]\.hi"):
        build_scenario(small_config)


@pytest.mark.parametrize("key", ["penetration_loss_db", "reflection_loss_db"])
def test_mistyped_box_loss_is_named(small_config, key):
    small_config["buildings"]["boxes"][0][key] = "brick"
    with pytest.raises(ConfigError, match=rf"buildings\.boxes\[0\]\.{key}"):
        build_scenario(small_config)


def test_non_object_site_is_named(small_config):
    small_config["base_stations"]["sites"] = [{"position": [20.0, 24.0, 6.0]}, [60.0, 36.0, 6.0]]
    with pytest.raises(ConfigError, match=r"base_stations\.sites\[1\]"):
        build_scenario(small_config)


def test_box_across_the_street_is_rejected(small_config):
    small_config["buildings"]["boxes"].append({"lo": [112.0, 20.0, 0.0], "hi": [118.0, 40.0, 10.0]})
    with pytest.raises(ConfigError, match="corridor"):
        build_scenario(small_config)


def test_json_syntax_error_has_line_and_column(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "name": "x",\n  "seed": \n}\n', encoding="utf-8")
    with pytest.raises(ConfigError, match=r":4:1:"):
        load_scenario_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario_config(tmp_path / "nope.json")


# ----------------------------
# Trajectory
# ----------------------------
def test_waypoints_are_exactly_one_step_apart():
    traj = sample_trajectory([(0.0, 0.0), (3.0, 0.0), (3.0, 10.0)], speed=2.0, interval=1.0, slots=5)
    assert traj.slots == 5
    assert traj.waypoints[0] == (0.0, 0.0)
    for a, b in zip(traj.waypoints, traj.waypoints[1:]):
        assert math.dist(a, b) == pytest.approx(2.0, abs=1e-9)
    assert traj.waypoints[2] == pytest.approx((3.0, math.sqrt(3.0)), abs=1e-12)


def test_too_short_polyline_is_rejected():
    with pytest.raises(ConfigError, match="too short"):
        sample_trajectory([(0.0, 0.0), (5.0, 0.0)], speed=1.0, interval=1.0, slots=10)


def test_single_slot_trajectory():
    traj = sample_trajectory([(1.0, 2.0), (3.0, 2.0)], speed=1.0, interval=1.0, slots=1)
    assert traj.waypoints == ((1.0, 2.0),)


# ----------------------------
# Building scenarios
# ----------------------------
def test_small_scenario_layout(small_scenario):
    s = small_scenario
    assert s.n_bs == 3 and s.slots == 20
    assert len(s.scene.buildings) == 2
    assert [b.id for b in s.base_stations] == [1, 2, 3]
    street = s.scene.street
    assert [b.position[1] for b in s.base_stations] == [street.y_min, street.y_max, street.y_min]
    assert [b.broadside_deg for b in s.base_stations] == [90.0, -90.0, 90.0]
    for b in s.base_stations:
        assert 5.0 <= b.position[0] <= 115.0
        assert b.position[2] == 6.0


def test_build_is_deterministic(small_config):
    assert build_scenario(small_config) == build_scenario(copy.deepcopy(small_config))
    assert build_scenario(small_config, seed=1) != build_scenario(small_config, seed=2)


def test_explicit_sites(small_config):
    small_config["base_stations"] = {
        "sites": [
            {"position": [20.0, 24.0, 6.0], "broadside_deg": 90.0},
            {"position": [80.0, 36.0, 8.0], "broadside_deg": -90.0},
        ]
    }
    s = build_scenario(small_config)
    assert s.n_bs == 2
    assert s.base_stations[1].position == (80.0, 36.0, 8.0)

    small_config["base_stations"]["sites"][0]["position"] = [1.0]
    with pytest.raises(ConfigError, match=r"base_stations\.sites\[0\]\.position"):
        build_scenario(small_config)


def test_urban_street_descriptor():
    s = load_scenario(f"{ROOT}/scenarios/urban_street.json")
    assert len(s.scene.buildings) == 12
    assert s.n_bs == 10
    assert s.slots == 100


def test_with_slots_keeps_scene(small_scenario):
    shorter = with_slots(small_scenario, 5)
    assert shorter.slots == 5
    assert shorter.scene == small_scenario.scene
    assert shorter.trajectory.waypoints == small_scenario.trajectory.waypoints[:5]


def test_with_bs_count_keeps_bs_one(small_scenario):
    fewer = with_bs_count(small_scenario, 2)
    assert [b.id for b in fewer.base_stations] == [1, 2]
    assert fewer.base_stations[0].position == small_scenario.base_stations[0].position
    assert fewer.base_stations[1].position == small_scenario.base_stations[2].position
    assert with_bs_count(small_scenario, 1).n_bs == 1
    with pytest.raises(ConfigError):
        with_bs_count(small_scenario, 4)


# ----------------------------
# Serialisation
# ----------------------------
def test_json_round_trip(small_scenario):
    text = scenario_to_json(small_scenario)
    assert json.loads(text)["format"] == SCENARIO_FORMAT
    again = scenario_from_json(text)
    assert again == small_scenario
    assert scenario_to_json(again) == text


def test_generated_file_loads_without_rebuilding(small_scenario, tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(scenario_to_json(small_scenario), encoding="utf-8")
    assert load_scenario(path, seed=999) == small_scenario


def test_descriptor_is_not_a_generated_scenario(small_config):
    with pytest.raises(ConfigError, match="generated scenario"):
        scenario_from_json(json.dumps(small_config))


def test_export_scene(small_scenario):
    out = export_scene(small_scenario)
    assert len(out["waypoints"]) == 20
    assert len(out["base_stations"]) == 3
    assert "obstacles" not in out
