"""
Scenario descriptors: JSON in, validated frozen dataclasses out.

A descriptor names the world, the street, how buildings and BSs are placed,
the UE walk and every radio/MDP parameter. `build_scenario` turns it into a
Scenario (scene + BS sites + trajectory + parameters) that can be written back
to JSON with `scenario_to_json` and reloaded bit-identically.
"""
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence, Tuple

import numpy as np

from core.beamforming import NeighborhoodSpec
from core.channel import ArrayGeometry, LinkBudget
from core.env import EnvConfig
from core.errors import ConfigError
from core.scene import (
    BsSite,
    Box,
    ObstacleConfig,
    ObstacleSet,
    PropagationConfig,
    Scene,
    SceneConfig,
    Street,
    Trajectory,
    generate_scene,
)
from core.seeding import derive_seed, stream

logger = logging.getLogger(__name__)

SCENARIO_FORMAT = "mmwave-scenario/1"
_REQUIRED = object()


@dataclass(frozen=True)
class CodebookSpec:
    azimuth_range: Tuple[float, float] = (-80.0, 80.0)
    elevation_range: Tuple[float, float] = (-40.0, 10.0)
    resolution: Tuple[float, float] = (5.0, 5.0)


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    scene: Scene
    base_stations: Tuple[BsSite, ...]
    trajectory: Trajectory
    polyline: Tuple[Tuple[float, float], ...]
    obstacle_density: float = 0.01
    obstacles: ObstacleConfig = field(default_factory=ObstacleConfig)
    array: ArrayGeometry = field(default_factory=ArrayGeometry)
    codebook: CodebookSpec = field(default_factory=CodebookSpec)
    env: EnvConfig = field(default_factory=EnvConfig)

    def __post_init__(self):
        ids = [b.id for b in self.base_stations]
        if ids != list(range(1, len(ids) + 1)):
            raise ConfigError(f"BS ids must be 1..|B| without gaps, got {ids}")
        if self.obstacle_density < 0:
            raise ConfigError("obstacle density must be non-negative.")

    @property
    def n_bs(self) -> int:
        return len(self.base_stations)

    @property
    def slots(self) -> int:
        return self.trajectory.slots


# ----------------------------
# Descriptor parsing
# ----------------------------
def load_scenario_config(path) -> dict:
    """
    Read a scenario descriptor.

    Raises:
        ConfigError: unreadable file or JSON syntax error (with line and column).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read scenario file {path}: {e}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: invalid JSON ({e.msg})")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def _get(doc: dict, dotted: str, kind, default: Any = _REQUIRED):
    node = doc
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is _REQUIRED:
                raise ConfigError(f"Missing required field '{dotted}'")
            return default
        node = node[part]
    return _coerce(node, kind, dotted)


def _coerce(value, kind, dotted: str):
    try:
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
            return out
        if kind is int:
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is str:
            if not isinstance(value, str):
                raise TypeError
            return value
        if isinstance(kind, tuple) and kind[0] == "pair":
            if len(value) != 2:
                raise ValueError
            return (float(value[0]), float(value[1]))
        if isinstance(kind, tuple) and kind[0] == "floats":
            return tuple(float(v) for v in value)
        if isinstance(kind, tuple) and kind[0] == "points":
            pts = tuple((float(p[0]), float(p[1])) for p in value)
            if any(len(p) != 2 for p in value):
                raise ValueError
            return pts
        if kind is list:
            if not isinstance(value, list):
                raise TypeError
            return value
    except (TypeError, ValueError, IndexError):
        pass
    else:
        raise AssertionError(f"unknown field kind {kind}")
    raise ConfigError(f"Field '{dotted}' has an invalid value: {value!r}")


def _pair_or_scalar(doc, dotted, default):
    node = doc
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    if isinstance(node, (int, float)) and not isinstance(node, bool):
        return (float(node), float(node))
    return _coerce(node, ("pair",), dotted)


def _scene_config(doc: dict) -> SceneConfig:
    bounds = _get(doc, "world.bounds", ("floats",))
    if len(bounds) != 4:
        raise ConfigError("Field 'world.bounds' must be [x_min, y_min, x_max, y_max]")
    street = Street(
        y_center=_get(doc, "street.y_center", float),
        width=_get(doc, "street.width", float),
    )
    penetration = _get(doc, "buildings.penetration_loss_db", float, 40.0)
    reflection = _get(doc, "buildings.reflection_loss_db", float, 6.0)
    boxes = []
    for i, raw in enumerate(_get(doc, "buildings.boxes", list, [])):
        if not isinstance(raw, dict):
            raise ConfigError(f"Field 'buildings.boxes[{i}]' must be an object")
        boxes.append(Box(
            lo=_xyz(_coerce(raw.get("lo"), ("floats",), f"buildings.boxes[{i}].lo"), f"buildings.boxes[{i}].lo"),
            hi=_xyz(_coerce(raw.get("hi"), ("floats",), f"buildings.boxes[{i}].hi"), f"buildings.boxes[{i}].hi"),
            penetration_loss_db=_coerce(raw.get("penetration_loss_db", penetration), float,
                                        f"buildings.boxes[{i}].penetration_loss_db"),
            reflection_loss_db=_coerce(raw.get("reflection_loss_db", reflection), float,
                                       f"buildings.boxes[{i}].reflection_loss_db"),
        ))

    prop = PropagationConfig(
        carrier_hz=_get(doc, "propagation.carrier_hz", float, 28e9),
        max_paths=_get(doc, "propagation.max_paths", int, 5),
        drop_threshold_db=_get(doc, "propagation.drop_threshold_db", float, 60.0),
        ue_height=_get(doc, "propagation.ue_height", float, 1.5),
        ground_reflection=_get(doc, "propagation.ground_reflection", bool, False),
        front_hemisphere_only=_get(doc, "propagation.front_hemisphere_only", bool, True),
    )
    if prop.max_paths < 1:
        raise ConfigError("Field 'propagation.max_paths' must be at least 1")

    return SceneConfig(
        bounds=tuple(bounds),
        street=street,
        building_count=_get(doc, "buildings.count", int, 0),
        footprint_range=_get(doc, "buildings.footprint_range", ("pair",), (20.0, 60.0)),
        height_range=_get(doc, "buildings.height_range", ("pair",), (10.0, 30.0)),
        buildings=tuple(boxes),
        building_penetration_db=penetration,
        building_reflection_db=reflection,
        terrain_loss_db=_get(doc, "terrain.reflection_loss_db", float, 10.0),
        propagation=prop,
    )


def _xyz(values, dotted):
    if len(values) != 3:
        raise ConfigError(f"Field '{dotted}' must be [x, y, z]")
    return tuple(values)


def _env_config(doc: dict) -> EnvConfig:
    return EnvConfig(
        slot_duration=_get(doc, "env.slot_duration", float, 10e-3),
        beam_test_duration=_get(doc, "env.beam_test_duration", float, 10e-6),
        snr_threshold_db=_get(doc, "env.snr_threshold_db", float, 2.0),
        throughput_threshold=_get(doc, "env.throughput_threshold", float, 1.0),
        penalty=_get(doc, "env.penalty", float, 100.0),
        association_interval=_get(doc, "env.association_interval", float, 1.0),
        training_fraction=_get(doc, "env.training_fraction", float, 1.0 / 3.0),
        neighborhood=NeighborhoodSpec(
            max_dev_azimuth=_get(doc, "env.neighborhood.max_dev_azimuth", float, 10.0),
            max_dev_elevation=_get(doc, "env.neighborhood.max_dev_elevation", float, 10.0),
            step_azimuth=_get(doc, "env.neighborhood.step_azimuth", float, 5.0),
            step_elevation=_get(doc, "env.neighborhood.step_elevation", float, 5.0),
        ),
        budget=LinkBudget(
            tx_power_dbm=_get(doc, "radio.tx_power_dbm", float, 10.0),
            noise_density_dbm_hz=_get(doc, "radio.noise_density_dbm_hz", float, -174.0),
            bandwidth_hz=_get(doc, "radio.bandwidth_hz", float, 100e6),
        ),
    )


# ----------------------------
# Placement and mobility
# ----------------------------
def place_base_stations(scene: Scene, extent: Tuple[float, float], count: int, height: float,
                        rng: np.random.Generator, jitter: float = 0.25) -> Tuple[BsSite, ...]:
    """
    Mount `count` BSs on the street edges, alternating sides.

    The x-extent is cut into `count` equal shares and one BS sits in each,
    at the share centre plus a uniform jitter of up to `jitter` share widths.
    Broadside points across the street so every site faces the walk.
    """
    if count < 1:
        raise ConfigError(f"Need at least one BS, got {count}")
    if height <= 0:
        raise ConfigError(f"BS height must be positive, got {height}")

    x0, x1 = min(extent), max(extent)
    share = (x1 - x0) / count
    x_min, _, x_max, _ = scene.bounds
    sites = []
    for k in range(count):
        x = x0 + (k + 0.5) * share + rng.uniform(-jitter, jitter) * share
        x = float(np.clip(x, x_min, x_max))
        if k % 2 == 0:
            y, broadside = scene.street.y_min, 90.0
        else:
            y, broadside = scene.street.y_max, -90.0
        sites.append(BsSite(id=k + 1, position=(x, float(y), float(height)), broadside_deg=broadside))
    return tuple(sites)


def sample_trajectory(polyline: Sequence[Tuple[float, float]], speed: float, interval: float,
                      slots: int) -> Trajectory:
    """
    Constant-speed walk along a polyline, one waypoint per association interval.

    Consecutive waypoints are exactly speed*interval apart in straight-line
    distance: each next waypoint is the first point further along the
    polyline on the circle of that radius around the current one.

    Raises:
        ConfigError: the polyline ends before `slots` waypoints fit.
    """
    pts = np.asarray(polyline, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 1:
        raise ConfigError("Trajectory polyline must be a list of [x, y] points.")
    if slots < 1:
        raise ConfigError(f"Trajectory needs at least one slot, got {slots}")
    if speed <= 0 or interval <= 0:
        raise ConfigError("Trajectory speed and association interval must be positive.")

    step = speed * interval
    current = pts[0].copy()
    seg, t_cur = 0, 0.0
    waypoints = [(float(current[0]), float(current[1]))]

    while len(waypoints) < slots:
        found = False
        while seg < len(pts) - 1:
            p0, d = pts[seg], pts[seg + 1] - pts[seg]
            a = float(d @ d)
            if a == 0.0:
                seg, t_cur = seg + 1, 0.0
                continue
            w = p0 - current
            b = 2.0 * float(d @ w)
            c = float(w @ w) - step * step
            disc = b * b - 4.0 * a * c
            if disc >= 0.0:
                root = (-b + math.sqrt(disc)) / (2.0 * a)
                if t_cur <= root <= 1.0:
                    current = p0 + root * d
                    t_cur = root
                    found = True
                    break
            seg, t_cur = seg + 1, 0.0
        if not found:
            raise ConfigError(
                f"Trajectory polyline is too short for {slots} slots at {step} m per slot "
                f"(only {len(waypoints)} fit)"
            )
        waypoints.append((float(current[0]), float(current[1])))

    return Trajectory(waypoints=tuple(waypoints), speed=float(speed), interval=float(interval))


# ----------------------------
# Scenario assembly
# ----------------------------
def build_scenario(config: dict, seed: Optional[int] = None) -> Scenario:
    """
    Build a Scenario from a descriptor: scene, then BSs, then the walk.

    `seed` overrides the descriptor's own `seed` field.
    """
    if seed is None:
        seed = _get(config, "seed", int, 0)
    if seed < 0:
        raise ConfigError(f"Seed must be non-negative, got {seed}")

    scene = generate_scene(_scene_config(config), derive_seed(seed, "scene"))
    env = _env_config(config)

    polyline = _get(config, "trajectory.polyline", ("points",))
    if len(polyline) < 2:
        raise ConfigError("Field 'trajectory.polyline' needs at least two points")
    trajectory = sample_trajectory(
        polyline,
        _get(config, "trajectory.speed", float, 1.0),
        env.association_interval,
        _get(config, "trajectory.slots", int),
    )

    sites = _get(config, "base_stations.sites", list, [])
    if sites:
        placed = []
        for i, s in enumerate(sites):
            if not isinstance(s, dict):
                raise ConfigError(f"Field 'base_stations.sites[{i}]' must be an object")
            placed.append(BsSite(
                id=i + 1,
                position=_xyz(_coerce(s.get("position"), ("floats",), f"base_stations.sites[{i}].position"),
                              f"base_stations.sites[{i}].position"),
                broadside_deg=_coerce(s.get("broadside_deg", 0.0), float, f"base_stations.sites[{i}].broadside_deg"),
            ))
        base_stations = tuple(placed)
    else:
        xs = [p[0] for p in polyline]
        base_stations = place_base_stations(
            scene,
            (min(xs), max(xs)),
            _get(config, "base_stations.count", int),
            _get(config, "base_stations.height", float, 6.0),
            stream(seed, "base_stations"),
        )

    scenario = Scenario(
        name=_get(config, "name", str, "scenario"),
        seed=int(seed),
        scene=scene,
        base_stations=base_stations,
        trajectory=trajectory,
        polyline=polyline,
        obstacle_density=_get(config, "obstacles.density", float, 0.01),
        obstacles=ObstacleConfig(
            heights=_get(config, "obstacles.heights", ("floats",), (1.0, 3.0)),
            widths=_get(config, "obstacles.widths", ("floats",), (2.0, 4.0)),
            thickness=_get(config, "obstacles.thickness", float, 0.5),
            loss_db_range=_get(config, "obstacles.loss_db_range", ("pair",), (20.0, 20.0)),
        ),
        array=ArrayGeometry(
            rows=_get(config, "radio.array.rows", int, 8),
            cols=_get(config, "radio.array.cols", int, 8),
            spacing=_get(config, "radio.array.spacing", float, 0.5),
        ),
        codebook=CodebookSpec(
            azimuth_range=_get(config, "radio.codebook.azimuth_range", ("pair",), (-80.0, 80.0)),
            elevation_range=_get(config, "radio.codebook.elevation_range", ("pair",), (-40.0, 10.0)),
            resolution=_pair_or_scalar(config, "radio.codebook.resolution", (5.0, 5.0)),
        ),
        env=env,
    )
    logger.info(
        "Built scenario '%s': %d buildings, %d BSs, %d slots",
        scenario.name, len(scene.buildings), scenario.n_bs, scenario.slots,
    )
    return scenario


def with_slots(scenario: Scenario, slots: int) -> Scenario:
    """Same scene and BSs, walk re-sampled to `slots` waypoints."""
    trajectory = sample_trajectory(scenario.polyline, scenario.trajectory.speed, scenario.trajectory.interval, slots)
    return replace(scenario, trajectory=trajectory)


def with_bs_count(scenario: Scenario, count: int) -> Scenario:
    """
    Keep `count` BSs spread evenly over the current list (BS 1 always stays),
    renumbered 1..count.
    """
    if not 1 <= count <= scenario.n_bs:
        raise ConfigError(f"BS count must be in 1..{scenario.n_bs}, got {count}")
    picks = np.unique(np.round(np.linspace(0, scenario.n_bs - 1, count)).astype(int))
    kept = tuple(
        replace(scenario.base_stations[i], id=k + 1)
        for k, i in enumerate(picks)
    )
    return replace(scenario, base_stations=kept)


# ----------------------------
# Serialisation
# ----------------------------
def _box_dict(b: Box) -> dict:
    return {
        "lo": list(b.lo),
        "hi": list(b.hi),
        "penetration_loss_db": b.penetration_loss_db,
        "reflection_loss_db": b.reflection_loss_db,
    }


def scenario_to_dict(scenario: Scenario) -> dict:
    s = scenario.scene
    env = scenario.env
    return {
        "format": SCENARIO_FORMAT,
        "name": scenario.name,
        "seed": scenario.seed,
        "world": {"bounds": list(s.bounds)},
        "street": {"y_center": s.street.y_center, "width": s.street.width},
        "terrain": {"reflection_loss_db": s.terrain_loss_db},
        "propagation": asdict(s.propagation),
        "buildings": [_box_dict(b) for b in s.buildings],
        "base_stations": [
            {"id": b.id, "position": list(b.position), "broadside_deg": b.broadside_deg}
            for b in scenario.base_stations
        ],
        "trajectory": {
            "polyline": [list(p) for p in scenario.polyline],
            "waypoints": [list(p) for p in scenario.trajectory.waypoints],
            "speed": scenario.trajectory.speed,
            "interval": scenario.trajectory.interval,
        },
        "obstacles": {
            "density": scenario.obstacle_density,
            "heights": list(scenario.obstacles.heights),
            "widths": list(scenario.obstacles.widths),
            "thickness": scenario.obstacles.thickness,
            "loss_db_range": list(scenario.obstacles.loss_db_range),
        },
        "radio": {
            "array": asdict(scenario.array),
            "codebook": {k: list(v) for k, v in asdict(scenario.codebook).items()},
            "tx_power_dbm": env.budget.tx_power_dbm,
            "noise_density_dbm_hz": env.budget.noise_density_dbm_hz,
            "bandwidth_hz": env.budget.bandwidth_hz,
        },
        "env": {
            "slot_duration": env.slot_duration,
            "beam_test_duration": env.beam_test_duration,
            "snr_threshold_db": env.snr_threshold_db,
            "throughput_threshold": env.throughput_threshold,
            "penalty": env.penalty,
            "association_interval": env.association_interval,
            "training_fraction": env.training_fraction,
            "neighborhood": asdict(env.neighborhood),
        },
    }


def scenario_to_json(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario), sort_keys=True, indent=2) + "\n"


def scenario_from_json(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"line {e.lineno}, column {e.colno}: invalid JSON ({e.msg})")
    return scenario_from_dict(doc)


def scenario_from_dict(doc: dict) -> Scenario:
    if doc.get("format") != SCENARIO_FORMAT:
        raise ConfigError(f"Not a generated scenario (expected format '{SCENARIO_FORMAT}')")

    prop = PropagationConfig(**doc["propagation"])
    scene = Scene(
        bounds=tuple(doc["world"]["bounds"]),
        street=Street(**doc["street"]),
        buildings=tuple(
            Box(lo=tuple(b["lo"]), hi=tuple(b["hi"]),
                penetration_loss_db=b["penetration_loss_db"], reflection_loss_db=b["reflection_loss_db"])
            for b in doc["buildings"]
        ),
        terrain_loss_db=doc["terrain"]["reflection_loss_db"],
        propagation=prop,
    )
    # Generated files carry every parameter, so the descriptor parsers apply.
    env = _env_config(doc)
    traj = doc["trajectory"]
    cb = doc["radio"]["codebook"]
    obs = doc["obstacles"]
    return Scenario(
        name=doc["name"],
        seed=int(doc["seed"]),
        scene=scene,
        base_stations=tuple(
            BsSite(id=int(b["id"]), position=tuple(b["position"]), broadside_deg=b["broadside_deg"])
            for b in doc["base_stations"]
        ),
        trajectory=Trajectory(
            waypoints=tuple(tuple(p) for p in traj["waypoints"]),
            speed=traj["speed"],
            interval=traj["interval"],
        ),
        polyline=tuple(tuple(p) for p in traj["polyline"]),
        obstacle_density=obs["density"],
        obstacles=ObstacleConfig(
            heights=tuple(obs["heights"]),
            widths=tuple(obs["widths"]),
            thickness=obs["thickness"],
            loss_db_range=tuple(obs["loss_db_range"]),
        ),
        array=ArrayGeometry(**doc["radio"]["array"]),
        codebook=CodebookSpec(
            azimuth_range=tuple(cb["azimuth_range"]),
            elevation_range=tuple(cb["elevation_range"]),
            resolution=tuple(cb["resolution"]),
        ),
        env=env,
    )


def load_scenario(path, seed: Optional[int] = None) -> Scenario:
    """Load either a generated scenario file or a descriptor (built with `seed`)."""
    doc = load_scenario_config(path)
    if doc.get("format") == SCENARIO_FORMAT:
        try:
            return scenario_from_dict(doc)
        except (KeyError, TypeError) as e:
            raise ConfigError(f"{path}: malformed generated scenario ({e})")
    return build_scenario(doc, seed)


def export_scene(scenario: Scenario, obstacles: Optional[ObstacleSet] = None) -> dict:
    """Inspection dump: geometry, BS sites, waypoints and optionally one obstacle draw."""
    out = {
        "name": scenario.name,
        "bounds": list(scenario.scene.bounds),
        "street": {"y_min": scenario.scene.street.y_min, "y_max": scenario.scene.street.y_max},
        "buildings": [_box_dict(b) for b in scenario.scene.buildings],
        "base_stations": [
            {"id": b.id, "position": list(b.position), "broadside_deg": b.broadside_deg}
            for b in scenario.base_stations
        ],
        "waypoints": [list(p) for p in scenario.trajectory.waypoints],
    }
    if obstacles is not None:
        out["obstacles"] = {"seed": obstacles.seed, "boxes": [_box_dict(b) for b in obstacles.obstacles]}
    return out
