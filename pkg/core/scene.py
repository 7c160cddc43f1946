"""
Synthetic street-canyon geometry and a first-order image-source path tracer.

The scene is a straight street running along the x axis with box buildings on
both sides, random street obstacles (people, vehicles) drawn per channel
realization, and BSs mounted on the street edges. For a BS/UE pair the tracer
returns the direct path plus one specular bounce off each vertical building
face that both ends can see, with free-space loss at the carrier, the
penetration loss of every box a leg crosses, and one reflection loss per bounce.

Building-only work is split from obstacle work (`link_candidates` vs
`obstacle_penalty`) so a simulator can trace the static part of every link
once and only redo the cheap obstacle pass per realization.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from core.errors import ConfigError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0

KIND_LOS = 0
KIND_REFLECTION = 1
KIND_GROUND = 2
KIND_NAMES = {KIND_LOS: "los", KIND_REFLECTION: "reflection", KIND_GROUND: "ground"}

# Segment chunk size for the (segments x boxes) intersection matrix.
_CHUNK = 2048


# ----------------------------
# Domain types
# ----------------------------
@dataclass(frozen=True)
class Box:
    """Axis-aligned box, corners in meters. z runs from the ground up."""

    lo: Tuple[float, float, float]
    hi: Tuple[float, float, float]
    penetration_loss_db: float
    reflection_loss_db: float = 6.0

    def __post_init__(self):
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ConfigError(f"Box corners must satisfy min < max per axis, got {self.lo} / {self.hi}")
        if self.penetration_loss_db < 0 or self.reflection_loss_db < 0:
            raise ConfigError("Box losses must be non-negative.")


@dataclass(frozen=True)
class Street:
    """Building-free corridor along the x axis."""

    y_center: float
    width: float

    @property
    def y_min(self) -> float:
        return self.y_center - self.width / 2

    @property
    def y_max(self) -> float:
        return self.y_center + self.width / 2


@dataclass(frozen=True)
class PropagationConfig:
    carrier_hz: float = 28e9
    max_paths: int = 5
    drop_threshold_db: float = 60.0
    ue_height: float = 1.5
    ground_reflection: bool = False
    front_hemisphere_only: bool = True


@dataclass(frozen=True)
class Scene:
    bounds: Tuple[float, float, float, float]  # x_min, y_min, x_max, y_max
    street: Street
    buildings: Tuple[Box, ...] = ()
    terrain_loss_db: float = 10.0
    propagation: PropagationConfig = field(default_factory=PropagationConfig)

    def __post_init__(self):
        x_min, y_min, x_max, y_max = self.bounds
        if not (x_min < x_max and y_min < y_max):
            raise ConfigError(f"World bounds are empty: {self.bounds}")
        if self.street.width <= 0 or self.street.y_min < y_min or self.street.y_max > y_max:
            raise ConfigError(
                f"Street corridor [{self.street.y_min}, {self.street.y_max}] does not fit the world "
                f"y-range [{y_min}, {y_max}]"
            )
        if self.terrain_loss_db < 0:
            raise ConfigError("terrain_loss_db must be non-negative.")
        for i, b in enumerate(self.buildings):
            if b.lo[0] < x_min or b.lo[1] < y_min or b.hi[0] > x_max or b.hi[1] > y_max:
                raise ConfigError(f"Building {i} lies outside the world bounds.")

    @property
    def street_area(self) -> float:
        return (self.bounds[2] - self.bounds[0]) * self.street.width


@dataclass(frozen=True)
class SceneConfig:
    """Generator parameters for `generate_scene`."""

    bounds: Tuple[float, float, float, float]
    street: Street
    building_count: int = 0
    footprint_range: Tuple[float, float] = (20.0, 60.0)
    height_range: Tuple[float, float] = (10.0, 30.0)
    buildings: Tuple[Box, ...] = ()  # used verbatim when given
    building_penetration_db: float = 40.0
    building_reflection_db: float = 6.0
    terrain_loss_db: float = 10.0
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    max_attempts: int = 2000


@dataclass(frozen=True)
class ObstacleConfig:
    heights: Tuple[float, ...] = (1.0, 3.0)
    widths: Tuple[float, ...] = (2.0, 4.0)
    thickness: float = 0.5
    loss_db_range: Tuple[float, float] = (20.0, 20.0)


@dataclass(frozen=True)
class ObstacleSet:
    obstacles: Tuple[Box, ...] = ()
    seed: Optional[int] = None

    def __len__(self):
        return len(self.obstacles)


@dataclass(frozen=True)
class BsSite:
    id: int
    position: Tuple[float, float, float]
    broadside_deg: float = 0.0

    def __post_init__(self):
        if self.id < 1:
            raise ConfigError(f"BS ids start at 1, got {self.id}")
        if self.position[2] <= 0:
            raise ConfigError(f"BS {self.id} must be above ground, got z={self.position[2]}")


@dataclass(frozen=True)
class Trajectory:
    """UE positions sampled once per association interval."""

    waypoints: Tuple[Tuple[float, float], ...]
    speed: float = 1.0
    interval: float = 1.0

    def __post_init__(self):
        if len(self.waypoints) == 0:
            raise ConfigError("A trajectory needs at least one waypoint.")
        if self.speed <= 0 or self.interval <= 0:
            raise ConfigError("Trajectory speed and association interval must be positive.")

    @property
    def slots(self) -> int:
        return len(self.waypoints)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.waypoints, dtype=float)


@dataclass(frozen=True)
class TracedPath:
    loss_db: float
    azimuth_deg: float
    elevation_deg: float
    length_m: float
    kind: str = "los"
    reflector: int = -1


@dataclass
class PathCandidates:
    """Every geometrically valid path of one link before obstacles are applied.

    Segments are the straight legs of the paths (one for the direct path, two
    per bounce); `seg_owner` maps each leg back to its candidate.
    """

    base_loss_db: np.ndarray
    azimuth_deg: np.ndarray
    elevation_deg: np.ndarray
    length_m: np.ndarray
    kind: np.ndarray
    reflector: np.ndarray
    seg_p0: np.ndarray
    seg_p1: np.ndarray
    seg_owner: np.ndarray

    def __len__(self):
        return len(self.base_loss_db)


# ----------------------------
# Geometry helpers
# ----------------------------
def box_arrays(boxes: Sequence[Box]):
    if len(boxes) == 0:
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0)
    lo = np.array([b.lo for b in boxes], dtype=float)
    hi = np.array([b.hi for b in boxes], dtype=float)
    loss = np.array([b.penetration_loss_db for b in boxes], dtype=float)
    return lo, hi, loss


def segment_box_hits(p0: np.ndarray, p1: np.ndarray, lo: np.ndarray, hi: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    """Boolean (S, K) matrix: segment s runs through the interior of box k.

    Slab test. Touching a face or running along it does not count, so a leg
    that ends on the wall it bounces off is not charged that wall's loss.
    """
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    S, K = len(p0), len(lo)
    hits = np.zeros((S, K), dtype=bool)
    if S == 0 or K == 0:
        return hits

    for start in range(0, S, _CHUNK):
        a = p0[start:start + _CHUNK, None, :]
        d = p1[start:start + _CHUNK, None, :] - a
        parallel = d == 0.0
        inside = (a > lo[None]) & (a < hi[None])
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo[None] - a) / d
            t2 = (hi[None] - a) / d
        near = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
        far = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
        enter = np.maximum(near.max(axis=2), 0.0)
        leave = np.minimum(far.min(axis=2), 1.0)
        hits[start:start + _CHUNK] = (leave - enter) > eps
    return hits


def free_space_loss_db(distance_m, carrier_hz: float):
    d = np.maximum(np.asarray(distance_m, dtype=float), 1.0)
    return 20.0 * np.log10(4.0 * math.pi * d * carrier_hz / SPEED_OF_LIGHT)


def wrap_degrees(angle):
    return (np.asarray(angle, dtype=float) + 180.0) % 360.0 - 180.0


def _departure_angles(bs: BsSite, toward: np.ndarray):
    v = np.atleast_2d(toward) - np.asarray(bs.position, dtype=float)[None, :]
    azimuth = wrap_degrees(np.degrees(np.arctan2(v[:, 1], v[:, 0])) - bs.broadside_deg)
    elevation = np.degrees(np.arctan2(v[:, 2], np.hypot(v[:, 0], v[:, 1])))
    return azimuth, elevation


# ----------------------------
# Scene generation
# ----------------------------
def generate_scene(config: SceneConfig, seed: int) -> Scene:
    """
    Build the static geometry for a scenario.

    Explicit buildings are used as given but must stay out of the street
    corridor. Otherwise `building_count` boxes are rejection-sampled inside
    the world so that none overlaps the corridor or another building.

    Args:
        config: generator parameters.
        seed: scene seed (the caller derives it from the master seed).

    Returns:
        Scene with deterministic content for fixed (config, seed).

    Raises:
        ConfigError: the corridor does not fit, or an explicit building crosses it.
    """
    x_min, y_min, x_max, y_max = config.bounds
    if config.street.width > (y_max - y_min):
        raise ConfigError(
            f"Street corridor width {config.street.width} m exceeds the world y-extent {y_max - y_min} m"
        )

    if config.buildings:
        buildings = tuple(config.buildings)
        street = config.street
        for i, b in enumerate(buildings):
            if b.lo[1] < street.y_max and b.hi[1] > street.y_min:
                raise ConfigError(
                    f"Building {i} spans y [{b.lo[1]}, {b.hi[1]}] and crosses the street corridor "
                    f"[{street.y_min}, {street.y_max}]"
                )
    else:
        buildings = _sample_buildings(config, np.random.default_rng(seed))

    return Scene(
        bounds=tuple(config.bounds),
        street=config.street,
        buildings=buildings,
        terrain_loss_db=config.terrain_loss_db,
        propagation=config.propagation,
    )


def _sample_buildings(config: SceneConfig, rng: np.random.Generator):
    x_min, y_min, x_max, y_max = config.bounds
    street = config.street
    placed = []

    for i in range(config.building_count):
        for _ in range(config.max_attempts):
            w, d = rng.uniform(*config.footprint_range, size=2)
            h = rng.uniform(*config.height_range)
            if w >= x_max - x_min or d >= y_max - y_min:
                continue
            x0 = rng.uniform(x_min, x_max - w)
            y0 = rng.uniform(y_min, y_max - d)
            # Corridor must stay building-free.
            if y0 < street.y_max and y0 + d > street.y_min:
                continue
            if any(x0 < b.hi[0] and x0 + w > b.lo[0] and y0 < b.hi[1] and y0 + d > b.lo[1] for b in placed):
                continue
            placed.append(Box(
                lo=(float(x0), float(y0), 0.0),
                hi=(float(x0 + w), float(y0 + d), float(h)),
                penetration_loss_db=config.building_penetration_db,
                reflection_loss_db=config.building_reflection_db,
            ))
            break
        else:
            raise ConfigError(
                f"Could not place building {i + 1} of {config.building_count} outside the street "
                f"after {config.max_attempts} attempts; reduce the count or the footprint range."
            )

    logger.debug("Placed %d buildings", len(placed))
    return tuple(placed)


def sample_obstacles(scene: Scene, density: float, rng: np.random.Generator,
                     config: ObstacleConfig = ObstacleConfig(), seed: Optional[int] = None) -> ObstacleSet:
    """
    Drop temporary blockers (people, vehicles) in the street.

    The count is Poisson(density x street area). Each blocker is a thin vertical
    plate across the street axis with a height and width drawn from the
    configured sets and a penetration loss drawn from `loss_db_range`.
    """
    if density < 0:
        raise ConfigError(f"Obstacle density must be non-negative, got {density}")

    count = int(rng.poisson(density * scene.street_area))
    if count == 0:
        return ObstacleSet(obstacles=(), seed=seed)

    x_min, _, x_max, _ = scene.bounds
    street = scene.street
    cx = rng.uniform(x_min, x_max, size=count)
    cy = rng.uniform(street.y_min, street.y_max, size=count)
    heights = rng.choice(np.asarray(config.heights, dtype=float), size=count)
    widths = rng.choice(np.asarray(config.widths, dtype=float), size=count)
    losses = rng.uniform(config.loss_db_range[0], config.loss_db_range[1], size=count)

    half_t = config.thickness / 2
    obstacles = []
    for x, y, h, w, loss in zip(cx, cy, heights, widths, losses):
        obstacles.append(Box(
            lo=(float(max(x - half_t, x_min)), float(max(y - w / 2, street.y_min)), 0.0),
            hi=(float(min(x + half_t, x_max)), float(min(y + w / 2, street.y_max)), float(h)),
            penetration_loss_db=float(loss),
            reflection_loss_db=0.0,
        ))
    return ObstacleSet(obstacles=tuple(obstacles), seed=seed)


# ----------------------------
# Path tracing
# ----------------------------
def link_candidates(scene: Scene, bs: BsSite, ue) -> PathCandidates:
    """Direct path plus first-order bounces of one link, building losses only."""
    prop = scene.propagation
    tx = np.asarray(bs.position, dtype=float)
    rx = np.asarray(ue, dtype=float)
    b_lo, b_hi, b_loss = box_arrays(scene.buildings)

    # Per candidate: (turning point or None, image point, extra loss, kind, reflector)
    turns, images, extra, kinds, reflectors = [None], [rx], [0.0], [KIND_LOS], [-1]

    for axis in (0, 1) if len(b_lo) else ():
        other = 1 - axis
        for side, sign in ((b_lo, -1.0), (b_hi, 1.0)):
            c = side[:, axis]
            visible = (sign * (tx[axis] - c) > 0) & (sign * (rx[axis] - c) > 0)
            for k in np.nonzero(visible)[0]:
                image = rx.copy()
                image[axis] = 2.0 * c[k] - rx[axis]
                t = (c[k] - tx[axis]) / (image[axis] - tx[axis])
                p = tx + t * (image - tx)
                if not (b_lo[k, other] <= p[other] <= b_hi[k, other] and 0.0 <= p[2] <= b_hi[k, 2]):
                    continue
                turns.append(p)
                images.append(image)
                extra.append(scene.buildings[k].reflection_loss_db)
                kinds.append(KIND_REFLECTION)
                reflectors.append(int(k))

    if prop.ground_reflection:
        image = rx * np.array([1.0, 1.0, -1.0])
        t = tx[2] / (tx[2] - image[2])
        turns.append(tx + t * (image - tx))
        images.append(image)
        extra.append(scene.terrain_loss_db)
        kinds.append(KIND_GROUND)
        reflectors.append(-1)

    images = np.array(images)
    lengths = np.linalg.norm(images - tx[None, :], axis=1)
    azimuth, elevation = _departure_angles(bs, images)

    seg_p0, seg_p1, owner = [], [], []
    for i, p in enumerate(turns):
        if p is None:
            seg_p0.append(tx)
            seg_p1.append(rx)
            owner.append(i)
        else:
            seg_p0.extend([tx, p])
            seg_p1.extend([p, rx])
            owner.extend([i, i])
    seg_p0, seg_p1, owner = np.array(seg_p0), np.array(seg_p1), np.array(owner, dtype=int)

    hits = segment_box_hits(seg_p0, seg_p1, b_lo, b_hi)
    refl = np.asarray(reflectors)[owner]
    # Legs touch their own reflector only at the bounce point.
    for g in np.nonzero(refl >= 0)[0]:
        hits[g, refl[g]] = False
    penetration = np.bincount(owner, weights=hits.astype(float) @ b_loss, minlength=len(turns))

    base = free_space_loss_db(lengths, prop.carrier_hz) + np.asarray(extra) + penetration
    keep = np.ones(len(turns), dtype=bool)
    if prop.front_hemisphere_only:
        keep = np.abs(azimuth) <= 90.0

    return _subset(PathCandidates(
        base_loss_db=base,
        azimuth_deg=azimuth,
        elevation_deg=elevation,
        length_m=lengths,
        kind=np.asarray(kinds, dtype=int),
        reflector=np.asarray(reflectors, dtype=int),
        seg_p0=seg_p0,
        seg_p1=seg_p1,
        seg_owner=owner,
    ), keep)


def _subset(c: PathCandidates, keep: np.ndarray) -> PathCandidates:
    if keep.all():
        return c
    remap = -np.ones(len(keep), dtype=int)
    remap[keep] = np.arange(int(keep.sum()))
    seg_keep = keep[c.seg_owner]
    return PathCandidates(
        base_loss_db=c.base_loss_db[keep],
        azimuth_deg=c.azimuth_deg[keep],
        elevation_deg=c.elevation_deg[keep],
        length_m=c.length_m[keep],
        kind=c.kind[keep],
        reflector=c.reflector[keep],
        seg_p0=c.seg_p0[seg_keep],
        seg_p1=c.seg_p1[seg_keep],
        seg_owner=remap[c.seg_owner[seg_keep]],
    )


def obstacle_penalty(seg_p0: np.ndarray, seg_p1: np.ndarray, seg_owner: np.ndarray,
                     n_candidates: int, obstacles: ObstacleSet) -> np.ndarray:
    """Summed obstacle penetration loss (dB) per candidate path."""
    if len(obstacles) == 0 or n_candidates == 0:
        return np.zeros(n_candidates)
    lo, hi, loss = box_arrays(obstacles.obstacles)
    per_segment = segment_box_hits(seg_p0, seg_p1, lo, hi).astype(float) @ loss
    return np.bincount(seg_owner, weights=per_segment, minlength=n_candidates)


def finalize_paths(c: PathCandidates, extra_loss_db: np.ndarray, prop: PropagationConfig):
    """Apply drop threshold and path budget; return paths by ascending loss."""
    if len(c) == 0:
        return []
    total = c.base_loss_db + extra_loss_db
    order = np.argsort(total, kind="stable")
    order = order[total[order] <= total[order[0]] + prop.drop_threshold_db][:prop.max_paths]
    return [
        TracedPath(
            loss_db=float(total[i]),
            azimuth_deg=float(c.azimuth_deg[i]),
            elevation_deg=float(c.elevation_deg[i]),
            length_m=float(c.length_m[i]),
            kind=KIND_NAMES[int(c.kind[i])],
            reflector=int(c.reflector[i]),
        )
        for i in order
    ]


def trace_paths(scene: Scene, obstacles: ObstacleSet, bs: BsSite, ue) -> list:
    """
    Trace the dominant propagation paths between a BS and a UE position.

    Returns at most `max_paths` TracedPath records sorted by ascending loss.
    A blocked direct path is kept with its accumulated penetration loss unless
    it falls more than `drop_threshold_db` below the strongest path.
    """
    c = link_candidates(scene, bs, ue)
    extra = obstacle_penalty(c.seg_p0, c.seg_p1, c.seg_owner, len(c), obstacles)
    return finalize_paths(c, extra, scene.propagation)


def trace_links(scene: Scene, obstacles: ObstacleSet, candidates: Sequence[PathCandidates]) -> list:
    """Batched `trace_paths` over precomputed candidates: one obstacle pass for all links."""
    sizes = np.array([len(c) for c in candidates], dtype=int)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    seg_p0 = np.concatenate([c.seg_p0 for c in candidates]) if candidates else np.zeros((0, 3))
    seg_p1 = np.concatenate([c.seg_p1 for c in candidates]) if candidates else np.zeros((0, 3))
    owner = np.concatenate([c.seg_owner + offsets[i] for i, c in enumerate(candidates)]) if candidates else np.zeros(0, int)
    extra = obstacle_penalty(seg_p0, seg_p1, owner, int(offsets[-1]), obstacles)
    return [
        finalize_paths(c, extra[offsets[i]:offsets[i + 1]], scene.propagation)
        for i, c in enumerate(candidates)
    ]
