"""Procedural top-down driving world: state, kinematics, map generation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

OBSTACLE_KINDS = ("tree", "rock", "cone")


class ActionBoundsError(ValueError):
    """Raised when an action violates the configured bounds."""


@dataclass(frozen=True)
class WorldConfig:
    map_half_extent: float = 24.0
    meters_per_pixel: float = 0.25
    frame_rate: float = 10.0
    v_max: float = 8.0
    omega_max: float = 1.2
    obstacle_cell: float = 5.0  # one obstacle per cell, jittered
    obstacle_radius_range: tuple[float, float] = (0.5, 1.1)
    road_half_width: float = 1.6
    dot_spacing: float = 4.0

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate


@dataclass(frozen=True)
class ActionVector:
    """Ego control: forward speed (m/s) and angular velocity (rad/s)."""

    speed: float
    angular_velocity: float

    def validate(self, config: WorldConfig) -> None:
        if not (0.0 <= self.speed <= config.v_max):
            raise ActionBoundsError(
                f"speed {self.speed} outside [0, {config.v_max}]"
            )
        if abs(self.angular_velocity) > config.omega_max:
            raise ActionBoundsError(
                f"angular velocity {self.angular_velocity} outside "
                f"[-{config.omega_max}, {config.omega_max}]"
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.speed, self.angular_velocity], dtype=np.float32)


@dataclass(frozen=True)
class Obstacle:
    x: float
    y: float
    radius: float
    kind: str

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError("obstacle radius must be > 0")
        if self.kind not in OBSTACLE_KINDS:
            raise ValueError(f"unknown obstacle kind {self.kind!r}")


@dataclass(frozen=True)
class ThemeParams:
    sky_hue: float = 0.55
    ground_hue: float = 0.30
    fog: float = 0.0

    def __post_init__(self) -> None:
        for name in ("sky_hue", "ground_hue", "fog"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0 + 1e-9):
                raise ValueError(f"{name}={v} outside [0, 1)")


@dataclass(frozen=True)
class WorldState:
    ego_x: float
    ego_y: float
    heading: float
    obstacles: tuple[Obstacle, ...]
    road_spline: tuple[tuple[float, float], ...]
    theme: ThemeParams
    clamped: bool = False
    config: WorldConfig = field(default_factory=WorldConfig)

    def __post_init__(self) -> None:
        half = self.config.map_half_extent
        if abs(self.ego_x) > half + 1e-9 or abs(self.ego_y) > half + 1e-9:
            raise ValueError("ego pose off-map")
        if len(self.road_spline) < 2:
            raise ValueError("road_spline needs at least 2 points")


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


STEP_SUBSTEPS = 4


def step_world(state: WorldState, action: ActionVector, dt: float) -> WorldState:
    """Advance the ego pose by unicycle kinematics over one frame interval.

    Integrates with four Euler substeps per call (one call per frame keeps the
    action-per-frame model); obstacles, road and theme are untouched. The ego
    is clamped to the map with a flag when it would leave.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    action.validate(state.config)

    x, y, theta = state.ego_x, state.ego_y, state.heading
    h = dt / STEP_SUBSTEPS
    for _ in range(STEP_SUBSTEPS):
        x += action.speed * math.cos(theta) * h
        y += action.speed * math.sin(theta) * h
        theta += action.angular_velocity * h

    half = state.config.map_half_extent
    clamped = False
    if abs(x) > half:
        x = math.copysign(half, x)
        clamped = True
    if abs(y) > half:
        y = math.copysign(half, y)
        clamped = True

    return replace(state, ego_x=x, ego_y=y, heading=wrap_angle(theta), clamped=clamped)


def _make_road(rng: np.random.Generator, config: WorldConfig) -> tuple[tuple[float, float], ...]:
    """Smoothed random-walk road across the map."""
    half = config.map_half_extent
    n_points = 24
    xs = np.linspace(-half, half, n_points)
    steps = rng.normal(0.0, half / 6.0, size=n_points)
    ys = np.cumsum(steps)
    # light smoothing, then recenter and keep on-map
    kernel = np.array([0.25, 0.5, 0.25])
    ys = np.convolve(ys, kernel, mode="same")
    ys -= ys.mean()
    ys = np.clip(ys, -0.8 * half, 0.8 * half)
    return tuple((float(x), float(y)) for x, y in zip(xs, ys))


def _make_obstacles(rng: np.random.Generator, config: WorldConfig) -> tuple[Obstacle, ...]:
    """One jittered obstacle per grid cell so every view contains several."""
    half = config.map_half_extent
    cell = config.obstacle_cell
    lo, hi = config.obstacle_radius_range
    centers = np.arange(-half + cell / 2.0, half, cell)
    obstacles = []
    for cx in centers:
        for cy in centers:
            jx = cx + rng.uniform(-0.3 * cell, 0.3 * cell)
            jy = cy + rng.uniform(-0.3 * cell, 0.3 * cell)
            radius = rng.uniform(lo, hi)
            kind = OBSTACLE_KINDS[int(rng.integers(len(OBSTACLE_KINDS)))]
            obstacles.append(Obstacle(float(jx), float(jy), float(radius), kind))
    return tuple(obstacles)


def sample_theme(rng: np.random.Generator) -> ThemeParams:
    return ThemeParams(
        sky_hue=float(rng.uniform(0.0, 1.0) % 1.0),
        ground_hue=float(rng.uniform(0.0, 1.0) % 1.0),
        fog=float(rng.uniform(0.0, 0.6)),
    )


def generate_world(seed: int, config: WorldConfig | None = None) -> WorldState:
    """Deterministic random world: road, obstacle field, theme, centered ego."""
    config = config or WorldConfig()
    rng = np.random.default_rng(seed)
    road = _make_road(rng, config)
    obstacles = _make_obstacles(rng, config)
    theme = sample_theme(rng)
    heading = float(rng.uniform(-math.pi, math.pi))
    return WorldState(
        ego_x=0.0,
        ego_y=0.0,
        heading=wrap_angle(heading),
        obstacles=obstacles,
        road_spline=road,
        theme=theme,
        config=config,
    )
