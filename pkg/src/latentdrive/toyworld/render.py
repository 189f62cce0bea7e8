"""Deterministic ego-centric rasterizer for the toy world.

Theme parameters drive global colorization only; road/obstacle geometry alone
decides which pixels belong to which mask. That split is what makes
theme/content disentanglement measurable downstream, so the renderer also
exposes its own masks.
"""

from __future__ import annotations

import colorsys
import math

import numpy as np

from latentdrive.toyworld.world import WorldState

SUPPORTED_SIZES = (64, 128, 256)

ROAD_COLOR = np.array([0.36, 0.36, 0.40])
EGO_COLOR = np.array([0.12, 0.12, 0.14])
OBSTACLE_COLORS = {
    "tree": np.array([0.13, 0.42, 0.17]),
    "rock": np.array([0.45, 0.40, 0.36]),
    "cone": np.array([0.85, 0.45, 0.10]),
}
DOT_RADIUS = 0.55  # meters
ANCHOR_ROW_FRAC = 0.68  # ego sits below center, looking "up" the image

_EGO_STENCIL = np.array(
    [
        [0, 0, 1, 0, 0],
        [0, 1, 1, 1, 0],
        [0, 1, 1, 1, 0],
        [1, 1, 1, 1, 1],
        [1, 1, 0, 1, 1],
    ],
    dtype=bool,
)


class RenderSizeError(ValueError):
    """Raised for render sizes outside the supported set."""


def _hsv(h: float, s: float, v: float) -> np.ndarray:
    return np.array(colorsys.hsv_to_rgb(h % 1.0, s, v))


def _pixel_world_coords(state: WorldState, size: int) -> tuple[np.ndarray, np.ndarray]:
    """World (x, y) for every pixel center, ego-centric with forward = up."""
    cfg = state.config
    mpp = cfg.meters_per_pixel * 64.0 / size
    rows = np.arange(size, dtype=np.float64)
    cols = np.arange(size, dtype=np.float64)
    anchor_row = ANCHOR_ROW_FRAC * size
    anchor_col = size / 2.0
    forward = (anchor_row - rows)[:, None] * mpp  # (H, 1)
    lateral = (anchor_col - cols)[None, :] * mpp  # (1, W)
    fx, fy = math.cos(state.heading), math.sin(state.heading)
    lx, ly = -math.sin(state.heading), math.cos(state.heading)
    wx = state.ego_x + forward * fx + lateral * lx
    wy = state.ego_y + forward * fy + lateral * ly
    return wx, wy


def _segment_distance(wx: np.ndarray, wy: np.ndarray, spline) -> np.ndarray:
    """Min distance from each pixel's world point to the road polyline."""
    best = np.full(wx.shape, np.inf)
    pts = np.asarray(spline, dtype=np.float64)
    for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
        dx, dy = bx - ax, by - ay
        seg_len2 = dx * dx + dy * dy
        if seg_len2 == 0.0:
            continue
        t = ((wx - ax) * dx + (wy - ay) * dy) / seg_len2
        t = np.clip(t, 0.0, 1.0)
        px, py = ax + t * dx, ay + t * dy
        d2 = (wx - px) ** 2 + (wy - py) ** 2
        np.minimum(best, d2, out=best)
    return np.sqrt(best)


def _ego_mask(size: int) -> np.ndarray:
    scale = size // 64
    stencil = np.kron(_EGO_STENCIL, np.ones((scale, scale), dtype=bool))
    mask = np.zeros((size, size), dtype=bool)
    anchor_row = int(ANCHOR_ROW_FRAC * size)
    anchor_col = size // 2
    h, w = stencil.shape
    r0 = anchor_row - h // 2
    c0 = anchor_col - w // 2
    mask[r0 : r0 + h, c0 : c0 + w] = stencil
    return mask


def render_masks(state: WorldState, size: int) -> dict[str, np.ndarray]:
    """Geometry masks (theme-independent). background = everything else."""
    if size not in SUPPORTED_SIZES:
        raise RenderSizeError(f"size {size} not in {SUPPORTED_SIZES}")
    cfg = state.config
    wx, wy = _pixel_world_coords(state, size)

    road = _segment_distance(wx, wy, state.road_spline) <= cfg.road_half_width

    obstacle = np.zeros((size, size), dtype=bool)
    kind_masks = {kind: np.zeros((size, size), dtype=bool) for kind in OBSTACLE_COLORS}
    view_radius = cfg.meters_per_pixel * 64.0 * 1.3
    for ob in state.obstacles:
        if math.hypot(ob.x - state.ego_x, ob.y - state.ego_y) > view_radius + ob.radius:
            continue
        hit = (wx - ob.x) ** 2 + (wy - ob.y) ** 2 <= ob.radius**2
        kind_masks[ob.kind] |= hit
        obstacle |= hit

    # world-anchored dot lattice: background texture that moves with the view
    spacing = cfg.dot_spacing
    mx = wx - spacing * np.round(wx / spacing)
    my = wy - spacing * np.round(wy / spacing)
    dots = (mx**2 + my**2 <= DOT_RADIUS**2) & ~road & ~obstacle

    ego = _ego_mask(size)
    background = ~(road | obstacle | ego)
    return {
        "background": background,
        "dots": dots & background,
        "road": road & ~obstacle & ~ego,
        "obstacle": obstacle & ~ego,
        "ego": ego,
        **{f"obstacle_{k}": v & ~ego for k, v in kind_masks.items()},
    }


def render_frame(state: WorldState, size: int) -> np.ndarray:
    """Render to (size, size, 3) uint8. Deterministic in (state, size)."""
    masks = render_masks(state, size)
    theme = state.theme

    ground = _hsv(theme.ground_hue, 0.45, 0.55)
    sky = _hsv(theme.sky_hue, 0.50, 0.80)
    dot_color = _hsv(theme.ground_hue, 0.45, 0.36)

    img = np.empty((size, size, 3), dtype=np.float64)
    # vertical gradient toward the sky tint; bottom row stays pure ground
    rows = np.arange(size, dtype=np.float64)
    w = 0.35 * (1.0 - rows / (size - 1.0))
    img[:] = (1.0 - w)[:, None, None] * ground[None, None, :] + w[:, None, None] * sky[
        None, None, :
    ]
    img[masks["dots"]] = dot_color
    img[masks["road"]] = ROAD_COLOR
    for kind, color in OBSTACLE_COLORS.items():
        img[masks[f"obstacle_{kind}"]] = color
    img[masks["ego"]] = EGO_COLOR

    img = (1.0 - 0.5 * theme.fog) * img + 0.5 * theme.fog
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
