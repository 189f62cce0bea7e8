import hashlib
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentdrive.toyworld import (
    ActionBoundsError,
    ActionVector,
    DataGenConfig,
    SequenceDataset,
    ThemeParams,
    WorldConfig,
    expected_file_size,
    generate_dataset,
    generate_world,
    render_frame,
    render_masks,
    splitmix64,
    step_world,
    wrap_angle,
)
from latentdrive.toyworld.dataset import (
    BadMagicError,
    TruncatedFileError,
    VersionMismatchError,
)


def make_state(x=0.0, y=0.0, heading=0.0, **kwargs):
    base = generate_world(0)
    return base.__class__(
        ego_x=x,
        ego_y=y,
        heading=heading,
        obstacles=kwargs.get("obstacles", base.obstacles),
        road_spline=kwargs.get("road_spline", base.road_spline),
        theme=kwargs.get("theme", base.theme),
        config=kwargs.get("config", base.config),
    )


class TestKinematics:
    def test_straight_line(self):
        state = step_world(make_state(), ActionVector(1.0, 0.0), 0.25)
        assert (state.ego_x, state.ego_y, state.heading) == (0.25, 0.0, 0.0)

    def test_pure_rotation(self):
        state = step_world(make_state(), ActionVector(0.0, 1.0), 0.5)
        assert (state.ego_x, state.ego_y, state.heading) == (0.0, 0.0, 0.5)

    def test_curved_step_matches_euler_oracle(self):
        # frozen from an independent scalar 4-substep Euler integration of
        # (x=1, y=2, heading=pi/2) under action (2.0, -0.4) for dt=0.25
        state = step_world(make_state(1.0, 2.0, math.pi / 2), ActionVector(2.0, -0.4), 0.25)
        assert abs(state.ego_x - 1.0187382840572665) < 1e-9
        assert abs(state.ego_y - 2.4994533243478596) < 1e-9
        assert abs(state.heading - 1.470796326794897) < 1e-9

    @given(
        v=st.floats(0.0, 8.0),
        heading=st.floats(-3.1, 3.1),
        dt=st.floats(0.01, 0.5),
    )
    @settings(max_examples=50, deadline=None)
    def test_zero_omega_displacement_is_v_dt(self, v, heading, dt):
        s0 = make_state(0.0, 0.0, heading)
        s1 = step_world(s0, ActionVector(v, 0.0), dt)
        disp = math.hypot(s1.ego_x - s0.ego_x, s1.ego_y - s0.ego_y)
        assert disp == pytest.approx(v * dt, abs=1e-12)

    @given(om=st.floats(-1.2, 1.2), dt=st.floats(0.01, 0.5))
    @settings(max_examples=50, deadline=None)
    def test_zero_speed_keeps_position(self, om, dt):
        s1 = step_world(make_state(3.0, -2.0, 0.7), ActionVector(0.0, om), dt)
        assert (s1.ego_x, s1.ego_y) == (3.0, -2.0)

    def test_heading_wraps(self):
        s = make_state(0.0, 0.0, 3.1)
        s = step_world(s, ActionVector(0.0, 1.2), 0.5)
        assert -math.pi < s.heading <= math.pi
        assert wrap_angle(math.pi + 0.1) == pytest.approx(-math.pi + 0.1)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)

    def test_out_of_bounds_action_rejected(self):
        with pytest.raises(ActionBoundsError):
            step_world(make_state(), ActionVector(100.0, 0.0), 0.1)
        with pytest.raises(ActionBoundsError):
            step_world(make_state(), ActionVector(-0.5, 0.0), 0.1)
        with pytest.raises(ActionBoundsError):
            step_world(make_state(), ActionVector(1.0, 99.0), 0.1)

    def test_bad_dt_rejected(self):
        with pytest.raises(ValueError):
            step_world(make_state(), ActionVector(1.0, 0.0), 0.0)

    def test_map_edge_clamps_with_flag(self):
        cfg = WorldConfig()
        s = make_state(cfg.map_half_extent - 0.05, 0.0, 0.0)
        s = step_world(s, ActionVector(8.0, 0.0), 0.1)
        assert s.ego_x == cfg.map_half_extent
        assert s.clamped

    def test_obstacles_and_theme_unchanged(self):
        s0 = make_state()
        s1 = step_world(s0, ActionVector(2.0, 0.3), 0.1)
        assert s1.obstacles is s0.obstacles
        assert s1.theme is s0.theme
        assert s1.road_spline is s0.road_spline


class TestRenderer:
    def test_deterministic(self):
        state = generate_world(11)
        a = render_frame(state, 64)
        b = render_frame(state, 64)
        assert a.dtype == np.uint8 and a.shape == (64, 64, 3)
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("size", [64, 128, 256])
    def test_supported_sizes(self, size):
        state = generate_world(3)
        assert render_frame(state, size).shape == (size, size, 3)

    def test_unsupported_size(self):
        from latentdrive.toyworld.render import RenderSizeError

        with pytest.raises(RenderSizeError):
            render_frame(generate_world(3), 100)

    def test_sky_hue_changes_only_background(self):
        state = generate_world(5)
        theme2 = ThemeParams(
            sky_hue=(state.theme.sky_hue + 0.4) % 1.0,
            ground_hue=state.theme.ground_hue,
            fog=state.theme.fog,
        )
        state2 = state.__class__(
            ego_x=state.ego_x,
            ego_y=state.ego_y,
            heading=state.heading,
            obstacles=state.obstacles,
            road_spline=state.road_spline,
            theme=theme2,
            config=state.config,
        )
        img1, img2 = render_frame(state, 64), render_frame(state2, 64)
        changed = np.any(img1 != img2, axis=-1)
        background = render_masks(state, 64)["background"]
        assert changed.any()
        assert not np.any(changed & ~background)

    def test_theme_never_moves_masks(self):
        state = generate_world(6)
        masks1 = render_masks(state, 64)
        state2 = state.__class__(
            ego_x=state.ego_x,
            ego_y=state.ego_y,
            heading=state.heading,
            obstacles=state.obstacles,
            road_spline=state.road_spline,
            theme=ThemeParams(0.9, 0.1, 0.5),
            config=state.config,
        )
        masks2 = render_masks(state2, 64)
        for key in ("background", "road", "obstacle", "ego"):
            assert np.array_equal(masks1[key], masks2[key])

    def test_obstacle_layout_keeps_background_palette(self):
        state = generate_world(7)
        no_obs = make_state(
            state.ego_x,
            state.ego_y,
            state.heading,
            obstacles=(),
            road_spline=state.road_spline,
            theme=state.theme,
            config=state.config,
        )
        img_a, img_b = render_frame(state, 64), render_frame(no_obs, 64)
        bg_a = render_masks(state, 64)["background"]
        bg_b = render_masks(no_obs, 64)["background"]
        palette_a = {tuple(c) for c in img_a[bg_a]}
        palette_b = {tuple(c) for c in img_b[bg_b]}
        assert palette_a <= palette_b  # fewer obstacles exposes more rows, never new colors

    def test_zero_obstacles_only_road_and_background_colors(self):
        state = generate_world(8)
        empty = make_state(
            state.ego_x,
            state.ego_y,
            state.heading,
            obstacles=(),
            road_spline=state.road_spline,
            theme=state.theme,
            config=state.config,
        )
        masks = render_masks(empty, 64)
        assert not masks["obstacle"].any()
        img = render_frame(empty, 64)
        region_colors = set()
        for key in ("background", "road", "ego"):
            region_colors |= {tuple(c) for c in img[masks[key]]}
        assert {tuple(c) for c in img.reshape(-1, 3)} == region_colors


class TestDataset:
    def test_generation_is_deterministic(self, tmp_path):
        cfg = DataGenConfig(num_sequences=2, timesteps=4, size=64)
        p1 = generate_dataset(cfg, seed=7, out_path=tmp_path / "a.lws1")
        p2 = generate_dataset(cfg, seed=7, out_path=tmp_path / "b.lws1")
        h1 = hashlib.sha256(p1.read_bytes()).hexdigest()
        h2 = hashlib.sha256(p2.read_bytes()).hexdigest()
        assert h1 == h2
        p3 = generate_dataset(cfg, seed=8, out_path=tmp_path / "c.lws1")
        assert hashlib.sha256(p3.read_bytes()).hexdigest() != h1

    def test_file_size_matches_format_spec(self, tmp_path):
        cfg = DataGenConfig(num_sequences=100, timesteps=16, size=64)
        path = generate_dataset(cfg, seed=1, out_path=tmp_path / "d.lws1")
        expected = 32 + 100 * 16 * (64 * 64 * 3 + 2 * 4) + 100 * 8 + 4
        assert path.stat().st_size == expected
        assert expected == expected_file_size(100, 16, 64, 64)

    def test_actions_within_bounds(self, tmp_path):
        cfg = DataGenConfig(num_sequences=3, timesteps=8, size=64)
        ds = SequenceDataset(generate_dataset(cfg, seed=2, out_path=tmp_path / "e.lws1"))
        acts = ds.all_actions()
        assert np.all(acts[..., 0] >= 0.0) and np.all(acts[..., 0] <= cfg.world.v_max)
        assert np.all(np.abs(acts[..., 1]) <= cfg.world.omega_max)

    def test_round_trip_bytes(self, tmp_path):
        cfg = DataGenConfig(num_sequences=2, timesteps=3, size=64)
        path = generate_dataset(cfg, seed=3, out_path=tmp_path / "f.lws1")
        ds = SequenceDataset(path)
        from latentdrive.toyworld.dataset import _generate_sequence

        frames0, actions0 = _generate_sequence(cfg, splitmix64(3, 0))
        assert np.array_equal(ds.frames(0), frames0)
        assert np.array_equal(ds.actions(0), actions0.astype(np.float32))

    def test_metadata(self, tmp_path):
        cfg = DataGenConfig(num_sequences=1, timesteps=2, size=64)
        ds = SequenceDataset(generate_dataset(cfg, seed=4, out_path=tmp_path / "g.lws1"))
        assert ds.metadata == (1, 2, 64, 64)

    def test_truncated_file_names_missing_bytes(self, tmp_path):
        cfg = DataGenConfig(num_sequences=1, timesteps=2, size=64)
        path = generate_dataset(cfg, seed=5, out_path=tmp_path / "h.lws1")
        data = path.read_bytes()
        cut = path.with_name("cut.lws1")
        cut.write_bytes(data[:-100])
        with pytest.raises(TruncatedFileError, match="100 missing"):
            SequenceDataset(cut)

    def test_bad_magic_and_version(self, tmp_path):
        cfg = DataGenConfig(num_sequences=1, timesteps=2, size=64)
        path = generate_dataset(cfg, seed=6, out_path=tmp_path / "i.lws1")
        data = bytearray(path.read_bytes())
        bad = path.with_name("bad.lws1")
        bad.write_bytes(b"XXXX" + bytes(data[4:]))
        with pytest.raises(BadMagicError):
            SequenceDataset(bad)
        data[4] = 9
        badv = path.with_name("badv.lws1")
        badv.write_bytes(bytes(data))
        with pytest.raises(VersionMismatchError):
            SequenceDataset(badv)

    def test_invalid_config_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            generate_dataset(DataGenConfig(num_sequences=0), 1, tmp_path / "x.lws1")

    def test_splitmix_is_deterministic_and_spreads(self):
        a = splitmix64(42, 0)
        assert a == splitmix64(42, 0)
        values = {splitmix64(42, i) for i in range(1000)}
        assert len(values) == 1000
