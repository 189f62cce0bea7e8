import base64
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from latentdrive.simserver import ModelBundle, SessionError, SimSession, create_app
from latentdrive.simserver.session import decode_png, png_bytes
from latentdrive.toyworld import DataGenConfig, generate_dataset
from latentdrive.trainer import TrainConfig, dynamics_run, pretrain_run

TINY_PRETRAIN = TrainConfig(
    stage="pretrain", theme_dim=8, content_dim=4, lr=1e-3, steps=2, batch=2,
    log_every=1, checkpoint_every=10, seed=7,
)
TINY_DYNAMICS = TrainConfig(
    stage="dynamics", theme_dim=8, content_dim=4, conv_channels=6, linear_dim=8,
    aindep_dim=8, fused_channels=6, feat_dim=8, lr=1e-3, steps=2, batch=2,
    timesteps=12, warmup_start=4, warmup_end_epoch=5, log_every=1,
    checkpoint_every=10, seed=7,
)


@pytest.fixture(scope="module")
def checkpoints(tmp_path_factory):
    root = tmp_path_factory.mktemp("server")
    data = root / "data.lws1"
    generate_dataset(DataGenConfig(num_sequences=4, timesteps=12, size=64), 13, data)
    pre = pretrain_run(TINY_PRETRAIN, data, root / "pre")
    dyn = dynamics_run(TINY_DYNAMICS, data, pre.checkpoint_path, root / "dyn")
    return pre.checkpoint_path, dyn.checkpoint_path


@pytest.fixture(scope="module")
def bundle(checkpoints):
    codec_path, engine_path = checkpoints
    return ModelBundle.load(codec_path, engine_path)


@pytest.fixture(scope="module")
def client(checkpoints):
    codec_path, engine_path = checkpoints
    app = create_app(codec_path, engine_path)
    with TestClient(app) as cl:
        yield cl


def make_session(client, seed=1, eps_policy="frozen", **kwargs):
    payload = {"seed": seed, "init": "sample", "eps_policy": eps_policy}
    payload.update(kwargs)
    response = client.post("/v1/sessions", json=payload)
    assert response.status_code == 200, response.text
    return response.json()["session_id"]


class TestSessionCore:
    def test_same_seed_same_first_frame(self, bundle):
        s1 = SimSession(bundle, seed=1, eps_policy="frozen")
        s2 = SimSession(bundle, seed=1, eps_policy="frozen")
        assert np.array_equal(s1.current_frame(), s2.current_frame())
        s3 = SimSession(bundle, seed=2, eps_policy="frozen")
        assert not np.array_equal(s1.current_frame(), s3.current_frame())

    def test_from_frame_init_is_encode_mean_decode(self, bundle):
        import torch

        from latentdrive.trainer.data import frames_to_tensor, tensor_to_frames

        rng = np.random.default_rng(0)
        frame = rng.integers(0, 255, size=(64, 64, 3)).astype(np.uint8)
        session = SimSession(bundle, seed=0, init="from_frame", init_frame=frame)
        with torch.no_grad():
            z = bundle.codec.encode_mean(frames_to_tensor(frame[None]))
            expected = tensor_to_frames(bundle.codec.decode(z))[0]
        assert np.array_equal(session.current_frame(), expected)

    def test_out_of_bounds_action_rejected_and_state_unchanged(self, bundle):
        session = SimSession(bundle, seed=3, eps_policy="frozen")
        before = session.snapshot()
        with pytest.raises(SessionError):
            session.step(1e9, 0.0)
        with pytest.raises(SessionError):
            session.step(1.0, 99.0)
        assert session.snapshot() == before

    def test_frozen_eps_stream_deterministic(self, bundle):
        frames1, frames2 = [], []
        for frames in (frames1, frames2):
            s = SimSession(bundle, seed=5, eps_policy="frozen")
            for _ in range(5):
                frames.append(png_bytes(s.step(1.0, 0.1)))
        assert frames1 == frames2

    def test_theme_edit_keeps_content(self, bundle):
        s = SimSession(bundle, seed=6)
        content_before = s.z.content.clone()
        s.edit("theme")
        assert np.array_equal(s.z.content.numpy(), content_before.numpy())

    def test_content_edit_keeps_other_cells(self, bundle):
        s = SimSession(bundle, seed=7)
        before = s.z.content.clone()
        s.edit("content", (1, 2))
        for i in range(4):
            for j in range(4):
                if (i, j) != (1, 2):
                    assert np.array_equal(
                        s.z.content[:, :, i, j].numpy(), before[:, :, i, j].numpy()
                    )
        assert not np.array_equal(s.z.content[:, :, 1, 2].numpy(), before[:, :, 1, 2].numpy())

    def test_aindep_edit_changes_future(self, bundle):
        s1 = SimSession(bundle, seed=8, eps_policy="frozen")
        s2 = SimSession(bundle, seed=8, eps_policy="frozen")
        s1.step(1.0, 0.0)
        s2.step(1.0, 0.0)
        s2.edit("aindep")
        f1 = png_bytes(s1.step(1.0, 0.0))
        f2 = png_bytes(s2.step(1.0, 0.0))
        assert f1 != f2

    def test_snapshot_restore_reproduces_future(self, bundle):
        s = SimSession(bundle, seed=9, eps_policy="stochastic")
        s.step(1.0, 0.0)
        blob = s.snapshot()
        future1 = [png_bytes(s.step(2.0, -0.2)) for _ in range(10)]
        s.restore(blob)
        future2 = [png_bytes(s.step(2.0, -0.2)) for _ in range(10)]
        assert future1 == future2

    def test_restore_rejects_garbage_and_wrong_model(self, bundle):
        s = SimSession(bundle, seed=10)
        with pytest.raises(SessionError):
            s.restore(b"not a snapshot")
        blob = bytearray(s.snapshot())
        # corrupt the fingerprint inside the header json
        idx = bytes(blob).find(b'"fingerprint":"')
        blob[idx + 16 : idx + 20] = b"dead"
        with pytest.raises(SessionError):
            s.restore(bytes(blob))


class TestHTTP:
    def test_healthz(self, client):
        response = client.get("/v1/healthz")
        assert response.status_code == 200
        assert response.json() == {"status": "ok"}

    def test_create_session_and_bad_checkpoint(self, client):
        session_id = make_session(client)
        assert isinstance(session_id, str) and session_id
        response = client.post("/v1/sessions", json={"checkpoint": "missing"})
        assert response.status_code == 400
        assert response.json()["code"] == "bad_checkpoint"

    def test_bad_init_image(self, client):
        response = client.post(
            "/v1/sessions",
            json={"init": "from_frame", "init_frame_png": base64.b64encode(b"junk").decode()},
        )
        assert response.status_code == 400


class TestWebSocket:
    def test_step_and_frame_protocol(self, client):
        session_id = make_session(client, seed=11)
        with client.websocket_connect(f"/v1/sessions/{session_id}/stream") as ws:
            first = ws.receive_json()
            assert first["type"] == "frame" and first["t"] == 0
            ws.send_json({"type": "step", "action": [1.0, 0.2]})
            reply = ws.receive_json()
            assert reply["type"] == "frame" and reply["t"] == 1
            frame = decode_png(base64.b64decode(reply["png"]))
            assert frame.shape == (64, 64, 3)

    def test_identical_streams_for_identical_sessions(self, client):
        frames = []
        for _ in range(2):
            session_id = make_session(client, seed=12, eps_policy="frozen")
            stream = []
            with client.websocket_connect(f"/v1/sessions/{session_id}/stream") as ws:
                ws.receive_json()
                for k in range(6):
                    ws.send_json({"type": "step", "action": [1.5, -0.1]})
                    stream.append(ws.receive_json()["png"])
            frames.append(stream)
        assert frames[0] == frames[1]

    def test_protocol_totality(self, client):
        session_id = make_session(client, seed=13)
        with client.websocket_connect(f"/v1/sessions/{session_id}/stream") as ws:
            ws.receive_json()
            cases = [
                {"type": "unknown"},
                {"type": "step"},
                {"type": "step", "action": [1.0]},
                {"type": "edit", "kind": "nope"},
                {"type": "edit", "kind": "content"},
                {"type": "edit", "kind": "content", "cell": [9, 9]},
                {"type": "restore", "blob": "%%%"},
                {"no_type": True},
            ]
            for message in cases:
                ws.send_json(message)
                reply = ws.receive_json()
                assert reply["type"] == "error", (message, reply)
            # session still alive afterwards
            ws.send_json({"type": "step", "action": [1.0, 0.0]})
            assert ws.receive_json()["type"] == "frame"

    def test_out_of_bounds_action_error_reply(self, client):
        session_id = make_session(client, seed=14)
        with client.websocket_connect(f"/v1/sessions/{session_id}/stream") as ws:
            ws.receive_json()
            ws.send_json({"type": "step", "action": [1e9, 0.0]})
            reply = ws.receive_json()
            assert reply["type"] == "error" and reply["code"] == "action_bounds"
            ws.send_json({"type": "step", "action": [1.0, 0.0]})
            assert ws.receive_json()["t"] == 1

    def test_edit_snapshot_restore_round_trip(self, client):
        session_id = make_session(client, seed=15, eps_policy="frozen")
        with client.websocket_connect(f"/v1/sessions/{session_id}/stream") as ws:
            ws.receive_json()
            ws.send_json({"type": "edit", "kind": "theme"})
            themed = ws.receive_json()
            assert themed["type"] == "frame"
            ws.send_json({"type": "snapshot"})
            blob = ws.receive_json()["blob"]
            ws.send_json({"type": "step", "action": [1.0, 0.0]})
            ws.receive_json()
            ws.send_json({"type": "restore", "blob": blob})
            restored = ws.receive_json()
            assert restored["png"] == themed["png"]

    def test_reset_returns_to_initial_frame(self, client):
        session_id = make_session(client, seed=16, eps_policy="frozen")
        with client.websocket_connect(f"/v1/sessions/{session_id}/stream") as ws:
            initial = ws.receive_json()["png"]
            ws.send_json({"type": "step", "action": [2.0, 0.3]})
            ws.receive_json()
            ws.send_json({"type": "reset"})
            reply = ws.receive_json()
            assert reply["png"] == initial and reply["t"] == 0

    def test_unknown_session(self, client):
        with client.websocket_connect("/v1/sessions/nope/stream") as ws:
            reply = ws.receive_json()
            assert reply["type"] == "error" and reply["code"] == "no_session"


class TestIsolationAndLatency:
    def test_sixteen_sessions_no_cross_talk(self, bundle):
        sessions = [SimSession(bundle, seed=100 + i, eps_policy="frozen") for i in range(16)]
        # drive a control copy of session 0 alone
        control = SimSession(bundle, seed=100, eps_policy="frozen")
        control_frames = [png_bytes(control.step(1.0, 0.05)) for _ in range(4)]
        # interleave all sixteen with different actions
        frames = {i: [] for i in range(16)}
        for step in range(4):
            for i, session in enumerate(sessions):
                speed = 0.5 + 0.1 * i
                frames[i].append(png_bytes(session.step(speed if i else 1.0, 0.05)))
        assert frames[0] == control_frames
        # distinct seeds and actions give distinct streams
        assert len({frames[i][-1] for i in range(16)}) > 1

    def test_step_latency_smoke(self, bundle):
        session = SimSession(bundle, seed=42, eps_policy="frozen")
        times = []
        for _ in range(50):
            t0 = time.perf_counter()
            session.step(1.0, 0.0)
            times.append(time.perf_counter() - t0)
        times.sort()
        p95 = times[int(0.95 * len(times)) - 1]
        median = times[len(times) // 2]
        assert p95 < 0.1, f"p95 step latency {p95 * 1000:.1f} ms"
        assert max(times) < 4 * median + 0.05
