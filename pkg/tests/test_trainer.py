import json
import math

import numpy as np
import pytest
import torch

from latentdrive.core import TrainingFault
from latentdrive.toyworld import DataGenConfig, generate_dataset
from latentdrive.trainer import (
    PRESETS,
    TrainConfig,
    dynamics_run,
    hinge_losses,
    load_checkpoint,
    load_dynamics,
    load_pretrained,
    pretrain_run,
    r1_penalty,
    read_config_file,
    save_checkpoint,
    warmup_count,
    write_config_file,
)
from latentdrive.trainer.checkpoint import (
    load_module,
    load_optimizer,
    module_arrays,
    optimizer_arrays,
)

from oracles import hinge_losses_scalar

TINY_PRETRAIN = TrainConfig(
    stage="pretrain",
    theme_dim=8,
    content_dim=4,
    lr=1e-3,
    steps=4,
    batch=2,
    log_every=1,
    checkpoint_every=2,
    seed=5,
)

TINY_DYNAMICS = TrainConfig(
    stage="dynamics",
    theme_dim=8,
    content_dim=4,
    conv_channels=6,
    linear_dim=8,
    aindep_dim=8,
    fused_channels=6,
    feat_dim=8,
    lr=1e-3,
    steps=3,
    batch=2,
    timesteps=12,
    warmup_start=4,
    warmup_end_epoch=5,
    log_every=1,
    checkpoint_every=2,
    seed=5,
)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "tiny.lws1"
    generate_dataset(DataGenConfig(num_sequences=6, timesteps=12, size=64), 99, path)
    return path


class TestWarmup:
    def test_paper_endpoints(self):
        assert warmup_count(0, start=18, end_epoch=100) == 18
        assert warmup_count(100, start=18, end_epoch=100) == 1
        assert warmup_count(250, start=18, end_epoch=100) == 1

    def test_half_up_rounding(self):
        assert warmup_count(50, start=18, end_epoch=100) == 10  # 9.5 rounds up

    def test_non_increasing_and_reaches_one(self):
        values = [warmup_count(e, start=18, end_epoch=100) for e in range(160)]
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert values[-1] == 1
        assert min(values) == 1

    def test_negative_epoch_rejected(self):
        with pytest.raises(ValueError):
            warmup_count(-1)


class TestHinge:
    def test_satisfied_margins(self):
        d, g = hinge_losses(torch.tensor([2.0]), torch.tensor([-2.0]))
        assert d.item() == 0.0
        assert g.item() == 2.0

    def test_zero_scores(self):
        d, g = hinge_losses(torch.tensor([0.0]), torch.tensor([0.0]))
        assert d.item() == 2.0
        assert g.item() == 0.0

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            real = rng.normal(size=(3, 5))
            fake = rng.normal(size=(4, 2))
            d, g = hinge_losses(torch.tensor(real), torch.tensor(fake))
            d_o, g_o = hinge_losses_scalar(real, fake)
            assert abs(d.item() - d_o) < 1e-7
            assert abs(g.item() - g_o) < 1e-7

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            hinge_losses(torch.zeros(0), torch.zeros(3))


class TestR1:
    def test_constant_discriminator_zero(self):
        x = torch.randn(4, 3, dtype=torch.float64)
        penalty = r1_penalty(lambda v: torch.ones(v.shape[0], dtype=v.dtype), x, weight=10.0)
        assert penalty.item() == 0.0

    def test_linear_closed_form(self):
        w = torch.randn(6, dtype=torch.float64)
        x = torch.randn(5, 6, dtype=torch.float64)
        penalty = r1_penalty(lambda v: v @ w, x, weight=10.0)
        assert penalty.item() == pytest.approx(10.0 * 0.5 * float(w @ w), rel=1e-12)

    def test_matches_finite_difference_gradient_norm(self):
        torch.manual_seed(2)
        net = torch.nn.Sequential(
            torch.nn.Linear(4, 8), torch.nn.Tanh(), torch.nn.Linear(8, 1)
        ).double()
        x = torch.randn(3, 4, dtype=torch.float64)
        penalty = r1_penalty(lambda v: net(v).squeeze(1), x, weight=1.0)
        h = 1e-6
        total = 0.0
        for b in range(3):
            for i in range(4):
                xp, xm = x.clone(), x.clone()
                xp[b, i] += h
                xm[b, i] -= h
                fd = (net(xp[b : b + 1]) - net(xm[b : b + 1])) / (2 * h)
                total += fd.item() ** 2
        expected = 0.5 * total / 3
        assert abs(penalty.item() - expected) / expected < 1e-3

    def test_nonfinite_gradient_faults(self):
        x = torch.tensor([[0.0]], dtype=torch.float64)
        with pytest.raises(TrainingFault):
            r1_penalty(lambda v: (1.0 / v).squeeze(1), x, weight=1.0)


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        cfg = PRESETS["desk_dynamics"]
        path = tmp_path / "run.cfg"
        write_config_file(path, cfg.to_flat())
        parsed = TrainConfig.from_flat(read_config_file(path))
        assert parsed == cfg

    def test_comments_and_types(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text(
            "# a comment\n"
            "stage = dynamics\n"
            "train.lr = 0.001  # inline\n"
            "train.steps = 10\n"
            "seed = 3\n"
        )
        flat = read_config_file(path)
        assert flat["train.lr"] == 0.001
        assert flat["train.steps"] == 10
        cfg = TrainConfig.from_flat(flat)
        assert cfg.stage == "dynamics"

    def test_unknown_key_rejected(self):
        with pytest.raises(KeyError):
            TrainConfig.from_flat({"no.such.key": 1})

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(lr=0.0)
        with pytest.raises(ValueError):
            TrainConfig(warmup_start=0)
        with pytest.raises(ValueError):
            TrainConfig(stage="nope")

    def test_paper_preset_echoes_published_hyperparameters(self):
        pre = PRESETS["paper_pretrain"]
        assert pre.lr == 0.002 and pre.steps == 310_000 and pre.batch == 16
        dyn = PRESETS["paper_dynamics"]
        assert dyn.lr == 0.0001 and dyn.steps == 400_000 and dyn.batch == 128
        assert dyn.timesteps == 32
        assert (dyn.beta_adep, dyn.beta_aindep, dyn.beta_theme) == (0.1, 0.1, 1.0)
        assert (dyn.warmup_start, dyn.warmup_end_epoch) == (18, 100)
        assert pre.perceptual_weight == 25.0


class TestCheckpointContainer:
    def test_save_load_save_identical_bytes(self, tmp_path):
        rng = np.random.default_rng(3)
        arrays = {
            "module.w": rng.normal(size=(4, 3)).astype(np.float32),
            "module.b": rng.normal(size=(4,)).astype(np.float64),
            "rng.state": rng.integers(0, 255, size=16).astype(np.uint8),
        }
        p1 = tmp_path / "a.ldck"
        save_checkpoint(p1, "test", {"seed": 1}, arrays, {"step": 3})
        loaded = load_checkpoint(p1)
        p2 = tmp_path / "b.ldck"
        save_checkpoint(p2, loaded.kind, loaded.config, loaded.arrays, loaded.meta)
        assert p1.read_bytes() == p2.read_bytes()

    def test_module_round_trip(self, tmp_path):
        torch.manual_seed(4)
        net = torch.nn.Linear(3, 2)
        arrays = module_arrays("net", net)
        path = save_checkpoint(tmp_path / "m.ldck", "test", {}, arrays, {})
        net2 = torch.nn.Linear(3, 2)
        load_module(net2, load_checkpoint(path), "net")
        assert torch.equal(net.weight, net2.weight)
        assert torch.equal(net.bias, net2.bias)

    def test_optimizer_round_trip(self, tmp_path):
        torch.manual_seed(5)
        net = torch.nn.Linear(3, 2)
        opt = torch.optim.Adam(net.parameters(), lr=0.1, betas=(0.0, 0.99))
        net(torch.randn(4, 3)).sum().backward()
        opt.step()
        arrays, groups = optimizer_arrays("opt", opt)
        path = save_checkpoint(tmp_path / "o.ldck", "test", {}, arrays, {"groups": groups})
        net2 = torch.nn.Linear(3, 2)
        opt2 = torch.optim.Adam(net2.parameters(), lr=0.1, betas=(0.0, 0.99))
        saved = load_checkpoint(path)
        load_optimizer(opt2, saved, "opt", saved.meta["groups"])
        s1, s2 = opt.state_dict(), opt2.state_dict()
        for idx in s1["state"]:
            for key in s1["state"][idx]:
                assert torch.equal(s1["state"][idx][key], s2["state"][idx][key])


class TestPretrainRun:
    def test_runs_and_logs(self, tiny_dataset, tmp_path):
        result = pretrain_run(TINY_PRETRAIN, tiny_dataset, tmp_path / "run")
        assert result.checkpoint_path.exists()
        lines = [json.loads(l) for l in result.metrics_path.read_text().splitlines()]
        assert len(lines) >= 4
        for key in ("recon", "kl_theme", "kl_content", "g_adv", "d_adv", "r1"):
            assert key in lines[0]
        codec, perceptual, cfg = load_pretrained(result.checkpoint_path)
        assert cfg.theme_dim == 8

    def test_seed_determinism(self, tiny_dataset, tmp_path):
        r1 = pretrain_run(TINY_PRETRAIN, tiny_dataset, tmp_path / "a", resume=False)
        m1 = [json.loads(l) for l in r1.metrics_path.read_text().splitlines()]
        r2 = pretrain_run(TINY_PRETRAIN, tiny_dataset, tmp_path / "b", resume=False)
        m2 = [json.loads(l) for l in r2.metrics_path.read_text().splitlines()]
        for a, b in zip(m1, m2):
            for key in ("recon", "g_adv", "d_adv"):
                assert a[key] == b[key]

    def test_resume_is_bit_exact_at_64_bit(self, tiny_dataset, tmp_path):
        cfg_full = TrainConfig(**{**TINY_PRETRAIN.__dict__, "steps": 4, "dtype": "float64",
                                  "checkpoint_every": 100})
        full = pretrain_run(cfg_full, tiny_dataset, tmp_path / "full", resume=False)
        m_full = [json.loads(l) for l in full.metrics_path.read_text().splitlines()]

        cfg_half = TrainConfig(**{**cfg_full.__dict__, "steps": 2})
        pretrain_run(cfg_half, tiny_dataset, tmp_path / "resumed", resume=False)
        resumed = pretrain_run(cfg_full, tiny_dataset, tmp_path / "resumed", resume=True)
        m_res = [json.loads(l) for l in resumed.metrics_path.read_text().splitlines()]

        by_step_full = {m["step"]: m for m in m_full}
        by_step_res = {m["step"]: m for m in m_res}
        for step in (2, 3):
            for key in ("recon", "kl_theme", "kl_content", "g_adv", "d_adv", "g_total"):
                assert by_step_full[step][key] == by_step_res[step][key]


class TestDynamicsRun:
    def test_runs_logs_and_decomposes(self, tiny_dataset, tmp_path):
        pre = pretrain_run(TINY_PRETRAIN, tiny_dataset, tmp_path / "pre")
        result = dynamics_run(TINY_DYNAMICS, tiny_dataset, pre.checkpoint_path, tmp_path / "dyn")
        assert result.checkpoint_path.exists()
        lines = [json.loads(l) for l in result.metrics_path.read_text().splitlines()]
        assert len(lines) >= 3
        for record in lines:
            total = record["l_latent"] + record["l_kl"] + record["g_adv"] + record["l_action_gen"]
            assert abs(total - record["g_total"]) < 1e-9
        engine, cfg = load_dynamics(result.checkpoint_path)
        assert cfg.conv_channels == 6

    def test_warmup_k_respects_schedule(self, tiny_dataset, tmp_path):
        pre = pretrain_run(TINY_PRETRAIN, tiny_dataset, tmp_path / "pre2")
        result = dynamics_run(TINY_DYNAMICS, tiny_dataset, pre.checkpoint_path, tmp_path / "dyn2")
        lines = [json.loads(l) for l in result.metrics_path.read_text().splitlines()]
        assert lines[0]["warmup_k"] == 4  # epoch 0 with warmup_start=4

    def test_missing_codec_checkpoint(self, tiny_dataset, tmp_path):
        with pytest.raises(FileNotFoundError):
            dynamics_run(TINY_DYNAMICS, tiny_dataset, tmp_path / "nope.ldck", tmp_path / "d")

    def test_full_teacher_forcing_config_runs(self, tiny_dataset, tmp_path):
        pre = pretrain_run(TINY_PRETRAIN, tiny_dataset, tmp_path / "pre3")
        cfg = TrainConfig(**{**TINY_DYNAMICS.__dict__, "warmup_start": 12, "steps": 1})
        result = dynamics_run(cfg, tiny_dataset, pre.checkpoint_path, tmp_path / "dyn3")
        lines = [json.loads(l) for l in result.metrics_path.read_text().splitlines()]
        assert lines[0]["warmup_k"] == 12
