"""Command-line entry points."""

from __future__ import annotations

import json
from pathlib import Path

import click

from latentdrive.toyworld.dataset import DataGenConfig, generate_dataset
from latentdrive.toyworld.world import WorldConfig
from latentdrive.trainer.config import PRESETS, TrainConfig, load_train_config, write_config_file


def _load_config(config_path: str | None, preset: str | None, stage: str) -> TrainConfig:
    if config_path:
        cfg = load_train_config(config_path)
    elif preset:
        cfg = PRESETS[preset]
    else:
        cfg = PRESETS[f"desk_{stage}"]
    if cfg.stage != stage:
        raise click.UsageError(f"config stage {cfg.stage!r} != expected {stage!r}")
    return cfg


@click.group()
def main():
    """Latent-space neural driving simulator."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="flat key=value file with world.* keys")
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--num-sequences", type=int, default=None)
@click.option("--timesteps", type=int, default=None)
@click.option("--size", type=int, default=None)
def datagen(config_path, seed, out_path, num_sequences, timesteps, size):
    """Generate a toy-world LWS1 dataset."""
    kwargs = {}
    if config_path:
        from latentdrive.trainer.config import read_config_file

        flat = read_config_file(config_path)
        world_keys = {
            k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith("world.")
        }
        if world_keys:
            kwargs["world"] = WorldConfig(**world_keys)
        for key in ("num_sequences", "timesteps", "size"):
            if f"data.{key}" in flat:
                kwargs[key] = flat[f"data.{key}"]
    if num_sequences is not None:
        kwargs["num_sequences"] = num_sequences
    if timesteps is not None:
        kwargs["timesteps"] = timesteps
    if size is not None:
        kwargs["size"] = size
    config = DataGenConfig(**kwargs)
    path = generate_dataset(config, seed, out_path)
    click.echo(f"wrote {path} ({path.stat().st_size} bytes)")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--no-resume", is_flag=True, default=False)
def pretrain(config_path, preset, data_path, out_dir, no_resume):
    """Train the image codec (stage one)."""
    from latentdrive.trainer.pretrain import pretrain_run

    cfg = _load_config(config_path, preset, "pretrain")
    result = pretrain_run(cfg, data_path, out_dir, resume=not no_resume)
    click.echo(f"checkpoint: {result.checkpoint_path}")


@main.command("train-dynamics")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--codec", "codec_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--no-resume", is_flag=True, default=False)
def train_dynamics(config_path, preset, data_path, codec_path, out_dir, no_resume):
    """Train the dynamics engine (stage two)."""
    from latentdrive.trainer.dynamics import dynamics_run

    cfg = _load_config(config_path, preset, "dynamics")
    result = dynamics_run(cfg, data_path, codec_path, out_dir, resume=not no_resume)
    click.echo(f"checkpoint: {result.checkpoint_path}")


@main.command("diffsim")
@click.option("--engine", "engine_path", type=click.Path(exists=True), required=True)
@click.option("--codec", "codec_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--seq", "seq_index", type=int, required=True)
@click.option("--interpolate", "interpolate_t", type=int, default=None,
              help="recover only endpoints, optimizing the gap of this length")
@click.option("--iterations", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
def diffsim_cmd(engine_path, codec_path, data_path, seq_index, interpolate_t, iterations, out_path):
    """Recover actions and stochastic inputs for a recorded sequence."""
    from latentdrive.diffsim import recover_sequence_cli

    trace = recover_sequence_cli(
        engine_path, codec_path, data_path, seq_index,
        interpolate_t=interpolate_t, iterations=iterations,
    )
    Path(out_path).write_text(json.dumps(trace, indent=2, sort_keys=True))
    click.echo(f"wrote {out_path} (final objective {trace['objective_history'][-1]:.6g})")


@main.command("eval")
@click.option("--codec", "codec_path", type=click.Path(exists=True), required=True)
@click.option("--engine", "engine_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--report", "report_path", type=click.Path(), required=True)
@click.option("--sequences", type=int, default=64, help="evaluation clip count")
def eval_cmd(codec_path, engine_path, data_path, report_path, sequences):
    """Action-consistency and Frechet-distance evaluation."""
    from latentdrive.evalkit import evaluate_checkpoints

    report = evaluate_checkpoints(codec_path, engine_path, data_path, n_sequences=sequences)
    Path(report_path).write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    click.echo(json.dumps(report.as_dict(), indent=2, sort_keys=True))


@main.command()
@click.option("--codec", "codec_path", type=click.Path(exists=True), required=True)
@click.option("--engine", "engine_path", type=click.Path(exists=True), required=True)
@click.option("--port", type=int, default=8321)
@click.option("--host", default="127.0.0.1")
@click.option("--eps", "eps_policy", type=click.Choice(["frozen", "stochastic"]),
              default="stochastic")
@click.option("--ui", "ui_dir", type=click.Path(), default=None,
              help="static UI bundle to serve at /ui/ (default: ./frontend/dist if present)")
def serve(codec_path, engine_path, port, host, eps_policy, ui_dir):
    """Run the live simulation server."""
    import uvicorn

    from latentdrive.simserver.app import create_app

    if ui_dir is None and Path("frontend/dist").is_dir():
        ui_dir = "frontend/dist"
    app = create_app(codec_path, engine_path, default_eps_policy=eps_policy, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command("make-config")
@click.option("--preset", type=click.Choice(sorted(PRESETS)), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def make_config(preset, out_path):
    """Write a preset to a flat config file."""
    write_config_file(out_path, PRESETS[preset].to_flat())
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
