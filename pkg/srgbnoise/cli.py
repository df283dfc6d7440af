"""Command-line entry point."""
import json
import sys
from functools import wraps
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence

import click
import numpy as np
import torch
from loguru import logger
from marshmallow import Schema
from marshmallow import ValidationError as SchemaValidationError

from srgbnoise import __version__
from srgbnoise.core.config import (
    Config,
    config_by_name,
    get_config,
    load_config_mapping,
    parse_override,
)
from srgbnoise.core.logging import setup_logging
from srgbnoise.schemas import (
    AnalyzeConfigSchema,
    DenoiserConfigSchema,
    EvaluateConfigSchema,
    MakeDatasetConfigSchema,
    OracleConfigSchema,
    RunMetaSchema,
    SynthesizeConfigSchema,
    TrainConfigSchema,
)
from srgbnoise.schemas.oracle import OracleConfig, params_to_dict
from srgbnoise.schemas.training import dump_train_config
from srgbnoise.services.analysis import estimate_hetero, spatial_correlation, std_vs_intensity
from srgbnoise.services.checkpoint import load_noise_model
from srgbnoise.services.dataset import load_manifest, load_pairs
from srgbnoise.services.denoising import evaluate_denoiser, train_denoiser
from srgbnoise.services.evaluation import kl_report
from srgbnoise.services.oracle import generate_from_config
from srgbnoise.services.reporting import ReportingService
from srgbnoise.services.synthesis import (
    make_denoiser_dataset,
    policy_from_config,
    synthesize_manifest,
)
from srgbnoise.services.training import train as train_noise_model
from srgbnoise.utils.errors import (
    EXIT_OK,
    EXIT_VALIDATION,
    InternalError,
    NoiseModelError,
    NotFoundError,
    ValidationError,
    render_error,
)

PathType = click.Path(path_type=Path)


def _existing_config(ctx: click.Context, param: click.Parameter, value: Optional[Path]):
    if value is not None and not value.is_file():
        raise NotFoundError(f"Config file not found: {value}", path=value)
    return value


def resolve_config(
    schema: Schema,
    config_path: Optional[Path],
    overrides: Sequence[str],
    seed: Optional[int] = None,
) -> Any:
    """
    Merge config file, `--set` overrides and `--seed`, then validate through `schema`.

    A `run.meta` file is accepted as a config file; its recorded config is used.
    """
    data = load_config_mapping(config_path, dict(parse_override(o) for o in overrides))
    if set(data) >= {"command", "config"} and isinstance(data["config"], dict):
        recorded = dict(data["config"])
        recorded.update({k: v for k, v in data.items() if k not in RunMetaSchema().fields})
        data = recorded
    if seed is not None and "seed" in schema.fields:
        data["seed"] = seed
    try:
        return schema.load(data)
    except SchemaValidationError as e:
        raise ValidationError("Invalid configuration", details={"errors": e.messages})


def write_run_meta(
    out: Path, command: str, config: Dict, seed: int, inputs: Dict[str, Optional[Path]]
) -> Path:
    """Record resolved config, seed, inputs and versions; no timestamps."""
    meta = RunMetaSchema().dump(
        {
            "command": command,
            "config": config,
            "seed": seed,
            "inputs": {k: None if v is None else str(v) for k, v in inputs.items()},
            "versions": {
                "srgbnoise": __version__,
                "checkpoint_format": str(Config.CHECKPOINT_VERSION),
                "torch": torch.__version__,
                "numpy": np.__version__,
            },
        }
    )
    path = Path(out) / Config.RUN_META_NAME
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return path


def oracle_config_to_dict(config: OracleConfig) -> Dict:
    params = params_to_dict(config.params)
    return {
        "beta_s_sq": params["beta_s_sq"],
        "beta_c_sq": params["beta_c_sq"],
        "kernel": params["kernel"],
        "gains": {str(k): v for k, v in params["gain_per_iso"].items()},
        "cameras": list(config.cameras),
        "n_images": config.n_images,
        "image_size": config.image_size,
        "seed": config.seed,
    }


def command_options(func: Callable) -> Callable:
    """Options shared by every subcommand."""

    @click.option(
        "--config",
        "config_path",
        type=PathType,
        is_eager=True,
        callback=_existing_config,
        help="YAML config file",
    )
    @click.option(
        "--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a config key"
    )
    @click.option("--out", type=PathType, required=True, help="Output directory")
    @click.option("--seed", type=int, default=None, help="Random seed")
    @click.pass_obj
    @wraps(func)
    def wrapper(obj, *args, **kwargs):
        out = kwargs["out"]
        out.mkdir(parents=True, exist_ok=True)
        setup_logging(obj["config"], log_dir=out)
        logger.info("Command started", command=click.get_current_context().info_name, out=str(out))
        return func(*args, **kwargs)

    return wrapper


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option(
    "--profile",
    type=click.Choice(sorted(config_by_name)),
    default="default",
    help="Runtime profile (log level and format)",
)
@click.version_option(__version__, prog_name="srgbnoise")
@click.pass_context
def main(ctx: click.Context, profile: str) -> None:
    """Model, synthesize and evaluate real sRGB camera noise."""
    ctx.obj = {"config": get_config(profile)}


@main.command("analyze")
@click.option("--manifest", type=PathType, required=True, help="Noisy/clean manifest")
@command_options
def analyze(manifest, config_path, overrides, out, seed):
    """Heteroscedastic fit, std-vs-intensity curve and spatial correlation."""
    config = resolve_config(AnalyzeConfigSchema(), config_path, overrides)
    pairs = load_pairs(load_manifest(manifest))
    if not all(p.noisy is not None for p in pairs):
        raise ValidationError("analyze needs a noisy image for every manifest row")

    hetero = estimate_hetero(pairs, config.bin_width, config.min_count)
    curve = std_vs_intensity(pairs, config.n_bins, config.min_count)
    profile = spatial_correlation([p.noise for p in pairs], config.max_distance)

    ReportingService.write_hetero(out / "hetero.csv", hetero)
    ReportingService.write_std_curve(out / "std_curve.csv", curve)
    ReportingService.write_correlation(out / "correlation.csv", profile)
    write_run_meta(out, "analyze", config.to_dict(), seed or 0, {"manifest": manifest})
    click.echo(f"✓ Analysis of {len(pairs)} images written to {out}")


@main.command("oracle-gen")
@click.option("--manifest", type=PathType, help="Optional clean-image manifest")
@command_options
def oracle_gen(manifest, config_path, overrides, out, seed):
    """Generate a synthetic oracle dataset with known noise parameters."""
    config = resolve_config(OracleConfigSchema(), config_path, overrides, seed)
    clean = load_manifest(manifest) if manifest is not None else None
    dataset = generate_from_config(config, out, clean)
    write_run_meta(
        out, "oracle-gen", oracle_config_to_dict(config), config.seed, {"manifest": manifest}
    )
    click.echo(f"✓ Oracle dataset with {len(dataset)} images written to {out}")


@main.command("train")
@click.option("--manifest", type=PathType, required=True, help="Noisy/clean manifest")
@click.option("--resume", "resume_from", type=PathType, help="Checkpoint to resume from")
@command_options
def train(manifest, resume_from, config_path, overrides, out, seed):
    """Train the flow + GAN noise model."""
    config = resolve_config(TrainConfigSchema(), config_path, overrides, seed)
    best = train_noise_model(config, load_manifest(manifest), out, resume_from)
    write_run_meta(
        out,
        "train",
        dump_train_config(config),
        config.seed,
        {"manifest": manifest, "resume": resume_from},
    )
    click.echo(f"✓ Training finished; best checkpoint: {best}")


@main.command("synthesize")
@click.option("--checkpoint", type=PathType, required=True, help="Noise-model checkpoint")
@click.option("--manifest", type=PathType, required=True, help="Manifest of clean images")
@command_options
def synthesize(checkpoint, manifest, config_path, overrides, out, seed):
    """Synthesize noisy images for a clean manifest under each row's condition."""
    config = resolve_config(SynthesizeConfigSchema(), config_path, overrides, seed)
    bundle = load_noise_model(checkpoint, config.device)
    written, rows = synthesize_manifest(
        bundle, load_manifest(manifest), out, config.seed, config.temperature, config.device
    )
    ReportingService.write_synthesis(out / "synthesis.csv", rows)
    write_run_meta(
        out,
        "synthesize",
        config.to_dict(),
        config.seed,
        {"checkpoint": checkpoint, "manifest": manifest},
    )
    click.echo(f"✓ Synthesized {len(written)} images into {out}")


@main.command("make-dataset")
@click.option("--checkpoint", type=PathType, required=True, help="Noise-model checkpoint")
@click.option("--manifest", type=PathType, required=True, help="Manifest of clean images")
@command_options
def make_dataset(checkpoint, manifest, config_path, overrides, out, seed):
    """Build a synthetic noisy/clean dataset for denoiser training."""
    config = resolve_config(MakeDatasetConfigSchema(), config_path, overrides, seed)
    bundle = load_noise_model(checkpoint, config.device)
    policy = policy_from_config(config)
    written = make_denoiser_dataset(
        bundle, load_manifest(manifest), policy, out, config.seed, device=config.device
    )
    write_run_meta(
        out,
        "make-dataset",
        config.to_dict(),
        config.seed,
        {"checkpoint": checkpoint, "manifest": manifest},
    )
    click.echo(f"✓ Denoiser dataset with {len(written)} pairs written to {out}")


@main.command("train-denoiser")
@click.option("--manifest", type=PathType, required=True, help="Noisy/clean manifest")
@command_options
def train_denoiser_command(manifest, config_path, overrides, out, seed):
    """Train the downstream DnCNN denoiser."""
    config = resolve_config(DenoiserConfigSchema(), config_path, overrides, seed)
    best = train_denoiser(config, load_manifest(manifest), out)
    write_run_meta(out, "train-denoiser", config.to_dict(), config.seed, {"manifest": manifest})
    click.echo(f"✓ Denoiser trained; best checkpoint: {best}")


@main.command("evaluate")
@click.option("--manifest", type=PathType, required=True, help="Noisy/clean test manifest")
@click.option("--checkpoint", type=PathType, help="Denoiser checkpoint")
@click.option("--noise-checkpoint", type=PathType, help="Noise-model checkpoint")
@command_options
def evaluate(manifest, checkpoint, noise_checkpoint, config_path, overrides, out, seed):
    """KL divergence of synthesized noise and PSNR/SSIM of a denoiser."""
    config = resolve_config(EvaluateConfigSchema(), config_path, overrides, seed)
    if checkpoint is None and noise_checkpoint is None and not config.baselines:
        raise ValidationError("Nothing to evaluate: pass --checkpoint or --noise-checkpoint")
    test = load_manifest(manifest)

    if noise_checkpoint is not None or config.baselines:
        bundle = (
            load_noise_model(noise_checkpoint, config.device) if noise_checkpoint else None
        )
        rows = kl_report(
            test,
            bundle,
            seed=config.seed,
            baselines=config.baselines,
            temperature=config.temperature,
            device=config.device,
        )
        ReportingService.write_kl_report(out / "kl_report.csv", rows)
        for method, value in ReportingService.summarize_kl(rows).items():
            click.echo(f"  KL[{method}] = {value:.4f}")

    if checkpoint is not None:
        report = evaluate_denoiser(checkpoint, test, config.device)
        ReportingService.write_denoise_report(out / "denoise_report.csv", report)
        click.echo(f"  PSNR = {report.mean_psnr:.2f} dB, SSIM = {report.mean_ssim:.4f}")

    write_run_meta(
        out,
        "evaluate",
        config.to_dict(),
        config.seed,
        {"manifest": manifest, "checkpoint": checkpoint, "noise_checkpoint": noise_checkpoint},
    )
    click.echo(f"✓ Evaluation written to {out}")


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the CLI and map outcomes to exit codes.

    0 on success, 1 on validation, usage or unexpected errors, 2 on numeric divergence.
    """
    try:
        result = main.main(
            args=list(argv) if argv is not None else None,
            prog_name="srgbnoise",
            standalone_mode=False,
        )
    except NoiseModelError as e:
        return render_error(e)
    except click.exceptions.Abort:
        click.echo("✗ Aborted", err=True)
        return EXIT_VALIDATION
    except click.ClickException as e:
        e.show()
        return EXIT_VALIDATION
    except Exception as e:
        logger.exception("Unhandled error")
        return render_error(
            InternalError(str(e) or type(e).__name__, details={"type": type(e).__name__})
        )
    return result if isinstance(result, int) else EXIT_OK


def entrypoint() -> None:
    sys.exit(run())


if __name__ == "__main__":
    entrypoint()
