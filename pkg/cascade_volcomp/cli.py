"""
Command line interface.

Every subcommand reads a YAML config (``--config``), applies ``--set key=value``
overrides, and writes a ``run.json`` into its output directory with the resolved config,
seed, version, wall time and exit code. Passing that ``run.json`` as ``--config``
reruns the command with identical settings.

Exit codes: 0 success, 1 usage or config error, 2 data or format error, 3 numerical
divergence.
"""
import contextlib
import dataclasses
import json
import logging
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import click
import yaml

from .errors import ConfigError, DataError, DivergenceError
from .evaluation import (
    SegmentationConfig,
    SsimParams,
    ablation_report,
    fit_trajectories,
    hull_coverage,
    refine_vs_trilinear,
    score_completions,
    summarize_scores,
    trajectory_table,
    write_ablation_csv,
    write_metrics_csv,
    write_trajectory_csv,
    write_trajectory_points_csv,
)
from .phantom import (
    GrowthLaw,
    PhantomConfig,
    generate_cohort,
    mask_missing,
    write_phantom_cohort,
)
from .pipeline import SamplingConfig, complete_cohort, load_stage
from .train import (
    TrainConfig,
    load_config,
    log_level_from_env,
    pprint,
    set_determinism,
    setup_logging,
    to_dict_format,
    train_stage,
)
from .version import __version__
from .volume import MANIFEST_NAME, Provenance, read_cohort, write_cohort

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3

RUN_FILE = "run.json"
# Sections whose seed is taken from the global `seed`
SEEDED_SECTIONS = ("phantom", "train_generate", "train_sr")


def _field_default(cfg_class, name: str):
    return next(f.default for f in dataclasses.fields(cfg_class) if f.name == name)


@dataclass
class MaskingConfig:
    # Fraction of scans held out as ground truth for completion
    missing_fraction: float = 0.3


@dataclass
class PathsConfig:
    """
    Attributes:
        data_dir: Cohort directory written by ``phantom``.
        out_dir: Root of all outputs. Commands write to ``<out_dir>/<command>`` unless
            ``--out`` is given.
        gen_checkpoint: Generate-stage checkpoint.
        sr_checkpoint: Refine-stage checkpoint. Empty upsamples trilinearly.
        shared_checkpoint: Generate-stage checkpoint of the shared-encoder variant,
            used by ``ablation``.
        completed_dir: Cohort directory written by ``complete``, read by ``eval`` and
            ``trajectory``. Empty selects ``<out_dir>/complete``.
    """

    data_dir: str = "data"
    out_dir: str = "runs"
    gen_checkpoint: str = ""
    sr_checkpoint: str = ""
    shared_checkpoint: str = ""
    completed_dir: str = ""


@dataclass
class RunConfig:
    """
    Configuration of all commands. ``seed`` is the single source of randomness; it
    is copied into the seeds of the phantom generator and both trainings. Those nested
    seeds may only be left unset or repeat ``seed``.
    """

    seed: int = 0
    threads: int = 1
    variant: str = "full"
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    growth: GrowthLaw = field(default_factory=GrowthLaw)
    masking: MaskingConfig = field(default_factory=MaskingConfig)
    train_generate: TrainConfig = field(
        default_factory=lambda: TrainConfig(stage="generate")
    )
    train_sr: TrainConfig = field(default_factory=lambda: TrainConfig(stage="sr"))
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    ssim: SsimParams = field(default_factory=SsimParams)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigError(f"threads has to be positive, got {self.threads}.")
        if self.train_generate.stage != "generate" or self.train_sr.stage != "sr":
            raise ConfigError("train_generate and train_sr have fixed stages.")
        for name in SEEDED_SECTIONS:
            section = getattr(self, name)
            unset = _field_default(type(section), "seed")
            if section.seed not in (self.seed, unset):
                raise ConfigError(
                    f"{name}.seed ({section.seed}) differs from seed ({self.seed}). "
                    "Nested seeds follow the global seed, remove them or use --seed."
                )
            setattr(self, name, dataclasses.replace(section, seed=self.seed))


def exit_code_for(e: BaseException) -> Optional[int]:
    """Exit code of a handled exception, ``None`` for unexpected ones."""
    if isinstance(e, DivergenceError):
        return EXIT_DIVERGENCE
    if isinstance(e, (DataError, FileNotFoundError)):
        return EXIT_DATA
    if isinstance(e, (ConfigError, click.UsageError)):
        return EXIT_USAGE
    return None


def git_describe() -> Optional[str]:
    try:
        res = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return None
    if res.returncode != 0:
        return None
    return res.stdout.strip() or None


def write_run_json(out_dir: Path, record: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / RUN_FILE).write_text(json.dumps(record, indent=2))


@contextlib.contextmanager
def recorded_run(command: str, cfg: RunConfig, out_dir: Path):
    """Runs the body of a command and writes ``run.json``, also on failure."""
    start = time.time()
    exit_code = EXIT_OK
    try:
        yield
    except BaseException as e:
        exit_code = exit_code_for(e) or EXIT_USAGE
        raise
    finally:
        write_run_json(
            out_dir,
            {
                "command": command,
                "config": to_dict_format(cfg),
                "seed": cfg.seed,
                "version": f"v{__version__}",
                "git_describe": git_describe(),
                "out": str(out_dir),
                "wall_seconds": time.time() - start,
                "exit_code": exit_code,
            },
        )


class VolcompGroup(click.Group):
    """Maps library exceptions to the exit code contract."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = EXIT_USAGE
            raise
        except (ConfigError, DataError, DivergenceError, FileNotFoundError) as e:
            logging.error(f"{type(e).__name__}: {e}")
            click.echo(f"Error: {e}", err=True)
            ctx.exit(exit_code_for(e))


def _parse_overrides(items) -> dict:
    overrides = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"Overrides have the form key=value, got {item!r}.")
        key, value = item.split("=", 1)
        overrides[key.strip()] = yaml.safe_load(value)
    return overrides


def resolve_config(config, seed, threads, overrides) -> RunConfig:
    """Defaults, then the config file, then ``--set`` overrides, then flags."""
    overrides = _parse_overrides(overrides)
    if seed is not None:
        overrides["seed"] = seed
        overrides.update({f"{name}.seed": seed for name in SEEDED_SECTIONS})
    if threads is not None:
        overrides["threads"] = threads
    cfg = load_config(RunConfig, path=config, overrides=overrides)
    set_determinism(cfg.seed, cfg.threads)
    logging.info("Resolved config:")
    pprint(cfg)
    return cfg


def _out_dir(cfg: RunConfig, out: Optional[str], command: str) -> Path:
    return Path(out) if out else Path(cfg.paths.out_dir) / command


def claim_out_dir(out_dir: Path, force: bool):
    """Refuses to write into a non-empty output directory unless ``force`` is set."""
    if out_dir.exists() and any(out_dir.iterdir()) and not force:
        raise click.UsageError(
            f"Output directory {out_dir} is not empty. Use --force to overwrite."
        )


def _completed_dir(cfg: RunConfig) -> Path:
    if cfg.paths.completed_dir:
        return Path(cfg.paths.completed_dir)
    return Path(cfg.paths.out_dir) / "complete"


def common_options(fn):
    options = [
        click.option("--config", type=click.Path(), default=None, help="YAML config"),
        click.option("--seed", type=int, default=None, help="Overrides `seed`"),
        click.option("--out", type=click.Path(), default=None, help="Output dir"),
        click.option("--force/--no-force", default=False, help="Overwrite outputs"),
        click.option("--threads", type=int, default=None, help="Overrides `threads`"),
        click.option(
            "--set", "overrides", multiple=True, help="Config override key=value"
        ),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group(cls=VolcompGroup)
@click.version_option(__version__, prog_name="cascade-volcomp")
def main():
    """Completion of longitudinal 3D volumes with cascaded diffusion models."""
    setup_logging(log_level_from_env())


@main.command()
@common_options
def phantom(config, seed, out, force, threads, overrides):
    """Generates a phantom cohort and holds out scans as ground truth."""
    cfg = resolve_config(config, seed, threads, overrides)
    out_dir = Path(out) if out else Path(cfg.paths.data_dir)
    claim_out_dir(out_dir, force)
    if out_dir.exists():
        for path in out_dir.iterdir():
            if path.is_file() and (
                path.suffix == ".vol3"
                or path.name.endswith(".meta.json")
                or path.name in (MANIFEST_NAME, RUN_FILE)
            ):
                path.unlink()

    with recorded_run("phantom", cfg, out_dir):
        cohort, truth = generate_cohort(cfg.phantom, cfg.growth)
        remaining, held_out = mask_missing(
            cohort, cfg.masking.missing_fraction, seed=cfg.seed
        )
        metadata = {
            "generator": "phantom",
            "seed": cfg.seed,
            "dims": list(cfg.phantom.stored_dims),
            "low_dims": list(cfg.phantom.dims),
        }
        write_phantom_cohort(out_dir, remaining, truth, held_out, metadata=metadata)
        logging.info(
            f"Phantom cohort with {remaining.count} available and {len(held_out)} "
            f"held-out scans written to {out_dir}."
        )


@main.command()
@click.option(
    "--stage", type=click.Choice(["generate", "sr"]), required=True, help="Stage"
)
@common_options
def train(stage, config, seed, out, force, threads, overrides):
    """Trains one stage of the cascade on the cohort in `paths.data_dir`."""
    cfg = resolve_config(config, seed, threads, overrides)
    out_dir = _out_dir(cfg, out, f"train_{stage}")
    claim_out_dir(out_dir, force)
    train_cfg = cfg.train_generate if stage == "generate" else cfg.train_sr
    with recorded_run(f"train --stage {stage}", cfg, out_dir):
        bundle = read_cohort(cfg.paths.data_dir)
        result = train_stage(bundle.cohort, train_cfg, out_dir=out_dir)
        logging.info(f"Final checkpoint: {result.final_checkpoint}.")


def _load_stages(cfg: RunConfig):
    if not cfg.paths.gen_checkpoint:
        raise ConfigError("paths.gen_checkpoint is not set.")
    gen = load_stage(cfg.paths.gen_checkpoint)
    sr = load_stage(cfg.paths.sr_checkpoint) if cfg.paths.sr_checkpoint else None
    return gen, sr


@main.command()
@common_options
def complete(config, seed, out, force, threads, overrides):
    """Completes all missing ages of the cohort with the trained cascade."""
    cfg = resolve_config(config, seed, threads, overrides)
    out_dir = Path(out) if out else _completed_dir(cfg)
    claim_out_dir(out_dir, force)
    with recorded_run("complete", cfg, out_dir):
        gen, sr = _load_stages(cfg)
        bundle = read_cohort(cfg.paths.data_dir)
        records = complete_cohort(
            gen, sr, bundle.cohort, seed=cfg.seed, sampling=cfg.sampling
        )
        write_cohort(
            out_dir,
            bundle.cohort.with_records(records),
            held_out=bundle.held_out,
            ground_truth=bundle.ground_truth,
            metadata={**bundle.metadata, "completed_scans": len(records)},
        )


@main.command(name="eval")
@common_options
def evaluate(config, seed, out, force, threads, overrides):
    """Scores generated scans against the held-out ground truth."""
    cfg = resolve_config(config, seed, threads, overrides)
    out_dir = _out_dir(cfg, out, "eval")
    claim_out_dir(out_dir, force)
    with recorded_run("eval", cfg, out_dir):
        truth = read_cohort(cfg.paths.data_dir).held_out
        completed = read_cohort(_completed_dir(cfg)).cohort
        truth_keys = {record.key for record in truth}
        generated = [
            record
            for record in completed.records()
            if record.provenance == Provenance.GENERATED and record.key in truth_keys
        ]
        if not generated:
            raise DataError("No generated scan matches a held-out scan.")
        scores = score_completions(cfg.variant, generated, truth, cfg.ssim)
        write_metrics_csv(scores, out_dir / "metrics.csv")
        write_ablation_csv(summarize_scores(scores), out_dir / "summary.csv")


@main.command()
@common_options
def trajectory(config, seed, out, force, threads, overrides):
    """Fits growth trajectories to observed and generated scans."""
    cfg = resolve_config(config, seed, threads, overrides)
    out_dir = _out_dir(cfg, out, "trajectory")
    claim_out_dir(out_dir, force)
    with recorded_run("trajectory", cfg, out_dir):
        source = _completed_dir(cfg)
        if not source.joinpath(MANIFEST_NAME).is_file():
            source = Path(cfg.paths.data_dir)
        records = read_cohort(source).cohort.records()
        table = trajectory_table(
            records, cfg.segmentation.thresholds, cfg.segmentation.cut
        )
        models = fit_trajectories(table)
        write_trajectory_csv(models, out_dir / "trajectory.csv")
        write_trajectory_points_csv(table, out_dir / "trajectory_points.csv")
        for name, model in models.items():
            logging.info(
                f"{name}: beta0={model.beta0:.2f}, beta1={model.beta1:.2f}, "
                f"sigma_b2={model.sigma_b2:.2f}, sigma_e2={model.sigma_e2:.2f}"
            )
        if (table["provenance"] == Provenance.GENERATED.value).any():
            try:
                for name, share in hull_coverage(table).items():
                    logging.info(
                        f"{name}: {share:.0%} of generated volumes inside the hull "
                        "of observed volumes."
                    )
            except DataError as e:
                logging.warning(f"Skipping hull coverage: {e}")


@main.command()
@common_options
def ablation(config, seed, out, force, threads, overrides):
    """Compares cascade variants on the held-out scans."""
    cfg = resolve_config(config, seed, threads, overrides)
    out_dir = _out_dir(cfg, out, "ablation")
    claim_out_dir(out_dir, force)
    with recorded_run("ablation", cfg, out_dir):
        gen, sr = _load_stages(cfg)
        variants = {}
        if cfg.paths.shared_checkpoint:
            variants["model_1"] = (load_stage(cfg.paths.shared_checkpoint), sr)
        variants["model_2"] = (gen, None)
        if sr is not None:
            variants["full"] = (gen, sr)
        bundle = read_cohort(cfg.paths.data_dir)
        summary, scores = ablation_report(
            variants,
            bundle.held_out,
            bundle.cohort,
            seed=cfg.seed,
            sampling=cfg.sampling,
            ssim_params=cfg.ssim,
        )
        write_metrics_csv(scores, out_dir / "metrics.csv")
        write_ablation_csv(summary, out_dir / "ablation.csv")
        if sr is not None:
            refine_scores = refine_vs_trilinear(
                sr,
                bundle.held_out,
                seed=cfg.seed,
                sampling=cfg.sampling,
                ssim_params=cfg.ssim,
            )
            write_ablation_csv(
                summarize_scores(refine_scores), out_dir / "refine_vs_trilinear.csv"
            )


if __name__ == "__main__":
    main()
