"""Command-line entry: make-data, train, eval, bench-flops."""

import functools
import logging
from pathlib import Path
from typing import List, Optional

import pandas as pd
import typer
from rich.table import Table

from .data import load_split, split_summary, write_dataset
from .data.task import TaskInstance
from .env_setup import setup_runtime
from .errors import CascadeError, ConfigError, SplitMismatchError
from .evaluation import benchmark_sweep, class_table, crossover_resolution, evaluate_episodes, episodes_frame
from .evaluation.runner import cascade_predictor, dump_patch_overlays, episode_stream, global_predictor
from .graph import forward
from .logging.helper import console, err_console
from .main import init_model, load_model
from .settings import DEFAULT_CONFIG, RunSettings, load_settings
from .training import PARAMS_FILE, train

logger = logging.getLogger(__name__)

app = typer.Typer(add_completion=False, no_args_is_help=True, help="Patch cascade for in-context segmentation.")

CLASS_CSV = "eval_classes.csv"
EPISODE_CSV = "eval_episodes.csv"
BENCH_CSV = "bench_flops.csv"

ConfigOpt = typer.Option(None, "--config", help="YAML settings file")
SeedOpt = typer.Option(None, "--seed", help="Unsigned 64-bit seed")
OutOpt = typer.Option(None, "--out", help="Output directory")
JobsOpt = typer.Option(None, "--jobs", help="Worker threads for episode-level work")
DebugOpt = typer.Option(False, "--debug", help="Check every tensor op for NaN/Inf and log verbosely")


def handle_errors(command):
    """Turn package errors into a one-line diagnostic and exit code 1."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except CascadeError as exc:
            err_console.print(f"error: {exc}", markup=False, highlight=False, soft_wrap=True)
            raise typer.Exit(code=1) from None

    return wrapper


def _resolve(config: Optional[Path], debug: bool, **overrides) -> RunSettings:
    if config is None and DEFAULT_CONFIG.is_file():
        config = DEFAULT_CONFIG
    settings = load_settings(config, debug=debug or None, **overrides)
    setup_runtime(settings.debug)
    return settings


def _parse_resolutions(text: Optional[str]) -> Optional[List[int]]:
    if text is None:
        return None
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"--resolutions expects comma-separated integers, got {text!r}") from exc


def _limit_context(tasks: List[TaskInstance], n_context: Optional[int]) -> List[TaskInstance]:
    if n_context is None:
        return tasks
    available = min(t.n_context for t in tasks)
    if n_context > available:
        raise ConfigError(f"--n-context {n_context} exceeds the {available} context pairs stored per episode")
    return [t.with_context(t.context[:n_context]) for t in tasks]


def _print_frame(title: str, frame: pd.DataFrame) -> None:
    table = Table(title=title)
    for column in frame.columns:
        table.add_column(str(column))
    for row in frame.itertuples(index=False):
        table.add_row(*[f"{v:.4f}" if isinstance(v, float) else str(v) for v in row])
    console.print(table)


@app.command("make-data")
@handle_errors
def make_data(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[int] = SeedOpt,
    out: Optional[Path] = OutOpt,
    jobs: Optional[int] = JobsOpt,
    debug: bool = DebugOpt,
    resolution: Optional[int] = typer.Option(None, "--resolution", help="Input resolution R"),
    episodes: Optional[int] = typer.Option(None, "--episodes", help="Total episode count over both splits"),
    n_context: Optional[int] = typer.Option(None, "--n-context", help="Context pairs per episode"),
):
    """Generate the synthetic shape dataset."""
    settings = _resolve(
        config,
        debug,
        seed=seed,
        out=out,
        jobs=jobs,
        data={"resolution": resolution, "episodes": episodes, "n_context": n_context},
    )
    manifest = settings.data.manifest(settings.seed)
    index = write_dataset(manifest, settings.out, jobs=settings.jobs)
    settings.write_lock()
    _print_frame(f"{manifest.total_episodes} episodes in {settings.out}", split_summary(index))


@app.command("train")
@handle_errors
def train_command(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[int] = SeedOpt,
    out: Optional[Path] = OutOpt,
    jobs: Optional[int] = JobsOpt,
    debug: bool = DebugOpt,
    data: Optional[Path] = typer.Option(None, "--data", help="Dataset directory"),
    arch: Optional[str] = typer.Option(None, "--arch", help="cascade or global"),
    steps: Optional[int] = typer.Option(None, "--steps"),
    lr: Optional[float] = typer.Option(None, "--lr"),
    checkpoint_every: Optional[int] = typer.Option(None, "--checkpoint-every"),
    context_resample: Optional[bool] = typer.Option(None, "--context-resample/--fixed-context"),
    resume: bool = typer.Option(True, "--resume/--no-resume", help="Continue from a checkpoint in --out"),
):
    """Train one architecture on the training split."""
    settings = _resolve(
        config,
        debug,
        seed=seed,
        out=out,
        jobs=jobs,
        data_dir=data,
        train={"arch": arch, "steps": steps, "lr": lr, "checkpoint_every": checkpoint_every, "context_resample": context_resample},
    )
    tasks = load_split(settings.data_dir, "train")
    model_config, params = init_model(settings.train.arch, settings)
    settings.write_lock()
    result = train(tasks, model_config, params, settings.train, settings.seed, settings.out, resume=resume)
    console.print(f"checkpoint: {result.checkpoint}")


@app.command("eval")
@handle_errors
def eval_command(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[int] = SeedOpt,
    out: Optional[Path] = OutOpt,
    jobs: Optional[int] = JobsOpt,
    debug: bool = DebugOpt,
    data: Optional[Path] = typer.Option(None, "--data", help="Dataset directory"),
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help=f"Parameters (default <out>/{PARAMS_FILE})"),
    arch: Optional[str] = typer.Option(None, "--arch", help="cascade or global"),
    split: Optional[str] = typer.Option(None, "--split", help="train or heldout"),
    allow_train: bool = typer.Option(False, "--allow-train", help="Permit evaluation on the training split"),
    n_context: Optional[int] = typer.Option(None, "--n-context", help="Use only the first N context pairs"),
    dump_patches: bool = typer.Option(False, "--dump-patches", help="Write per-level patch overlays as PGM"),
):
    """Dice per episode and per class on a dataset split."""
    settings = _resolve(
        config,
        debug,
        seed=seed,
        out=out,
        jobs=jobs,
        data_dir=data,
        eval={
            "checkpoint": checkpoint,
            "arch": arch,
            "split": split,
            "allow_train": allow_train or None,
            "n_context": n_context,
            "dump_patches": dump_patches or None,
        },
    )
    cfg = settings.eval
    if cfg.split == "train" and not cfg.allow_train:
        raise SplitMismatchError("refusing to evaluate on the train split; pass --allow-train to override")
    model_config, params = load_model(cfg.arch, settings, cfg.checkpoint or settings.out / PARAMS_FILE)
    tasks = _limit_context(load_split(settings.data_dir, cfg.split), cfg.n_context)
    if cfg.arch == "global":
        predict = global_predictor(model_config, params)
    else:
        model_config = model_config.model_copy(update={"noise_enabled": False})
        predict = cascade_predictor(model_config, params, settings.seed)
    result, scores = evaluate_episodes(tasks, predict, cfg.arch, jobs=settings.jobs)

    settings.write_lock()
    table = class_table(scores)
    table.to_csv(settings.out / CLASS_CSV, index=False)
    episodes_frame(scores).to_csv(settings.out / EPISODE_CSV, index=False)
    if cfg.dump_patches and cfg.arch == "global":
        logger.warning("--dump-patches only applies to the cascade; nothing written")
    elif cfg.dump_patches:
        for task in tasks:
            pyramid = forward(task, model_config, params, episode_stream(settings.seed, task.episode_id))
            dump_patch_overlays(task, pyramid, settings.out / "patches")
    _print_frame(f"{cfg.arch} on {cfg.split}: Dice {result.mean:.4f} ± {result.std:.4f} (n={result.n})", table)


@app.command("bench-flops")
@handle_errors
def bench_flops(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[int] = SeedOpt,
    out: Optional[Path] = OutOpt,
    jobs: Optional[int] = JobsOpt,
    debug: bool = DebugOpt,
    data: Optional[Path] = typer.Option(None, "--data", help="Dataset directory"),
    resolutions: Optional[str] = typer.Option(None, "--resolutions", help="Comma-separated, e.g. 64,128,256,512"),
    cost_only: bool = typer.Option(False, "--cost-only", help="FLOPs columns only; no checkpoints needed"),
    cascade_checkpoint: Optional[Path] = typer.Option(None, "--cascade-checkpoint"),
    global_checkpoint: Optional[Path] = typer.Option(None, "--global-checkpoint"),
    episodes: Optional[int] = typer.Option(None, "--episodes", help="Evaluate only the first N held-out episodes"),
    n_context: Optional[int] = typer.Option(None, "--n-context"),
):
    """Dice and analytic FLOPs over a resolution sweep."""
    settings = _resolve(
        config,
        debug,
        seed=seed,
        out=out,
        jobs=jobs,
        data_dir=data,
        bench={
            "resolutions": _parse_resolutions(resolutions),
            "cost_only": cost_only or None,
            "cascade_checkpoint": cascade_checkpoint,
            "global_checkpoint": global_checkpoint,
            "episodes": episodes,
            "n_context": n_context,
        },
    )
    cfg = settings.bench
    cascade_config = settings.cascade_config()
    tasks, cascade_params, global_params = [], None, None
    if not cfg.cost_only:
        cascade_config, cascade_params = load_model("cascade", settings, cfg.cascade_checkpoint, "--cascade-checkpoint")
        _, global_params = load_model("global", settings, cfg.global_checkpoint, "--global-checkpoint")
        cascade_config = cascade_config.model_copy(update={"noise_enabled": False})
        tasks = _limit_context(load_split(settings.data_dir, "heldout"), cfg.n_context)
        if cfg.episodes is not None:
            tasks = tasks[: cfg.episodes]
    sweep = benchmark_sweep(
        cfg.resolutions,
        cascade_config,
        settings.global_model,
        n_context=cfg.n_context,
        tasks=tasks,
        cascade_params=cascade_params,
        global_params=global_params,
        seed=settings.seed,
        jobs=settings.jobs,
    )
    settings.write_lock()
    sweep.to_csv(settings.out / BENCH_CSV, index=False)
    _print_frame(f"FLOPs sweep ({BENCH_CSV})", sweep)
    crossover = crossover_resolution(sweep)
    if crossover is None:
        console.print("crossover: none in sweep")
    else:
        console.print(f"crossover: r={crossover}")
