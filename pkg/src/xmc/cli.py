"""``xmc`` command line: generate | run | ablate | eval.

Exit status: 0 success, 1 internal failure, 2 user-input error.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import pipeline
from .config import ConfigError, RunConfig, load_config
from .dataspace import FeatureFileError
from .trainer import Mode

log = logging.getLogger("xmc")

_config = click.option("--config", "config_path", required=True,
                       type=click.Path(path_type=Path), help="flat key = value config file")
_out = click.option("--out", required=True, type=click.Path(path_type=Path), help="output directory")
_mode = click.option("--mode", type=click.Choice([m.value for m in Mode]), default=None,
                     help="override the config's mode")


def _load(config_path: Path, mode) -> RunConfig:
    cfg = load_config(config_path)
    return cfg.with_mode(mode) if mode else cfg


def _parse_seeds(text: str) -> list:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise click.BadParameter(f"seeds must be comma-separated integers: {text!r}") from None


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="log progress to stderr")
def cli(verbose):
    """Neighbour-calibrated pseudo-label training on two-modality embeddings."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@_config
@_out
def generate(config_path, out):
    """Write visible.xmc and infrared.xmc from the synthetic-data keys."""
    cfg = load_config(config_path)
    for p in pipeline.generate(cfg, out):
        click.echo(str(p))


@cli.command()
@_config
@_out
@_mode
def run(config_path, out, mode):
    """Train one mode and write manifest, epoch log and metrics."""
    manifest = pipeline.run(_load(config_path, mode), out)
    click.echo(str(out / "manifest.json"))
    if manifest["metrics"]:
        click.echo((out / manifest["metrics"]).read_text(encoding="utf-8"), nl=False)


@cli.command()
@_config
@_out
@click.option("--seeds", required=True, help="comma-separated seeds (at least 3, distinct)")
def ablate(config_path, out, seeds):
    """Run baseline/ulc/dw/full over several seeds and tabulate mean and std."""
    summary = pipeline.ablate(load_config(config_path), _parse_seeds(seeds), out)
    click.echo((out / "ablation.tsv").read_text(encoding="utf-8"), nl=False)
    gap = summary["full_minus_baseline_map"]
    click.echo(f"full - baseline mAP: {gap['mean']:+.4f}  95% CI [{gap['ci95'][0]:+.4f}, {gap['ci95'][1]:+.4f}]")


@cli.command("eval")
@_config
@_out
@click.option("--encoder", "encoder_path", type=click.Path(path_type=Path), default=None,
              help="encoder.txt from a run (identity map if omitted)")
def eval_(config_path, out, encoder_path):
    """Retrieval metrics in both directions for the configured feature files."""
    metrics = pipeline.evaluate(load_config(config_path), encoder_path)
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(metrics, indent=2, sort_keys=True) + "\n"
    (out / "eval.json").write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="xmc", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except (ConfigError, FeatureFileError, pipeline.InputError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except Exception as exc:
        log.debug("internal failure", exc_info=True)
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
