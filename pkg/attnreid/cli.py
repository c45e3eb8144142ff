"""
Command line interface for attnreid.
"""

import functools
import logging
import sys

import click

from . import pipeline
from .database.repository import RunRepository
from .exceptions import AttnReidError
from .utils.config_loader import load_run_config

# Configure logging
logging.basicConfig(
    level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)

EXIT_INTERRUPTED = 130

config_option = click.option(
    "--config", "-c", "config_path", type=click.Path(dir_okay=False), help="YAML run config"
)
set_option = click.option(
    "--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a config key"
)


def reports_errors(command):
    """Turn attnreid errors into a message and the error family's exit code."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except AttnReidError as e:
            click.echo(f"❌ {e}", err=True)
            sys.exit(e.exit_code)

    return wrapper


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging")
@click.pass_context
def cli(ctx, verbose):
    """attnreid - attention-guided domain translation for person re-ID."""
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    # Store context for subcommands
    ctx.ensure_object(dict)
    ctx.obj["verbose"] = verbose


@cli.command("gen-data")
@config_option
@set_option
@reports_errors
def gen_data(config_path, overrides):
    """Generate the synthetic two-domain dataset with masks and manifests."""
    config = load_run_config(config_path, overrides)
    click.echo(
        f"🎨 Generating {config.data.num_identities} identities x "
        f"{config.data.images_per_identity_per_domain} images per domain"
    )
    source_manifest, target_manifest = pipeline.generate_dataset(config)
    click.echo(f"✅ Source manifest: {source_manifest}")
    click.echo(f"✅ Target manifest: {target_manifest}")


@cli.command()
@config_option
@set_option
@click.option("--resume", type=click.Path(dir_okay=False), help="Checkpoint to resume from")
@reports_errors
def train(config_path, overrides, resume):
    """Train in the configured mode (end-to-end, two-stage or direct transfer)."""
    config = load_run_config(config_path, overrides)
    click.echo(
        f"🚀 Training '{config.name}': mode={config.train.mode}, "
        f"attention={config.train.attention_enabled}, epochs={config.train.epochs}"
    )
    result = pipeline.run_training(config, resume)
    click.echo(f"✅ Run directory: {result.run_dir}")
    click.echo(f"💾 Final checkpoint: {result.final_checkpoint}")
    for loss_file in result.loss_files:
        click.echo(f"📈 Losses: {loss_file}")


@cli.command()
@click.option("--checkpoint", required=True, type=click.Path(dir_okay=False))
@click.option("--input-dir", required=True, type=click.Path(file_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--direction", type=click.Choice(["s2t", "t2s"]), default="s2t", show_default=True)
@config_option
@set_option
@reports_errors
def translate(checkpoint, input_dir, out_dir, direction, config_path, overrides):
    """Export translation strips (input | mask | raw | x_b | x_f | composed)."""
    config = load_run_config(config_path, overrides) if config_path or overrides else None
    click.echo(f"🔄 Translating {input_dir} ({direction})")
    written = pipeline.translate_directory(checkpoint, input_dir, out_dir, direction, config)
    click.echo(f"✅ Wrote {len(written)} grids to {out_dir}")


@cli.command()
@click.option("--checkpoint", required=True, type=click.Path(dir_okay=False))
@config_option
@set_option
@click.option("--out-dir", type=click.Path(file_okay=False), help="Defaults to <checkpoint dir>/eval")
@reports_errors
def evaluate(checkpoint, config_path, overrides, out_dir):
    """Score a checkpoint: CMC, mAP and (with masks) attention IoU and foreground MAE."""
    config = load_run_config(config_path, overrides) if config_path or overrides else None
    click.echo(f"📊 Evaluating {checkpoint}")
    result = pipeline.run_evaluation(checkpoint, config, out_dir)

    report = result.outcome.report
    click.echo(
        f"  {report.num_valid_queries}/{report.num_queries} queries, "
        f"{report.num_gallery} gallery images"
    )
    for record in report.records:
        click.echo(f"  • {record.label}: {record.value:.4f}")
    for kind, path in result.outputs.items():
        click.echo(f"  📁 {kind}: {path}")
    if not result.stored:
        click.echo("  ⚠️ Metrics not stored in the results database")


@cli.command("list-runs")
@config_option
@set_option
@reports_errors
def list_runs(config_path, overrides):
    """List evaluated runs in the results database."""
    config = load_run_config(config_path, overrides)
    repository = RunRepository(pipeline.database_url(config))

    runs = repository.get_all_runs()

    if runs:
        click.echo("🗂️ Evaluated runs:")
        for run in runs:
            attention = "attention" if run["attention_enabled"] else "no attention"
            click.echo(
                f"  • {run['name']} [{run['mode']}, {attention}, seed {run['seed']}] "
                f"(ID: {run['run_id']})"
            )
    else:
        click.echo("No runs found in database. Run 'evaluate' first.")


@cli.command("ablation-report")
@config_option
@set_option
@reports_errors
def ablation_report(config_path, overrides):
    """Median of each metric across seeds for every ablation variant."""
    config = load_run_config(config_path, overrides)
    repository = RunRepository(pipeline.database_url(config))

    summary = repository.ablation_summary()
    if not summary:
        click.echo("No evaluated runs to summarize.")
        return

    click.echo("🧪 Ablation summary (median across seeds):")
    variant = None
    for row in summary:
        key = (row["mode"], row["attention_enabled"], row["metric_loss"])
        if key != variant:
            variant = key
            attention = "attention" if row["attention_enabled"] else "no attention"
            click.echo(
                f"  {row['mode']} / {attention} / {row['metric_loss']} "
                f"({row['num_runs']} runs)"
            )
        label = f"{row['metric']}@{row['k']}" if row["k"] is not None else row["metric"]
        click.echo(f"    • {label}: {row['median']:.4f}")


def main():
    """Main entry point for the CLI."""
    try:
        cli(standalone_mode=False)
    except (KeyboardInterrupt, click.exceptions.Abort):
        click.echo("\n🛑 Operation cancelled by user")
        sys.exit(EXIT_INTERRUPTED)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except Exception as e:
        click.echo(f"❌ Unexpected error: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
