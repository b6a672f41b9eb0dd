"""Command-line experiment runner.

Exit codes: 0 success, 1 invalid input or arguments, 2 ledger integrity
failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from adexpert.anomaly.iforest import IsolationForestParams
from adexpert.anomaly.tabular import DEFAULT_THRESHOLD, GateConfig, detect_tabular
from adexpert.datamodel import DataError, SyntheticSpec, generate_synthetic, load_dataset_csv, write_dataset_csv
from adexpert.featsel import CurveConfig, accuracy_curve, emit_curve_csv, parse_k_range
from adexpert.fednet import AGGREGATION_MODES, PARTITION_MODES, FederationConfig, run_comparison
from adexpert.ledger import LedgerError, check_chain_file
from adexpert.mlcore.forest import ForestParams

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INTEGRITY = 2


class IntegrityFailure(click.ClickException):
    exit_code = EXIT_INTEGRITY


def _write_json(doc, path: str) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


@click.group()
@click.version_option(package_name="adexpert")
def cli():
    """Expert-system experiments: synthetic cohorts, feature-selection
    curves, federation comparisons, anomaly scans, ledger audits."""


@cli.command("gen-data")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def gen_data(spec_path, out):
    """Write a synthetic cohort CSV from a JSON spec."""
    ds = generate_synthetic(SyntheticSpec.from_json(spec_path))
    write_dataset_csv(ds, out)
    click.echo(f"wrote {ds.n_samples} samples x {ds.n_features} features to {out}")


@cli.command("sfs-curve")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", "k_range", default="1..20", show_default=True, help="1..N, N, or a comma list")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--test-fraction", default=0.25, show_default=True, type=float)
@click.option("--n-trees", default=100, show_default=True, type=click.IntRange(min=1))
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1))
def sfs_curve(data, k_range, out, seed, test_fraction, n_trees, jobs):
    """Test accuracy versus number of SFS-selected features, as CSV."""
    ds = load_dataset_csv(data)
    config = CurveConfig(test_fraction, seed, ForestParams(n_trees=n_trees, seed=seed, n_jobs=jobs))
    points = accuracy_curve(ds, parse_k_range(k_range), config)
    emit_curve_csv(points, out)
    best = max(points, key=lambda p: p.accuracy)
    click.echo(f"best accuracy {best.accuracy:.4f} at k={best.k}")


@cli.command("federate")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k-institutions", "k", required=True, type=click.IntRange(min=1))
@click.option("--mode", default="vote_ensemble", show_default=True, type=click.Choice(AGGREGATION_MODES))
@click.option("--partition", default="iid", show_default=True, type=click.Choice(PARTITION_MODES))
@click.option("--alpha", default=1.0, show_default=True, type=float, help="label-skew concentration")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--csv", "csv_out", default=None, type=click.Path(dir_okay=False), help="one row per mode")
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--n-trees", default=100, show_default=True, type=click.IntRange(min=1))
def federate(data, k, mode, partition, alpha, out, csv_out, seed, n_trees):
    """Compare single-institution, federated and pooled-data accuracy."""
    ds = load_dataset_csv(data)
    config = FederationConfig(
        k=k, partition_mode=partition, alpha=alpha, aggregation_mode=mode, seed=seed,
        forest=ForestParams(n_trees=n_trees),
    )
    result = run_comparison(ds, config)
    _write_json({"config": config.to_dict(), "result": result.to_dict()}, out)
    if csv_out:
        result.write_csv(csv_out)
    click.echo(result.inequality_report)


@cli.command("anomaly-scan")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--threshold", default=DEFAULT_THRESHOLD, show_default=True, type=float)
@click.option("--contamination", default=0.05, show_default=True, type=float)
@click.option("--features", default=None, help="comma-separated columns (default: all)")
@click.option("--n-components", default=2, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
def anomaly_scan(data, out, threshold, contamination, features, n_components, seed):
    """Score every row with the tabular gate and list flagged rows."""
    ds = load_dataset_csv(data)
    config = GateConfig(
        features=tuple(f.strip() for f in features.split(",")) if features else None,
        n_components=n_components,
        threshold=threshold,
        forest=IsolationForestParams(contamination=contamination, seed=seed),
    )
    reports = detect_tabular(ds, config)
    flagged = [r.sample_index for r in reports if r.flagged]
    _write_json(
        {
            "threshold": threshold,
            "contamination": contamination,
            "seed": seed,
            "n_samples": ds.n_samples,
            "flagged_indices": flagged,
            "reports": [r.to_dict() for r in reports],
        },
        out,
    )
    click.echo(f"{len(flagged)} of {ds.n_samples} samples flagged")


@cli.command("ledger-audit")
@click.option("--chain", required=True, type=click.Path(exists=True, dir_okay=False))
def ledger_audit(chain):
    """Verify a chain file; exit 2 with the first bad entry index on failure."""
    bad = check_chain_file(chain)
    if bad is not None:
        raise IntegrityFailure(f"integrity failure at entry {bad}")
    click.echo("ok")


@cli.command("serve")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--port", default=None, type=click.IntRange(1, 65535), help="overrides config and environment")
def serve_cmd(config_path, port):
    """Run the HTTP service."""
    from dataclasses import replace

    from adexpert.service import ServiceConfig, serve

    cfg = ServiceConfig.load(config_path)
    if port is not None:
        cfg = replace(cfg, port=port)
    serve(cfg)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="adexpert", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_INVALID
    except IntegrityFailure as exc:
        exc.show()
        return EXIT_INTEGRITY
    except click.ClickException as exc:
        # usage errors included: every invalid-input outcome exits 1
        exc.show()
        return EXIT_INVALID
    except (DataError, LedgerError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
