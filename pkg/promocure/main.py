"""
promocure - command-line entry point

    python -m promocure fit      --config configs/lung_tumor_fit.yaml --chains 10
    python -m promocure simulate --config configs/simulate.yaml
    python -m promocure study    --config configs/scenario1_study.yaml --workers 8
    python -m promocure diagnose --config configs/diagnose.yaml

Exit status: 0 success, 1 invalid configuration or data, 2 numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import yaml

from promocure.config import config_hash, load_yaml_config, settings, validate_config
from promocure.core.dataset import ColumnSchema, load_dataset, npmle_survival, write_npmle
from promocure.core.diagnostics import diagnose, export_trace
from promocure.core.errors import DataValidationError, PromocureError, StudyFailureError
from promocure.core.model_checking import check_model
from promocure.core.monitoring import record_iteration_cost, write_metrics
from promocure.core.posterior_summary import summarize
from promocure.core.priors import build_prior
from promocure.core.reporting import (
    acf_table,
    check_to_dict,
    curve_table,
    diagnostics_to_dict,
    estimates_table,
    hash_header,
    provenance_lines,
    replicate_table,
    scaled_cpo_table,
    study_table,
    study_to_dict,
    summary_to_dict,
    text_report,
    write_json,
)
from promocure.core.sampler import export_chain, pool_chains, read_chain, run_chains
from promocure.core.simulation import replication_study, simulate_replicate
from promocure.models.schemas import DiagnoseConfig, FitConfig, SimulateConfig, StudyConfig
from promocure.utils.helpers import configure_logging, write_table

logger = logging.getLogger("promocure.main")

COMMANDS = ("fit", "simulate", "study", "diagnose")
RECORDS = {"fit": FitConfig, "simulate": SimulateConfig, "study": StudyConfig, "diagnose": DiagnoseConfig}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promocure",
        description="Bayesian promotion time cure model for current status data",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fit": "fit the model to a current status table",
        "simulate": "generate one simulated dataset",
        "study": "run a replication study",
        "diagnose": "recompute diagnostics from exported chains",
    }
    for name in COMMANDS:
        sub = subparsers.add_parser(name, help=helps[name])
        sub.add_argument("--config", required=True, help="YAML run file")
        sub.add_argument("--out", default=None, help="output directory")
        sub.add_argument("--chains", type=int, default=None, help="number of chains (fit)")
        sub.add_argument("--seed", type=int, default=None, help="64-bit seed overriding the run file")
        sub.add_argument("--workers", type=int, default=None, help="worker processes")
        sub.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    return parser


def _section(raw: Dict[str, Any], key: str) -> Dict[str, Any]:
    value = raw.get(key)
    if value is None:
        value = {}
        raw[key] = value
    return value


def apply_overrides(command: str, raw: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    """CLI flags take precedence over the run file"""
    raw = dict(raw)
    if command == "fit":
        if args.chains is not None or args.seed is not None:
            sampler = dict(_section(raw, "sampler"))
            if args.chains is not None:
                sampler["n_chains"] = args.chains
            if args.seed is not None:
                sampler["seed"] = args.seed
            raw["sampler"] = sampler
    elif command in ("simulate", "study") and args.seed is not None:
        scenario = dict(_section(raw, "scenario"))
        scenario["seed"] = args.seed
        raw["scenario"] = scenario
    elif args.chains is not None or args.seed is not None:
        logger.warning("--chains and --seed have no effect on '%s'", command)
    if args.out is not None:
        raw["output_dir"] = args.out
    return raw


def output_dir(config) -> Path:
    path = Path(config.output_dir or settings.OUTPUT_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


def resolve_data_path(path: Path) -> Path:
    """As given, or under PROMOCURE_DATA_DIR for relative paths that do not exist"""
    if path.exists() or path.is_absolute():
        return path
    candidate = Path(settings.DATA_DIR) / path
    return candidate if candidate.exists() else path


def cmd_fit(config: FitConfig, digest: str, workers: int) -> Path:
    schema = ColumnSchema(
        time_col=config.data.time_col,
        status_col=config.data.status_col,
        covariate_cols=tuple(config.data.covariate_cols),
        delimiter=config.data.delimiter,
    )
    path = resolve_data_path(config.data.path)
    if not path.exists():
        raise DataValidationError(f"data file not found: {path}")
    data = load_dataset(path, schema)
    npmle = npmle_survival(data)
    logger.info("NPMLE survival at the last knot: %.4f", npmle.survival[-1])

    prior = build_prior(config.prior, data)
    chains = run_chains(data, prior, config.sampler, workers=workers)
    pooled = pool_chains(chains)
    summary = summarize(pooled, data.grid, config.level, config.profiles, config.functional_mean)
    check = check_model(pooled, data)
    diagnostics = diagnose(chains, config.max_lag)

    out = output_dir(config)
    header = hash_header(digest)
    write_npmle(npmle, out / "npmle.csv", header)
    for chain in chains:
        export_chain(chain, out / f"chain_{chain.chain_id}.csv", header)
        export_trace(chain, out / f"trace_{chain.chain_id}.csv", header)
    write_table(estimates_table(summary), out / "estimates.csv", header)
    write_table(scaled_cpo_table(check, data), out / "scaled_cpo.csv", header)
    write_table(curve_table(summary), out / "curves.csv", header)
    write_table(acf_table(diagnostics), out / "acf.csv", header)
    write_json(
        {
            "summary": summary_to_dict(summary),
            "model_check": check_to_dict(check),
            "diagnostics": diagnostics_to_dict(diagnostics),
            "config": config.model_dump(mode="json"),
        },
        out / "summary.json",
        digest,
    )
    (out / "report.txt").write_text(f"config_hash: {digest}\n\n" + text_report(summary, check, diagnostics))
    _write_timing(out, chains, digest)
    logger.info("fit outputs written to %s", out)
    return out


def _write_timing(out: Path, chains, digest: str) -> None:
    """Wall-clock figures live apart from the reproducible outputs"""
    timing = {f"chain_{c.chain_id}": {"seconds_per_iteration": c.seconds_per_iteration} for c in chains}
    timing["config_hash"] = digest
    for chain in chains:
        record_iteration_cost(chain.seconds_per_iteration)
    with open(out / "timing.json", "w") as f:
        json.dump(timing, f, indent=2, sort_keys=True)
    write_metrics(out / "timing.prom")


def cmd_simulate(config: SimulateConfig, digest: str) -> Path:
    scenario = config.scenario
    simulated = simulate_replicate(scenario, config.rep_index)
    data = simulated.dataset
    frame = pd.DataFrame({"u": data.u, "delta": data.delta, "x1": data.X[:, 1], "x2": data.X[:, 2]})
    header = hash_header(
        digest,
        *provenance_lines(
            {
                "seed": scenario.seed,
                "rep_index": config.rep_index,
                "theta_true": scenario.theta_true,
                "gompertz": scenario.gompertz.model_dump(),
                "scheme": scenario.scheme.model_dump(),
                "knots": simulated.knots,
            }
        ),
    )
    path = write_table(frame, output_dir(config) / f"simulated_rep{config.rep_index}.csv", header)
    logger.info("wrote %d simulated subjects to %s", data.n, path)
    return path


def cmd_study(config: StudyConfig, digest: str, workers: int) -> Path:
    report = replication_study(config.scenario, workers=workers)
    out = output_dir(config)
    header = hash_header(digest, f"replicates: {report.n_replicates}", f"failed: {report.failed}")
    write_table(study_table(report), out / "study.csv", header)
    write_table(replicate_table(report), out / "replicates.csv", header)
    write_json({"study": study_to_dict(report), "config": config.model_dump(mode="json")}, out / "study.json", digest)
    logger.info("study outputs written to %s", out)
    if report.failed:
        raise StudyFailureError(report.failed, report.n_replicates, report)
    return out


def cmd_diagnose(config: DiagnoseConfig, digest: str) -> Path:
    chains = [read_chain(resolve_data_path(path)) for path in config.chains]
    report = diagnose(chains, config.max_lag)
    out = output_dir(config)
    header = hash_header(digest)
    write_table(acf_table(report), out / "acf.csv", header)
    for index, chain in enumerate(chains):
        export_trace(chain, out / f"trace_{index}.csv", header)
    write_json({"diagnostics": diagnostics_to_dict(report)}, out / "diagnostics.json", digest)
    return out


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or settings.LOG_LEVEL)
    try:
        raw = apply_overrides(args.command, load_yaml_config(args.config), args)
        config = validate_config(raw, RECORDS[args.command])
        digest = config_hash(config)
        if args.command == "fit":
            cmd_fit(config, digest, args.workers or settings.WORKERS)
        elif args.command == "simulate":
            cmd_simulate(config, digest)
        elif args.command == "study":
            cmd_study(config, digest, args.workers or config.workers or settings.WORKERS)
        else:
            cmd_diagnose(config, digest)
    except PromocureError as e:
        logger.error("%s", e)
        return e.exit_code
    except yaml.YAMLError as e:
        logger.error("cannot parse %s: %s", args.config, e)
        return 1
    except np.linalg.LinAlgError as e:
        logger.error("linear algebra failure: %s", e)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
