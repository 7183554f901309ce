"""
Serialization of fit, check, diagnostics and study results: JSON documents,
delimited tables and the one-page text report.
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd

from promocure.core.dataset import CurrentStatusDataset
from promocure.core.diagnostics import DiagnosticsReport
from promocure.core.model_checking import OUTLIER_THRESHOLD, CheckReport
from promocure.core.posterior_summary import FitSummary
from promocure.core.simulation import StudyReport

ESTIMATE_COLUMNS = ["Parameters", "Estimates", "Posterior standard deviations", "BCI"]
STUDY_COLUMNS = ["Parameter", "True", "Mean", "Abs. bias", "EPSD", "SSD", "CP"]


def jsonable(value: Any) -> Any:
    """Plain Python structure with non-finite floats mapped to None"""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value) if np.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(payload: Dict[str, Any], path: Union[str, Path], config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"config_hash": config_hash, **jsonable(payload)}
    with open(path, "w") as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def hash_header(config_hash: str, *extra: str) -> list:
    return [f"config_hash: {config_hash}", *extra]


def summary_to_dict(summary: FitSummary) -> Dict[str, Any]:
    k1 = summary.theta_mean.size
    payload = {
        "m0": summary.m0,
        "level": summary.level,
        "acceptance_rate": summary.acceptance_rate,
        "parameters": {
            name: {
                "mean": mean,
                "sd": sd,
                "ci": list(ci),
            }
            for name, mean, sd, ci in zip(
                summary.names,
                np.concatenate([summary.theta_mean, summary.eta_mean]),
                np.concatenate([summary.theta_sd, summary.eta_sd]),
                np.vstack([summary.theta_ci, summary.eta_ci]),
            )
        },
        "knots": summary.knots,
        "F_tilde": summary.F_tilde,
        "profiles": {
            name: {"x": curve.x, "survival": curve.survival, "cure": curve.cure}
            for name, curve in summary.curves.items()
        },
        "n_theta": k1,
    }
    if summary.F_functional is not None:
        payload["F_functional_mean"] = summary.F_functional
    return payload


def check_to_dict(check: CheckReport) -> Dict[str, Any]:
    return {
        "lpml": check.lpml,
        "dic": check.dic,
        "dbar": check.dbar,
        "dhat": check.dhat,
        "p_d": check.p_d,
        "outlier_threshold": OUTLIER_THRESHOLD,
        "outlier_count": check.outlier_count,
        "collapsed_cpo": check.collapsed_count,
    }


def diagnostics_to_dict(report: DiagnosticsReport) -> Dict[str, Any]:
    return {
        "n_chains": report.n_chains,
        "m0": report.m0,
        "acceptance_rate": report.acceptance_rate,
        "ess": dict(zip(report.names, report.ess)),
        "psrf": None if report.psrf is None else dict(zip(report.names, report.psrf)),
        "psrf_mode": report.psrf_mode,
        "zero_variance": [n for n, flag in zip(report.names, report.zero_variance) if flag],
    }


def estimates_table(summary: FitSummary, digits: int = 4) -> pd.DataFrame:
    """Coefficient rows in the layout Parameters | Estimates | Posterior standard deviations | BCI"""
    k1 = summary.theta_mean.size
    rows = []
    for j in range(k1):
        lower, upper = summary.theta_ci[j]
        rows.append(
            [
                summary.names[j],
                round(float(summary.theta_mean[j]), digits),
                round(float(summary.theta_sd[j]), digits),
                f"({lower:.{digits}f}, {upper:.{digits}f})",
            ]
        )
    return pd.DataFrame(rows, columns=ESTIMATE_COLUMNS)


def text_report(
    summary: FitSummary,
    check: Optional[CheckReport] = None,
    diagnostics: Optional[DiagnosticsReport] = None,
    title: str = "Promotion time cure model fit",
) -> str:
    lines = [title, "=" * len(title), ""]
    lines.append(f"Retained draws: {summary.m0}   acceptance rate: {summary.acceptance_rate:.4f}")
    lines.append(f"Credible level: {summary.level:.2f}")
    lines.append("")
    lines.append(estimates_table(summary).to_string(index=False))
    if summary.curves:
        lines.append("")
        lines.append("Cure rates")
        for name, curve in summary.curves.items():
            lines.append(f"  {name}: {curve.cure:.4f}")
    if check is not None:
        lines.append("")
        lines.append(f"LPML: {check.lpml:.2f}")
        lines.append(f"DIC:  {check.dic:.2f}  (mean deviance {check.dbar:.2f}, p_D {check.p_d:.2f})")
        lines.append(f"Scaled CPO below {OUTLIER_THRESHOLD}: {check.outlier_count}")
    if diagnostics is not None:
        lines.append("")
        lines.append(f"Chains: {diagnostics.n_chains}")
        k1 = summary.theta_mean.size
        ess = ", ".join(f"{n} {v:.0f}" for n, v in zip(diagnostics.names[:k1], diagnostics.ess[:k1]))
        lines.append(f"ESS: {ess}")
        if diagnostics.psrf is not None:
            psrf = ", ".join(f"{n} {v:.3f}" for n, v in zip(diagnostics.names[:k1], diagnostics.psrf[:k1]))
            lines.append(f"PSRF ({diagnostics.psrf_mode}): {psrf}")
    return "\n".join(lines) + "\n"


def scaled_cpo_table(check: CheckReport, data: CurrentStatusDataset) -> pd.DataFrame:
    return pd.DataFrame(
        {"index": np.arange(1, data.n + 1), "u": data.u, "value": check.scaled_cpo}
    )


def curve_table(summary: FitSummary) -> pd.DataFrame:
    """F~ and every profile's survival curve as (curve, knot, value)"""
    frames = [pd.DataFrame({"curve": "F_tilde", "knot": summary.knots, "value": summary.F_tilde})]
    for name, curve in summary.curves.items():
        frames.append(pd.DataFrame({"curve": f"survival:{name}", "knot": summary.knots, "value": curve.survival}))
    if summary.F_functional is not None:
        frames.append(pd.DataFrame({"curve": "F_functional_mean", "knot": summary.knots, "value": summary.F_functional}))
    return pd.concat(frames, ignore_index=True)


def acf_table(report: DiagnosticsReport) -> pd.DataFrame:
    lags = np.arange(report.acf.shape[1])
    return pd.DataFrame(
        {
            "parameter": np.repeat(report.names, lags.size),
            "lag": np.tile(lags, len(report.names)),
            "acf": report.acf.ravel(),
        }
    )


def study_table(report: StudyReport, digits: int = 4) -> pd.DataFrame:
    """Tables of True, Mean, Abs. bias, EPSD, SSD, CP per coefficient, then a MaxMSE row"""
    rows = [
        [name, *np.round([t, m, b, e, s, c], digits)]
        for name, t, m, b, e, s, c in zip(
            report.names, report.true, report.mean, report.abs_bias, report.epsd, report.ssd, report.cp
        )
    ]
    rows.append(["MaxMSE", np.nan, round(report.max_mse, digits), np.nan, np.nan, np.nan, np.nan])
    return pd.DataFrame(rows, columns=STUDY_COLUMNS)


def replicate_table(report: StudyReport) -> pd.DataFrame:
    """One row per replicate with posterior means, sds, interval bounds and F~ at the knots"""
    rows = []
    for result in report.results:
        row: Dict[str, Any] = {"rep_index": result.rep_index, "error": result.error or ""}
        if not result.failed:
            for j, name in enumerate(report.names):
                row[f"{name}_mean"] = result.theta_mean[j]
                row[f"{name}_sd"] = result.theta_sd[j]
                row[f"{name}_lower"] = result.theta_ci[j, 0]
                row[f"{name}_upper"] = result.theta_ci[j, 1]
            for l, (knot, f_tilde, f_true) in enumerate(zip(result.knots, result.F_tilde, result.F_true), start=1):
                row[f"knot_{l}"] = knot
                row[f"F_tilde_{l}"] = f_tilde
                row[f"F_true_{l}"] = f_true
            row["acceptance_rate"] = result.acceptance_rate
        rows.append(row)
    return pd.DataFrame(rows)


def study_to_dict(report: StudyReport) -> Dict[str, Any]:
    return {
        "replicates": report.n_replicates,
        "failed": report.failed,
        "failures": {r.rep_index: r.error for r in report.failures},
        "coefficients": {
            name: {"true": t, "mean": m, "abs_bias": b, "epsd": e, "ssd": s, "cp": c}
            for name, t, m, b, e, s, c in zip(
                report.names, report.true, report.mean, report.abs_bias, report.epsd, report.ssd, report.cp
            )
        },
        "mse_by_knot": report.mse_by_knot,
        "max_mse": report.max_mse,
    }


def provenance_lines(items: Dict[str, Any]) -> Sequence[str]:
    return [f"{key}: {json.dumps(jsonable(value))}" for key, value in items.items()]
