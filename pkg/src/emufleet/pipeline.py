"""End-to-end experiment: train both networks, tabulate fitting errors, forecast,
and replay the published CNN checkpoint.

Published reference values are kept here as plain constants so the report can
print them next to freshly trained results.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import bpnn, cnn
from .cnn import CnnParams, TrainConfig
from .data import (
    HOLDOUT_FLEET_SIZE,
    HOLDOUT_YEAR,
    NormPolicy,
    YearRecord,
    fit_normalization,
    forecast_records,
    training_records,
)
from .errors import ParseError, ValidationError
from .textio import fmt_real

TRAIN_YEARS = tuple(range(2007, 2016))
PUBLISHED_ACTUAL = (105, 176, 285, 551, 849, 1083, 1308, 1712, 2206)
PUBLISHED_CNN_FITTED = (-2, 121, 275, 522, 865, 1106, 1371, 1793, 2229)
PUBLISHED_BPNN_FITTED = (-49, 38, 378, 719, 877, 1270, 1318, 1716, 1974)
PUBLISHED_CNN_FORECAST = {2016: 2518, 2017: 2776, 2018: 2973, 2019: 3118, 2020: 3219}
PUBLISHED_BPNN_FORECAST = {2016: 2204, 2017: 2543, 2018: 2676, 2019: 2675, 2020: 2650}
PUBLISHED_CNN_FINAL_MSE = 0.000578
PUBLISHED_BPNN_FINAL_MSE = 0.0042606
PUBLISHED_CNN_ABS_PCT_SUM = 156.51
PUBLISHED_BPNN_ABS_PCT_SUM = 320.28


@dataclass(frozen=True)
class ErrorRow:
    year: int
    actual: int
    fitted: int
    error: int
    error_pct: float


def error_table(actual: Sequence[int], fitted: Sequence[int],
                years: Sequence[int] | None = None) -> list[ErrorRow]:
    """Per-year fitted - actual, and that error as a percentage of actual."""
    if len(actual) != len(fitted):
        raise ValidationError(f"{len(actual)} actual values but {len(fitted)} fitted values")
    if years is None:
        years = range(len(actual))
    rows = []
    for y, a, f in zip(years, actual, fitted):
        if a == 0:
            raise ValidationError(f"year {y}: actual value is zero, percentage undefined")
        err = f - a
        rows.append(ErrorRow(int(y), a, f, err, 100.0 * err / a))
    return rows


def abs_pct_sum(rows: Sequence[ErrorRow]) -> float:
    return float(sum(abs(r.error_pct) for r in rows))


@dataclass(frozen=True)
class ExperimentConfig:
    policy: NormPolicy = NormPolicy.TRAIN_YEARS
    epochs: int = 100
    learning_rate: float = 0.5
    cnn_seed: int = 0
    bpnn_seed: int = 0
    init_scale: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "policy", NormPolicy.parse(self.policy))
        self.train_config("cnn")  # validates numeric fields

    def train_config(self, net: str) -> TrainConfig:
        seed = self.cnn_seed if net == "cnn" else self.bpnn_seed
        return TrainConfig(self.learning_rate, self.epochs, seed, self.init_scale)


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    config: ExperimentConfig
    cnn_trace: np.ndarray
    bpnn_trace: np.ndarray
    cnn_rows: list
    bpnn_rows: list
    cnn_forecast: list
    bpnn_forecast: list
    cnn_abs_pct_sum: float
    bpnn_abs_pct_sum: float
    # (policy, convention, year, fitted, reference, deviation) from replaying the published parameters
    replay_rows: list = field(default_factory=list)
    replay_best_policy: str = ""
    cnn_params: CnnParams | None = field(default=None, compare=False)
    bpnn_params: bpnn.MlpParams | None = field(default=None, compare=False)

    def holdout(self, which="cnn") -> tuple[int, int] | None:
        """(predicted, actual) for the held-out year, if it was forecast."""
        fc = dict(self.cnn_forecast if which == "cnn" else self.bpnn_forecast)
        if HOLDOUT_YEAR not in fc:
            return None
        return fc[HOLDOUT_YEAR], HOLDOUT_FLEET_SIZE


def run_experiment(records: Sequence[YearRecord], config: ExperimentConfig = ExperimentConfig()) -> ExperimentReport:
    train = training_records(records)
    future = forecast_records(records)
    if len(train) < 2:
        raise ValidationError("dataset needs at least two years with a known fleet size")
    spec = fit_normalization(records, config.policy)
    actual = [r.fleet_size for r in train]
    years = [r.year for r in train]

    cnn_params, cnn_trace = cnn.train_cnn(cnn.make_samples(records, spec), config.train_config("cnn"))
    mlp_params, mlp_trace = bpnn.train_bpnn(bpnn.make_mlp_samples(records, spec), config.train_config("bpnn"))

    cnn_fit = [t for _, t in cnn.cnn_predict(cnn_params, train, spec)]
    mlp_fit = [t for _, t in bpnn.mlp_predict(mlp_params, train, spec)]
    cnn_rows = error_table(actual, cnn_fit, years)
    mlp_rows = error_table(actual, mlp_fit, years)
    replay_rows, best = [], ""
    if tuple(years) == TRAIN_YEARS:
        results, best_policy = replay_all(cnn.table4_params(), records)
        replay_rows = replay_table_rows(results)
        best = best_policy.value
    return ExperimentReport(
        config=config,
        cnn_trace=cnn_trace,
        bpnn_trace=mlp_trace,
        cnn_rows=cnn_rows,
        bpnn_rows=mlp_rows,
        cnn_forecast=cnn.cnn_predict(cnn_params, future, spec),
        bpnn_forecast=bpnn.mlp_predict(mlp_params, future, spec),
        cnn_abs_pct_sum=abs_pct_sum(cnn_rows),
        bpnn_abs_pct_sum=abs_pct_sum(mlp_rows),
        replay_rows=replay_rows,
        replay_best_policy=best,
        cnn_params=cnn_params,
        bpnn_params=mlp_params,
    )


# -- report serialization -----------------------------------------------------

def _section(w, name, header, rows):
    w.writerow([f"# {name}"])
    w.writerow(header)
    w.writerows(rows)


def report_to_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    c = report.config
    _section(w, "config", ["key", "value"], [
        ["policy", c.policy.value],
        ["epochs", c.epochs],
        ["learning_rate", fmt_real(c.learning_rate)],
        ["cnn_seed", c.cnn_seed],
        ["bpnn_seed", c.bpnn_seed],
        ["init_scale", fmt_real(c.init_scale)],
    ])
    for name, trace in (("trace_cnn", report.cnn_trace), ("trace_bpnn", report.bpnn_trace)):
        _section(w, name, ["epoch", "mse"], [[i + 1, fmt_real(v)] for i, v in enumerate(trace)])
    for name, rows in (("table5", report.cnn_rows), ("table6", report.bpnn_rows)):
        _section(w, name, ["year", "actual", "fitted", "error", "error_pct"],
                 [[r.year, r.actual, r.fitted, r.error, fmt_real(r.error_pct)] for r in rows])
    bp = dict(report.bpnn_forecast)
    _section(w, "forecast", ["year", "cnn", "bpnn"],
             [[y, t, bp.get(y, "")] for y, t in report.cnn_forecast])
    _section(w, "summary", ["key", "value"], [
        ["cnn_abs_pct_sum", fmt_real(report.cnn_abs_pct_sum)],
        ["bpnn_abs_pct_sum", fmt_real(report.bpnn_abs_pct_sum)],
        ["cnn_final_mse", fmt_real(report.cnn_trace[-1]) if len(report.cnn_trace) else ""],
        ["bpnn_final_mse", fmt_real(report.bpnn_trace[-1]) if len(report.bpnn_trace) else ""],
        ["replay_best_policy", report.replay_best_policy],
    ])
    _section(w, "replay", ["policy", "convention", "year", "fitted", "reference", "deviation"],
             [list(r) for r in report.replay_rows])
    ref_rows = [[y, PUBLISHED_CNN_FORECAST[y], PUBLISHED_BPNN_FORECAST[y],
                 HOLDOUT_FLEET_SIZE if y == HOLDOUT_YEAR else ""]
                for y in sorted(PUBLISHED_CNN_FORECAST)]
    _section(w, "reference", ["year", "cnn", "bpnn", "actual"], ref_rows)
    return buf.getvalue()


def _read_sections(text):
    sections, current = {}, None
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row:
            continue
        if len(row) == 1 and row[0].startswith("# "):
            current = row[0][2:].strip()
            sections[current] = {"header": None, "rows": [], "line": lineno}
        elif current is None:
            raise ParseError("data before first section marker", lineno)
        elif sections[current]["header"] is None:
            sections[current]["header"] = row
        else:
            sections[current]["rows"].append(row)
    return sections


def report_from_csv(text: str) -> ExperimentReport:
    sec = _read_sections(text)
    for name in ("config", "trace_cnn", "trace_bpnn", "table5", "table6", "forecast", "summary"):
        if name not in sec:
            raise ParseError(f"report is missing section {name!r}")
    cfg = dict(sec["config"]["rows"])
    config = ExperimentConfig(
        policy=cfg["policy"],
        epochs=int(cfg["epochs"]),
        learning_rate=float(cfg["learning_rate"]),
        cnn_seed=int(cfg["cnn_seed"]),
        bpnn_seed=int(cfg["bpnn_seed"]),
        init_scale=float(cfg["init_scale"]),
    )

    def trace(name):
        return np.array([float(v) for _, v in sec[name]["rows"]])

    def rows(name):
        return [ErrorRow(int(y), int(a), int(f), int(e), float(p)) for y, a, f, e, p in sec[name]["rows"]]

    fc = sec["forecast"]["rows"]
    summary = dict(sec["summary"]["rows"])
    return ExperimentReport(
        config=config,
        cnn_trace=trace("trace_cnn"),
        bpnn_trace=trace("trace_bpnn"),
        cnn_rows=rows("table5"),
        bpnn_rows=rows("table6"),
        cnn_forecast=[(int(y), int(c)) for y, c, _ in fc],
        bpnn_forecast=[(int(y), int(b)) for y, _, b in fc if b != ""],
        cnn_abs_pct_sum=float(summary["cnn_abs_pct_sum"]),
        bpnn_abs_pct_sum=float(summary["bpnn_abs_pct_sum"]),
        replay_rows=[(p, c, int(y), int(f), int(r), int(d)) for p, c, y, f, r, d in sec.get("replay", {"rows": []})["rows"]],
        replay_best_policy=summary.get("replay_best_policy", ""),
    )


def _error_table_md(title, rows):
    lines = [f"### {title}", ""]
    lines.append("| Year | " + " | ".join(str(r.year) for r in rows) + " |")
    lines.append("|---" * (len(rows) + 1) + "|")
    lines.append("| Actual value | " + " | ".join(str(r.actual) for r in rows) + " |")
    lines.append("| Fitted value | " + " | ".join(str(r.fitted) for r in rows) + " |")
    lines.append("| Error | " + " | ".join(str(r.error) for r in rows) + " |")
    lines.append("| Error percentage | " + " | ".join(f"{r.error_pct:.2f}%" for r in rows) + " |")
    lines.append("")
    lines.append(f"Sum of absolute error percentages: {abs_pct_sum(rows):.2f}%")
    lines.append("")
    return lines


def report_to_markdown(report: ExperimentReport) -> str:
    c = report.config
    out = [
        "# Fleet-size experiment report",
        "",
        f"Normalization policy `{c.policy.value}`, {c.epochs} epochs, learning rate {c.learning_rate:g}, "
        f"CNN seed {c.cnn_seed}, BPNN seed {c.bpnn_seed}, init scale {c.init_scale:g}.",
        "",
        "## Training MSE (normalized units)",
        "",
        "| Network | Final MSE | Published final MSE |",
        "|---|---|---|",
        f"| CNN (per-sample SGD) | {report.cnn_trace[-1]:.6g} | {PUBLISHED_CNN_FINAL_MSE:g} |"
        if len(report.cnn_trace) else "| CNN (per-sample SGD) | n/a | |",
        f"| BPNN (batch GD) | {report.bpnn_trace[-1]:.6g} | {PUBLISHED_BPNN_FINAL_MSE:g} |"
        if len(report.bpnn_trace) else "| BPNN (batch GD) | n/a | |",
        "",
        "## Fitting error, training years",
        "",
    ]
    out += _error_table_md("CNN", report.cnn_rows)
    out.append(f"Published CNN sum: {PUBLISHED_CNN_ABS_PCT_SUM:.2f}%")
    out.append("")
    out += _error_table_md("BPNN", report.bpnn_rows)
    out.append(f"Published BPNN sum: {PUBLISHED_BPNN_ABS_PCT_SUM:.2f}%")
    out += ["", "## Forecast (trains)", "",
            "| Year | CNN | BPNN | Published CNN | Published BPNN | Actual |", "|---|---|---|---|---|---|"]
    bp = dict(report.bpnn_forecast)
    for y, t in report.cnn_forecast:
        actual = HOLDOUT_FLEET_SIZE if y == HOLDOUT_YEAR else ""
        out.append(f"| {y} | {t} | {bp.get(y, '')} | {PUBLISHED_CNN_FORECAST.get(y, '')} | "
                   f"{PUBLISHED_BPNN_FORECAST.get(y, '')} | {actual} |")
    out.append("")
    for name in ("cnn", "bpnn"):
        h = report.holdout(name)
        if h is not None:
            pred, actual = h
            out.append(f"{name.upper()} {HOLDOUT_YEAR} holdout: predicted {pred}, actual {actual}, "
                       f"error {pred - actual} ({100.0 * (pred - actual) / actual:.2f}%).")
    out.append("")
    if report.replay_rows:
        out += ["## Replay of the published parameters", "",
                "Fitted trains from the bundled published checkpoint, minus the published fitted row.", "",
                "| Policy | Convention | " + " | ".join(str(y) for y in TRAIN_YEARS) + " | Sum abs |",
                "|---" * (len(TRAIN_YEARS) + 3) + "|"]
        groups = {}
        for pol, conv, _, _, _, d in report.replay_rows:
            groups.setdefault((pol, conv), []).append(d)
        for (pol, conv), devs in groups.items():
            out.append(f"| {pol} | {conv} | " + " | ".join(str(d) for d in devs)
                       + f" | {sum(abs(d) for d in devs)} |")
        out += ["", f"Better-matching policy: `{report.replay_best_policy}`.", ""]
    return "\n".join(out)


# -- published checkpoint replay ----------------------------------------------

def flip_kernels(params: CnnParams) -> CnnParams:
    """Rotate every kernel by 180 degrees (true convolution instead of cross-correlation)."""
    return replace(params, kernels=params.kernels[:, ::-1, ::-1])


@dataclass(frozen=True)
class ReplayResult:
    policy: NormPolicy
    convention: str  # "correlation" or "convolution"
    rows: list
    deviations: list  # per-year replayed fitted minus reference fitted
    total_abs_deviation: int
    forecast: list = field(default_factory=list)  # (year, trains) for years without a fleet size
    forecast_deviations: list = field(default_factory=list)  # against PUBLISHED_CNN_FORECAST


def replay_table4(params: CnnParams, records: Sequence[YearRecord], policy=NormPolicy.TRAIN_YEARS,
                  convention="correlation", reference_fitted: Sequence[int] = PUBLISHED_CNN_FITTED) -> ReplayResult:
    """Forward the given checkpoint over the training years and compare its fitted
    trains with ``reference_fitted``; forecast years are replayed too."""
    policy = NormPolicy.parse(policy)
    if convention not in ("correlation", "convolution"):
        raise ValidationError(f"unknown convention {convention!r}")
    spec = fit_normalization(records, policy)
    train = training_records(records)
    if len(reference_fitted) != len(train):
        raise ValidationError(f"{len(reference_fitted)} reference values for {len(train)} training years")
    p = flip_kernels(params) if convention == "convolution" else params
    fitted = [t for _, t in cnn.cnn_predict(p, train, spec)]
    rows = error_table([r.fleet_size for r in train], fitted, [r.year for r in train])
    dev = [f - ref for f, ref in zip(fitted, reference_fitted)]
    fc = cnn.cnn_predict(p, forecast_records(records), spec)
    fc_dev = [(y, t - PUBLISHED_CNN_FORECAST[y]) for y, t in fc if y in PUBLISHED_CNN_FORECAST]
    return ReplayResult(policy, convention, rows, dev, int(sum(abs(d) for d in dev)), fc, fc_dev)


def replay_all(params: CnnParams, records: Sequence[YearRecord],
               reference_fitted: Sequence[int] = PUBLISHED_CNN_FITTED):
    """Replay under both policies and both conventions.

    Returns ``(results, best_policy)`` where ``best_policy`` has the smaller summed
    absolute deviation under the cross-correlation convention (ties go to all-years,
    the first one tried).
    """
    results = [
        replay_table4(params, records, pol, conv, reference_fitted)
        for pol in (NormPolicy.ALL_YEARS, NormPolicy.TRAIN_YEARS)
        for conv in ("correlation", "convolution")
    ]
    corr = [r for r in results if r.convention == "correlation"]
    best = min(corr, key=lambda r: r.total_abs_deviation).policy
    return results, best


def replay_table_rows(results, reference_fitted=PUBLISHED_CNN_FITTED) -> list[tuple]:
    """Flatten replay results to (policy, convention, year, fitted, reference, deviation)."""
    return [
        (res.policy.value, res.convention, row.year, row.fitted, ref, d)
        for res in results
        for row, ref, d in zip(res.rows, reference_fitted, res.deviations)
    ]


def replay_to_text(results, best_policy, reference_fitted=PUBLISHED_CNN_FITTED) -> str:
    lines = ["policy,convention,year,fitted,reference,deviation"]
    lines += [",".join(str(v) for v in r) for r in replay_table_rows(results, reference_fitted)]
    lines.append("")
    lines.append("policy,convention,year,forecast,reference,deviation")
    for res in results:
        for (y, t), (_, d) in zip(res.forecast, res.forecast_deviations):
            lines.append(f"{res.policy.value},{res.convention},{y},{t},{PUBLISHED_CNN_FORECAST[y]},{d}")
    lines.append("")
    lines.append("policy,convention,total_abs_deviation")
    for res in results:
        lines.append(f"{res.policy.value},{res.convention},{res.total_abs_deviation}")
    lines.append("")
    lines.append(f"best_policy,{best_policy.value}")
    return "\n".join(lines) + "\n"


def seed_sweep(records, seeds, policy=NormPolicy.TRAIN_YEARS, epochs=100, learning_rate=0.5):
    """Final training MSE of both networks for each seed: {"cnn": array, "bpnn": array}."""
    spec = fit_normalization(records, policy)
    cs = cnn.make_samples(records, spec)
    ms = bpnn.make_mlp_samples(records, spec)
    out = {"cnn": [], "bpnn": []}
    for s in seeds:
        cfg = TrainConfig(learning_rate, epochs, s)
        out["cnn"].append(cnn.train_cnn(cs, cfg)[1][-1])
        out["bpnn"].append(bpnn.train_bpnn(ms, cfg)[1][-1])
    return {k: np.array(v) for k, v in out.items()}
