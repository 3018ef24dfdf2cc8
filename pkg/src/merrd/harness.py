"""Experiment configuration, the verification battery and sweep orchestration."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bounds import AsymptoticSpec, BOUND_TOL, bounds_report, metric_violations
from .core import CapExceededError, DiscreteModel, check_model, load_model
from .info import mi_w_zn
from .instances import instance_from_json, load_instance
from .ratedist import RATE_TOL, RDProblem, check_theorem3, solve_Dn
from .risk import delta_n, is_quadratic_loss, mer_exact

CURVE_COLUMNS = ["kind", "n", "lambda", "rate_nats", "distortion", "converged", "gap"]
KINDS = ("lower", "exact_n", "upper_n")
SANDWICH_TOL = 1e-5
ENDPOINT_TOL = 1e-5
UPPER_GAP_TOL = 1e-6
DEFAULT_RATES = 8


@dataclass
class ExperimentConfig:
    """Everything one verification run needs.

    Exactly one model source is set: ``model`` (inline JSON), ``model_file``,
    ``instance`` (inline instance spec) or ``instance_file``.
    """

    n_list: list[int]
    model: dict | None = None
    model_file: str | None = None
    instance: dict | None = None
    instance_file: str | None = None
    curves: list[str] = field(default_factory=lambda: list(KINDS))
    lambda_grid: list[float] | None = None
    rate_grid: list[float] | None = None
    chaining: bool | None = None
    asymptotic: bool = True
    upper_gap: bool = True
    convergence: bool = True
    seed: int = 0
    cap_cells: int | None = None
    tol: float = BOUND_TOL
    sandwich_tol: float = SANDWICH_TOL
    out: str | None = None
    name: str = ""

    def __post_init__(self):
        sources = [s for s in (self.model, self.model_file, self.instance, self.instance_file) if s is not None]
        if len(sources) != 1:
            raise ValueError("set exactly one of model, model_file, instance, instance_file")
        if not self.n_list:
            raise ValueError("n_list must be nonempty")
        if any(n < 0 for n in self.n_list) or list(self.n_list) != sorted(set(self.n_list)):
            raise ValueError("n_list must be ascending, distinct and nonnegative")
        if not (self.tol > 0 and self.sandwich_tol > 0):
            raise ValueError("tolerances must be > 0")
        bad = sorted(set(self.curves) - set(KINDS))
        if bad:
            raise ValueError(f"unknown curve kinds {bad}")
        if self.rate_grid is not None and any(r < 0 for r in self.rate_grid):
            raise ValueError("rates must be >= 0")

    @classmethod
    def from_json(cls, data: dict, base: Path | None = None) -> "ExperimentConfig":
        data = dict(data)
        for key in ("model_file", "instance_file"):
            if data.get(key) and base is not None and not Path(data[key]).is_absolute():
                data[key] = str(base / data[key])
        return cls(**data)

    def load(self) -> tuple[DiscreteModel, AsymptoticSpec | None]:
        if self.model is not None:
            return check_model(DiscreteModel.from_json(self.model)), None
        if self.model_file is not None:
            return load_model(self.model_file), None
        if self.instance is not None:
            return instance_from_json(self.instance)
        return load_instance(self.instance_file)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return ExperimentConfig.from_json(json.loads(path.read_text()), base=path.parent)


# --- helpers ----------------------------------------------------------------------


def hard(name: str, holds: bool, slack: float, **detail) -> dict:
    return {"name": name, "hard": True, "holds": bool(holds), "slack": float(slack), **detail}


def soft(name: str, holds: bool, slack: float, **detail) -> dict:
    return {"name": name, "hard": False, "holds": bool(holds), "slack": float(slack), **detail}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def curve_rows(curve, n) -> list[dict]:
    return [{"kind": curve.kind, "n": "" if n is None else n, "lambda": p.lam, "rate_nats": p.rate,
             "distortion": p.distortion, "converged": p.converged, "gap": p.gap} for p in curve.points]


def curves_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CURVE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def default_rates(max_rate: float, count: int = DEFAULT_RATES) -> list[float]:
    """Evenly spaced rates from 0 to just past ``max_rate``."""
    top = max(max_rate, 1e-3) * 1.1
    return np.linspace(0.0, top, count).tolist()


def loglog_slope(ns, values) -> float:
    ns, values = np.asarray(ns, float), np.asarray(values, float)
    keep = (ns > 0) & (values > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(ns[keep]), np.log(values[keep]), 1)[0])


# --- the battery ------------------------------------------------------------------


def run_cell(model: DiscreteModel, n: int, cfg: ExperimentConfig, asym: AsymptoticSpec | None,
             lower: RDProblem | None) -> dict:
    """Every check at a single sample size."""
    cell = {"n": n, "verdicts": [], "errors": [], "curve_rows": []}
    try:
        rep = bounds_report(model, n, spec=asym if cfg.asymptotic else None, use_chaining=cfg.chaining,
                            cap=cfg.cap_cells, tol=cfg.tol)
    except CapExceededError:
        raise
    except Exception as exc:  # a failing sub-task is recorded, the rest still runs
        cell["errors"].append(f"bounds: {exc}")
        rep = None
    if rep is not None:
        cell["bounds"] = rep.to_json()
        cell["verdicts"] += [{"name": v.name, "hard": v.hard, "holds": v.holds, "slack": v.slack}
                             for v in rep.verdicts]
    if lower is None or not cfg.curves:
        return cell
    prob = RDProblem(model, n, cap=cfg.cap_cells)
    for kind in cfg.curves:
        if kind == "lower":
            continue
        cell["curve_rows"] += curve_rows(prob.curve(kind, cfg.lambda_grid), n)
    mi = mi_w_zn(model, n, law=prob.law).value
    rates = cfg.rate_grid if cfg.rate_grid is not None else default_rates(mi)
    rows = []
    for r in rates:
        dl = lower.lower_rate(r)[0].distortion
        dn = prob.exact_rate(r)[0].distortion
        du = prob.upper_rate(r)[0].distortion
        rows.append({"rate": r, "d_lower": dl, "d_exact": dn, "d_upper": du})
        eps = cfg.sandwich_tol
        cell["verdicts"].append(hard("sandwich_lower", dl - eps <= dn, dn - dl + eps, rate=r))
        cell["verdicts"].append(hard("sandwich_upper", dn <= du + eps, du + eps - dn, rate=r))
    cell["sandwich"] = rows
    sol = solve_Dn(model, n, mi, problem=prob)
    mer = mer_exact(model, n, law=prob.law).mer
    err = abs(sol.distortion - mer)
    cell["endpoint"] = {"rate": mi, "d_n": sol.distortion, "mer": mer, "error": err}
    cell["verdicts"].append(hard("full_rate_endpoint", err <= ENDPOINT_TOL, ENDPOINT_TOL - err))
    if cfg.upper_gap:
        gaps = [check_theorem3(model, n, r, tol=UPPER_GAP_TOL, problem=prob) for r in rates]
        cell["upper_gap"] = gaps
        for item in gaps:
            cell["verdicts"].append(hard("upper_gap_bound", item["holds"], item["slack"], rate=item["rate"]))
    if is_quadratic_loss(model):
        cell["delta_n"] = delta_n(model, n, law=prob.law)
        cell["max_gap_upper_lower"] = max(abs(row["d_upper"] - row["d_lower"]) for row in rows)
    return cell


def run(cfg: ExperimentConfig) -> dict:
    """Execute the battery, write ``curves.csv``, ``bounds.json`` and ``report.json``.

    Returns the report. Exact inequalities are hard verdicts and decide
    ``pass``; asymptotic and trend checks are soft.
    """
    model, asym = cfg.load()
    report = {"model": model.name or cfg.name, "n_list": list(cfg.n_list), "cells": [], "errors": []}
    rows: list[dict] = []
    lower = None
    if cfg.curves:
        try:
            lower = RDProblem(model)
        except CapExceededError as exc:
            report["errors"].append(f"rate-distortion skipped: {exc}")
    if lower is not None and "lower" in cfg.curves:
        rows += curve_rows(lower.curve("lower", cfg.lambda_grid), None)
    for n in cfg.n_list:
        cell = run_cell(model, n, cfg, asym, lower)
        rows += cell.pop("curve_rows")
        report["cells"].append(cell)
    report["summary"] = summarize(report, model, cfg)
    verdicts = [v for c in report["cells"] for v in c["verdicts"]] + report["summary"]["verdicts"]
    report["hard_failures"] = [v for v in verdicts if v["hard"] and not v["holds"]]
    report["soft_failures"] = [v for v in verdicts if not v["hard"] and not v["holds"]]
    report["pass"] = not report["hard_failures"]
    if cfg.out:
        out = Path(cfg.out)
        write_atomic(out / "curves.csv", curves_csv(rows))
        write_atomic(out / "bounds.json", dumps([c.get("bounds") for c in report["cells"]]))
        write_atomic(out / "report.json", dumps(report))
    return report


def summarize(report: dict, model: DiscreteModel, cfg: ExperimentConfig) -> dict:
    """Cross-``n`` checks: monotone MER, shrinking gaps and the log-log slope."""
    cells = [c for c in report["cells"] if "bounds" in c]
    ns = [c["n"] for c in cells]
    mers = [c["bounds"]["mer_exact"] for c in cells]
    out = {"verdicts": [], "mer": dict(zip(map(str, ns), mers))}
    for (n0, m0), (n1, m1) in zip(zip(ns, mers), zip(ns[1:], mers[1:])):
        out["verdicts"].append(hard("mer_monotone", m1 <= m0 + 1e-10, m0 + 1e-10 - m1, n=[n0, n1]))
    out["loglog_slope"] = loglog_slope(ns, mers)
    gaps = [c["max_gap_upper_lower"] for c in report["cells"] if "max_gap_upper_lower" in c]
    deltas = [c["delta_n"] for c in report["cells"] if "delta_n" in c]
    if cfg.convergence and len(gaps) > 1:
        out["verdicts"].append(soft("gap_shrinks", gaps[-1] < gaps[0], gaps[0] - gaps[-1]))
        out["verdicts"].append(soft("delta_shrinks", deltas[-1] < deltas[0], deltas[0] - deltas[-1]))
    return out


def human_summary(report: dict) -> str:
    lines = [f"model: {report['model']}"]
    for cell in report["cells"]:
        b = cell.get("bounds") or {}
        parts = [f"n={cell['n']}"]
        if b:
            parts.append(f"MER={b['mer_exact']:.6g}")
            parts.append(f"cond_ub={b['ub_conditional']:.6g}")
            parts.append(f"data_ub={b['ub_dataset']:.6g}" if math.isfinite(b["ub_dataset"]) else "data_ub=inf")
            if b.get("chaining_ub") is not None:
                parts.append(f"chain={b['chaining_ub']:.6g}")
        if "endpoint" in cell:
            parts.append(f"endpoint_err={cell['endpoint']['error']:.2e}")
        failed = [v["name"] for v in cell["verdicts"] if not v["holds"]]
        parts.append("ok" if not failed else "FAILED: " + ",".join(sorted(set(failed))))
        lines.append("  " + " ".join(parts))
        for err in cell["errors"]:
            lines.append(f"  error: {err}")
    for err in report.get("errors", []):
        lines.append(f"error: {err}")
    lines.append(f"hard failures: {len(report['hard_failures'])}  soft failures: {len(report['soft_failures'])}")
    lines.append("PASS" if report["pass"] else "FAIL")
    return "\n".join(lines)


# --- sweeps -----------------------------------------------------------------------


def _sweep_cell(args):
    cfg_dict, n, cell_dir = args
    cfg = ExperimentConfig(**{**cfg_dict, "n_list": [n], "out": None})
    report = run(cfg)
    path = Path(cell_dir) / f"n={n}.json"
    write_atomic(path, dumps(report))
    return str(path)


def sweep(cfg: ExperimentConfig, workers: int = 1) -> dict:
    """Run each sample size as an independent cell, then merge.

    Cells write their reports atomically under ``<out>/cells`` so an
    interrupted sweep leaves only complete files behind.
    """
    if not cfg.out:
        raise ValueError("sweep needs an output directory")
    out = Path(cfg.out)
    cell_dir = out / "cells"
    cell_dir.mkdir(parents=True, exist_ok=True)
    base = asdict(cfg)
    jobs = [(base, n, str(cell_dir)) for n in cfg.n_list]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(_sweep_cell, jobs))
    else:
        paths = [_sweep_cell(job) for job in jobs]
    cells = [json.loads(Path(p).read_text()) for p in paths]
    merged = {
        "model": cells[0]["model"],
        "n_list": list(cfg.n_list),
        "cells": [c["cells"][0] for c in cells],
        "hard_failures": [v for c in cells for v in c["hard_failures"]],
        "soft_failures": [v for c in cells for v in c["soft_failures"]],
        "errors": [e for c in cells for e in c["errors"]],
    }
    merged["pass"] = not merged["hard_failures"]
    write_atomic(out / "sweep.json", dumps(merged))
    return merged
