"""Command-line interface.

Exit codes: 0 success, 1 a hard inequality failed under ``verify`` or
``sweep`` (or validation found violations), 2 usage error, 3 an enumeration
cap was exceeded.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .core import CAP_ENV, CapExceededError, DiscreteModel, ModelError, validate_model
from .harness import (ExperimentConfig, curve_rows, curves_csv, dumps, human_summary, load_config,
                      run, sweep as run_sweep, write_atomic)

EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_CAP = 3

WHICH = {"lower": ["lower"], "exact": ["exact_n"], "upper": ["upper_n"], "all": ["lower", "exact_n", "upper_n"]}


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {text!r}")


def _floats(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}")


def _source(model: str | None, instance: str | None) -> dict:
    if (model is None) == (instance is None):
        raise click.UsageError("give exactly one of --model or --instance")
    return {"model_file": model} if model else {"instance_file": instance}


def _load(model: str | None, instance: str | None):
    src = _source(model, instance)
    try:
        return ExperimentConfig(n_list=[0], **src).load()
    except (OSError, json.JSONDecodeError, TypeError, KeyError) as exc:
        raise click.UsageError(f"cannot read input: {exc}")


def _emit(payload, out: str | None, filename: str, as_json: bool, summary: str) -> None:
    if out:
        write_atomic(Path(out) / filename, dumps(payload))
    click.echo(dumps(payload) if as_json else summary, nl=not as_json)


model_opt = click.option("--model", type=click.Path(exists=True, dir_okay=False), help="Model JSON file.")
instance_opt = click.option("--instance", type=click.Path(exists=True, dir_okay=False), help="Instance spec JSON file.")
n_opt = click.option("--n", "n_text", default="1", show_default=True, help="Sample size(s), comma-separated.")
out_opt = click.option("--out", type=click.Path(file_okay=False), help="Directory for machine-readable output.")
json_opt = click.option("--json", "as_json", is_flag=True, help="Print JSON instead of the human summary.")
cap_opt = click.option("--cap-cells", type=int, default=None, help=f"Enumeration cap (default: ${CAP_ENV} or 1e7).")
seed_opt = click.option("--seed", type=int, default=0, show_default=True)
tol_opt = click.option("--tol", type=float, default=1e-9, show_default=True, help="Tolerance for bound verdicts.")


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except CapExceededError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CAP)
        except ModelError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_USAGE)
        except ValueError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_USAGE)


@click.group(cls=_Group)
def main():
    """Minimum excess risk and rate-distortion toolkit."""


@main.command()
@model_opt
@instance_opt
def validate(model, instance):
    """Check a model file against every invariant."""
    _source(model, instance)
    if model:
        try:
            data = json.loads(Path(model).read_text())
            m = DiscreteModel.from_json(data)
        except (json.JSONDecodeError, ModelError, ValueError) as exc:
            click.echo(f"invalid: {exc}")
            sys.exit(EXIT_FAIL)
        problems = validate_model(m)
    else:
        m, _ = _load(None, instance)
        problems = validate_model(m)
    if problems:
        for p in problems:
            click.echo(f"violation: {p}")
        sys.exit(EXIT_FAIL)
    click.echo(f"ok: |W|={m.n_w} |X|={m.n_x} |Y|={m.n_y} b={m.b:g}")


@main.command()
@model_opt
@instance_opt
@n_opt
@click.option("--samples", type=int, default=None, help="Use Monte Carlo with this many draws.")
@seed_opt
@cap_opt
@out_opt
@json_opt
def mer(model, instance, n_text, samples, seed, cap_cells, out, as_json):
    """Minimum excess risk R(Y|Z^n,X) - R(Y|W,X)."""
    from .risk import mer_exact, mer_monte_carlo

    m, _ = _load(model, instance)
    rows = []
    for n in _ints(n_text):
        res = mer_monte_carlo(m, n, samples, seed) if samples else mer_exact(m, n, cap=cap_cells)
        rows.append({"n": n, "mer": res.mer, "r_y_given_zn_x": res.r_y_given_zn_x,
                     "r_y_given_w_x": res.r_y_given_w_x, "method": res.method, "mc_stderr": res.mc_stderr})
    lines = [f"n={r['n']} MER={r['mer']:.10g}" + (f" +/- {r['mc_stderr']:.3g}" if r["mc_stderr"] is not None else "")
             + f"  R(Y|Z^n,X)={r['r_y_given_zn_x']:.10g}  R(Y|W,X)={r['r_y_given_w_x']:.10g}" for r in rows]
    _emit(rows, out, "mer.json", as_json, "\n".join(lines))


@main.command()
@model_opt
@instance_opt
@n_opt
@click.option("--samples", type=int, default=None, help="Monte Carlo estimate of I(W;Z^n) with this many draws.")
@seed_opt
@cap_opt
@out_opt
@json_opt
def mi(model, instance, n_text, samples, seed, cap_cells, out, as_json):
    """I(W;Z^n) and I(Y;W|Z^n,X) in nats."""
    from .info import cond_mi_y_w_given_zn_x, mi_monte_carlo_w_zn, mi_w_zn

    m, _ = _load(model, instance)
    rows = []
    for n in _ints(n_text):
        if samples:
            r = mi_monte_carlo_w_zn(m, n, samples, seed)
            rows.append({"n": n, "mi_w_zn": r.value, "mc_stderr": r.mc_stderr})
        else:
            rows.append({"n": n, "mi_w_zn": mi_w_zn(m, n, cap=cap_cells).value,
                         "mi_y_w_given_zn_x": cond_mi_y_w_given_zn_x(m, n, cap=cap_cells).value})
    lines = [" ".join(f"{k}={v:.10g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()) for r in rows]
    _emit(rows, out, "mi.json", as_json, "\n".join(lines))


@main.command("rd-curve")
@model_opt
@instance_opt
@n_opt
@click.option("--which", type=click.Choice(list(WHICH)), default="all", show_default=True)
@click.option("--rate", "rate_text", default=None, help="Solve at these rates instead of tracing a lambda grid.")
@cap_opt
@out_opt
@click.option("--tol", type=float, default=1e-5, show_default=True, help="Sandwich tolerance.")
def rd_curve(model, instance, n_text, which, rate_text, cap_cells, out, tol):
    """Rate-distortion curves D^L, D_n and D^U_n (CSV on stdout)."""
    from .ratedist import RDProblem

    m, _ = _load(model, instance)
    kinds = WHICH[which]
    rates = _floats(rate_text)
    lower = RDProblem(m)
    rows, verdicts = [], []
    for n in _ints(n_text):
        prob = RDProblem(m, n, cap=cap_cells)
        if rates is None:
            for kind in kinds:
                if kind == "lower" and rows and any(r["kind"] == "lower" for r in rows):
                    continue
                src = lower if kind == "lower" else prob
                rows += curve_rows(src.curve(kind), None if kind == "lower" else n)
        else:
            for r in rates:
                vals = {}
                for kind in kinds:
                    src = lower if kind == "lower" else prob
                    pt, _ = src.at_rate(kind, r)
                    vals[kind] = pt.distortion
                    rows.append({"kind": kind, "n": "" if kind == "lower" else n, "lambda": pt.lam,
                                 "rate_nats": pt.rate, "distortion": pt.distortion, "converged": pt.converged,
                                 "gap": pt.gap})
                if len(vals) == 3:
                    ok = vals["lower"] - tol <= vals["exact_n"] <= vals["upper_n"] + tol
                    verdicts.append((n, r, ok))
    text = curves_csv(rows)
    if out:
        write_atomic(Path(out) / "curves.csv", text)
    click.echo(text, nl=False)
    if which == "all" and rates is None:
        for n in _ints(n_text):
            verdicts += _curve_sandwich(rows, n, tol, lower, RDProblem(m, n, cap=cap_cells))
    if verdicts:
        bad = [v for v in verdicts if not v[2]]
        click.echo(f"# sandwich: {'pass' if not bad else 'FAIL'} ({len(verdicts) - len(bad)}/{len(verdicts)})", err=True)


def _curve_sandwich(rows, n, tol, lower, prob):
    """Solve ``D^L`` and ``D^U_n`` at each rate reached by the traced ``D_n`` curve."""
    out = []
    for r in sorted({row["rate_nats"] for row in rows if row["kind"] == "exact_n" and row["n"] == n}):
        d = prob.exact_rate(r)[0].distortion
        low = lower.lower_rate(r)[0].distortion
        up = prob.upper_rate(r)[0].distortion
        out.append((n, r, bool(low - tol <= d <= up + tol)))
    return out


@main.command()
@model_opt
@instance_opt
@n_opt
@click.option("--chaining/--no-chaining", default=None, help="Force the chaining bound on or off (default: if metric).")
@cap_opt
@tol_opt
@out_opt
@json_opt
def bounds(model, instance, n_text, chaining, cap_cells, tol, out, as_json):
    """Every closed-form bound with verdicts against the exact MER."""
    from .bounds import bounds_report

    m, asym = _load(model, instance)
    reps = [bounds_report(m, n, spec=asym, use_chaining=chaining, cap=cap_cells, tol=tol).to_json()
            for n in _ints(n_text)]
    lines = []
    for r in reps:
        lines.append(f"n={r['n']} MER={r['mer_exact']:.6g}")
        for v in r["verdicts"]:
            kind = "hard" if v["hard"] else "soft"
            lines.append(f"  {v['name']:<18} {kind} {'holds' if v['holds'] else 'VIOLATED'} slack={v['slack']:.3g}")
    _emit(reps, out, "bounds.json", as_json, "\n".join(lines))
    if any(not r["hard_pass"] for r in reps):
        sys.exit(EXIT_FAIL)


def _config(config, model, instance, n_text, rate_text, seed, cap_cells, tol, out) -> ExperimentConfig:
    if config:
        cfg = load_config(config)
        if out:
            cfg.out = out
        return cfg
    src = _source(model, instance)
    return ExperimentConfig(n_list=_ints(n_text), rate_grid=_floats(rate_text), seed=seed, cap_cells=cap_cells,
                            tol=tol, out=out, **src)


config_opt = click.option("--config", type=click.Path(exists=True, dir_okay=False), help="Experiment config JSON.")


@main.command()
@config_opt
@model_opt
@instance_opt
@click.option("--n", "n_text", default="1,2", show_default=True, help="Sample sizes, comma-separated.")
@click.option("--rate", "rate_text", default=None, help="Rates for the sandwich checks.")
@seed_opt
@cap_opt
@tol_opt
@out_opt
@json_opt
def verify(config, model, instance, n_text, rate_text, seed, cap_cells, tol, out, as_json):
    """Run the full verification battery; exit 1 on any hard failure."""
    cfg = _config(config, model, instance, n_text, rate_text, seed, cap_cells, tol, out)
    report = run(cfg)
    click.echo(dumps(report) if as_json else human_summary(report), nl=not as_json)
    if not report["pass"]:
        sys.exit(EXIT_FAIL)


@main.command()
@config_opt
@model_opt
@instance_opt
@click.option("--n", "n_text", default="1,2", show_default=True, help="Sample sizes, comma-separated.")
@click.option("--rate", "rate_text", default=None)
@seed_opt
@cap_opt
@tol_opt
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--workers", type=int, default=1, show_default=True)
def sweep(config, model, instance, n_text, rate_text, seed, cap_cells, tol, out, workers):
    """Run each sample size as an independent cell and merge the results."""
    cfg = _config(config, model, instance, n_text, rate_text, seed, cap_cells, tol, out)
    merged = run_sweep(cfg, workers=workers)
    for cell in merged["cells"]:
        failed = sorted({v["name"] for v in cell["verdicts"] if v["hard"] and not v["holds"]})
        click.echo(f"n={cell['n']} " + ("ok" if not failed else "FAILED: " + ",".join(failed)))
    click.echo("PASS" if merged["pass"] else "FAIL")
    if not merged["pass"]:
        sys.exit(EXIT_FAIL)


if __name__ == "__main__":
    main()
