"""Command-line pipeline driver.

Exit codes: 0 success, 2 validation errors, 3 model diagnostics failure.
All randomness comes from the configured seed; KMLEAD_SEED overrides it,
so a fixed seed plus fixed inputs gives byte-identical outputs.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import click
import numpy as np

from . import core, projection, reconstructor, similarity, synthesis
from .core import _fmt, _write_rows

EXIT_VALIDATION = 2
EXIT_DIAGNOSTICS = 3


def _load_config(path):
    text = Path(path).read_bytes()
    if str(path).endswith(".json"):
        return json.loads(text)
    return tomllib.loads(text.decode("utf-8"))


def _seed_from(config):
    env = os.environ.get("KMLEAD_SEED")
    if env is not None:
        return int(env)
    return int(config.get("seed", 0))


def _write_json(path, payload):
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=_fmt) + "\n",
        encoding="utf-8")


@click.group()
def main():
    """Digitized KM curves to design-stage survival projections."""


@main.command()
@click.option("--xy", type=click.Path(exists=True), default=None)
@click.option("--risk", type=click.Path(exists=True), default=None)
def validate(xy, risk):
    """Validate curve and risk-table files and their alignment."""
    report = core.ValidationReport()
    curves, tables = [], []
    try:
        if xy:
            curves = core.read_xy_csv(xy)
        if risk:
            tables = core.read_risk_csv(risk)
    except core.ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    for c in curves:
        report = report.merged(core.validate_curve(c))
    for t in tables:
        report = report.merged(core.validate_risk_table(t))
    if xy and risk:
        report = report.merged(core.validate_bundle(curves, tables))
    click.echo(str(report))
    sys.exit(0 if report.ok else EXIT_VALIDATION)


@main.command()
@click.option("--xy", type=click.Path(exists=True), required=True)
@click.option("--risk", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def reconstruct(xy, risk, out):
    """Reconstruct per-patient records for every digitized arm."""
    curves = core.read_xy_csv(xy)
    tables = core.read_risk_csv(risk)
    report = core.validate_bundle(curves, tables)
    for c in curves:
        report = report.merged(core.validate_curve(c))
    for t in tables:
        report = report.merged(core.validate_risk_table(t))
    if not report.ok:
        click.echo(str(report), err=True)
        sys.exit(EXIT_VALIDATION)
    ipds = [_reconstruct_arm(c, tables) for c in curves]
    core.write_ipd_csv(out, ipds)
    click.echo(f"wrote {out} ({sum(i.n for i in ipds)} records, {len(ipds)} arms)")


def _reconstruct_arm(curve, tables):
    for rt in tables:
        if rt.study.render() == curve.study.render() and curve.arm_label in rt.arm_labels():
            return reconstructor.reconstruct_ipd(
                curve, (rt.time_grid, rt.counts_for(curve.arm_label)))
    raise core.KmleadError(f"no risk-table arm for {curve.study.render()}/{curve.arm_label}")


@main.command()
@click.option("--baseline", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["average", "maximum"]), default="average")
@click.option("--k", type=int, default=None)
@click.option("--covariates", default=None,
              help="comma-separated covariate names; default: all shared")
@click.option("--pool-arms/--no-pool-arms", default=True,
              help="pool multi-arm trials into one n-weighted profile")
@click.option("--out-dir", type=click.Path(), default=".")
@click.option("--seed", type=int, default=0)
def cluster(baseline, mode, k, covariates, pool_arms, out_dir, seed):
    """Cluster trials by baseline-profile dissimilarity."""
    profiles = core.read_baseline_csv(baseline)
    by_study: dict[str, list] = {}
    for p in profiles:
        by_study.setdefault(p.study.render(), []).append(p)
    if pool_arms:
        profiles = [similarity.pool_profiles(v) for v in by_study.values()]
    if covariates:
        names = [c.strip() for c in covariates.split(",")]
    else:
        names = [c.name for c in profiles[0].covariates]
        for p in profiles[1:]:
            names = [n for n in names if any(c.name == n for c in p.covariates)]
    try:
        matrix = similarity.dissimilarity_matrix(profiles, names, mode)
        result = similarity.cluster_kmedoids(matrix, k=k, seed=_env_seed(seed))
    except (similarity.SimilarityError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(a, b, mode, matrix.D[i, j])
            for i, a in enumerate(matrix.labels)
            for j, b in enumerate(matrix.labels) if i < j]
    _write_rows(out / "dissimilarity.csv", ["trial_a", "trial_b", "mode", "D"], rows)
    grid_rows = [(a, b, matrix.D[i, j])
                 for i, a in enumerate(matrix.labels)
                 for j, b in enumerate(matrix.labels)]
    _write_rows(out / "dissimilarity_grid.csv", ["trial_a", "trial_b", "D"], grid_rows)
    _write_json(out / "clusters.json", {
        "k": result.k,
        "medoids": list(result.medoids),
        "assignment": result.assignment,
        "mean_silhouette": result.mean_silhouette,
        "degenerate": result.degenerate,
        "mode": mode,
        "covariates": names,
    })
    click.echo(f"k={result.k} clusters: " + json.dumps(
        {m: sorted(v) for m, v in result.clusters().items()}, sort_keys=True))


def _env_seed(seed):
    env = os.environ.get("KMLEAD_SEED")
    return int(env) if env is not None else seed


@main.command()
@click.option("--ipd", type=click.Path(exists=True), required=True)
@click.option("--risk", type=click.Path(exists=True), required=True,
              help="risk tables of the contributing arms (sets the grid)")
@click.option("--arms", default=None,
              help="comma-separated study::qualifier/arm keys to include")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out-dir", type=click.Path(), default=".")
@click.option("--force", is_flag=True, help="keep going past R-hat failures")
def synthesize(ipd, risk, arms, config_path, out_dir, force):
    """Fit the hierarchical survival model to one treatment class."""
    config = _load_config(config_path) if config_path else {}
    mcmc = {**synthesis.DEFAULT_MCMC, **config.get("mcmc", {})}
    seed = _seed_from(config)
    M = int(config.get("M", 4000))

    ipds = core.read_ipd_csv(ipd)
    tables = core.read_risk_csv(risk)
    if arms:
        keys = {tuple(a.split("/", 1)) for a in arms.split(",")}
        ipds = [i for i in ipds if (i.study.render(), i.arm_label) in keys]
    if not ipds:
        click.echo("no arms selected", err=True)
        sys.exit(EXIT_VALIDATION)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        _synthesize_class(ipds, tables, mcmc, seed, M, out, force)
    except synthesis.ConvergenceError as exc:
        click.echo(f"diagnostics failure: {exc}", err=True)
        sys.exit(EXIT_DIAGNOSTICS)
    click.echo(f"wrote posterior.csv, predictive.csv, bsp_fit.json in {out}")


def _synthesize_class(ipds, tables, mcmc, seed, M, out, force):
    grid = reconstructor.choose_grid(tables)
    event_tables = [
        reconstructor.tabulate_events(reconstructor.discretize(i, grid), grid)
        for i in ipds
    ]
    post = synthesis.fit_bhm(event_tables, grid, seed=seed, force=force, **mcmc)
    ens = synthesis.predictive_draws(post, grid, M, seed=seed + 1)
    fit = synthesis.fit_predictive_bsp(post, ens)

    chains = post.diagnostics["chains"]
    per_chain = len(post.draws) // chains
    rows = [(d // per_chain, d % per_chain, *post.draws[d]) for d in range(len(post.draws))]
    _write_rows(out / "posterior.csv", ["chain", "iter", "lambda", "kappa", "c"], rows)
    pred_rows = [(i, t, float(s)) for i in range(len(ens.curves))
                 for t, s in zip(grid.times, ens.curves[i])]
    _write_rows(out / "predictive.csv", ["draw", "t", "survival"], pred_rows)
    _write_json(out / "bsp_fit.json", {
        "lambda_star": fit.lam_star,
        "kappa_star": fit.kappa_star,
        "c_star": fit.c_star,
        "ess": fit.ess,
        "ene": fit.ene,
        "grid": list(grid.times),
        "vhat": fit.vhat.tolist(),
        "vstar": fit.vstar.tolist(),
        "split_rhat": post.diagnostics["split_rhat"],
        "N": post.N,
    })
    return grid, post, ens, fit


def _read_predictive(path):
    draws: dict[int, list] = {}
    times = []
    for _, (d, t, s) in core._read_rows(path, ["draw", "t", "survival"]):
        d, t, s = int(d), float(t), float(s)
        draws.setdefault(d, []).append(s)
        if d == 0:
            times.append(t)
    grid = reconstructor.TimeGrid(tuple(times))
    curves = np.array([draws[i] for i in sorted(draws)])
    return synthesis.PredictiveEnsemble(grid, curves, np.zeros_like(curves))


@main.command()
@click.option("--predictive-a", type=click.Path(exists=True), required=True,
              help="reference arm ensemble (e.g. mono therapy)")
@click.option("--predictive-b", type=click.Path(exists=True), required=True,
              help="comparator arm ensemble (e.g. dual therapy)")
@click.option("--margin", type=float, default=3.0)
@click.option("--times", default="12,24,36,48,60,72")
@click.option("--out-dir", type=click.Path(), default=".")
def project(predictive_a, predictive_b, margin, times, out_dir):
    """Projected OS tables, median differences, and benefit probability."""
    ens_a = _read_predictive(predictive_a)
    ens_b = _read_predictive(predictive_b)
    ts = [float(x) for x in times.split(",")]
    ts = [t for t in ts if t <= ens_a.grid.times[-1]]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _project_pair(ens_a, ens_b, margin, ts, out)
    click.echo(f"wrote os_table.csv, comparison.json, fan.csv, medians.csv in {out}")


def _project_pair(ens_a, ens_b, margin, ts, out):
    sum_a = projection.summarize(ens_a, ts)
    sum_b = projection.summarize(ens_b, ts)
    cmp_ = projection.compare(ens_a, ens_b, margin=margin, times=ts)

    rows = []
    for i, t in enumerate(ts):
        rows.append((t,
                     sum_a.estimate[i], sum_a.lower[i], sum_a.upper[i],
                     sum_b.estimate[i], sum_b.lower[i], sum_b.upper[i],
                     cmp_.delta_os.estimate[i], cmp_.delta_os.lower[i],
                     cmp_.delta_os.upper[i]))
    _write_rows(out / "os_table.csv",
                ["time_months",
                 "os_a", "os_a_lo", "os_a_hi",
                 "os_b", "os_b_lo", "os_b_hi",
                 "diff", "diff_lo", "diff_hi"], rows)
    _write_json(out / "comparison.json", {
        "median_a": cmp_.median_a,
        "median_b": cmp_.median_b,
        "delta_median": cmp_.delta_median,
        "prob_benefit": cmp_.prob_benefit,
        "margin": cmp_.margin,
        "n_not_reached": cmp_.n_not_reached,
    })
    fan_rows = projection.fan_plot_data(ens_a) + [
        (f"b:{d}", t, s) for d, t, s in projection.fan_plot_data(ens_b)]
    _write_rows(out / "fan.csv", ["draw_id", "t", "survival"], fan_rows)
    _write_rows(out / "medians.csv",
                ["arm", "median", "lo", "hi"],
                [("a", *cmp_.median_a), ("b", *cmp_.median_b)])
    return cmp_


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, default=None, help="overrides the config seed")
def pipeline(config_path, seed):
    """Run validate, reconstruct, synthesize, and project end to end."""
    config = _load_config(config_path)
    if seed is not None:
        config["seed"] = seed
    base_seed = _seed_from(config)
    root = Path(config_path).parent
    inputs = config.get("inputs", {})
    out = root / config.get("output", {}).get("dir", "out")
    out.mkdir(parents=True, exist_ok=True)

    curves = core.read_xy_csv(root / inputs["xy"])
    tables = core.read_risk_csv(root / inputs["risk"])
    report = core.validate_bundle(curves, tables)
    for c in curves:
        report = report.merged(core.validate_curve(c))
    for t in tables:
        report = report.merged(core.validate_risk_table(t))
    if not report.ok:
        click.echo(str(report), err=True)
        sys.exit(EXIT_VALIDATION)

    ipds = [_reconstruct_arm(c, tables) for c in curves]
    core.write_ipd_csv(out / "ipd.csv", ipds)

    if "baseline" in inputs:
        cl = config.get("cluster", {})
        ctx = click.get_current_context()
        ctx.invoke(cluster, baseline=str(root / inputs["baseline"]),
                   mode=cl.get("mode", "average"), k=cl.get("k"),
                   covariates=",".join(cl["covariates"]) if "covariates" in cl else None,
                   pool_arms=cl.get("pool_arms", True),
                   out_dir=str(out), seed=base_seed)

    mcmc = {**synthesis.DEFAULT_MCMC, **config.get("mcmc", {})}
    M = int(config.get("M", 4000))
    classes = config.get("classes", {})
    ensembles = {}
    for offset, (name, keys) in enumerate(sorted(classes.items())):
        keyset = {tuple(k) for k in keys}
        selected = [i for i in ipds if (i.study.render(), i.arm_label) in keyset]
        if not selected:
            click.echo(f"class {name}: no matching arms", err=True)
            sys.exit(EXIT_VALIDATION)
        class_out = out / name
        class_out.mkdir(exist_ok=True)
        try:
            _, _, ens, _ = _synthesize_class(
                selected, tables, mcmc, base_seed + 1000 * offset, M, class_out,
                force=config.get("force", False))
        except synthesis.ConvergenceError as exc:
            click.echo(f"diagnostics failure in class {name}: {exc}", err=True)
            sys.exit(EXIT_DIAGNOSTICS)
        ensembles[name] = ens

    proj = config.get("project", {})
    pair = proj.get("pair")
    if pair is None and len(ensembles) == 2:
        pair = sorted(ensembles)
    if pair:
        a, b = ensembles[pair[0]], ensembles[pair[1]]
        ts = proj.get("times", [t for t in (12, 24, 36, 48, 60, 72)
                                if t <= a.grid.times[-1]])
        _project_pair(a, b, float(proj.get("margin", 3.0)), [float(t) for t in ts], out)
    click.echo(f"pipeline complete: {out}")


if __name__ == "__main__":
    main()
