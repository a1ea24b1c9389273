"""Batch front-end: seeded experiment runs with artifacts persisted to disk.

Subcommands mirror the experiment kinds.  Every run writes a manifest
carrying the hash of the effective config (after flag overrides), the
seed, and the tool version; margin samples go to CSV, verification
results to JSON lines plus a CSV summary table.  Exit codes: 0 all
verifications passed, 1 some verification failed, 2 invalid config or
input data, 3 a resource guard tripped.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import EXPERIMENT_KINDS, ExperimentConfig, config_from_dict, _yaml_line_map
from .cwm import concentration_profile, representation_equivalence_check
from .errors import ConfigError, DataError, ResourceError, VotelimError
from .limits import LimitLaw, limit_for
from .models import sample_margins
from .verify import (
    correlation_decay_report,
    estimate_alpha,
    ks_statistic,
    ks_threshold,
    llt_sup_error,
    make_report,
    write_reports_csv,
    write_reports_jsonl,
)


def _load_effective_config(path: str, overrides: dict) -> ExperimentConfig:
    with open(path) as fh:
        text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    return config_from_dict(doc, _yaml_line_map(text))


def ingest_margins(path) -> list[tuple]:
    """Read (population, per-capita margin) points from a CSV file.

    Accepts headers ``population,abs_margin`` (raw counts, normalized on
    ingest) or ``population,margin_per_capita``.  Rows with nonpositive
    or unparseable populations are rejected with their line numbers;
    exact duplicate points are dropped with a warning.
    """
    import csv as _csv

    path = Path(path)
    with open(path, newline="") as fh:
        reader = _csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        fields = [f.strip() for f in reader.fieldnames]
        if "population" not in fields:
            raise DataError(f"{path}: missing 'population' column")
        if "abs_margin" in fields:
            margin_col, raw_counts = "abs_margin", True
        elif "margin_per_capita" in fields:
            margin_col, raw_counts = "margin_per_capita", False
        else:
            raise DataError(f"{path}: need an 'abs_margin' or 'margin_per_capita' column")
        points: list[tuple] = []
        seen = set()
        bad_lines = []
        for row in reader:
            line = reader.line_num
            try:
                population = float(row["population"])
                margin = float(row[margin_col])
            except (TypeError, ValueError):
                bad_lines.append(line)
                continue
            if population <= 0:
                bad_lines.append(line)
                continue
            per_capita = margin / population if raw_counts else margin
            n = int(population) if population.is_integer() else population
            point = (n, per_capita)
            if point in seen:
                warnings.warn(f"{path}:{line}: dropping exact duplicate point {point}")
                continue
            seen.add(point)
            points.append(point)
    if bad_lines:
        raise DataError(
            f"{path}: rejected malformed rows or rows with nonpositive population "
            f"on lines {bad_lines}"
        )
    if not points:
        raise DataError(f"{path}: no usable data rows")
    return points


# -- experiment runners -------------------------------------------------------------

def _write_manifest(out_dir: Path, cfg: ExperimentConfig, outputs, extra=None) -> None:
    doc = {
        "config_hash": cfg.hash(),
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "tool_version": __version__,
        "outputs": sorted(outputs),
    }
    if extra:
        doc.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _finish(out_dir: Path, cfg: ExperimentConfig, reports, outputs, extra=None) -> int:
    if reports:
        write_reports_jsonl(reports, out_dir / "reports.jsonl")
        write_reports_csv(reports, out_dir / "summary.csv")
        outputs = list(outputs) + ["reports.jsonl", "summary.csv"]
    _write_manifest(out_dir, cfg, outputs, extra)
    for report in reports:
        status = "PASS" if report.passed else "FAIL"
        print(f"{status} {report.statistic}: observed={report.observed:.6g} "
              f"threshold={report.threshold:.6g}")
    return 0 if all(r.passed for r in reports) else 1


def _sampled_margins(cfg: ExperimentConfig):
    sample = sample_margins(cfg.model, cfg.n, cfg.count, cfg.seed, workers=cfg.workers)
    return sample


def _run_simulate(cfg: ExperimentConfig, out_dir: Path) -> int:
    sample = _sampled_margins(cfg)
    sample.to_csv(out_dir / "margins.csv")
    _write_manifest(out_dir, cfg, ["margins.csv"], {"margins": sample.manifest()})
    return 0


def _target_law(cfg: ExperimentConfig) -> LimitLaw:
    target = cfg.thresholds.get("target_law", "auto")
    if target == "gaussian":
        return LimitLaw.standard_gaussian(cfg.model.groups.m)
    model = cfg.model
    if model.sequence.kind == "static":
        # a mixing measure fixed at the origin is the independent-voter
        # baseline, whose normalized margins are asymptotically normal
        base = model.sequence.base
        if base.mass_in_box(np.zeros(base.dim), np.zeros(base.dim)) == 1.0:
            return LimitLaw.standard_gaussian(model.groups.m)
        raise ConfigError(
            "no dispatchable limit for a spread-out static mixing measure; "
            "set thresholds.target_law: gaussian to compare against the normal law"
        )
    return limit_for(model)


def _run_verify_clt(cfg: ExperimentConfig, out_dir: Path) -> int:
    sample = _sampled_margins(cfg)
    sample.to_csv(out_dir / "margins.csv")
    law = _target_law(cfg)
    threshold = float(cfg.thresholds.get("ks", ks_threshold(cfg.count)))
    reports = []
    for g in range(cfg.model.groups.m):
        marginal = law.marginal(g)
        ks = ks_statistic(sample.normalized[:, g], marginal.cdf1)
        reports.append(
            make_report(cfg.experiment, f"ks-group-{g}", ks, threshold, seed=cfg.seed,
                        details={"n": cfg.n, "count": cfg.count, "law": marginal.kind})
        )
    if cfg.model.groups.m >= 2:
        rho_threshold = float(cfg.thresholds.get("cross_correlation", 0.02))
        corr = np.corrcoef(sample.normalized, rowvar=False)
        for a in range(cfg.model.groups.m):
            for b in range(a + 1, cfg.model.groups.m):
                reports.append(
                    make_report(cfg.experiment, f"cross-correlation-{a}-{b}",
                                abs(float(corr[a, b])), rho_threshold, seed=cfg.seed)
                )
    return _finish(out_dir, cfg, reports, ["margins.csv"], {"margins": sample.manifest()})


def _run_verify_llt(cfg: ExperimentConfig, out_dir: Path) -> int:
    errors = [llt_sup_error(cfg.model, n) for n in cfg.n_grid]
    increase = float(np.max(np.diff(errors))) if len(errors) > 1 else -np.inf
    reports = [
        make_report(cfg.experiment, "llt-error-increase", increase, 0.0,
                    n_grid=cfg.n_grid, details={"errors": errors}),
        make_report(cfg.experiment, "llt-terminal-error", errors[-1],
                    float(cfg.thresholds.get("llt", 0.01)), n_grid=cfg.n_grid,
                    details={"errors": errors}),
    ]
    return _finish(out_dir, cfg, reports, [])


def _run_verify_cwm(cfg: ExperimentConfig, out_dir: Path) -> int:
    spec = cfg.model.sequence.coupling
    groups = cfg.model.groups
    reports = []
    eq_threshold = float(cfg.thresholds.get("equivalence", 1e-8))
    for n in cfg.n_grid or [cfg.n]:
        disc = representation_equivalence_check(spec, groups, int(n))
        reports.append(
            make_report(cfg.experiment, f"representation-equivalence-n{n}", disc, eq_threshold)
        )
    conc_grid = cfg.raw.get("concentration_grid")
    if cfg.delta is not None and conc_grid:
        profile = concentration_profile(spec, groups, conc_grid, cfg.delta)
        tails = [p.tail_mass for p in profile]
        ns = [p.n for p in profile]
        if any(t <= 0 for t in tails):
            r2 = 0.0
        else:
            r2 = _linear_fit_r2(np.asarray(ns, float), np.log(tails))
        reports.append(
            make_report(cfg.experiment, "concentration-log-linearity", 1.0 - r2,
                        1.0 - float(cfg.thresholds.get("r2", 0.999)),
                        n_grid=ns, details={"tail_masses": tails, "r_squared": r2})
        )
    return _finish(out_dir, cfg, reports, [])


def _linear_fit_r2(x: np.ndarray, y: np.ndarray) -> float:
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def _run_estimate_alpha(cfg: ExperimentConfig, out_dir: Path) -> int:
    if cfg.input_path:
        points = ingest_margins(cfg.input_path)
    else:
        points = [tuple(p) for p in cfg.raw["points"]]
    estimate = estimate_alpha(points)
    print(f"alpha = {estimate.alpha:.4f}")
    (out_dir / "alpha.json").write_text(
        json.dumps(
            {
                "alpha": estimate.alpha,
                "intercept": estimate.intercept,
                "residual_variance": estimate.residual_variance,
                "n_points": estimate.n_points,
            },
            sort_keys=True,
            indent=2,
        )
        + "\n"
    )
    reports = []
    alpha_range = cfg.thresholds.get("alpha_range")
    if alpha_range:
        lo, hi = float(alpha_range[0]), float(alpha_range[1])
        outside = max(lo - estimate.alpha, estimate.alpha - hi, 0.0)
        reports.append(
            make_report(cfg.experiment, "alpha-outside-range", outside, 0.0,
                        details={"alpha": estimate.alpha, "range": [lo, hi]})
        )
    return _finish(out_dir, cfg, reports, ["alpha.json"])


def _run_correlation_decay(cfg: ExperimentConfig, out_dir: Path) -> int:
    threshold = float(cfg.thresholds.get("correlation", 0.01))
    report = correlation_decay_report(cfg.model, cfg.n_grid, threshold,
                                      experiment=cfg.experiment)
    return _finish(out_dir, cfg, [report], [])


_RUNNERS = {
    "simulate": _run_simulate,
    "verify-clt": _run_verify_clt,
    "verify-llt": _run_verify_llt,
    "verify-cwm": _run_verify_cwm,
    "estimate-alpha": _run_estimate_alpha,
    "correlation-decay": _run_correlation_decay,
}


def run(cfg: ExperimentConfig, out_dir=None) -> int:
    """Execute one experiment; writes artifacts and returns the exit code."""
    out_path = Path(out_dir or cfg.out or ".")
    out_path.mkdir(parents=True, exist_ok=True)
    return _RUNNERS[cfg.experiment](cfg, out_path)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="votelim",
        description="seeded voting-model experiments: simulation and limit-law verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment from a config file")
        p.add_argument("--config", required=True, help="path to the YAML experiment config")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--workers", type=int, default=None, help="worker count override")
    args = parser.parse_args(argv)

    try:
        cfg = _load_effective_config(
            args.config,
            {"seed": args.seed, "workers": args.workers, "out": args.out},
        )
        if cfg.experiment != args.command:
            raise ConfigError(
                f"config declares experiment {cfg.experiment!r} but the "
                f"{args.command!r} subcommand was invoked"
            )
        return run(cfg)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ResourceError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return 3
    except VotelimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
