"""Command-line entry point: ``rankcal {analyze,simulate,randomize,are}``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import secrets
import sys
import warnings

import numpy as np
import scipy

from . import __version__
from .are import DistributionSpec, dominance_check
from .calibration import fit_calibration
from .dataio import (AnalysisConfig, Comparison, ResultDocument, config_hash,
                     dumps, ingest_csv, load_config, read_table)
from .domain import DesignSpec, RankCalError, validate_trial
from .inference import (TestConfig, t_test_baseline, variance_components,
                        wmw_test_adjusted, wmw_test_unadjusted)
from .randomization import RandomizationScheme, assign, balance_report
from .simlab import Scenario, format_table, run_study

__all__ = ["main", "cmd_analyze", "cmd_simulate", "cmd_randomize", "cmd_are"]


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _names(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _threads(value):
    if value is not None:
        return value
    env = os.environ.get("RANKCAL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise RankCalError(f"RANKCAL_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _provenance(seed=None, cfg=None) -> dict:
    prov = {"rankcal": __version__, "numpy": np.__version__, "scipy": scipy.__version__}
    if seed is not None:
        prov["seed"] = seed
    if cfg is not None:
        prov["config_hash"] = config_hash(cfg)
    return prov


def _emit(args, document: str, table: str, out=None):
    out = out or sys.stdout
    if getattr(args, "output", None):
        with open(args.output, "w") as fh:
            fh.write(document)
    out.write(document if args.json else table + "\n")


# ---------------------------------------------------------------- analyze

def _analysis_config(args) -> AnalysisConfig:
    base = load_config(args.config) if args.config else {}
    cli = {
        "arm_column": args.arm,
        "outcome_column": args.outcome,
        "covariate_columns": _names(args.covariates) if args.covariates else None,
        "stratum_column": args.stratum,
        "arms": _names(args.arms) if args.arms else None,
        "pairs": [p.split(":") for p in args.pair] if args.pair else None,
        "control": args.control,
        "pi": _floats(args.pi) if args.pi else None,
        "pi_source": "empirical" if args.empirical_pi else None,
        "alpha": args.alpha,
        "continuity": True if args.continuity else None,
        "adjustment": args.adjust,
        "ridge": args.ridge,
        "output": args.output,
    }
    merged = dict(base)
    merged.update({k: v for k, v in cli.items() if v is not None})
    known = set(AnalysisConfig.__dataclass_fields__)
    problems = [f"unknown config key {k!r}" for k in sorted(set(merged) - known)]
    for req in ("arm_column", "outcome_column", "covariate_columns"):
        if not merged.get(req):
            problems.append(f"{req} is required")
    if problems:
        raise RankCalError("invalid analysis config:\n  " + "\n  ".join(problems))
    cfg = AnalysisConfig(**merged)
    problems = cfg.problems()
    if problems:
        raise RankCalError("invalid analysis config:\n  " + "\n  ".join(problems))
    return cfg


def _pairs(cfg: AnalysisConfig, labels):
    index = {lab: t + 1 for t, lab in enumerate(labels)}

    def code(lab):
        if lab not in index:
            raise RankCalError(f"unknown arm {lab!r}; arms are {', '.join(labels)}")
        return index[lab]

    if cfg.pairs:
        return [(code(str(a)), code(str(b))) for a, b in cfg.pairs]
    control = cfg.control if cfg.control is not None else labels[-1]
    c = code(str(control))
    return [(t, c) for t in range(1, len(labels) + 1) if t != c]


def analyze_document(cfg: AnalysisConfig, data, labels) -> ResultDocument:
    """Run every requested comparison and collect the results."""
    if cfg.pi is not None and len(cfg.pi) != data.num_treatments:
        raise RankCalError(f"pi has {len(cfg.pi)} entries for {data.num_treatments} arms")
    tcfg = TestConfig(alpha=cfg.alpha, pi_source=cfg.pi_source)
    comparisons = []
    for j, k in _pairs(cfg, labels):
        if cfg.pi_source == "empirical":
            design = DesignSpec.empirical(data, (j, k))
        else:
            design = DesignSpec(tuple(cfg.pi), (j, k))
        summary = validate_trial(data, design, strata_used=cfg.stratum_column is not None)
        tests = {
            "t_test": t_test_baseline(data, design, tcfg),
            "wmw_unadjusted": wmw_test_unadjusted(data, design, TestConfig(cfg.alpha)),
        }
        if cfg.continuity:
            tests["wmw_unadjusted_cc"] = wmw_test_unadjusted(
                data, design, TestConfig(cfg.alpha, continuity_correction=True))
        variance = variance_components(data, design).to_dict()
        calib = None
        if cfg.adjustment != "none":
            mode = "pooled_mean" if cfg.adjustment == "pooled" else "restricted_mean"
            fit = fit_calibration(data, design, ridge=cfg.ridge,
                                  column_names=cfg.covariate_columns)
            tests["wmw_adjusted"] = wmw_test_adjusted(
                data, design, TestConfig(cfg.alpha), fit=fit, mode=mode)
            variance = variance_components(data, design, fit, mode).to_dict()
            calib = fit.summary()
        comparisons.append(Comparison(
            labels=[labels[j - 1], labels[k - 1]], pair=[j, k],
            group_sizes=[summary.group_sizes[j], summary.group_sizes[k]],
            flags=list(summary.flags) + list(summary.notes),
            tests=tests, variance=variance, calibration=calib))
    cfg_dict = json.loads(json.dumps(cfg.to_dict()))
    return ResultDocument(_provenance(cfg=cfg_dict), cfg_dict, comparisons)


def analysis_table(doc: ResultDocument) -> str:
    cols = [("t_test", "t-test"), ("wmw_unadjusted", "WMW unadjusted"),
            ("wmw_unadjusted_cc", "WMW unadj. (cc)"), ("wmw_adjusted", "WMW adjusted")]
    present = [c for c in cols if any(c[0] in cmp.tests for cmp in doc.comparisons)]
    width = 22
    lines = [f"{'comparison':<24}{'':<8}" + "".join(f"{name:>{width}}" for _, name in present)]
    for cmp in doc.comparisons:
        title = f"{cmp.labels[0]} vs {cmp.labels[1]}"
        cells = {"p-value": [], "SE": [], "CI": []}
        for key, _ in present:
            t = cmp.tests.get(key)
            if t is None:
                for v in cells.values():
                    v.append("")
                continue
            cells["p-value"].append(f"{t.p_value:.3f}")
            cells["SE"].append(f"{t.estimate.std_error:.3f}")
            cells["CI"].append(f"({t.estimate.ci_low:.3f}, {t.estimate.ci_high:.3f})")
        for i, (row, vals) in enumerate(cells.items()):
            head = title if i == 0 else ""
            lines.append(f"{head:<24}{row:<8}" + "".join(f"{v:>{width}}" for v in vals))
        if cmp.flags:
            lines.append(f"{'':<24}flags: {'; '.join(cmp.flags)}")
    return "\n".join(lines)


def cmd_analyze(args) -> int:
    cfg = _analysis_config(args)
    data, labels = ingest_csv(args.data, cfg)
    doc = analyze_document(cfg, data, labels)
    _emit(args, doc.to_json(), analysis_table(doc))
    return 0


# ---------------------------------------------------------------- simulate

def scenarios_from_config(cfg: dict, seed=None, replications=None) -> list:
    """Expand a config into scenarios, reporting every problem at once.

    Top-level keys are defaults; an optional ``scenarios`` list holds
    per-scenario overrides.
    """
    cfg = dict(cfg)
    entries = cfg.pop("scenarios", None) or [{}]
    known = set(Scenario.__dataclass_fields__)
    problems = []
    out = []
    for i, entry in enumerate(entries):
        d = {**cfg, **entry}
        if seed is not None:
            d["seed"] = seed
        if replications is not None:
            d["replications"] = replications
        where = f"scenario {i}: " if len(entries) > 1 else ""
        unknown = sorted(set(d) - known)
        problems += [f"{where}unknown key {k!r}" for k in unknown]
        d = {k: v for k, v in d.items() if k in known}
        try:
            for key in ("coefficients", "pi", "pair"):
                if d.get(key) is not None:
                    d[key] = tuple(d[key])
            # collect every violation before constructing anything
            probe = Scenario.__new__(Scenario)
            for f in Scenario.__dataclass_fields__.values():
                object.__setattr__(probe, f.name, d.get(f.name, f.default))
            issues = probe.problems()
        except TypeError as exc:
            issues = [f"bad value type: {exc}"]
        problems += [where + p for p in issues]
        if not issues and not unknown:
            out.append(Scenario(**d))
    if problems:
        raise RankCalError("invalid scenario config:\n  " + "\n  ".join(problems))
    return out


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed
    if seed is None and "seed" not in cfg:
        seed = secrets.randbits(32)
        print(f"seed: {seed}", file=sys.stderr)
    scenarios = scenarios_from_config(cfg, seed=seed, replications=args.replications)
    threads = _threads(args.threads)
    results = [run_study(sc, threads=threads) for sc in scenarios]
    resolved = [sc.to_dict() for sc in scenarios]
    doc = {"provenance": _provenance(seed=scenarios[0].seed, cfg=resolved),
           "results": [r.to_dict() for r in results]}
    _emit(args, dumps(doc), format_table(results))
    return 0


# ---------------------------------------------------------------- randomize

def cmd_randomize(args) -> int:
    header, rows = read_table(args.data)
    seed = args.seed
    if seed is None:
        seed = secrets.randbits(32)
        print(f"seed: {seed}", file=sys.stderr)

    def col(name):
        if name not in header:
            raise RankCalError(f"column {name!r} not found")
        i = header.index(name)
        return [r[i].strip() if i < len(r) else "" for r in rows]

    pi = _floats(args.pi) if args.pi else [1 / args.arms] * args.arms
    pi[-1] = 1 - sum(pi[:-1])
    scheme = RandomizationScheme(
        kind=args.scheme, pi=tuple(pi), block_size=args.block_size,
        p_mz=args.p_mz,
        factor_weights=tuple(_floats(args.weights)) if args.weights else None,
        seed=seed)
    strata = factors = None
    if args.scheme == "stratified_block":
        if not args.strata:
            raise RankCalError("--strata is required for stratified_block")
        strata = np.array(col(args.strata))
    elif args.scheme == "minimization":
        names = _names(args.factors or args.strata or "")
        if not names:
            raise RankCalError("--factors is required for minimization")
        factors = np.column_stack([col(c) for c in names])
    arms = assign(scheme, n=len(rows), strata=strata, factors=factors)
    ids = col(args.id) if args.id else [str(i + 1) for i in range(len(rows))]

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["unit_id", "arm"])
    w.writerows(zip(ids, arms.tolist()))
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    z = strata if strata is not None else (
        np.array(["|".join(r) for r in factors]) if factors is not None
        else np.zeros(len(rows)))
    diag = balance_report(arms, z, scheme.pi)
    print(f"max deviation from target proportions: {diag.max_deviation:.4f}",
          file=sys.stderr)
    return 0


# ---------------------------------------------------------------- are

def _matrix(text):
    rows = [r for r in text.split(";") if r.strip()]
    return np.array([_floats(r) for r in rows])


def cmd_are(args) -> int:
    payload = {}
    if args.payload:
        if os.path.exists(args.payload):
            payload = load_config(args.payload)
        else:
            try:
                payload = json.loads(args.payload)
            except json.JSONDecodeError as exc:
                raise RankCalError(f"--json-payload is neither a file nor JSON: {exc}") from None
    family = args.family or payload.get("family", "normal")
    params = {k: payload[k] for k in ("variance", "scale", "low", "high",
                                      "density_sq_integral") if k in payload}
    for k in ("variance", "scale", "low", "high"):
        if getattr(args, k) is not None:
            params[k] = getattr(args, k)
    if args.density_sq is not None:
        params["density_sq_integral"] = args.density_sq
    if family == "custom" and not {"variance", "density_sq_integral"} <= set(params):
        raise RankCalError("custom family needs --variance and --density-sq")
    dist = DistributionSpec.from_name(family, **params)
    beta = np.asarray(_floats(args.beta) if args.beta else payload.get("beta", [0.0]), dtype=float)
    if args.sigma:
        sigma = _matrix(args.sigma)
    elif "sigma" in payload:
        sigma = np.atleast_2d(np.asarray(payload["sigma"], dtype=float))
    else:
        sigma = np.eye(beta.size)
    dom = dominance_check(dist, beta, sigma)
    doc = {"family": dist.family, "variance": dist.variance,
           "density_sq_integral": dist.density_sq_integral,
           **dom.are.to_dict(), "one_minus_12_bsb": dom.one_minus_12q,
           "adjusted_dominates_t_for_any_density": dom.dominates_t}
    table = "\n".join(f"{k:<38} {v}" for k, v in doc.items())
    _emit(args, dumps(doc), table)
    return 0


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rankcal", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="analyze a trial CSV")
    a.add_argument("data", help="CSV with a header row")
    a.add_argument("--config", help="JSON or TOML analysis config")
    a.add_argument("--arm", help="treatment column")
    a.add_argument("--outcome", help="outcome column")
    a.add_argument("--covariates", help="comma-separated covariate columns")
    a.add_argument("--stratum", help="stratum column used by the randomizer")
    a.add_argument("--arms", help="comma-separated arm labels in order 1..J")
    a.add_argument("--pair", action="append", help="LABEL_J:LABEL_K, repeatable")
    a.add_argument("--control", help="compare every arm with this one")
    a.add_argument("--pi", help="comma-separated allocation proportions")
    a.add_argument("--empirical-pi", action="store_true",
                   help="estimate proportions as n_j/n")
    a.add_argument("--alpha", type=float)
    a.add_argument("--continuity", action="store_true",
                   help="also report the continuity-corrected unadjusted test")
    a.add_argument("--adjust", choices=["pooled", "restricted", "none"])
    a.add_argument("--ridge", type=float)
    a.add_argument("--output", help="write the JSON document here")
    a.add_argument("--json", action="store_true", help="print JSON instead of a table")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="run a Monte Carlo study")
    s.add_argument("config", help="JSON or TOML scenario config")
    s.add_argument("--seed", type=int)
    s.add_argument("--replications", type=int)
    s.add_argument("--threads", type=int,
                   help="worker processes (default: $RANKCAL_THREADS or all cores)")
    s.add_argument("--output", help="write the JSON metrics here")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("randomize", help="assign arms to units in a covariate CSV")
    r.add_argument("data")
    r.add_argument("--scheme", choices=["simple", "stratified_block", "minimization"],
                   default="simple")
    r.add_argument("--arms", type=int, default=2, help="number of arms if --pi is absent")
    r.add_argument("--pi")
    r.add_argument("--block-size", type=int)
    r.add_argument("--strata", help="stratum column (stratified_block)")
    r.add_argument("--factors", help="comma-separated factor columns (minimization)")
    r.add_argument("--weights", help="comma-separated factor weights")
    r.add_argument("--p-mz", type=float, default=0.75)
    r.add_argument("--id", help="unit id column (default: row number)")
    r.add_argument("--seed", type=int)
    r.add_argument("--output")
    r.set_defaults(func=cmd_randomize)

    e = sub.add_parser("are", help="asymptotic relative efficiencies")
    e.add_argument("--family", choices=["normal", "uniform", "double_exponential", "custom"])
    e.add_argument("--variance", type=float)
    e.add_argument("--scale", type=float)
    e.add_argument("--low", type=float)
    e.add_argument("--high", type=float)
    e.add_argument("--density-sq", type=float, help="int f^2 for a custom family")
    e.add_argument("--beta", help="comma-separated calibration vector")
    e.add_argument("--sigma", help="covariance rows separated by ';'")
    e.add_argument("--json-payload", dest="payload", help="JSON string or file")
    e.add_argument("--output")
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_are)
    return p


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            warnings.showwarning = _show_warning
            return args.func(args)
    except RankCalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
