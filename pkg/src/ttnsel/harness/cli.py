"""Command-line interface: ``fit``, ``explore``, ``select``, ``experiment``, ``report``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from ..features import feature_map_from_dict
from ..learn.adapt import generate_candidates, resolve_tree
from ..learn.als import fit_als
from ..network import ModelSpec, save_network
from ..records import RecordRow, group_by_trial, read_records_csv, write_records_csv
from ..select import slope_heuristics, write_path_csv
from .experiment import (ConfigError, NumericalFailure, load_config, prepare_candidates,
                         render_report, run_experiment)
from .problems import RiskEvaluator, TestSample, sample_dataset

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _out(args, cfg) -> Path:
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fit(args) -> int:
    """Fit one model: tree and ranks from the ``model`` section of the config."""
    try:
        with open(args.config) as fh:
            raw = yaml.safe_load(fh) or {}
        model = raw.pop("model", None)
        if not isinstance(model, dict):
            raise ConfigError("fit needs a 'model' section")
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config: {e}") from None
    from .experiment import config_from_dict
    cfg = config_from_dict(raw)
    prob = cfg.resolve_problem()
    if "features" in model:
        fm = feature_map_from_dict(model["features"])
    elif cfg.candidates.mode == "tensorized":
        fm = feature_map_from_dict({"kind": "tensorized", "b": cfg.candidates.b,
                                    "L": int(model.get("L", 8)), "d": prob.d,
                                    "k": cfg.candidates.k})
    else:
        fm = prob.default_features(cfg.feature_N)
    try:
        tree = resolve_tree(model.get("tree", "linear" if fm.kind == "tensorized"
                                      else "balanced"), fm.n_vars, cfg.seed)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad tree: {e}") from None
    rk = model.get("ranks", 2)
    if isinstance(rk, int):
        ranks = {a: (1 if a == tree.root else rk) for a in tree.nodes}
    elif isinstance(rk, list) and len(rk) == len(tree):
        ranks = dict(zip(tree.nodes, map(int, rk)))
    else:
        raise ConfigError(f"ranks must be an int or a list of {len(tree)} post-order values")
    try:
        spec = ModelSpec(tree, ranks, fm)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    data = sample_dataset(prob.name, cfg.n, cfg.gamma, cfg.seed)
    rec = fit_als(spec, data, replace(cfg.candidates.als, seed=cfg.seed))
    ev = RiskEvaluator(TestSample.draw(prob.name, cfg.test_size, cfg.gamma, cfg.test_seed))
    risk = ev(rec.fitted, fm)
    out = _out(args, cfg)
    save_network(rec.fitted, out / "model.ttn")
    summary = {"tree": tree.to_nested(), "ranks": [ranks[a] for a in tree.nodes],
               "C": rec.complexity, "R_hat": rec.empirical_risk, "test_risk": risk.risk,
               "excess_risk": risk.excess, "sweeps": rec.meta["sweeps"]}
    (out / "fit.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_explore(args) -> int:
    cfg = load_config(args.config)
    cand = prepare_candidates(cfg)
    prob = cfg.resolve_problem()
    data = sample_dataset(prob.name, cfg.n, cfg.gamma, cfg.seed * 100003)
    recs = generate_candidates(cand, data)
    out = _out(args, cfg)
    write_records_csv([RecordRow.from_record(r, cfg.n) for r in recs], out / "records.csv",
                      timings=cfg.timings)
    if args.save_networks:
        (out / "networks").mkdir(exist_ok=True)
        for r in recs:
            save_network(r.fitted, out / "networks" / f"model{r.id}.ttn")
    print(f"{len(recs)} candidates -> {out / 'records.csv'}")
    return EXIT_OK


def cmd_select(args) -> int:
    try:
        rows = read_records_csv(args.records)
    except (OSError, ValueError, KeyError) as e:
        raise ConfigError(f"cannot read records: {e}") from None
    if not rows:
        raise ConfigError("records file is empty")
    out = Path(args.out or Path(args.records).parent)
    out.mkdir(parents=True, exist_ok=True)
    paths, results = {}, []
    for trial, rs in group_by_trial(rows).items():
        n = args.n or rs[0].n
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = slope_heuristics(rs, n)
        for w in caught:
            print(f"warning (trial {trial}): {w.message}", file=sys.stderr)
        paths[trial] = res.path
        chosen = next(r for r in rs if r.id == res.chosen)
        results.append({"trial": trial, **res.to_dict(), "C": chosen.complexity,
                        "R_hat": chosen.empirical_risk})
        print(f"trial {trial}: lambda_cj={res.lambda_cj} chosen id={res.chosen} "
              f"C={chosen.complexity}")
    write_path_csv(paths, out / "path.csv")
    with open(out / "selection.json", "w") as fh:
        json.dump({"trials": results}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _cloud_from_rows(rows, out / "cloud.csv")
    render_report(out)
    return EXIT_OK


def _cloud_from_rows(rows, fname):
    import csv
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "id", "C", "R_hat"])
        for r in rows:
            w.writerow([r.trial, r.id, r.complexity, repr(r.empirical_risk)])


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if args.trials:
        cfg.trials = args.trials
    report = run_experiment(cfg, args.out)
    print(json.dumps(report.aggregates, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    d = Path(args.dir)
    if not (d / "path.csv").exists() and not (d / "cloud.csv").exists():
        raise ConfigError(f"no artifacts in {d}")
    render_report(d, args.trial)
    print(f"rendered {d / 'cloud.svg'} and {d / 'path.svg'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ttnsel", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("fit", help="fit a single model")
    s.add_argument("config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_fit)
    s = sub.add_parser("explore", help="generate candidate models")
    s.add_argument("config")
    s.add_argument("--out")
    s.add_argument("--save-networks", action="store_true")
    s.set_defaults(func=cmd_explore)
    s = sub.add_parser("select", help="slope heuristics on a records file")
    s.add_argument("records")
    s.add_argument("--out")
    s.add_argument("--n", type=int, help="sample size (default: the records' n column)")
    s.set_defaults(func=cmd_select)
    s = sub.add_parser("experiment", help="full multi-trial protocol")
    s.add_argument("config")
    s.add_argument("--out")
    s.add_argument("--trials", type=int)
    s.set_defaults(func=cmd_experiment)
    s = sub.add_parser("report", help="re-render plots from artifacts")
    s.add_argument("dir")
    s.add_argument("--trial", type=int)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
