"""Multi-trial experiment protocol: sample, explore, select, compare with the oracle, report."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from ..features import feature_map_from_dict
from ..learn.adapt import CandidateConfig, TreeAdaptOptions, generate_candidates, resolve_tree, tree_adapt
from ..learn.als import ALSOptions
from ..network import save_network
from ..records import RecordRow, write_records_csv
from ..select import slope_heuristics, write_path_csv
from .problems import (Problem, RiskEvaluator, TestSample, custom_problem, get_problem,
                       register_problem, sample_dataset)
from .svg import cloud_plot, path_plot

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


class NumericalFailure(RuntimeError):
    """Every trial failed numerically."""


@dataclass
class ExperimentConfig:
    problem: str = "sqrt_x"
    n: int = 1000
    gamma: float = 1e-3
    trials: int = 1
    seed: int = 0
    test_size: int = 10**5
    test_seed: int = 987654
    out_dir: str = "out"
    timings: bool = False
    feature_N: int | list[int] = 10
    explore_n: int | None = None
    explore_seed: int = 1
    custom: dict | None = None
    candidates: CandidateConfig = field(default_factory=CandidateConfig)

    def validate(self) -> None:
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.test_size < 1:
            raise ConfigError("test_size must be >= 1")
        if self.candidates.mode not in ("tensorized", "fixed-tree", "tree-adaptive"):
            raise ConfigError(f"unknown candidate mode {self.candidates.mode!r}")
        if self.candidates.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.candidates.mode == "tensorized" and not self.candidates.L_range:
            raise ConfigError("empty L_range")
        fN = self.feature_N if isinstance(self.feature_N, list) else [self.feature_N]
        if any(v < 1 for v in fN):
            raise ConfigError("feature_N must be >= 1")
        if self.problem == "custom" and not self.custom:
            raise ConfigError("problem 'custom' needs a 'custom' section")
        try:
            prob = self.resolve_problem()
        except (KeyError, ImportError, AttributeError) as e:
            raise ConfigError(str(e)) from None
        if isinstance(self.feature_N, list) and len(self.feature_N) != prob.d:
            raise ConfigError(f"feature_N lists {len(self.feature_N)} values for d={prob.d}")
        if self.candidates.mode == "tensorized" and prob.d != self.candidates.d:
            raise ConfigError(f"tensorized mode needs d={prob.d} (got {self.candidates.d})")

    def resolve_problem(self) -> Problem:
        if self.problem == "custom":
            prob = custom_problem(self.custom["target"], int(self.custom.get("d", 1)))
            register_problem(prob)
            return prob
        return get_problem(self.problem)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        c = d["candidates"]
        c["L_range"] = list(c["L_range"])
        c.pop("trees", None)
        return d


_TOP_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"candidates"}
_CAND_KEYS = {f.name for f in dataclasses.fields(CandidateConfig)} - {"als", "trees"}
_ALS_KEYS = {f.name for f in dataclasses.fields(ALSOptions)}


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from nested mappings (top level, ``candidates``, ``als``)."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    raw = dict(raw)
    cand = dict(raw.pop("candidates", None) or {})
    als = dict(raw.pop("als", None) or cand.pop("als", None) or {})
    for name, got, allowed in (("top-level", raw, _TOP_KEYS), ("candidates", cand, _CAND_KEYS),
                               ("als", als, _ALS_KEYS)):
        unknown = set(got) - allowed
        if unknown:
            raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
    try:
        if "L_range" in cand:
            cand["L_range"] = tuple(int(v) for v in cand["L_range"])
        cand.setdefault("seed", raw.get("seed", 0))
        cc = CandidateConfig(**cand, als=ALSOptions(**{"max_sweeps": 20, **als}))
        cfg = ExperimentConfig(**raw, candidates=cc)
        for k in ("n", "trials", "seed", "test_size", "test_seed"):
            setattr(cfg, k, int(getattr(cfg, k)))
        fN = cfg.feature_N
        cfg.feature_N = [int(v) for v in fN] if isinstance(fN, (list, tuple)) else int(fN)
        cfg.gamma = float(cfg.gamma)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    cfg.validate()
    return cfg


def load_config(fname) -> ExperimentConfig:
    try:
        with open(fname) as fh:
            raw = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config: {e}") from None
    return config_from_dict(raw or {})


# -- trial protocol ----------------------------------------------------------------

@dataclass
class TrialRow:
    trial: int
    ok: bool
    n_models: int = 0
    C_selected: int | None = None
    excess_selected: float = math.nan
    risk_selected: float = math.nan
    C_oracle: int | None = None
    excess_oracle: float = math.nan
    risk_oracle: float = math.nan
    lambda_cj: float | None = None
    selected_id: int | None = None
    oracle_id: int | None = None
    fallback: bool = False
    error: str = ""


@dataclass
class TrialReport:
    rows: list[TrialRow]

    @property
    def aggregates(self) -> dict:
        ok = [r for r in self.rows if r.ok]
        if not ok:
            return {"trials_ok": 0, "trials_failed": len(self.rows)}

        def mean(attr):
            return float(np.mean([getattr(r, attr) for r in ok]))

        agg = {"trials_ok": len(ok), "trials_failed": len(self.rows) - len(ok),
               "mean_C_selected": mean("C_selected"), "mean_C_oracle": mean("C_oracle"),
               "mean_excess_selected": mean("excess_selected"),
               "mean_excess_oracle": mean("excess_oracle"),
               "mean_risk_selected": mean("risk_selected"),
               "mean_risk_oracle": mean("risk_oracle")}
        eo = agg["mean_excess_oracle"]
        agg["excess_ratio"] = agg["mean_excess_selected"] / eo if eo > 0 else math.inf
        per_trial = [r.excess_selected / r.excess_oracle if r.excess_oracle > 0 else math.inf
                     for r in ok]
        agg["mean_trial_ratio"] = float(np.mean(per_trial))
        return agg


@dataclass
class TrialArtifacts:
    records: list
    risks: list
    selection: object
    rows: list[RecordRow]


def _feature_dict(cfg: ExperimentConfig, prob: Problem) -> dict | None:
    if cfg.candidates.mode == "tensorized":
        return None
    return cfg.candidates.features or prob.default_features(cfg.feature_N).to_dict()


def prepare_candidates(cfg: ExperimentConfig) -> CandidateConfig:
    """Resolve feature maps and, with ``explore_n``, run tree adaptation once on its own sample."""
    prob = cfg.resolve_problem()
    cand = replace(cfg.candidates, features=_feature_dict(cfg, prob))
    if cand.mode == "tree-adaptive" and cfg.explore_n and not cand.trees:
        fm = feature_map_from_dict(cand.features)
        explore = sample_dataset(prob.name, cfg.explore_n, cfg.gamma, cfg.explore_seed)
        init = resolve_tree(cand.tree, fm.n_vars, cfg.explore_seed)
        trees = tree_adapt(explore, fm, init, TreeAdaptOptions(
            moves=cand.tree_moves, seed=cfg.explore_seed, budget_steps=cand.tree_budget))
        cand = replace(cand, trees=tuple(trees))
    return cand


def run_trial(cfg: ExperimentConfig, cand: CandidateConfig, trial: int,
              evaluator: RiskEvaluator) -> tuple[TrialRow, TrialArtifacts | None]:
    prob = cfg.resolve_problem()
    data = sample_dataset(prob.name, cfg.n, cfg.gamma, cfg.seed * 100003 + trial)
    recs = generate_candidates(replace(cand, seed=cand.seed + trial), data)
    risks = [evaluator(r.fitted, r.spec.feature) for r in recs]
    if not all(math.isfinite(x.excess) for x in risks):
        raise FloatingPointError("non-finite test risk")
    oracle = min(range(len(recs)),
                 key=lambda i: (risks[i].excess, recs[i].complexity, recs[i].id))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sel = slope_heuristics(recs, cfg.n)
    si = next(i for i, r in enumerate(recs) if r.id == sel.chosen)
    assert risks[oracle].excess <= min(x.excess for x in risks)
    row = TrialRow(trial, True, len(recs), recs[si].complexity, risks[si].excess,
                   risks[si].risk, recs[oracle].complexity, risks[oracle].excess,
                   risks[oracle].risk, sel.lambda_cj, sel.chosen, recs[oracle].id, sel.fallback)
    rows = [RecordRow.from_record(r, cfg.n, trial) for r in recs]
    return row, TrialArtifacts(recs, risks, sel, rows)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> TrialReport:
    """Run every trial; failed trials are recorded, not fatal. Writes all artifacts."""
    cfg.validate()
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prob = cfg.resolve_problem()
    cand = prepare_candidates(cfg)
    evaluator = RiskEvaluator(TestSample.draw(prob.name, cfg.test_size, cfg.gamma,
                                              cfg.test_seed))
    rows, all_records, cloud, paths, selections, timings = [], [], [], {}, [], []
    first = None
    for t in range(cfg.trials):
        t0 = time.perf_counter()
        try:
            row, art = run_trial(cfg, cand, t, evaluator)
        except (FloatingPointError, np.linalg.LinAlgError, ValueError) as e:
            log.warning("trial %d failed: %s", t, e)
            row, art = TrialRow(t, False, error=f"{type(e).__name__}: {e}"), None
        evaluator.clear()
        rows.append(row)
        timings.append((t, time.perf_counter() - t0))
        if art is None:
            continue
        all_records += art.rows
        for rec, rr in zip(art.records, art.risks):
            cloud.append((t, rec.id, rec.complexity, rec.empirical_risk, rr.risk, rr.excess))
        paths[t] = art.selection.path
        selections.append({"trial": t, **art.selection.to_dict(),
                           "oracle": row.oracle_id})
        for tag, idx in (("selected", row.selected_id), ("oracle", row.oracle_id)):
            rec = next(r for r in art.records if r.id == idx)
            save_network(rec.fitted, out / f"{tag}_trial{t}.ttn")
        if first is None:
            first = (t, art, row)
    report = TrialReport(rows)
    write_records_csv(all_records, out / "records.csv", timings=cfg.timings)
    write_path_csv(paths, out / "path.csv")
    _write_cloud(cloud, out / "cloud.csv")
    _write_trials(rows, out / "trials.csv")
    with open(out / "timings.csv", "w") as fh:
        fh.write("trial,seconds\n" + "".join(f"{t},{s:.3f}\n" for t, s in timings))
    with open(out / "selection.json", "w") as fh:
        json.dump({"trials": selections, "aggregates": report.aggregates,
                   "config": cfg.to_dict()}, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    render_report(out)
    if not any(r.ok for r in rows):
        raise NumericalFailure("; ".join(r.error for r in rows))
    return report


def _write_cloud(cloud, fname):
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "id", "C", "R_hat", "test_risk", "excess_risk"])
        for t, i, c, rh, r, e in cloud:
            w.writerow([t, i, c, repr(float(rh)), repr(float(r)), repr(float(e))])


def _write_trials(rows, fname):
    names = [f.name for f in dataclasses.fields(TrialRow)]
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else ("" if v is None else v)
                        for v in (getattr(r, k) for k in names)])


def render_report(out_dir, trial: int | None = None) -> None:
    """(Re)draw cloud.svg and path.svg from the CSV/JSON artifacts in ``out_dir``."""
    from ..select import read_path_csv
    out = Path(out_dir)
    paths = read_path_csv(out / "path.csv") if (out / "path.csv").exists() else {}
    sel_file = out / "selection.json"
    sels = json.loads(sel_file.read_text())["trials"] if sel_file.exists() else []
    if trial is None:
        trial = min(paths) if paths else 0
    sel = next((s for s in sels if s["trial"] == trial), {})
    if trial in paths:
        path_plot(paths[trial], sel.get("lambda_cj"),
                  f"trial {trial}: selected complexity vs lambda").save(out / "path.svg")
    cloud_file = out / "cloud.csv"
    if cloud_file.exists():
        with open(cloud_file, newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if int(r["trial"]) == trial]
        ids = [int(r["id"]) for r in rows]
        C = [int(r["C"]) for r in rows]
        key = "excess_risk" if "excess_risk" in (rows[0] if rows else {}) else "R_hat"
        R = [float(r[key]) for r in rows]
        si = ids.index(sel["chosen"]) if sel.get("chosen") in ids else None
        oi = ids.index(sel["oracle"]) if sel.get("oracle") in ids else None
        cloud_plot(C, R, si, oi, f"trial {trial}: candidates",
                   "excess risk" if key == "excess_risk" else "empirical risk"
                   ).save(out / "cloud.svg")
