"""Penalized model selection: criterion, exact lambda-path, complexity jump, theoretical penalties.

Records are any objects exposing ``id``, ``complexity`` and ``empirical_risk``
(:class:`~ttnsel.learn.als.ModelRecord` or :class:`~ttnsel.records.RecordRow`).
"""

from __future__ import annotations

import bisect
import csv
import json
import math
import warnings
from dataclasses import dataclass

__all__ = ["NoJump", "PenaltySpec", "SelectionPath", "SlopeResult", "crit", "selection_path",
           "complexity_jump", "slope_select", "slope_heuristics", "theoretical_penalty_slow",
           "theoretical_penalty_fast", "logNc_bound", "log_plus", "write_path_csv", "read_path_csv",
           "write_selection_json"]


class NoJump(ValueError):
    """The selection path is constant, so there is no complexity jump."""


def log_plus(u: float) -> float:
    return max(math.log(u), 0.0) if u > 0 else 0.0


# -- penalties ---------------------------------------------------------------------

def theoretical_penalty_slow(C: float, n: int, B: float, L_lip: float, R: float, wbar: float,
                             logNc: float, tree_size: int = 1) -> float:
    """lambda_m sqrt(C/n) + 2B sqrt((wbar C + logNc) / (2n)),
    with lambda_m = 4B sqrt(2 log(6 L B^-1 R |T| sqrt(n)))."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if B == 0:
        return 0.0
    arg = 6.0 * L_lip * R * tree_size * math.sqrt(n) / B
    if arg < 1:
        raise ValueError("log argument below 1; lambda_m undefined")
    lam = 4.0 * B * math.sqrt(2.0 * math.log(arg))
    return lam * math.sqrt(C / n) + 2.0 * B * math.sqrt((wbar * C + logNc) / (2.0 * n))


def theoretical_penalty_fast(C: float, n: int, R: float, wbar: float, eps: float,
                             logNc: float, tree_size: int = 1, K1: float = 1.0) -> float:
    """K1 R^2 [ (b C)/(n eps^2) log+(n eps^2/(b C)) + (wbar C + logNc)/(n eps) ],
    b = 1 + log+(3|T|/(4e)). ``K1`` is an unspecified numerical constant (default 1)."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    b = 1.0 + log_plus(3.0 * tree_size / (4.0 * math.e))
    bc = b * C
    ne2 = n * eps * eps
    first = bc / ne2 * log_plus(ne2 / bc)
    second = (wbar * C + logNc) / (n * eps)
    return K1 * R * R * (first + second)


def logNc_bound(c: float, arity: int, d: int, mode: str = "full",
                g_of_c: float | None = None) -> float:
    """Log-count of models with complexity c: full 2a(c + d log c); sparse 5ac log c + 2c log g(c)."""
    if c < 2:
        raise ValueError("c must be >= 2")
    if mode == "full":
        return 2.0 * arity * (c + d * math.log(c))
    if mode == "sparse":
        if g_of_c is None:
            raise ValueError("sparse mode needs g_of_c")
        return 5.0 * arity * c * math.log(c) + 2.0 * c * math.log(g_of_c)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class PenaltySpec:
    """pen(m) as a function of a record. ``shape`` is one of ``C/n``, ``sqrt(C/n)``,
    ``slow`` or ``fast``; theoretical shapes use the remaining parameters."""

    shape: str = "C/n"
    n: int = 1
    B: float = 1.0
    L_lip: float = 1.0
    R: float = 1.0
    wbar: float = 1.0
    eps: float = 1.0
    K1: float = 1.0
    arity: int = 2
    d: int = 1
    count_mode: str = "full"
    tree_size: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.shape not in ("C/n", "sqrt(C/n)", "slow", "fast"):
            raise ValueError(f"unknown penalty shape {self.shape!r}")

    def __call__(self, record) -> float:
        C = record.complexity
        if self.shape == "C/n":
            return C / self.n
        if self.shape == "sqrt(C/n)":
            return math.sqrt(C / self.n)
        g = C if self.count_mode == "sparse" else None
        lnc = logNc_bound(max(C, 2), self.arity, self.d, self.count_mode, g)
        if self.shape == "slow":
            return theoretical_penalty_slow(C, self.n, self.B, self.L_lip, self.R, self.wbar,
                                            lnc, self.tree_size)
        return theoretical_penalty_fast(C, self.n, self.R, self.wbar, self.eps, lnc,
                                        self.tree_size, self.K1)


def crit(record, pen: PenaltySpec, lam: float) -> float:
    """R_hat + lam * pen(record)."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return record.empirical_risk + lam * pen(record)


# -- exact path --------------------------------------------------------------------

@dataclass(frozen=True)
class SelectionPath:
    """Piecewise-constant lambda -> selected id. ``chosen[k]`` is selected on
    ``[breakpoints[k-1], breakpoints[k])``; at a breakpoint the smaller model wins."""

    breakpoints: tuple[float, ...]
    chosen: tuple
    complexities: tuple[int, ...]
    risks: tuple[float, ...]
    n: int

    def index_at(self, lam: float) -> int:
        return bisect.bisect_right(self.breakpoints, lam)

    def model_at(self, lam: float):
        return self.chosen[self.index_at(lam)]

    def complexity_at(self, lam: float) -> int:
        return self.complexities[self.index_at(lam)]


def _order_key(r):
    return (r.complexity, r.empirical_risk, _id_key(r.id))


def _id_key(i):
    return (0, i, "") if isinstance(i, (int, float)) else (1, 0, str(i))


def selection_path(records, n: int = 1) -> SelectionPath:
    """Exact minimizer path of R_hat + lam C/n from the lower-left convex hull of (C/n, R_hat)."""
    recs = sorted(records, key=_order_key)
    if not recs:
        raise ValueError("no records")
    # Among equal complexities keep the lowest risk; then only strictly decreasing risks matter.
    pts = []
    for r in recs:
        if pts and pts[-1].complexity == r.complexity:
            continue
        if pts and r.empirical_risk >= pts[-1].empirical_risk:
            continue
        pts.append(r)
    hull: list = []
    for r in pts:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # b is dropped unless strictly below the chord from a to r
            lhs = (b.empirical_risk - a.empirical_risk) * (r.complexity - a.complexity)
            rhs = (r.empirical_risk - a.empirical_risk) * (b.complexity - a.complexity)
            if lhs >= rhs:
                hull.pop()
            else:
                break
        hull.append(r)
    hull.reverse()  # from lam = 0+ (largest C) to lam = inf (smallest C)
    bps = []
    for big, small in zip(hull[:-1], hull[1:]):
        bps.append((small.empirical_risk - big.empirical_risk)
                   / ((big.complexity - small.complexity) / n))
    return SelectionPath(tuple(bps), tuple(r.id for r in hull),
                         tuple(r.complexity for r in hull),
                         tuple(r.empirical_risk for r in hull), n)


def complexity_jump(path: SelectionPath) -> tuple[float, int]:
    """(lambda, jump) at the largest drop of lam -> C; ties go to the largest lambda."""
    if not path.breakpoints:
        raise NoJump("no jump: the selection path is constant")
    best_k, best_jump = 0, -1
    for k, lam in enumerate(path.breakpoints):
        jump = path.complexities[k] - path.complexities[k + 1]
        if jump >= best_jump:
            best_k, best_jump = k, jump
    return path.breakpoints[best_k], best_jump


@dataclass(frozen=True)
class SlopeResult:
    chosen: object
    lambda_cj: float | None
    lambda_selected: float | None
    jump: int | None
    runner_up: object
    path: SelectionPath
    fallback: bool = False

    def to_dict(self) -> dict:
        return {"lambda_cj": self.lambda_cj, "lambda_selected": self.lambda_selected,
                "jump": self.jump, "chosen": self.chosen, "runner_up": self.runner_up,
                "fallback": self.fallback, "n": self.path.n}


def slope_heuristics(records, n: int = 1) -> SlopeResult:
    """Complexity-jump calibration: lam_cj at the largest jump, then the model at 2 lam_cj.

    A constant path falls back to the minimum empirical risk, with a warning.
    """
    records = list(records)
    path = selection_path(records, n)
    try:
        lam, jump = complexity_jump(path)
    except NoJump:
        warnings.warn("no complexity jump; selecting the minimum empirical risk", stacklevel=2)
        chosen = path.chosen[0]
        return SlopeResult(chosen, None, None, None, _runner_up(records, chosen, 0.0, n),
                           path, True)
    chosen = path.model_at(2.0 * lam)
    return SlopeResult(chosen, lam, 2.0 * lam, jump,
                       _runner_up(records, chosen, 2.0 * lam, n), path)


def _runner_up(records, chosen, lam, n):
    rest = [r for r in records if r.id != chosen]
    if not rest:
        return None
    best = min(rest, key=lambda r: (r.empirical_risk + lam * r.complexity / n,) + _order_key(r))
    return best.id


def slope_select(records, n: int = 1):
    """Id of the model selected by slope heuristics."""
    return slope_heuristics(records, n).chosen


# -- artifacts ---------------------------------------------------------------------

def write_path_csv(paths, fname) -> None:
    """One row per segment: trial, left end of its lambda-interval, chosen id, complexity.

    ``paths`` is a :class:`SelectionPath` or a mapping trial -> path.
    """
    if isinstance(paths, SelectionPath):
        paths = {0: paths}
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "lambda_break", "chosen_id", "C"])
        for trial, path in paths.items():
            lows = (0.0,) + path.breakpoints
            for lam, i, c in zip(lows, path.chosen, path.complexities):
                w.writerow([trial, repr(float(lam)), i, c])


def read_path_csv(fname) -> dict[int, SelectionPath]:
    """Inverse of :func:`write_path_csv` (risks are not stored and come back as NaN)."""
    rows: dict[int, list] = {}
    with open(fname, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(int(row.get("trial") or 0), []).append(row)
    out = {}
    for t, rs in rows.items():
        out[t] = SelectionPath(tuple(float(r["lambda_break"]) for r in rs[1:]),
                               tuple(int(r["chosen_id"]) for r in rs),
                               tuple(int(r["C"]) for r in rs), (math.nan,) * len(rs), 1)
    return out


def write_selection_json(result: SlopeResult, fname, extra: dict | None = None) -> None:
    with open(fname, "w") as fh:
        json.dump({**result.to_dict(), **(extra or {})}, fh, indent=2, sort_keys=True)
        fh.write("\n")
