"""Records file: one CSV row per fitted candidate."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

COLUMNS = ["trial", "id", "tree_hash", "ranks", "L", "C", "R_hat", "seed", "fit_time", "n", "tree"]


@dataclass(frozen=True)
class RecordRow:
    id: int
    tree_hash: str
    ranks: tuple[int, ...]
    L: int | None
    complexity: int
    empirical_risk: float
    seed: int
    fit_time: float
    n: int
    tree: str = ""
    trial: int = 0

    @classmethod
    def from_record(cls, rec, n: int, trial: int = 0) -> "RecordRow":
        tree = rec.spec.tree
        return cls(rec.id, tree.hash, tuple(rec.spec.ranks[a] for a in tree.nodes),
                   rec.meta.get("L"), rec.complexity, rec.empirical_risk,
                   rec.meta.get("seed", 0), rec.meta.get("fit_time", 0.0), n,
                   json.dumps(tree.to_nested(), separators=(",", ":")), trial)


def write_records_csv(rows, fname, *, timings: bool = True) -> None:
    """``timings=False`` writes 0 for wall times, making the file byte-reproducible."""
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([r.trial, r.id, r.tree_hash, " ".join(map(str, r.ranks)),
                        "" if r.L is None else r.L, r.complexity, repr(float(r.empirical_risk)),
                        r.seed, f"{r.fit_time:.4f}" if timings else "0", r.n, r.tree])


def read_records_csv(fname) -> list[RecordRow]:
    with open(fname, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "C", "R_hat"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"records file lacks columns {sorted(missing)}")
        out = []
        for row in reader:
            out.append(RecordRow(
                int(row["id"]), row.get("tree_hash", ""),
                tuple(int(v) for v in row.get("ranks", "").split()),
                int(row["L"]) if row.get("L") else None,
                int(row["C"]), float(row["R_hat"]), int(row.get("seed") or 0),
                float(row.get("fit_time") or 0.0), int(row.get("n") or 1), row.get("tree", ""),
                int(row.get("trial") or 0)))
    return out


def group_by_trial(rows) -> dict[int, list[RecordRow]]:
    out: dict[int, list[RecordRow]] = {}
    for r in rows:
        out.setdefault(r.trial, []).append(r)
    return dict(sorted(out.items()))
