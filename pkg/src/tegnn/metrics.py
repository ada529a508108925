"""Evaluation metrics and runtime comparison against the classical solver.

Gap definitions, for a model solution R and the certified optimal x*:

  ogap     |f0(x*) - f0(R)| / f0(x*)
  cgap     sum_i relu(f_i^demand(R)) + sum_l relu(f_l^capacity(R)) / C(l)
  onocgap  ogap of R / sigma, where sigma is the worst constraint-violation
           ratio (the scaled solution is feasible by construction)

Instances whose optimal objective is zero have no defined relative gap; the
benchmark excludes and counts them.
"""

from __future__ import annotations

import json
import statistics
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch

from . import gnn, ipm, teprog


class UndefinedMetricError(ValueError):
    """Relative gaps are undefined for a zero optimal objective."""


def ogap(lp: teprog.CanonicalLP, model_x: np.ndarray, optimal_x: np.ndarray) -> float:
    opt = teprog.objective(lp, optimal_x)
    if opt <= 0:
        raise UndefinedMetricError("optimal objective is not positive")
    return abs(opt - teprog.objective(lp, model_x)) / opt


def cgap(lp: teprog.CanonicalLP, model_x: np.ndarray) -> float:
    viol = teprog.constraint_violations(lp, model_x)
    return float(np.sum(viol / lp.b))


def onocgap(lp: teprog.CanonicalLP, model_x: np.ndarray, optimal_x: np.ndarray) -> float:
    scaled = teprog.scale_to_feasible(lp, model_x)
    residual = teprog.constraint_violations(lp, scaled)
    assert not np.any(residual > 0), "scaled solution must be exactly feasible"
    return ogap(lp, scaled, optimal_x)


@dataclass
class InstanceResult:
    instance_id: str
    num_nodes: int
    num_pairs: int
    num_paths: int
    ogap: float
    cgap: float
    onocgap: float
    model_time_ms: float
    ipm_time_ms: float
    model_time_total_ms: float | None = None  # including graph encoding


@dataclass
class EvalReport:
    results: list
    excluded: list  # (instance_id, reason)
    aggregates: dict
    recipe_meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "results": [vars(r) for r in self.results],
            "excluded": self.excluded,
            "aggregates": self.aggregates,
            "recipe_meta": self.recipe_meta,
        }


def _aggregate(values) -> dict:
    vals = [v for v in values if v is not None]
    if not vals:
        return {}
    out = {
        "mean": float(np.mean(vals)),
        "std": float(np.std(vals)),
        "median": float(np.median(vals)),
        "p90": float(np.percentile(vals, 90)),
        "max": float(np.max(vals)),
    }
    return out


def _median_time(fn, repeats: int, warmup: int = 1) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


def benchmark(
    entries,
    params: gnn.SplitRatioGNN,
    ipm_config: ipm.IPMConfig = ipm.IPMConfig(),
    k: int | None = None,
    repeats: int = 5,
    include_encoding_time: bool = False,
    recipe_meta: dict | None = None,
    time_ipm: bool = True,
) -> EvalReport:
    """Per-instance gaps and timings for a trained model.

    `entries` holds dicts with keys instance, lp, graph and optionally
    trajectory (instances without one are solved here, timed). Model timing
    is the steady-state forward pass (prepared tensors, median of `repeats`);
    the optional end-to-end number adds encoding and preparation.
    """
    k = k or params.k_max
    results, excluded = [], []
    for entry in entries:
        inst = entry["instance"]
        lp = entry["lp"]
        graph = entry["graph"]
        iid = entry.get("instance_id", "?")
        trajectory = entry.get("trajectory")
        if trajectory is None:
            t0 = time.perf_counter()
            trajectory = ipm.solve(lp, ipm_config)
            ipm_ms = (time.perf_counter() - t0) * 1e3
        elif time_ipm:
            ipm_ms = _median_time(lambda: ipm.solve(lp, ipm_config), max(1, repeats // 2))
        else:
            ipm_ms = float("nan")

        gt = gnn.prepare(graph)
        with torch.no_grad():
            model_ms = _median_time(lambda: gnn.forward(gt, params, k), repeats)
            trace = gnn.forward(gt, params, k)
        total_ms = None
        if include_encoding_time:
            nlp = teprog.normalize(lp)

            def end_to_end():
                from .lpgraph import encode

                g2 = encode(nlp, graph.attr_mode)
                with torch.no_grad():
                    gnn.forward(gnn.prepare(g2), params, k)

            total_ms = _median_time(end_to_end, repeats)

        model_x = trace.solutions()[-1]
        optimal_x = trajectory.final_x
        try:
            o = ogap(lp, model_x, optimal_x)
            oc = onocgap(lp, model_x, optimal_x)
        except UndefinedMetricError as exc:
            excluded.append((iid, str(exc)))
            continue
        results.append(
            InstanceResult(
                instance_id=iid,
                num_nodes=inst.topology.num_nodes,
                num_pairs=len(inst.pairs),
                num_paths=inst.num_paths,
                ogap=o,
                cgap=cgap(lp, model_x),
                onocgap=oc,
                model_time_ms=model_ms,
                ipm_time_ms=ipm_ms,
                model_time_total_ms=total_ms,
            )
        )

    aggregates = {
        "ogap": _aggregate([r.ogap for r in results]),
        "cgap": _aggregate([r.cgap for r in results]),
        "onocgap": _aggregate([r.onocgap for r in results]),
        "model_time_ms": _aggregate([r.model_time_ms for r in results]),
        "ipm_time_ms": _aggregate([r.ipm_time_ms for r in results]),
        "num_excluded": len(excluded),
    }
    return EvalReport(results, excluded, aggregates, recipe_meta or {})


def soft_speed_check(report: EvalReport, min_nodes: int = 60, min_pairs: int = 20) -> bool:
    """Warn (not fail) if model inference is slower than the solver on the
    largest instances."""
    big = [
        r
        for r in report.results
        if r.num_nodes >= min_nodes and r.num_pairs >= min_pairs
    ]
    if not big:
        return True
    model_med = float(np.median([r.model_time_ms for r in big]))
    ipm_med = float(np.median([r.ipm_time_ms for r in big]))
    if model_med > ipm_med:
        warnings.warn(
            f"model inference median {model_med:.2f} ms exceeds solver median "
            f"{ipm_med:.2f} ms on instances with >= {min_nodes} nodes",
            stacklevel=2,
        )
        return False
    return True


# --- report writers --------------------------------------------------------

_CSV_FIELDS = [
    "instance_id",
    "num_nodes",
    "num_pairs",
    "num_paths",
    "ogap",
    "cgap",
    "onocgap",
    "model_time_ms",
    "ipm_time_ms",
    "model_time_total_ms",
]


def write_report(report: EvalReport, out_dir):
    """report.json, report.csv and plot-ready size/time CSVs."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))

    import csv as _csv

    with open(out / "report.csv", "w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=_CSV_FIELDS)
        writer.writeheader()
        for r in report.results:
            writer.writerow({f: getattr(r, f) for f in _CSV_FIELDS})

    def grouped_csv(path, key):
        groups = {}
        for r in report.results:
            groups.setdefault(getattr(r, key), []).append(r)
        with open(path, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow([key, "count", "mean_ogap", "mean_cgap", "mean_onocgap",
                             "median_model_time_ms", "median_ipm_time_ms"])
            for val in sorted(groups):
                rs = groups[val]
                writer.writerow([
                    val,
                    len(rs),
                    np.mean([r.ogap for r in rs]),
                    np.mean([r.cgap for r in rs]),
                    np.mean([r.onocgap for r in rs]),
                    np.median([r.model_time_ms for r in rs]),
                    np.median([r.ipm_time_ms for r in rs]),
                ])

    grouped_csv(out / "gap_vs_nodes.csv", "num_nodes")
    grouped_csv(out / "time_vs_nodes.csv", "num_nodes")
    grouped_csv(out / "time_vs_pairs.csv", "num_pairs")
