"""Path-formulation traffic-engineering linear programs.

The canonical form is  max c.x  s.t.  A x <= b, x >= 0  with one demand row
per SD pair (RHS 1) followed by one capacity row per link that is traversed by
at least one candidate path (RHS = link capacity). Column p of pair i carries
objective coefficient d_i; capacity rows carry d_i in the columns of paths
crossing the link. Rows and columns keep metadata tying them back to the
instance, and a normalized variant divides every row by its RHS so b = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .netmodel import TEInstance


@dataclass(frozen=True)
class CanonicalLP:
    c: np.ndarray  # (num_cols,) objective coefficients
    a: sparse.csr_matrix  # (num_rows, num_cols), demand rows then capacity rows
    b: np.ndarray  # (num_rows,) strictly positive
    row_meta: tuple  # ("demand", pair_index) or ("capacity", link_index)
    col_meta: tuple  # (pair_index, path_index)

    @property
    def num_rows(self) -> int:
        return self.a.shape[0]

    @property
    def num_cols(self) -> int:
        return self.a.shape[1]

    @property
    def num_demand_rows(self) -> int:
        return sum(1 for tag, _ in self.row_meta if tag == "demand")


@dataclass(frozen=True)
class NormalizedLP:
    c: np.ndarray
    a: sparse.csr_matrix  # rows divided by their original RHS
    b: np.ndarray  # identically 1
    row_meta: tuple
    col_meta: tuple
    scale: np.ndarray  # original b, for de-normalization

    @property
    def num_rows(self) -> int:
        return self.a.shape[0]

    @property
    def num_cols(self) -> int:
        return self.a.shape[1]


def build_lp(instance: TEInstance) -> CanonicalLP:
    """Transcribe an instance into the canonical LP. Links traversed by no
    candidate path are omitted (their constraints are vacuous)."""
    num_cols = instance.num_paths
    demands = instance.demands()

    col_meta = []
    col = 0
    rows = []  # (row_index_placeholder later); build demand rows first
    data, row_idx, col_idx = [], [], []

    # demand rows, one per pair in pair order
    for i, group in enumerate(instance.paths):
        for j, _path in enumerate(group):
            col_meta.append((i, j))
            row_idx.append(i)
            col_idx.append(col)
            data.append(1.0)
            col += 1
    num_pairs = len(instance.pairs)

    # capacity rows for on-path links, in link-index order
    links_used = sorted(
        {lidx for group in instance.paths for path in group for lidx in path}
    )
    link_row = {lidx: num_pairs + r for r, lidx in enumerate(links_used)}
    col = 0
    for i, group in enumerate(instance.paths):
        for _path in group:
            for lidx in _path:
                row_idx.append(link_row[lidx])
                col_idx.append(col)
                data.append(demands[i])
            col += 1

    num_rows = num_pairs + len(links_used)
    a = sparse.csr_matrix(
        (data, (row_idx, col_idx)), shape=(num_rows, num_cols), dtype=float
    )
    a.sum_duplicates()

    b = np.concatenate(
        [
            np.ones(num_pairs),
            np.array([instance.topology.links[l][2] for l in links_used], dtype=float),
        ]
    )
    c = np.concatenate(
        [np.full(len(group), demands[i]) for i, group in enumerate(instance.paths)]
    )
    row_meta = tuple(
        [("demand", i) for i in range(num_pairs)]
        + [("capacity", l) for l in links_used]
    )
    return CanonicalLP(c, a, b, row_meta, tuple(col_meta))


def normalize(lp: CanonicalLP) -> NormalizedLP:
    """Divide every row by its RHS so b is identically 1."""
    if np.any(lp.b <= 0):
        raise ValueError("normalize requires strictly positive b")
    inv = sparse.diags(1.0 / lp.b)
    a = (inv @ lp.a).tocsr()
    return NormalizedLP(
        lp.c.copy(), a, np.ones(lp.num_rows), lp.row_meta, lp.col_meta, lp.b.copy()
    )


def denormalize(nlp: NormalizedLP) -> CanonicalLP:
    a = (sparse.diags(nlp.scale) @ nlp.a).tocsr()
    return CanonicalLP(nlp.c.copy(), a, nlp.scale.copy(), nlp.row_meta, nlp.col_meta)


def objective(lp, x: np.ndarray) -> float:
    """c.x, the total routed throughput."""
    x = np.asarray(x, dtype=float)
    if x.shape != (lp.num_cols,):
        raise ValueError(f"solution has shape {x.shape}, expected ({lp.num_cols},)")
    return float(lp.c @ x)


def constraint_violations(lp, x: np.ndarray) -> np.ndarray:
    """Per-row rectified residuals max(0, (Ax)_j - b_j)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (lp.num_cols,):
        raise ValueError(f"solution has shape {x.shape}, expected ({lp.num_cols},)")
    return np.maximum(0.0, lp.a @ x - lp.b)


def scale_to_feasible(lp, x: np.ndarray) -> np.ndarray:
    """Divide x by the worst constraint-violation ratio, sigma = max(1, max_j
    (Ax)_j / b_j). The result is feasible with exactly zero residual; sigma is
    nudged up by an ulp if rounding leaves any row marginally violated."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("scale_to_feasible requires x >= 0")
    ratios = (lp.a @ x) / lp.b
    sigma = max(1.0, float(ratios.max(initial=0.0)))
    scaled = x / sigma
    bump = np.finfo(float).eps
    for _ in range(100):
        if not np.any(lp.a @ scaled > lp.b):
            return scaled
        sigma *= 1.0 + bump
        bump *= 2.0
        scaled = x / sigma
    raise RuntimeError("could not reach exact feasibility by scaling")


# --- serialization ---------------------------------------------------------


def lp_to_dict(lp: CanonicalLP) -> dict:
    rows = []
    csr = lp.a.tocsr()
    for r in range(lp.num_rows):
        start, end = csr.indptr[r], csr.indptr[r + 1]
        entries = [
            [int(c), float(v)] for c, v in zip(csr.indices[start:end], csr.data[start:end])
        ]
        rows.append({"tag": list(lp.row_meta[r]), "entries": entries})
    return {
        "c": lp.c.tolist(),
        "b": lp.b.tolist(),
        "rows": rows,
        "col_meta": [list(m) for m in lp.col_meta],
    }


def lp_from_dict(data: dict) -> CanonicalLP:
    num_cols = len(data["c"])
    num_rows = len(data["rows"])
    r_idx, c_idx, vals = [], [], []
    row_meta = []
    for r, row in enumerate(data["rows"]):
        row_meta.append((row["tag"][0], int(row["tag"][1])))
        for c, v in row["entries"]:
            r_idx.append(r)
            c_idx.append(int(c))
            vals.append(float(v))
    a = sparse.csr_matrix((vals, (r_idx, c_idx)), shape=(num_rows, num_cols), dtype=float)
    return CanonicalLP(
        np.array(data["c"], dtype=float),
        a,
        np.array(data["b"], dtype=float),
        tuple(row_meta),
        tuple((int(i), int(j)) for i, j in data["col_meta"]),
    )
