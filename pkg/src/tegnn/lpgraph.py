"""Tripartite attributed-graph encoding of a normalized TE linear program.

One vertex per path variable, one per constraint row (demand and link rows
share a single "dl" set since normalization gives them a common RHS of 1),
and a single objective vertex. Five weighted edge families:

  p-dl  : nonzero pattern of the normalized A (weight = coefficient; demand
          rows keep weight 1, capacity rows carry d_i / C(l))
  p-o   : one edge per path, weight = raw objective coefficient c_p
  dl-o  : one edge per constraint, weight = normalized RHS = 1

Vertex ordering is deterministic (LP columns, then rows, objective last), and
a backref records the column/row each vertex stands for so solutions decode
in LP order even when the graph has been relabeled.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .teprog import NormalizedLP

ATTR_MODES = ("row_col_stats", "fixed")


@dataclass(frozen=True)
class LPGraph:
    num_p: int
    num_dl: int
    edge_p: np.ndarray  # (E,) p-vertex index per p-dl edge
    edge_dl: np.ndarray  # (E,) dl-vertex index per p-dl edge
    edge_w: np.ndarray  # (E,) normalized coefficient
    po_w: np.ndarray  # (num_p,) objective-edge weight per p-vertex
    dlo_w: np.ndarray  # (num_dl,) objective-edge weight per dl-vertex
    init_p: np.ndarray  # (num_p, d) initial attributes
    init_dl: np.ndarray  # (num_dl, d)
    init_o: np.ndarray  # (1, d)
    attr_mode: str
    backref_cols: np.ndarray  # p-vertex -> LP column
    backref_rows: np.ndarray  # dl-vertex -> LP row
    row_meta: tuple
    col_meta: tuple

    @property
    def num_edges(self) -> int:
        return len(self.edge_w)

    def demand_mask(self) -> np.ndarray:
        """Which dl-vertices stand for demand rows (True) vs capacity rows."""
        tags = np.array([self.row_meta[r][0] == "demand" for r in self.backref_rows])
        return tags


def _canonical_order(edge_p, edge_dl, edge_w):
    order = np.lexsort((edge_p, edge_dl))
    return edge_p[order], edge_dl[order], edge_w[order]


def _incident_stats(num_vertices, idx, weights):
    """Mean and population variance of incident weights, per vertex."""
    count = np.bincount(idx, minlength=num_vertices).astype(float)
    total = np.bincount(idx, weights=weights, minlength=num_vertices)
    safe = np.maximum(count, 1.0)
    mean = total / safe
    sq = np.bincount(idx, weights=weights**2, minlength=num_vertices) / safe
    var = np.maximum(sq - mean**2, 0.0)
    return np.stack([mean, var], axis=1)


def encode(nlp: NormalizedLP, attr_mode: str = "row_col_stats", fixed_value: float = 1.0) -> LPGraph:
    """Build the graph for a normalized LP."""
    if attr_mode not in ATTR_MODES:
        raise ValueError(f"unknown attribute mode {attr_mode!r}")
    coo = nlp.a.tocoo()
    edge_p = coo.col.astype(np.int64)
    edge_dl = coo.row.astype(np.int64)
    edge_w = coo.data.astype(float)
    edge_p, edge_dl, edge_w = _canonical_order(edge_p, edge_dl, edge_w)

    num_p, num_dl = nlp.num_cols, nlp.num_rows
    po_w = nlp.c.astype(float).copy()
    dlo_w = np.ones(num_dl)

    if attr_mode == "row_col_stats":
        init_p = _incident_stats(num_p, edge_p, edge_w)
        init_dl = _incident_stats(num_dl, edge_dl, edge_w)
        init_o = np.array([[float(np.mean(nlp.c)), float(np.var(nlp.c))]])
    else:
        init_p = np.full((num_p, 1), fixed_value)
        init_dl = np.full((num_dl, 1), fixed_value)
        init_o = np.full((1, 1), fixed_value)

    return LPGraph(
        num_p=num_p,
        num_dl=num_dl,
        edge_p=edge_p,
        edge_dl=edge_dl,
        edge_w=edge_w,
        po_w=po_w,
        dlo_w=dlo_w,
        init_p=init_p,
        init_dl=init_dl,
        init_o=init_o,
        attr_mode=attr_mode,
        backref_cols=np.arange(num_p, dtype=np.int64),
        backref_rows=np.arange(num_dl, dtype=np.int64),
        row_meta=nlp.row_meta,
        col_meta=nlp.col_meta,
    )


def decode_solution(graph: LPGraph, p_values: np.ndarray) -> np.ndarray:
    """Map per-p-vertex readout scalars back to LP column order."""
    p_values = np.asarray(p_values, dtype=float)
    if p_values.shape != (graph.num_p,):
        raise ValueError(f"expected {graph.num_p} readout values, got {p_values.shape}")
    x = np.empty(graph.num_p)
    x[graph.backref_cols] = p_values
    return x


def adjacency_matrix(graph: LPGraph) -> np.ndarray:
    """Reconstruct the normalized A (rows/cols in LP order) from the edges."""
    a = np.zeros((graph.num_dl, graph.num_p))
    rows = graph.backref_rows[graph.edge_dl]
    cols = graph.backref_cols[graph.edge_p]
    a[rows, cols] = graph.edge_w
    return a


def permute(graph: LPGraph, p_perm: np.ndarray, dl_perm: np.ndarray) -> LPGraph:
    """Relabel vertices: new index of old p-vertex i is p_perm[i] (same for dl).

    The result is the isomorphic graph with canonical edge order; backrefs
    compose so decode_solution still yields LP column order.
    """
    p_perm = np.asarray(p_perm, dtype=np.int64)
    dl_perm = np.asarray(dl_perm, dtype=np.int64)
    if sorted(p_perm.tolist()) != list(range(graph.num_p)):
        raise ValueError("p_perm is not a permutation")
    if sorted(dl_perm.tolist()) != list(range(graph.num_dl)):
        raise ValueError("dl_perm is not a permutation")
    inv_p = np.empty_like(p_perm)
    inv_p[p_perm] = np.arange(graph.num_p)
    inv_dl = np.empty_like(dl_perm)
    inv_dl[dl_perm] = np.arange(graph.num_dl)

    edge_p = p_perm[graph.edge_p]
    edge_dl = dl_perm[graph.edge_dl]
    edge_p, edge_dl, edge_w = _canonical_order(edge_p, edge_dl, graph.edge_w.copy())
    return replace(
        graph,
        edge_p=edge_p,
        edge_dl=edge_dl,
        edge_w=edge_w,
        po_w=graph.po_w[inv_p],
        dlo_w=graph.dlo_w[inv_dl],
        init_p=graph.init_p[inv_p],
        init_dl=graph.init_dl[inv_dl],
        backref_cols=graph.backref_cols[inv_p],
        backref_rows=graph.backref_rows[inv_dl],
    )


# --- serialization ---------------------------------------------------------


def graph_to_dict(graph: LPGraph) -> dict:
    return {
        "num_p": graph.num_p,
        "num_dl": graph.num_dl,
        "edges_pd_pl": [
            [int(p), int(dl), float(w)]
            for p, dl, w in zip(graph.edge_p, graph.edge_dl, graph.edge_w)
        ],
        "edges_po": [float(w) for w in graph.po_w],
        "edges_do_lo": [float(w) for w in graph.dlo_w],
        "init_p": graph.init_p.tolist(),
        "init_dl": graph.init_dl.tolist(),
        "init_o": graph.init_o.tolist(),
        "attr_mode": graph.attr_mode,
        "backref_cols": graph.backref_cols.tolist(),
        "backref_rows": graph.backref_rows.tolist(),
        "row_meta": [list(m) for m in graph.row_meta],
        "col_meta": [list(m) for m in graph.col_meta],
    }


def graph_from_dict(data: dict) -> LPGraph:
    edges = np.array(data["edges_pd_pl"], dtype=float).reshape(-1, 3)
    return LPGraph(
        num_p=int(data["num_p"]),
        num_dl=int(data["num_dl"]),
        edge_p=edges[:, 0].astype(np.int64),
        edge_dl=edges[:, 1].astype(np.int64),
        edge_w=edges[:, 2],
        po_w=np.array(data["edges_po"], dtype=float),
        dlo_w=np.array(data["edges_do_lo"], dtype=float),
        init_p=np.array(data["init_p"], dtype=float),
        init_dl=np.array(data["init_dl"], dtype=float),
        init_o=np.array(data["init_o"], dtype=float),
        attr_mode=data["attr_mode"],
        backref_cols=np.array(data["backref_cols"], dtype=np.int64),
        backref_rows=np.array(data["backref_rows"], dtype=np.int64),
        row_meta=tuple((m[0], int(m[1])) for m in data["row_meta"]),
        col_meta=tuple((int(i), int(j)) for i, j in data["col_meta"]),
    )
