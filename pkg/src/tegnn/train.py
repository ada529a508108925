"""Supervised training against recorded solver trajectories.

The loss on one sample with K supervised outer loops is

    rho1 * sum_k xi^(K-k) ||R_k - xhat_k||^2                       (variable)
  + rho2 * sum_k xi^(K-k) sum_rows relu(f_row(R_k)) / rhs_row      (constraint)
  + rho3 * sum_k xi^(K-k) (f0(R_k) - f0(xhat_final))^2             (objective)

averaged over the minibatch. When the recorded trajectory is longer than the
model's maximum unroll depth, the last k_max iterates are supervised; when it
is shorter, the model runs exactly that many outer loops.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import gnn
from .ipm import IPMTrajectory
from .lpgraph import LPGraph
from .teprog import CanonicalLP


class TrainingDivergenceError(RuntimeError):
    """The loss became non-finite during training."""


@dataclass(frozen=True)
class LossWeights:
    rho1: float = 1.0
    rho2: float = 1.0
    rho3: float = 1.0
    xi: float = 0.9

    def __post_init__(self):
        if min(self.rho1, self.rho2, self.rho3) < 0:
            raise ValueError("loss weights must be nonnegative")
        if max(self.rho1, self.rho2, self.rho3) <= 0:
            raise ValueError("at least one loss weight must be positive")
        if not (0 < self.xi <= 1):
            raise ValueError("xi must be in (0, 1]")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 16
    learning_rate: float = 1e-3
    betas: tuple = (0.9, 0.999)
    seed: int = 0
    grad_clip: float = 1.0
    checkpoint_every: int = 10
    strict_repro: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")


@dataclass
class TrainingSample:
    graph: LPGraph
    lp: CanonicalLP
    trajectory: IPMTrajectory
    instance_id: str
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        dims = {self.graph.num_p, self.lp.num_cols, len(self.trajectory.final_x)}
        if len(dims) != 1:
            raise ValueError(
                f"sample {self.instance_id}: graph/LP/trajectory dimensions differ: {dims}"
            )

    @property
    def prepared(self) -> gnn.GraphTensors:
        if "gt" not in self._cache:
            self._cache["gt"] = gnn.prepare(self.graph)
        return self._cache["gt"]

    def col_to_vertex(self) -> torch.Tensor:
        """Index map from LP column order to graph p-vertex order."""
        if "c2v" not in self._cache:
            self._cache["c2v"] = torch.as_tensor(
                np.argsort(self.graph.backref_cols), dtype=torch.long
            )
        return self._cache["c2v"]


def _readout_in_lp_order(trace: gnn.ForwardTrace, k_index: int) -> torch.Tensor:
    cols = trace.gt.graph.backref_cols
    inv = np.argsort(cols)
    return trace.readouts[k_index][torch.as_tensor(inv, dtype=torch.long)]


def _discounts(k: int, xi: float) -> np.ndarray:
    return xi ** np.arange(k - 1, -1, -1, dtype=float)


def aligned_targets(trajectory: IPMTrajectory, k: int) -> list:
    """The last k trajectory iterates (supervision targets), LP column order."""
    if k > trajectory.iterations:
        raise ValueError(
            f"cannot supervise {k} loops from a {trajectory.iterations}-step trajectory"
        )
    offset = trajectory.iterations - k
    return [trajectory.iterates[offset + i][0] for i in range(k)]


def variable_loss(trace: gnn.ForwardTrace, trajectory: IPMTrajectory, xi: float):
    """Discounted squared distance between readouts and trajectory iterates."""
    targets = aligned_targets(trajectory, trace.k)
    loss = torch.zeros((), dtype=torch.float64)
    for disc, k_index, target in zip(_discounts(trace.k, xi), range(trace.k), targets):
        r = _readout_in_lp_order(trace, k_index)
        t = torch.as_tensor(target, dtype=torch.float64)
        loss = loss + disc * torch.sum((r - t) ** 2)
    return loss


def constraint_loss(trace: gnn.ForwardTrace, lp: CanonicalLP, xi: float):
    """Discounted rectified violations, capacity terms divided by capacity.

    Demand rows have RHS 1 already, so every row's term is
    relu((A R)_row - b_row) / b_row.
    """
    coo = lp.a.tocoo()
    idx = torch.as_tensor(np.vstack([coo.row, coo.col]), dtype=torch.long)
    vals = torch.as_tensor(coo.data / lp.b[coo.row], dtype=torch.float64)
    a_norm = torch.sparse_coo_tensor(
        idx, vals, size=lp.a.shape, check_invariants=True
    ).coalesce()
    loss = torch.zeros((), dtype=torch.float64)
    for disc, k_index in zip(_discounts(trace.k, xi), range(trace.k)):
        r = _readout_in_lp_order(trace, k_index)
        viol = torch.relu(torch.mv(a_norm, r) - 1.0)
        loss = loss + disc * viol.sum()
    return loss


def objective_loss(trace: gnn.ForwardTrace, lp: CanonicalLP, trajectory: IPMTrajectory, xi: float):
    """Discounted squared gap to the trajectory's final objective."""
    c = torch.as_tensor(lp.c, dtype=torch.float64)
    target = trajectory.final_objective
    loss = torch.zeros((), dtype=torch.float64)
    for disc, k_index in zip(_discounts(trace.k, xi), range(trace.k)):
        r = _readout_in_lp_order(trace, k_index)
        loss = loss + disc * (torch.dot(c, r) - target) ** 2
    return loss


def total_loss(components, weights: LossWeights):
    """Weighted sum of (variable, constraint, objective) components."""
    lp_, ldl, lo = components
    return weights.rho1 * lp_ + weights.rho2 * ldl + weights.rho3 * lo


def sample_losses(sample: TrainingSample, params: gnn.SplitRatioGNN, weights: LossWeights):
    """Forward one sample and return (total, (variable, constraint, objective))."""
    k = min(sample.trajectory.iterations, params.k_max)
    trace = gnn.forward(sample.prepared, params, k)
    lv = variable_loss(trace, sample.trajectory, weights.xi)
    lc = constraint_loss(trace, sample.lp, weights.xi)
    lo = objective_loss(trace, sample.lp, sample.trajectory, weights.xi)
    return total_loss((lv, lc, lo), weights), (lv, lc, lo)


class _Batch:
    """Samples with a common supervision depth, fused into one union graph.

    The fused losses equal the sum of the per-sample losses; member graphs
    cannot interact in the union, so this is purely a dispatch-count
    optimization.
    """

    def __init__(self, samples, k: int):
        self.samples = samples
        self.k = k
        self.gt = gnn.merge([s.prepared for s in samples])
        # supervision targets per loop, in union p-vertex order
        self.targets = []
        for step in range(k):
            rows = []
            for s in samples:
                target = aligned_targets(s.trajectory, k)[step]
                rows.append(target[s.graph.backref_cols])
            self.targets.append(torch.as_tensor(np.concatenate(rows)))
        # block-diagonal normalized constraint matrix, columns in vertex order
        r_idx, c_idx, vals = [], [], []
        r_off = c_off = 0
        for s in samples:
            coo = s.lp.a.tocoo()
            vertex_of_col = np.argsort(s.graph.backref_cols)
            r_idx.append(coo.row + r_off)
            c_idx.append(vertex_of_col[coo.col] + c_off)
            vals.append(coo.data / s.lp.b[coo.row])
            r_off += s.lp.num_rows
            c_off += s.lp.num_cols
        idx = torch.as_tensor(
            np.vstack([np.concatenate(r_idx), np.concatenate(c_idx)]), dtype=torch.long
        )
        self.a_norm = torch.sparse_coo_tensor(
            idx,
            torch.as_tensor(np.concatenate(vals)),
            size=(r_off, c_off),
            check_invariants=True,
        ).coalesce()
        # objective coefficients in union vertex order, plus member targets
        c_parts = []
        for s in samples:
            c_vert = np.empty(s.lp.num_cols)
            c_vert[np.argsort(s.graph.backref_cols)] = s.lp.c  # vertex order
            c_parts.append(c_vert)
        self.c_union = torch.as_tensor(np.concatenate(c_parts))
        self.final_obj = torch.as_tensor(
            np.array([s.trajectory.final_objective for s in samples])
        )

    def losses(self, params: gnn.SplitRatioGNN, weights: LossWeights):
        trace = gnn.forward(self.gt, params, self.k)
        discounts = _discounts(self.k, weights.xi)
        lv = torch.zeros((), dtype=torch.float64)
        lc = torch.zeros((), dtype=torch.float64)
        lo = torch.zeros((), dtype=torch.float64)
        for disc, r, target in zip(discounts, trace.readouts, self.targets):
            lv = lv + disc * torch.sum((r - target) ** 2)
            lc = lc + disc * torch.relu(torch.mv(self.a_norm, r) - 1.0).sum()
            per_graph = torch.zeros(self.gt.num_graphs, dtype=torch.float64)
            per_graph.index_add_(0, self.gt.p_graph, self.c_union * r)
            lo = lo + disc * torch.sum((per_graph - self.final_obj) ** 2)
        return total_loss((lv, lc, lo), weights), (lv, lc, lo)


def _group_by_depth(samples, k_max: int):
    groups = {}
    for s in samples:
        groups.setdefault(min(s.trajectory.iterations, k_max), []).append(s)
    return groups


def train(
    dataset,
    config: TrainConfig,
    weights: LossWeights,
    params0: gnn.SplitRatioGNN,
    checkpoint_dir=None,
    recipe_hash: str | None = None,
    log=None,
):
    """Minibatch Adam on the weighted loss; deterministic given the seed.

    Returns (params, curve) where curve rows carry per-epoch mean losses.
    """
    if not dataset:
        raise ValueError("empty training dataset")
    params = params0
    old_threads = torch.get_num_threads()
    if config.strict_repro:
        torch.set_num_threads(1)
    try:
        opt = torch.optim.Adam(
            params.parameters(), lr=config.learning_rate, betas=config.betas
        )
        rng = np.random.default_rng(config.seed)
        curve = []
        for epoch in range(config.epochs):
            order = rng.permutation(len(dataset))
            sums = np.zeros(4)
            for batch_no, start in enumerate(range(0, len(order), config.batch_size)):
                picked = [dataset[idx] for idx in order[start : start + config.batch_size]]
                opt.zero_grad()
                for group in _group_by_depth(picked, params.k_max).values():
                    total, parts = _Batch(group, min(group[0].trajectory.iterations, params.k_max)).losses(
                        params, weights
                    )
                    if not torch.isfinite(total):
                        raise TrainingDivergenceError(
                            f"non-finite loss at epoch {epoch}, batch {batch_no}"
                        )
                    (total / len(picked)).backward()
                    sums += [float(p.detach()) for p in parts] + [float(total.detach())]
                if config.grad_clip:
                    torch.nn.utils.clip_grad_norm_(params.parameters(), config.grad_clip)
                opt.step()
            means = sums / len(order)
            curve.append(
                {
                    "epoch": epoch,
                    "variable": means[0],
                    "constraint": means[1],
                    "objective": means[2],
                    "total": means[3],
                }
            )
            if log:
                log(curve[-1])
            if checkpoint_dir is not None and (epoch + 1) % config.checkpoint_every == 0:
                gnn.save_checkpoint(
                    params, Path(checkpoint_dir) / f"checkpoint_epoch{epoch:04d}.pt", recipe_hash
                )
    finally:
        torch.set_num_threads(old_threads)
    return params, curve


def write_loss_curve(curve, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["epoch", "variable", "constraint", "objective", "total"]
        )
        writer.writeheader()
        for row in curve:
            writer.writerow(row)
