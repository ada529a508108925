"""Double-looped message-passing model over LP graphs.

K outer loops share one parameter set and each mirrors one solver iteration;
an outer loop runs J inner layers, each a three-phase update (constraints,
then objective, then variables) with residual connections:

  phase 1: h_dl <- g_j^dl(h_dl, sum_p w_e MSG_j^{p-dl}(h_p), w_dlo MSG_j^{o-dl}(h_o)) + h_dl
  phase 2: h_o  <- g_j^o (h_o,  sum_dl w_dlo MSG_j^{dl-o}(h_dl'), sum_p w_po MSG_j^{p-o}(h_p)) + h_o
  phase 3: h_p  <- g_j^p (h_p,  sum_dl w_e MSG_j^{dl-p}(h_dl'), w_po MSG_j^{o-p}(h_o')) + h_p

Messages are linear maps of the sender attribute scaled by the edge weight
and aggregated by summation; each g is a two-layer rectified perceptron over
the concatenation (own, message A, message B). A readout perceptron with a
rectifier clamp maps path-vertex attributes to nonnegative split ratios after
every outer loop.

Objective-edge weights and, in stats mode, the objective vertex attributes
are divided by max|c| per instance before entering the network; raw demand
coefficients (~1e3 bandwidth units) would otherwise swamp the activations.
Everything runs in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .lpgraph import LPGraph

_PHASES = ("p_dl", "o_dl", "dl_o", "p_o", "dl_p", "o_p")


@dataclass
class GraphTensors:
    """One or more LPGraphs lowered to torch tensors, as a disjoint union.

    Vertices of each member graph occupy a contiguous block; p_graph/dl_graph
    give every vertex its member index, so member graphs never interact and a
    union forward equals the per-graph forwards. Input conditioning (dividing
    objective-edge weights by max|c|) is applied here, per member.
    """

    num_p: int
    num_dl: int
    num_graphs: int
    edge_p: torch.Tensor
    edge_dl: torch.Tensor
    edge_w: torch.Tensor  # (E, 1)
    po_w: torch.Tensor  # (num_p, 1), scaled by 1/max|c| of its member
    dlo_w: torch.Tensor  # (num_dl, 1)
    p_graph: torch.Tensor  # (num_p,) member index
    dl_graph: torch.Tensor  # (num_dl,) member index
    init_p: torch.Tensor
    init_dl: torch.Tensor
    init_o: torch.Tensor  # (num_graphs, d)
    graphs: list  # member LPGraphs
    p_slices: list  # (start, end) of each member's p-vertex block

    @property
    def graph(self) -> LPGraph:
        if len(self.graphs) != 1:
            raise ValueError("tensor union holds more than one graph")
        return self.graphs[0]


def prepare(graph: LPGraph) -> GraphTensors:
    """Lower an LPGraph to tensors; reusable across forward calls."""
    c_scale = max(float(np.abs(graph.po_w).max(initial=0.0)), 1e-12)
    init_o = graph.init_o.astype(float).copy()
    if graph.attr_mode == "row_col_stats":
        # (mean, variance) of c scale linearly / quadratically
        init_o[:, 0] /= c_scale
        init_o[:, 1] /= c_scale**2
    as_t = lambda a: torch.as_tensor(a, dtype=torch.float64)
    return GraphTensors(
        num_p=graph.num_p,
        num_dl=graph.num_dl,
        num_graphs=1,
        edge_p=torch.as_tensor(graph.edge_p, dtype=torch.long),
        edge_dl=torch.as_tensor(graph.edge_dl, dtype=torch.long),
        edge_w=as_t(graph.edge_w).unsqueeze(1),
        po_w=as_t(graph.po_w / c_scale).unsqueeze(1),
        dlo_w=as_t(graph.dlo_w).unsqueeze(1),
        p_graph=torch.zeros(graph.num_p, dtype=torch.long),
        dl_graph=torch.zeros(graph.num_dl, dtype=torch.long),
        init_p=as_t(graph.init_p),
        init_dl=as_t(graph.init_dl),
        init_o=as_t(init_o),
        graphs=[graph],
        p_slices=[(0, graph.num_p)],
    )


def merge(tensors: list) -> GraphTensors:
    """Disjoint union of prepared graphs (for batched forward passes)."""
    if len(tensors) == 1:
        return tensors[0]
    p_off, dl_off, g_off = 0, 0, 0
    edge_p, edge_dl, p_graph, dl_graph, p_slices, graphs = [], [], [], [], [], []
    for gt in tensors:
        edge_p.append(gt.edge_p + p_off)
        edge_dl.append(gt.edge_dl + dl_off)
        p_graph.append(gt.p_graph + g_off)
        dl_graph.append(gt.dl_graph + g_off)
        p_slices.extend((s + p_off, e + p_off) for s, e in gt.p_slices)
        graphs.extend(gt.graphs)
        p_off += gt.num_p
        dl_off += gt.num_dl
        g_off += gt.num_graphs
    cat = torch.cat
    return GraphTensors(
        num_p=p_off,
        num_dl=dl_off,
        num_graphs=g_off,
        edge_p=cat(edge_p),
        edge_dl=cat(edge_dl),
        edge_w=cat([gt.edge_w for gt in tensors]),
        po_w=cat([gt.po_w for gt in tensors]),
        dlo_w=cat([gt.dlo_w for gt in tensors]),
        p_graph=cat(p_graph),
        dl_graph=cat(dl_graph),
        init_p=cat([gt.init_p for gt in tensors]),
        init_dl=cat([gt.init_dl for gt in tensors]),
        init_o=cat([gt.init_o for gt in tensors]),
        graphs=graphs,
        p_slices=p_slices,
    )


class _Aggregate(nn.Module):
    """Two-layer rectified perceptron over (own, message A, message B)."""

    def __init__(self, hidden_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(3 * hidden_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, hidden_dim),
        )

    def forward(self, own, msg_a, msg_b):
        return self.net(torch.cat([own, msg_a, msg_b], dim=1))


class _Encoder(nn.Module):
    def __init__(self, in_dim: int, hidden_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_dim, max(hidden_dim // 2, 1)),
            nn.ReLU(),
            nn.Linear(max(hidden_dim // 2, 1), hidden_dim),
        )

    def forward(self, x):
        return self.net(x)


class SplitRatioGNN(nn.Module):
    """Model parameters: encoders, J sets of message/aggregation functions
    shared by all outer loops, and the clamped readout."""

    def __init__(self, in_dims=(2, 2, 2), hidden_dim: int = 360, num_inner: int = 2, k_max: int = 8):
        super().__init__()
        if hidden_dim < 1 or num_inner < 1 or k_max < 1:
            raise ValueError("hidden_dim, num_inner and k_max must be positive")
        self.hidden_dim = hidden_dim
        self.num_inner = num_inner
        self.k_max = k_max
        self.in_dims = tuple(in_dims)
        self.encoder_p = _Encoder(in_dims[0], hidden_dim)
        self.encoder_dl = _Encoder(in_dims[1], hidden_dim)
        self.encoder_o = _Encoder(in_dims[2], hidden_dim)
        self.messages = nn.ModuleList(
            [
                nn.ModuleDict({name: nn.Linear(hidden_dim, hidden_dim) for name in _PHASES})
                for _ in range(num_inner)
            ]
        )
        self.aggregates = nn.ModuleList(
            [
                nn.ModuleDict({name: _Aggregate(hidden_dim) for name in ("p", "dl", "o")})
                for _ in range(num_inner)
            ]
        )
        self.readout = nn.Sequential(
            nn.Linear(hidden_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, 2 * hidden_dim),
            nn.ReLU(),
            nn.Linear(2 * hidden_dim, 1),
        )
        self.double()

    def inner_step(self, gt: GraphTensors, h_p, h_dl, h_o, j: int):
        """One inner layer: the three sequential phases with residuals."""
        msg = self.messages[j]
        agg = self.aggregates[j]

        # phase 1: constraint vertices, from paths and their objective vertex
        from_p = torch.zeros_like(h_dl)
        from_p.index_add_(0, gt.edge_dl, gt.edge_w * msg["p_dl"](h_p)[gt.edge_p])
        from_o = gt.dlo_w * msg["o_dl"](h_o)[gt.dl_graph]
        h_dl = agg["dl"](h_dl, from_p, from_o) + h_dl

        # phase 2: objective vertices, from updated constraints and paths
        from_dl = torch.zeros_like(h_o)
        from_dl.index_add_(0, gt.dl_graph, gt.dlo_w * msg["dl_o"](h_dl))
        from_p = torch.zeros_like(h_o)
        from_p.index_add_(0, gt.p_graph, gt.po_w * msg["p_o"](h_p))
        h_o = agg["o"](h_o, from_dl, from_p) + h_o

        # phase 3: path vertices, from updated constraints and objective
        from_dl = torch.zeros_like(h_p)
        from_dl.index_add_(0, gt.edge_p, gt.edge_w * msg["dl_p"](h_dl)[gt.edge_dl])
        from_o = gt.po_w * msg["o_p"](h_o)[gt.p_graph]
        h_p = agg["p"](h_p, from_dl, from_o) + h_p
        return h_p, h_dl, h_o

    def read(self, h_p):
        return torch.relu(self.readout(h_p)).squeeze(1)


# the spec's domain-type name for the weight container
ModelParameters = SplitRatioGNN


@dataclass
class ForwardTrace:
    """Per-outer-loop readouts and attributes, with autograd state attached."""

    readouts: list  # K tensors of shape (num_p,), each >= 0
    attrs: list  # K tuples (h_p, h_dl, h_o) after the loop's last inner layer
    gt: GraphTensors
    params: SplitRatioGNN

    @property
    def k(self) -> int:
        return len(self.readouts)

    def solutions(self) -> list:
        """Readouts as numpy arrays in LP column order."""
        cols = self.gt.graph.backref_cols
        out = []
        for r in self.readouts:
            x = np.empty(len(cols))
            x[cols] = r.detach().numpy()
            out.append(x)
        return out


def init_parameters(
    hidden_dim: int, num_inner: int, k_max: int, seed: int, in_dims=(2, 2, 2)
) -> SplitRatioGNN:
    """Fresh model with fan-in-scaled uniform weights, deterministic per seed.

    The readout's output layer starts small and positive: split ratios live in
    [0, 1], and an init whose outputs sit below the clamp would never recover
    (the rectifier gradient is identically zero there).
    """
    model = SplitRatioGNN(in_dims=in_dims, hidden_dim=hidden_dim, num_inner=num_inner, k_max=k_max)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for _name, module in sorted(model.named_modules()):
            if isinstance(module, nn.Linear):
                bound = 1.0 / np.sqrt(module.in_features)
                module.weight.uniform_(-bound, bound, generator=gen)
                module.bias.uniform_(-bound, bound, generator=gen)
        out_layer = model.readout[-1]
        out_layer.weight.mul_(0.1)
        out_layer.bias.fill_(0.1)
    return model


def forward(graph, params: SplitRatioGNN, k: int) -> ForwardTrace:
    """Run k outer loops of num_inner layers each and read out after every loop."""
    if not (1 <= k <= params.k_max):
        raise ValueError(f"k={k} outside [1, {params.k_max}]")
    gt = graph if isinstance(graph, GraphTensors) else prepare(graph)
    h_p = params.encoder_p(gt.init_p)
    h_dl = params.encoder_dl(gt.init_dl)
    h_o = params.encoder_o(gt.init_o)
    readouts, attrs = [], []
    for _outer in range(k):
        for j in range(params.num_inner):
            h_p, h_dl, h_o = params.inner_step(gt, h_p, h_dl, h_o, j)
        readouts.append(params.read(h_p))
        attrs.append((h_p, h_dl, h_o))
    return ForwardTrace(readouts=readouts, attrs=attrs, gt=gt, params=params)


def inner_layer(graph, h_p, h_dl, h_o, j: int, params: SplitRatioGNN):
    """One inner layer on given attributes (exposed for tests and diagnostics)."""
    if not (0 <= j < params.num_inner):
        raise ValueError(f"inner layer index {j} outside [0, {params.num_inner})")
    gt = graph if isinstance(graph, GraphTensors) else prepare(graph)
    return params.inner_step(gt, h_p, h_dl, h_o, j)


def backward(trace: ForwardTrace, loss_gradients) -> dict:
    """Parameter gradients given d(loss)/d(readout_k) for every outer loop.

    Gradients account for weight sharing (contributions summed over loops).
    Returns a name -> tensor dict covering every parameter.
    """
    if len(loss_gradients) != trace.k:
        raise ValueError("need one gradient per outer-loop readout")
    grads_out = [torch.as_tensor(g, dtype=torch.float64) for g in loss_gradients]
    named = list(trace.params.named_parameters())
    grads = torch.autograd.grad(
        outputs=trace.readouts,
        inputs=[p for _n, p in named],
        grad_outputs=grads_out,
        allow_unused=True,
        retain_graph=False,
    )
    return {
        name: (g if g is not None else torch.zeros_like(p))
        for (name, p), g in zip(named, grads)
    }


# --- checkpoints -----------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(params: SplitRatioGNN, path, recipe_hash: str | None = None):
    torch.save(
        {
            "format_version": CHECKPOINT_VERSION,
            "in_dims": params.in_dims,
            "hidden_dim": params.hidden_dim,
            "num_inner": params.num_inner,
            "k_max": params.k_max,
            "recipe_hash": recipe_hash,
            "state_dict": params.state_dict(),
        },
        path,
    )


def load_checkpoint(path):
    """Returns (model, metadata dict)."""
    data = torch.load(path, weights_only=True)
    if data.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('format_version')}")
    model = SplitRatioGNN(
        in_dims=tuple(data["in_dims"]),
        hidden_dim=data["hidden_dim"],
        num_inner=data["num_inner"],
        k_max=data["k_max"],
    )
    model.load_state_dict(data["state_dict"])
    return model, {k: v for k, v in data.items() if k != "state_dict"}
