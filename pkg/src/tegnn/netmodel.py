"""Network topologies, traffic-engineering instances, and candidate-path enumeration.

Topologies are directed graphs with per-link capacities. An instance adds a set
of source-destination pairs with demands and, for every pair, an ordered list
of loop-free candidate paths (stored as link-index sequences). Everything here
is a pure function of its parameters and a seed.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_CAPACITY_RANGE = (1000.0, 5000.0)
DEFAULT_DEMAND_RANGE = (1000.0, 5000.0)

# How many disconnected pair draws we tolerate before declaring the topology
# too disconnected to sample from.
MAX_PAIR_RETRIES = 50


class TopologyError(ValueError):
    """A topology or instance violates a structural invariant."""


class TopologyParseError(ValueError):
    """A topology file could not be parsed."""


class GenerationError(RuntimeError):
    """Instance sampling failed (e.g. too many disconnected pair draws)."""


@dataclass(frozen=True)
class Provenance:
    kind: str  # "erdos_renyi" | "waxman" | "file"
    params: tuple  # sorted (key, value) pairs, hashable

    @staticmethod
    def make(kind: str, **params) -> "Provenance":
        return Provenance(kind, tuple(sorted(params.items())))

    def as_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}


@dataclass(frozen=True)
class NetworkTopology:
    num_nodes: int
    links: tuple  # of (src, dst, capacity)
    provenance: Provenance

    def __post_init__(self):
        if self.num_nodes < 1:
            raise TopologyError("topology needs at least one node")
        seen = set()
        for idx, (src, dst, cap) in enumerate(self.links):
            if not (0 <= src < self.num_nodes and 0 <= dst < self.num_nodes):
                raise TopologyError(f"link {idx}: endpoint out of range")
            if src == dst:
                raise TopologyError(f"link {idx}: self-loop {src}->{dst}")
            if cap <= 0:
                raise TopologyError(f"link {idx}: capacity {cap} not positive")
            if (src, dst) in seen:
                raise TopologyError(f"duplicate link {src}->{dst}")
            seen.add((src, dst))

    @property
    def num_links(self) -> int:
        return len(self.links)

    def adjacency(self) -> list:
        """Per-node outgoing (dst, link_index) lists, in link-index order."""
        adj = [[] for _ in range(self.num_nodes)]
        for idx, (src, dst, _cap) in enumerate(self.links):
            adj[src].append((dst, idx))
        return adj

    def capacities(self) -> np.ndarray:
        return np.array([cap for _s, _d, cap in self.links], dtype=float)


@dataclass(frozen=True)
class SDPair:
    source: int
    destination: int
    demand: float

    def __post_init__(self):
        if self.source == self.destination:
            raise TopologyError("SD pair source equals destination")
        if self.demand <= 0:
            raise TopologyError("SD pair demand must be positive")


@dataclass(frozen=True)
class TEInstance:
    topology: NetworkTopology
    pairs: tuple  # of SDPair
    paths: tuple  # per pair: tuple of paths, each a tuple of link indices
    rng_seed: int

    def __post_init__(self):
        if len(self.pairs) != len(self.paths):
            raise TopologyError("pairs and path groups differ in length")
        endpoints = set()
        for pair, group in zip(self.pairs, self.paths):
            if (pair.source, pair.destination) in endpoints:
                raise TopologyError(
                    f"duplicate SD pair ({pair.source}, {pair.destination})"
                )
            endpoints.add((pair.source, pair.destination))
            if len(group) == 0:
                raise TopologyError(
                    f"pair ({pair.source}, {pair.destination}) has no path"
                )
            if len(set(group)) != len(group):
                raise TopologyError("duplicate path within one pair")
            for path in group:
                self._check_path(pair, path)

    def _check_path(self, pair: SDPair, path: tuple):
        links = self.topology.links
        if len(path) == 0:
            raise TopologyError("empty path")
        nodes = [links[path[0]][0]]
        for lidx in path:
            src, dst, _cap = links[lidx]
            if src != nodes[-1]:
                raise TopologyError("path is not link-contiguous")
            nodes.append(dst)
        if nodes[0] != pair.source or nodes[-1] != pair.destination:
            raise TopologyError("path endpoints do not match its SD pair")
        if len(set(nodes)) != len(nodes):
            raise TopologyError("path repeats a node")

    @property
    def num_paths(self) -> int:
        return sum(len(group) for group in self.paths)

    def demands(self) -> np.ndarray:
        return np.array([p.demand for p in self.pairs], dtype=float)


def _draw_capacities(rng: np.random.Generator, count: int, capacity_range) -> np.ndarray:
    lo, hi = capacity_range
    if not (0 < lo <= hi):
        raise ValueError(f"invalid capacity range {capacity_range}")
    return rng.uniform(lo, hi, size=count)


def generate_erdos_renyi(
    n: int,
    q: float,
    seed: int,
    capacity_range=DEFAULT_CAPACITY_RANGE,
) -> NetworkTopology:
    """Random directed topology: each ordered pair carries a link with probability q."""
    if n < 2:
        raise ValueError(f"need n >= 2 nodes, got {n}")
    if not (0 < q <= 1):
        raise ValueError(f"connection probability must be in (0, 1], got {q}")
    rng = np.random.default_rng(seed)
    draws = rng.random((n, n))
    mask = draws < q
    np.fill_diagonal(mask, False)
    srcs, dsts = np.nonzero(mask)  # row-major order, deterministic
    caps = _draw_capacities(rng, len(srcs), capacity_range)
    links = tuple(
        (int(s), int(d), float(c)) for s, d, c in zip(srcs, dsts, caps)
    )
    return NetworkTopology(n, links, Provenance.make("erdos_renyi", n=n, q=q, seed=seed))


def generate_waxman(
    n: int,
    alpha: float,
    beta: float,
    seed: int,
    capacity_range=DEFAULT_CAPACITY_RANGE,
) -> NetworkTopology:
    """Waxman topology: nodes in the unit square, ordered pair (u, v) linked with
    probability alpha * exp(-dist(u, v) / (beta * maxdist))."""
    if n < 2:
        raise ValueError(f"need n >= 2 nodes, got {n}")
    if not (0 < alpha <= 1) or not (0 < beta <= 1):
        raise ValueError(f"alpha and beta must be in (0, 1], got {alpha}, {beta}")
    rng = np.random.default_rng(seed)
    pos = rng.random((n, 2))
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    maxdist = dist.max()
    if maxdist == 0.0:
        maxdist = 1.0  # all nodes coincide; any positive scale works
    prob = alpha * np.exp(-dist / (beta * maxdist))
    draws = rng.random((n, n))
    mask = draws < prob
    np.fill_diagonal(mask, False)
    srcs, dsts = np.nonzero(mask)
    caps = _draw_capacities(rng, len(srcs), capacity_range)
    links = tuple(
        (int(s), int(d), float(c)) for s, d, c in zip(srcs, dsts, caps)
    )
    return NetworkTopology(
        n, links, Provenance.make("waxman", n=n, alpha=alpha, beta=beta, seed=seed)
    )


def load_topology_file(path) -> NetworkTopology:
    """Parse the line-oriented topology format.

    Format: a `nodes <N>` header, then one `link <src> <dst> <capacity>` per
    directed link. `ulink <u> <v> <capacity>` expands to both directions with
    equal capacity. `#` starts a comment.
    """
    path = Path(path)
    num_nodes = None
    links = []
    lines = path.read_text().splitlines()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        kind = fields[0]
        try:
            if kind == "nodes":
                if num_nodes is not None:
                    raise TopologyParseError(f"line {lineno}: duplicate nodes header")
                num_nodes = int(fields[1])
            elif kind == "link":
                src, dst, cap = int(fields[1]), int(fields[2]), float(fields[3])
                links.append((src, dst, cap))
            elif kind == "ulink":
                u, v, cap = int(fields[1]), int(fields[2]), float(fields[3])
                links.append((u, v, cap))
                links.append((v, u, cap))
            else:
                raise TopologyParseError(f"line {lineno}: unknown directive {kind!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, TopologyParseError):
                raise
            raise TopologyParseError(f"line {lineno}: malformed entry {raw!r}") from exc
    if num_nodes is None:
        raise TopologyParseError(f"{path}: missing 'nodes' header (empty file?)")
    return NetworkTopology(
        num_nodes, tuple(links), Provenance.make("file", name=path.name)
    )


def _lex_shortest_path(adj, source, target, banned_links, banned_nodes):
    """Shortest simple path from source to target, minimizing (hop count,
    link-index sequence) lexicographically. Returns the link tuple or None.

    Dijkstra over (hops, sequence) keys; the key order is preserved under
    appending a link, so the first time a node is settled its prefix is
    optimal and the settled path is simple.
    """
    if source == target:
        return ()
    heap = [(0, (), source)]
    settled = set(banned_nodes)
    if source in settled:
        return None
    settled.discard(source)
    while heap:
        hops, seq, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        if node == target:
            return seq
        for dst, lidx in adj[node]:
            if lidx in banned_links or dst in settled:
                continue
            heapq.heappush(heap, (hops + 1, seq + (lidx,), dst))
    return None


def _path_nodes(topology: NetworkTopology, path) -> list:
    nodes = [topology.links[path[0]][0]]
    for lidx in path:
        nodes.append(topology.links[lidx][1])
    return nodes


def yen_k_shortest_paths(
    topology: NetworkTopology, source: int, destination: int, k: int
) -> list:
    """Up to k loop-free paths in nondecreasing hop count, ties broken by
    lexicographic comparison of link-index sequences. Unit link weights."""
    if source == destination:
        raise ValueError("source and destination must differ")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not (0 <= source < topology.num_nodes and 0 <= destination < topology.num_nodes):
        raise ValueError("source or destination out of range")
    adj = topology.adjacency()
    first = _lex_shortest_path(adj, source, destination, frozenset(), frozenset())
    if first is None:
        return []
    accepted = [first]
    candidates = []  # heap of (hops, link sequence)
    known = {first}
    while len(accepted) < k:
        prev = accepted[-1]
        prev_nodes = _path_nodes(topology, prev)
        for j in range(len(prev)):
            root = prev[:j]
            spur_node = prev_nodes[j]
            banned_links = {
                p[j] for p in accepted if len(p) > j and p[:j] == root
            }
            banned_nodes = set(prev_nodes[:j])
            spur = _lex_shortest_path(adj, spur_node, destination, banned_links, banned_nodes)
            if spur is None:
                continue
            cand = root + spur
            if cand not in known:
                known.add(cand)
                heapq.heappush(candidates, (len(cand), cand))
        if not candidates:
            break
        _hops, best = heapq.heappop(candidates)
        accepted.append(best)
    return [list(p) for p in accepted]


def sample_instance(
    topology: NetworkTopology,
    num_pairs: int,
    demand_range,
    k: int,
    seed: int,
) -> TEInstance:
    """Sample distinct SD pairs uniformly without replacement, give each a
    uniform demand and its k shortest paths. Disconnected pair draws are
    resampled up to MAX_PAIR_RETRIES, then the sampling fails loudly."""
    n = topology.num_nodes
    if num_pairs < 1 or num_pairs > n * (n - 1):
        raise ValueError(f"num_pairs {num_pairs} out of range for {n} nodes")
    lo, hi = demand_range
    if not (0 < lo <= hi):
        raise ValueError(f"invalid demand range {demand_range}")
    rng = np.random.default_rng(seed)
    all_pairs = [(s, t) for s in range(n) for t in range(n) if s != t]
    order = rng.permutation(len(all_pairs))
    pairs = []
    path_groups = []
    skipped = []
    for idx in order:
        if len(pairs) == num_pairs:
            break
        s, t = all_pairs[idx]
        group = yen_k_shortest_paths(topology, s, t, k)
        if not group:
            skipped.append((s, t))
            if len(skipped) > MAX_PAIR_RETRIES:
                raise GenerationError(
                    f"gave up after {len(skipped)} disconnected pair draws on a "
                    f"{n}-node/{topology.num_links}-link topology; first few: "
                    f"{skipped[:5]}"
                )
            continue
        demand = float(rng.uniform(lo, hi))
        pairs.append(SDPair(s, t, demand))
        path_groups.append(tuple(tuple(p) for p in group))
    if len(pairs) < num_pairs:
        raise GenerationError(
            f"only {len(pairs)} of {num_pairs} pairs are connected on this topology"
        )
    return TEInstance(topology, tuple(pairs), tuple(path_groups), seed)


# --- serialization ---------------------------------------------------------


def topology_to_dict(topology: NetworkTopology) -> dict:
    return {
        "nodes": topology.num_nodes,
        "links": [[s, d, c] for s, d, c in topology.links],
        "provenance": topology.provenance.as_dict(),
    }


def topology_from_dict(data: dict) -> NetworkTopology:
    prov = data.get("provenance", {"kind": "file", "params": {}})
    return NetworkTopology(
        int(data["nodes"]),
        tuple((int(s), int(d), float(c)) for s, d, c in data["links"]),
        Provenance.make(prov["kind"], **prov.get("params", {})),
    )


def instance_to_dict(instance: TEInstance, recipe_hash: str | None = None) -> dict:
    return {
        "topology": topology_to_dict(instance.topology),
        "pairs": [
            {"s": p.source, "t": p.destination, "d": p.demand} for p in instance.pairs
        ],
        "paths": [[list(path) for path in group] for group in instance.paths],
        "seed": instance.rng_seed,
        "recipe": recipe_hash,
    }


def instance_from_dict(data: dict) -> TEInstance:
    topology = topology_from_dict(data["topology"])
    pairs = tuple(SDPair(int(p["s"]), int(p["t"]), float(p["d"])) for p in data["pairs"])
    paths = tuple(
        tuple(tuple(int(l) for l in path) for path in group) for group in data["paths"]
    )
    return TEInstance(topology, pairs, paths, int(data["seed"]))


def save_instance(instance: TEInstance, path, recipe_hash: str | None = None):
    Path(path).write_text(
        json.dumps(instance_to_dict(instance, recipe_hash), sort_keys=True)
    )


def load_instance(path) -> TEInstance:
    return instance_from_dict(json.loads(Path(path).read_text()))
