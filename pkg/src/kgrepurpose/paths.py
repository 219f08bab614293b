"""Minimal-hop mechanistic paths between two entities and their
embedding-based scores."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericError, ValidationError
from .graph import Graph, Triple, neighbors
from .hake import HakeParams, score_triple

MAX_ENUMERATED_PATHS = 10_000


@dataclass(frozen=True)
class Path:
    nodes: tuple[str, ...]
    edges: tuple[Triple, ...]
    forward: tuple[bool, ...]

    def __post_init__(self):
        if len(self.edges) < 1 or len(self.nodes) != len(self.edges) + 1:
            raise ValidationError("a path needs n >= 1 edges and n + 1 nodes")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValidationError("path repeats a node")
        for i, (e, fwd) in enumerate(zip(self.edges, self.forward)):
            a, b = (e.head, e.tail) if fwd else (e.tail, e.head)
            if (a, b) != (self.nodes[i], self.nodes[i + 1]):
                raise ValidationError(f"edge {i} does not join {self.nodes[i]} and {self.nodes[i + 1]}")

    @property
    def relations(self) -> tuple[str, ...]:
        return tuple(e.relation for e in self.edges)

    def __len__(self):
        return len(self.edges)

    def to_dict(self, score: float | None = None) -> dict:
        out = {
            "nodes": list(self.nodes),
            "relations": list(self.relations),
            "forward": list(self.forward),
        }
        if score is not None:
            out["score"] = score
        return out


@dataclass
class PathScoringConfig:
    mu: float = 350.0
    sigma: float = 100.0
    max_paths: int = 10
    excluded_relations: frozenset = field(default_factory=lambda: frozenset({"synergistic interaction"}))

    def __post_init__(self):
        self.excluded_relations = frozenset(self.excluded_relations)
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")
        if self.max_paths < 1:
            raise ValidationError("max_paths must be >= 1")


def normalize_edge_score(raw: float, cfg: PathScoringConfig | None = None) -> float:
    """Map a raw (non-positive) triple score to (0, 1) via the distance
    ``d = -raw``: ``1 / (1 + exp((d - mu) / sigma))``."""
    cfg = cfg or PathScoringConfig()
    if not math.isfinite(raw):
        raise NumericError(f"non-finite edge score {raw!r}")
    z = (-raw - cfg.mu) / cfg.sigma
    # 1/(1+e^z) without overflow for large z
    if z > 0:
        ez = math.exp(-z)
        return ez / (1.0 + ez)
    return 1.0 / (1.0 + math.exp(z))


def path_score(path: Path, p: HakeParams, cfg: PathScoringConfig | None = None) -> float:
    """Geometric mean of normalised edge scores. Each edge is scored in its
    stored (head, relation, tail) orientation regardless of traversal."""
    cfg = cfg or PathScoringConfig()
    return geometric_mean([normalize_edge_score(score_triple(p, e.head, e.relation, e.tail), cfg)
                           for e in path.edges])


def geometric_mean(values) -> float:
    """``(prod v_i) ** (1/m)`` computed in log space; 0 if any value is 0."""
    vals = list(values)
    if not vals:
        raise ValidationError("geometric mean of no values")
    if any(v < 0 for v in vals):
        raise ValidationError("geometric mean needs nonnegative values")
    if any(v == 0.0 for v in vals):
        return 0.0
    return math.exp(math.fsum(math.log(v) for v in vals) / len(vals))


def _bfs(g: Graph, src: str, exclude) -> dict[str, int]:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for _, v in neighbors(g, u, exclude):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def k_shortest_paths(g: Graph, src: str, dst: str, k: int, cfg: PathScoringConfig | None = None) -> list[Path]:
    """Up to ``k`` minimal-hop simple paths from ``src`` to ``dst``.

    Edges are undirected for traversal; excluded relations are skipped.
    Parallel edges with different relations yield distinct paths. Order is
    the depth-first order over neighbours sorted by (relation, other id).
    """
    cfg = cfg or PathScoringConfig()
    g.entity(src)
    g.entity(dst)
    if src == dst:
        raise ValidationError("source and destination must differ")
    if k < 1:
        raise ValidationError("k must be >= 1")
    exclude = cfg.excluded_relations
    from_src = _bfs(g, src, exclude)
    if dst not in from_src:
        return []
    to_dst = _bfs(g, dst, exclude)
    length = from_src[dst]
    limit = min(k, MAX_ENUMERATED_PATHS)
    out: list[Path] = []

    # every node on a shortest path satisfies from_src + to_dst == length,
    # which also guarantees simplicity
    def walk(node, nodes, edges, fwd):
        if len(out) >= limit:
            return
        if node == dst:
            out.append(Path(tuple(nodes), tuple(edges), tuple(fwd)))
            return
        depth = len(edges)
        for t, other in neighbors(g, node, exclude):
            if other == node:
                continue
            if from_src.get(other) == depth + 1 and to_dst.get(other) == length - depth - 1:
                nodes.append(other)
                edges.append(t)
                fwd.append(t.head == node)
                walk(other, nodes, edges, fwd)
                nodes.pop()
                edges.pop()
                fwd.pop()
                if len(out) >= limit:
                    return

    walk(src, [src], [], [])
    return out


def build_subgraph(g: Graph, p: HakeParams, disease: str, drug: str,
                   cfg: PathScoringConfig | None = None) -> list[tuple[Path, float]]:
    """Score every minimal-hop path and keep the ``max_paths`` best
    (descending score, ties by node sequence)."""
    cfg = cfg or PathScoringConfig()
    paths = k_shortest_paths(g, disease, drug, MAX_ENUMERATED_PATHS, cfg)
    scored = [(path, path_score(path, p, cfg)) for path in paths]
    scored.sort(key=lambda ps: (-ps[1], ps[0].nodes, ps[0].relations))
    return scored[: cfg.max_paths]


def subgraph_edges(scored_paths) -> list[Triple]:
    seen = {}
    for path, _ in scored_paths:
        for e in path.edges:
            seen.setdefault(e.key, e)
    return [seen[k] for k in sorted(seen)]


def edge_scores(path: Path, p: HakeParams, cfg: PathScoringConfig | None = None) -> np.ndarray:
    cfg = cfg or PathScoringConfig()
    return np.array([normalize_edge_score(score_triple(p, e.head, e.relation, e.tail), cfg) for e in path.edges])
