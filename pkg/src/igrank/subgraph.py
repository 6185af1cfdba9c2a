"""Seeded k-hop breadth-first subgraph extraction with a node budget.

Layers are taken at exact BFS distance from the seed set over the undirected
union of intra and inter edges.  A layer that would push the selection past
the budget is rejected wholesale and extraction stops.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, EmptySeedError, ShapeError
from .featurize import ResidueGraph

SEED_MODES = ("interface", "cdr", "explicit")


@dataclass(frozen=True)
class SamplerConfig:
    k: int = 3
    n_max: int = 600
    seed_mode: str = "interface"

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {self.n_max}")
        if self.seed_mode not in SEED_MODES:
            raise ConfigError(f"seed_mode must be one of {SEED_MODES}, got {self.seed_mode!r}")


def seed_nodes(g: ResidueGraph, mode: str, explicit: np.ndarray | None = None) -> np.ndarray:
    """Seed set for sampling: inter-edge endpoints, CDR nodes, or a given set."""
    if mode == "interface":
        seeds = g.interface_set()
        if seeds.size == 0:
            raise EmptySeedError("graph has no inter edges; interface seeding is empty")
    elif mode == "cdr":
        seeds = np.flatnonzero(g.cdr_mask).astype(np.int64)
        if seeds.size == 0:
            raise EmptySeedError("graph has no CDR-flagged nodes")
    elif mode == "explicit":
        if explicit is None:
            raise ConfigError("explicit seed mode requires a node set")
        seeds = np.unique(np.asarray(explicit, dtype=np.int64))
        if seeds.size == 0:
            raise EmptySeedError("explicit seed set is empty")
        if seeds.min() < 0 or seeds.max() >= g.node_count:
            raise ShapeError(f"explicit seeds outside node range [0, {g.node_count})")
    else:
        raise ConfigError(f"unknown seed mode {mode!r}")
    return seeds


def _neighbor_lists(g: ResidueGraph) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(g.node_count)]
    for i, j in g.edges:
        adj[int(i)].append(int(j))
        adj[int(j)].append(int(i))
    return adj


def khop_nodes(g: ResidueGraph, seeds: np.ndarray, cfg: SamplerConfig) -> np.ndarray:
    """Node selection of the budgeted k-hop walk (sorted original indices)."""
    seeds = np.unique(np.asarray(seeds, dtype=np.int64))
    if seeds.size == 0:
        raise EmptySeedError("seed set is empty")
    if seeds.size >= cfg.n_max:
        raise ConfigError(f"|seeds| = {seeds.size} must be < n_max = {cfg.n_max}")
    adj = _neighbor_lists(g)
    selected = set(int(s) for s in seeds)
    frontier = sorted(selected)
    for _ in range(cfg.k):
        # nodes at exact BFS distance i from the seed set
        layer = {v for u in frontier for v in adj[u] if v not in selected}
        if not layer or len(selected) + len(layer) > cfg.n_max:
            break
        selected |= layer
        frontier = sorted(layer)
    return np.array(sorted(selected), dtype=np.int64)


def induced_subgraph(g: ResidueGraph, nodes: np.ndarray) -> ResidueGraph:
    """Subgraph on `nodes`: keeps edges with both endpoints inside, re-indexed
    order-preservingly on the original indices."""
    nodes = np.unique(np.asarray(nodes, dtype=np.int64))
    if nodes.size == 0:
        raise EmptySeedError("cannot induce a subgraph on an empty node set")
    if nodes.min() < 0 or nodes.max() >= g.node_count:
        raise ShapeError(f"nodes outside range [0, {g.node_count})")
    index_map = -np.ones(g.node_count, dtype=np.int64)
    index_map[nodes] = np.arange(nodes.size)
    if g.edge_count:
        keep = (index_map[g.edges[:, 0]] >= 0) & (index_map[g.edges[:, 1]] >= 0)
        edges = index_map[g.edges[keep]]
        kinds = g.edge_kinds[keep]
        feats = g.edge_feats[keep]
    else:
        edges = np.empty((0, 2), dtype=np.int64)
        kinds = np.empty(0, dtype=np.uint8)
        feats = np.empty((0, g.edge_feats.shape[1]), dtype=np.float64)
    return replace(
        g,
        coords=g.coords[nodes].copy(),
        node_feats=g.node_feats[nodes].copy(),
        edges=edges,
        edge_kinds=kinds.copy(),
        edge_feats=feats.copy(),
        node_role=g.node_role[nodes].copy(),
        cdr_mask=g.cdr_mask[nodes].copy(),
        node_labels=[g.node_labels[i] for i in nodes] if g.node_labels else [],
    )


def khop_sample(g: ResidueGraph, seeds: np.ndarray, cfg: SamplerConfig) -> ResidueGraph:
    """Budgeted k-hop subgraph around `seeds` with features/masks re-indexed."""
    return induced_subgraph(g, khop_nodes(g, seeds, cfg))
