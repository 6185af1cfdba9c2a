"""Residue-graph construction: distance-cutoff edges, RBF edge features,
node features from per-chain embedding files or the deterministic fallback.

Nodes are residues in canonical order (chains sorted by chain id, residues by
seq_index).  Edges are typed: intra edges connect residues of the same binding
partner (all Ig chains form one partner, the antigen the other) within 3.5 A
minimum atomic distance; inter edges cross the partners within 10 A.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError, DataError, RoleAssignmentError, ShapeError
from .structio import IG_ROLES, ROLES, STANDARD_RESIDUES, Complex, Residue

NODE_FEAT_DIM = 320
ROLE_INDEX = {role: i for i, role in enumerate(ROLES)}  # antigen=0, heavy=1, light=2


class EdgeKind(IntEnum):
    INTRA = 0
    INTER = 1


@dataclass(frozen=True)
class FeaturizerConfig:
    tau_intra: float = 3.5
    tau_inter: float = 10.0
    rbf_count: int = 10
    rbf_range: tuple[float, float] = (0.25, 8.0)

    def __post_init__(self):
        lo, hi = self.rbf_range
        if not 0 < self.tau_intra <= self.tau_inter:
            raise ConfigError(f"need 0 < tau_intra <= tau_inter, got {self.tau_intra}, {self.tau_inter}")
        if self.rbf_count < 2:
            raise ConfigError(f"rbf_count must be >= 2, got {self.rbf_count}")
        if not 0 < lo < hi:
            raise ConfigError(f"rbf_range must satisfy 0 < lo < hi, got {self.rbf_range}")

    @property
    def edge_feat_dim(self) -> int:
        return 3 * self.rbf_count


@dataclass
class ResidueGraph:
    """Graph over residues: coordinates, features, typed undirected edges.

    `edges` stores each unordered pair once as (i, j) with i < j; message
    passing expands them to both directions.  `edge_feats` rows are the
    concatenation rbf(d_min) | rbf(d_ca) | rbf(d_com), in that fixed order.
    """

    coords: np.ndarray            # (N, 3) float64, CA position per node
    node_feats: np.ndarray        # (N, d_x) float32
    edges: np.ndarray             # (E, 2) int64, i < j
    edge_kinds: np.ndarray        # (E,) uint8, EdgeKind values
    edge_feats: np.ndarray        # (E, 3*D) float64
    node_role: np.ndarray         # (N,) uint8, ROLE_INDEX values
    cdr_mask: np.ndarray          # (N,) bool
    source_id: str = ""
    node_labels: list[tuple[str, int]] = field(default_factory=list)

    @property
    def node_count(self) -> int:
        return int(self.coords.shape[0])

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    def interface_set(self) -> np.ndarray:
        """Sorted indices of nodes incident to at least one inter edge."""
        inter = self.edges[self.edge_kinds == EdgeKind.INTER]
        return np.unique(inter) if inter.size else np.empty(0, dtype=np.int64)

    @property
    def has_interface(self) -> bool:
        return bool(np.any(self.edge_kinds == EdgeKind.INTER))


def canonical_residue_order(c: Complex) -> list[Residue]:
    """Chains sorted by chain id, residues by seq_index within each chain."""
    ordered = []
    for chain in sorted(c.chains, key=lambda ch: ch.chain_id):
        ordered.extend(sorted(chain.residues, key=lambda r: r.seq_index))
    return ordered


def _role_of(c: Complex, residue: Residue) -> str:
    role = c.chain(residue.chain_id).role
    if role is None:
        raise RoleAssignmentError(f"chain {residue.chain_id!r} has no role assigned")
    return role


def residue_pair_distances(r1: Residue, r2: Residue) -> tuple[float, float, float]:
    """(min atomic distance, CA-CA distance, centroid distance) in Angstrom."""
    a1, a2 = r1.atom_coords(), r2.atom_coords()
    if a1.size == 0 or a2.size == 0:
        raise DataError("residue without atoms")
    diff = a1[:, None, :] - a2[None, :, :]
    d_min = float(np.sqrt((diff ** 2).sum(-1).min()))
    d_ca = float(np.linalg.norm(r1.ca_pos() - r2.ca_pos()))
    d_com = float(np.linalg.norm(a1.mean(0) - a2.mean(0)))
    return d_min, d_ca, d_com


def rbf_centers(cfg: FeaturizerConfig) -> np.ndarray:
    lo, hi = cfg.rbf_range
    return np.geomspace(lo, hi, cfg.rbf_count)


def rbf_widths(cfg: FeaturizerConfig) -> np.ndarray:
    centers = rbf_centers(cfg)
    gaps = np.diff(centers)
    return np.append(gaps, gaps[-1])


def rbf_expand(d: float, cfg: FeaturizerConfig) -> np.ndarray:
    """Gaussian expansion exp(-(d - c_k)^2 / (2 gamma_k^2)) over log-spaced centers.

    Centers c_k = lo * (hi/lo)^(k/(D-1)); widths are the inter-center gaps,
    with the last gap repeated for the final center.
    """
    if d < 0:
        raise DataError(f"distance must be nonnegative, got {d}")
    centers = rbf_centers(cfg)
    widths = rbf_widths(cfg)
    return np.exp(-((d - centers) ** 2) / (2.0 * widths ** 2))


def build_graph(c: Complex, node_feats: np.ndarray, cfg: FeaturizerConfig | None = None) -> ResidueGraph:
    """Assemble the residue graph for a role-assigned complex.

    `node_feats` rows must align with the canonical residue order.  A graph
    with zero inter edges is valid only for the nondocking ablation; it is
    flagged with a warning here and rejected by the default scoring path.
    """
    cfg = cfg or FeaturizerConfig()
    residues = canonical_residue_order(c)
    n = len(residues)
    node_feats = np.asarray(node_feats)
    if node_feats.ndim != 2 or node_feats.shape[0] != n:
        raise ShapeError(
            f"node feature rows ({node_feats.shape[0] if node_feats.ndim == 2 else node_feats.shape}) "
            f"do not match residue count ({n})")
    if not np.isfinite(node_feats).all():
        raise DataError("node features contain non-finite values")

    roles = [_role_of(c, r) for r in residues]
    partner = np.array([0 if role in IG_ROLES else 1 for role in roles], dtype=np.int8)
    coords = np.stack([r.ca_pos() for r in residues]) if n else np.empty((0, 3))
    atom_arrays = [r.atom_coords() for r in residues]
    # d_min >= d_ca - ext_i - ext_j, so pairs can be pre-filtered by CA distance.
    extents = np.array([np.linalg.norm(a - coords[i], axis=1).max() for i, a in enumerate(atom_arrays)])

    centers = rbf_centers(cfg)
    widths = rbf_widths(cfg)

    def expand(d: float) -> np.ndarray:
        return np.exp(-((d - centers) ** 2) / (2.0 * widths ** 2))

    edges, kinds, feats = [], [], []
    for i in range(n):
        for j in range(i + 1, n):
            cross = partner[i] != partner[j]
            tau = cfg.tau_inter if cross else cfg.tau_intra
            d_ca_bound = np.linalg.norm(coords[i] - coords[j]) - extents[i] - extents[j]
            if d_ca_bound > tau:
                continue
            d_min, d_ca, d_com = residue_pair_distances(residues[i], residues[j])
            if d_min > tau:
                continue
            edges.append((i, j))
            kinds.append(EdgeKind.INTER if cross else EdgeKind.INTRA)
            feats.append(np.concatenate([expand(d_min), expand(d_ca), expand(d_com)]))

    graph = ResidueGraph(
        coords=coords,
        node_feats=node_feats.astype(np.float32),
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        edge_kinds=np.array(kinds, dtype=np.uint8),
        edge_feats=np.array(feats, dtype=np.float64).reshape(-1, cfg.edge_feat_dim),
        node_role=np.array([ROLE_INDEX[r] for r in roles], dtype=np.uint8),
        cdr_mask=np.array([r.is_cdr for r in residues], dtype=bool),
        source_id=c.id,
        node_labels=[(r.chain_id, r.seq_index) for r in residues],
    )
    if not graph.has_interface:
        warnings.warn(f"complex {c.id!r}: graph has zero inter edges (nondocking)", stacklevel=2)
    return graph


EMBEDDING_MAGIC = b"IGEMB1"


def save_embeddings(path: str | Path, matrix: np.ndarray) -> None:
    """Write a per-chain embedding matrix (magic, u64 rows/cols, f32 row-major)."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ShapeError(f"embedding matrix must be 2-D, got shape {matrix.shape}")
    if not np.isfinite(matrix).all():
        raise DataError("embedding matrix contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<QQ", matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.astype("<f4").tobytes(order="C"))


def load_embeddings(path: str | Path, expected_rows: int, expected_cols: int = NODE_FEAT_DIM,
                    chain_id: str | None = None) -> np.ndarray:
    """Read one chain's embedding file, validating shape and finiteness."""
    who = f"chain {chain_id!r} ({path})" if chain_id else str(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(EMBEDDING_MAGIC))
        if magic != EMBEDDING_MAGIC:
            raise DataError(f"{who}: bad embedding magic {magic!r}")
        rows, cols = struct.unpack("<QQ", fh.read(16))
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != rows * cols:
        raise ShapeError(f"{who}: payload holds {data.size} floats, header says {rows}x{cols}")
    matrix = data.reshape(rows, cols)
    if rows != expected_rows:
        raise ShapeError(f"{who}: {rows} rows for a chain of {expected_rows} residues")
    if cols != expected_cols:
        raise ShapeError(f"{who}: {cols} columns, expected {expected_cols}")
    if not np.isfinite(matrix).all():
        raise DataError(f"{who}: embedding contains non-finite values")
    return matrix.astype(np.float32)


_RESNAME_INDEX = {name: i for i, name in enumerate(STANDARD_RESIDUES)}


def fallback_features(c: Complex) -> np.ndarray:
    """Deterministic substitute when no embedding files are supplied.

    Per residue: one-hot residue type (20) + one-hot role (3) + CDR bit,
    zero-padded to the standard width of 320.
    """
    residues = canonical_residue_order(c)
    out = np.zeros((len(residues), NODE_FEAT_DIM), dtype=np.float32)
    for i, res in enumerate(residues):
        out[i, _RESNAME_INDEX[res.resname]] = 1.0
        out[i, 20 + ROLE_INDEX[_role_of(c, res)]] = 1.0
        if res.is_cdr:
            out[i, 23] = 1.0
    return out


def assemble_node_features(c: Complex, embeddings: Mapping[str, np.ndarray] | None) -> np.ndarray:
    """Stack per-chain embeddings in canonical chain order, or build fallback rows.

    Embeddings and fallback features are never mixed within one graph: either
    every chain has an embedding matrix or none does.
    """
    if embeddings is None:
        return fallback_features(c)
    chain_ids = sorted(ch.chain_id for ch in c.chains)
    missing = [cid for cid in chain_ids if cid not in embeddings]
    if missing:
        raise ConfigError(f"embeddings missing for chains {missing}; "
                          "embeddings and fallback features cannot be mixed")
    blocks = []
    for cid in chain_ids:
        chain = c.chain(cid)
        matrix = np.asarray(embeddings[cid])
        if matrix.shape != (len(chain.residues), NODE_FEAT_DIM):
            raise ShapeError(f"chain {cid!r}: embedding shape {matrix.shape}, "
                             f"expected ({len(chain.residues)}, {NODE_FEAT_DIM})")
        blocks.append(matrix.astype(np.float32))
    return np.concatenate(blocks, axis=0)
