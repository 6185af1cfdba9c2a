"""Record-level plumbing: manifest entry -> parsed complex -> featurized
graph -> sampled subgraph, plus the on-disk graph cache."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import serialize
from .errors import (
    DataError,
    EmptyPoolError,
    EmptySeedError,
    UnscorableSampleError,
)
from .featurize import (
    FeaturizerConfig,
    ResidueGraph,
    assemble_node_features,
    build_graph,
    load_embeddings,
    NODE_FEAT_DIM,
)
from .manifest import SampleRecord
from .structio import apply_cdr_annotation, assign_roles, parse_pdb, read_cdr_annotation
from .subgraph import SamplerConfig, khop_sample, seed_nodes

GRAPH_FORMAT = "igrank-graph-v1"


def load_complex(record: SampleRecord, base_dir: str | Path = "."):
    """Parse the record's structure and attach roles and CDR annotation."""
    base = Path(base_dir)
    text = (base / record.structure_path).read_text(encoding="utf-8")
    c = parse_pdb(text, complex_id=record.id)
    c = assign_roles(c, record.role_map)
    if record.cdr_annotation_path:
        annotation = read_cdr_annotation((base / record.cdr_annotation_path).read_text(encoding="utf-8"))
        c = apply_cdr_annotation(c, annotation)
    return c


def record_node_features(record: SampleRecord, c, base_dir: str | Path = ".") -> np.ndarray:
    """Per-chain embedding files when the record names them, fallback otherwise."""
    if record.embedding_paths is None:
        return assemble_node_features(c, None)
    base = Path(base_dir)
    known = {chain.chain_id for chain in c.chains}
    unknown = sorted(set(record.embedding_paths) - known)
    if unknown:
        raise DataError(f"record {record.id!r}: embedding paths for unknown chains {unknown}")
    embeddings = {
        chain_id: load_embeddings(base / rel, expected_rows=len(c.chain(chain_id).residues),
                                  expected_cols=NODE_FEAT_DIM, chain_id=chain_id)
        for chain_id, rel in record.embedding_paths.items()
    }
    return assemble_node_features(c, embeddings)


def build_record_graph(record: SampleRecord, fcfg: FeaturizerConfig | None = None,
                       base_dir: str | Path = ".") -> ResidueGraph:
    c = load_complex(record, base_dir)
    feats = record_node_features(record, c, base_dir)
    return build_graph(c, feats, fcfg or FeaturizerConfig())


def prepare_graph(
    graph: ResidueGraph,
    sampler_cfg: SamplerConfig | None,
    allow_nondocking: bool = False,
) -> ResidueGraph:
    """Apply the scoring-path gate and the k-hop sampler to a full graph.

    Graphs without inter edges are rejected unless `allow_nondocking`; seed
    or pool failures surface as UnscorableSampleError so callers can log and
    skip the sample.
    """
    if not graph.has_interface and not allow_nondocking:
        raise UnscorableSampleError(
            f"{graph.source_id!r}: no inter edges (nondocking graphs are rejected "
            "by the default scoring path)")
    if sampler_cfg is None:
        return graph
    try:
        seeds = seed_nodes(graph, sampler_cfg.seed_mode)
        return khop_sample(graph, seeds, sampler_cfg)
    except (EmptySeedError, EmptyPoolError) as exc:
        raise UnscorableSampleError(f"{graph.source_id!r}: {exc}") from exc


def prepare_record(
    record: SampleRecord,
    fcfg: FeaturizerConfig | None = None,
    sampler_cfg: SamplerConfig | None = None,
    allow_nondocking: bool = False,
    base_dir: str | Path = ".",
    graph: ResidueGraph | None = None,
) -> ResidueGraph:
    """Full path from manifest record to the model-ready (sub)graph."""
    if graph is None:
        graph = build_record_graph(record, fcfg, base_dir)
    return prepare_graph(graph, sampler_cfg, allow_nondocking)


def save_graph(path: str | Path, g: ResidueGraph) -> None:
    """Cache a featurized graph (same header+blob container as checkpoints)."""
    arrays = {
        "coords": g.coords.astype("<f8"),
        "node_feats": g.node_feats.astype("<f4"),
        "edges": g.edges.astype("<i8"),
        "edge_kinds": g.edge_kinds.astype("|u1"),
        "edge_feats": g.edge_feats.astype("<f8"),
        "node_role": g.node_role.astype("|u1"),
        "cdr_mask": g.cdr_mask.astype("|u1"),
    }
    meta = {
        "source_id": g.source_id,
        "node_labels": [[chain, int(seq)] for chain, seq in g.node_labels],
    }
    serialize.write_blob(path, GRAPH_FORMAT, meta, arrays)


def load_graph(path: str | Path) -> ResidueGraph:
    meta, arrays = serialize.read_blob(path, expected_format=GRAPH_FORMAT)
    return ResidueGraph(
        coords=arrays["coords"].astype(np.float64),
        node_feats=arrays["node_feats"].astype(np.float32),
        edges=arrays["edges"].astype(np.int64).reshape(-1, 2),
        edge_kinds=arrays["edge_kinds"].astype(np.uint8),
        edge_feats=arrays["edge_feats"].astype(np.float64),
        node_role=arrays["node_role"].astype(np.uint8),
        cdr_mask=arrays["cdr_mask"].astype(bool),
        source_id=str(meta.get("source_id", "")),
        node_labels=[(str(chain), int(seq)) for chain, seq in meta.get("node_labels", [])],
    )
