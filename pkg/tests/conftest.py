import numpy as np
import pytest
import torch

from igrank.featurize import ResidueGraph

torch.set_num_threads(1)


def make_pdb_line(serial, name, resname, chain, resseq, x, y, z,
                  occupancy=1.0, altloc=" ", element=None, het=False):
    record = "HETATM" if het else "ATOM  "
    element = element or name[0]
    padded = name if len(name) >= 4 else f" {name:<3s}"
    return (f"{record}{serial:5d} {padded:<4.4s}{altloc:1.1s}{resname:>3s} "
            f"{chain:1.1s}{resseq:4d}    {x:8.3f}{y:8.3f}{z:8.3f}"
            f"{occupancy:6.2f}{0.0:6.2f}          {element:>2.2s}")


def make_residue_text(lines):
    return "\n".join(lines + ["END"]) + "\n"


def random_graph(rng, n_nodes, d_x=12, rbf_count=2, p_edge=0.2,
                 force_interface=True) -> ResidueGraph:
    """A synthetic annotated ResidueGraph (not derived from a structure)."""
    coords = rng.normal(scale=5.0, size=(n_nodes, 3))
    node_feats = rng.normal(size=(n_nodes, d_x)).astype(np.float32)
    node_role = rng.integers(0, 3, size=n_nodes).astype(np.uint8)
    if not (node_role == 0).any():
        node_role[0] = 0
    if not (node_role != 0).any():
        node_role[-1] = 1
    cdr_mask = (rng.random(n_nodes) < 0.3) & (node_role != 0)
    edges, kinds = [], []
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if rng.random() < p_edge:
                edges.append((i, j))
                cross = (node_role[i] == 0) != (node_role[j] == 0)
                kinds.append(1 if cross else 0)
    if force_interface and 1 not in kinds:
        ig = int(np.flatnonzero(node_role != 0)[0])
        ag = int(np.flatnonzero(node_role == 0)[0])
        pair = (min(ig, ag), max(ig, ag))
        if pair in edges:
            kinds[edges.index(pair)] = 1
        else:
            edges.append(pair)
            kinds.append(1)
    edge_arr = np.array(edges, dtype=np.int64).reshape(-1, 2)
    d_e = 3 * rbf_count
    edge_feats = rng.random((edge_arr.shape[0], d_e))
    return ResidueGraph(
        coords=coords,
        node_feats=node_feats,
        edges=edge_arr,
        edge_kinds=np.array(kinds, dtype=np.uint8),
        edge_feats=edge_feats,
        node_role=node_role,
        cdr_mask=cdr_mask,
        source_id="synthetic",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
