"""Synthetic fixture generation: seeded micro-complexes, rigid-body pose
perturbations with perturbation-derived labels, and a monotone pose-quality
proxy, so the full train/eval pipeline can be exercised at desk scale.

Near decoys perturb one partner by at most 1 A translation and 5 degrees of
rotation (label 1); far decoys translate it 8-30 A, every other one with an
additional rotation of at least 60 degrees (label 0).  Rotations pivot on the
perturbed partner's CA centroid, which makes the CA RMS displacement of a far
decoy at least its translation magnitude and keeps the two label sets
separable by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .featurize import save_embeddings, NODE_FEAT_DIM
from .manifest import SampleRecord, write_manifest
from .rng import substream
from .structio import (
    Atom,
    Chain,
    Complex,
    IG_ROLES,
    ROLE_ANTIGEN,
    ROLE_HEAVY,
    Residue,
    STANDARD_RESIDUES,
    assign_roles,
    format_cdr_annotation,
    to_pdb,
)

QUALITY_SCALE = 8.5  # A; RMS displacement at which the quality proxy hits 0.5

PARTNER_IG = "ig"
PARTNER_AG = "ag"


@dataclass(frozen=True)
class Perturbation:
    rotation: tuple[tuple[float, float, float], ...]  # 3x3 row-major, det +1
    translation: tuple[float, float, float]
    applied_to: str = PARTNER_AG

    def rotation_matrix(self) -> np.ndarray:
        return np.array(self.rotation, dtype=np.float64)

    def validate(self) -> None:
        r = self.rotation_matrix()
        if r.shape != (3, 3):
            raise DataError(f"rotation must be 3x3, got {r.shape}")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise DataError("rotation matrix is not orthonormal")
        if not math.isclose(float(np.linalg.det(r)), 1.0, abs_tol=1e-9):
            raise DataError(f"rotation determinant {np.linalg.det(r)} != +1")
        if self.applied_to not in (PARTNER_IG, PARTNER_AG):
            raise DataError(f"applied_to must be 'ig' or 'ag', got {self.applied_to!r}")


@dataclass
class ForgedDecoy:
    complex: Complex
    label: int
    quality: float
    rms_displacement: float
    perturbation: Perturbation


def identity_perturbation(applied_to: str = PARTNER_AG) -> Perturbation:
    return Perturbation(
        rotation=((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
        translation=(0.0, 0.0, 0.0),
        applied_to=applied_to,
    )


def rotation_about_axis(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis and angle."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    k = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    return np.eye(3) + math.sin(angle_rad) * k + (1.0 - math.cos(angle_rad)) * (k @ k)


def _partner_of(role: str | None) -> str:
    return PARTNER_AG if role == ROLE_ANTIGEN else PARTNER_IG


def rigid_transform(c: Complex, p: Perturbation) -> Complex:
    """Map every atom of the chosen partner through x -> R x + t."""
    p.validate()
    r = p.rotation_matrix()
    t = np.asarray(p.translation, dtype=np.float64)
    chains = []
    for chain in c.chains:
        if _partner_of(chain.role) != p.applied_to:
            chains.append(chain)
            continue
        residues = []
        for res in chain.residues:
            atoms = tuple(
                replace(atom, pos=tuple((r @ np.asarray(atom.pos) + t).tolist()))
                for atom in res.atoms
            )
            residues.append(replace(res, atoms=atoms))
        chains.append(replace(chain, residues=tuple(residues)))
    return replace(c, chains=tuple(chains))


def _partner_ca_coords(c: Complex, partner: str) -> np.ndarray:
    coords = [res.ca_pos() for chain in c.chains if _partner_of(chain.role) == partner
              for res in chain.residues]
    if not coords:
        raise DataError(f"complex {c.id!r} has no partner {partner!r}")
    return np.stack(coords)


def ca_rms_displacement(original: Complex, perturbed: Complex, partner: str) -> float:
    """RMS displacement of the perturbed partner's CA atoms from the original pose."""
    a = _partner_ca_coords(original, partner)
    b = _partner_ca_coords(perturbed, partner)
    if a.shape != b.shape:
        raise DataError("complexes do not share the partner's residue layout")
    return float(np.sqrt(((a - b) ** 2).sum(axis=1).mean()))


def quality_from_rms(rms: float) -> float:
    """Monotone pose-quality proxy in (0, 1]: 1 / (1 + (rms / 8.5)^2)."""
    return 1.0 / (1.0 + (rms / QUALITY_SCALE) ** 2)


def _random_unit(rng: np.random.Generator) -> np.ndarray:
    while True:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n > 1e-9:
            return v / n


def _composed_perturbation(rng: np.random.Generator, pivot: np.ndarray,
                           max_angle_deg: float, min_angle_deg: float,
                           t_lo: float, t_hi: float, applied_to: str) -> Perturbation:
    """Rotation about `pivot` plus a random-direction translation of U[t_lo, t_hi]."""
    if max_angle_deg > 0.0:
        angle = math.radians(rng.uniform(min_angle_deg, max_angle_deg))
        r = rotation_about_axis(_random_unit(rng), angle)
    else:
        r = np.eye(3)
    t_mag = rng.uniform(t_lo, t_hi)
    t = pivot - r @ pivot + t_mag * _random_unit(rng)
    return Perturbation(
        rotation=tuple(tuple(float(v) for v in row) for row in r),
        translation=tuple(float(v) for v in t),
        applied_to=applied_to,
    )


def forge_decoys(c: Complex, n_near: int, n_far: int, seed: int,
                 applied_to: str = PARTNER_AG) -> list[ForgedDecoy]:
    """Perturbation-labeled decoy poses of one complex, deterministic per seed."""
    if n_near < 0 or n_far < 0:
        raise ConfigError("decoy counts must be nonnegative")
    rng = substream(seed, "forge", "decoys", c.id)
    pivot = _partner_ca_coords(c, applied_to).mean(axis=0)
    decoys = []
    for i in range(n_near):
        pert = _composed_perturbation(rng, pivot, max_angle_deg=5.0, min_angle_deg=0.0,
                                      t_lo=0.0, t_hi=1.0, applied_to=applied_to)
        moved = rigid_transform(c, pert)
        rms = ca_rms_displacement(c, moved, applied_to)
        decoys.append(ForgedDecoy(
            complex=replace(moved, id=f"{c.id}-near{i:03d}"),
            label=1, quality=quality_from_rms(rms), rms_displacement=rms, perturbation=pert))
    for i in range(n_far):
        max_angle = 180.0 if i % 2 else 0.0
        pert = _composed_perturbation(rng, pivot, max_angle_deg=max_angle, min_angle_deg=60.0,
                                      t_lo=8.0, t_hi=30.0, applied_to=applied_to)
        moved = rigid_transform(c, pert)
        rms = ca_rms_displacement(c, moved, applied_to)
        decoys.append(ForgedDecoy(
            complex=replace(moved, id=f"{c.id}-far{i:03d}"),
            label=0, quality=quality_from_rms(rms), rms_displacement=rms, perturbation=pert))
    return decoys


_BACKBONE_OFFSETS = ("N", "C")


def micro_complex(n_ig: int, n_ag: int, seed: int, complex_id: str | None = None) -> Complex:
    """A two-chain synthetic complex with roles, CDR flags and a real interface.

    Residues carry a CA plus two dummy atoms each and follow a gently curving
    walk with 3.8 A steps; the antigen chain is placed so at least one
    cross-partner atom pair sits within 10 A.  Deterministic per seed.
    """
    if n_ig < 1 or n_ag < 1:
        raise ConfigError("both partners need at least one residue")
    rng = substream(seed, "forge", "micro")
    complex_id = complex_id or f"micro-{seed}"

    def build_chain(chain_id: str, n: int, origin: np.ndarray) -> Chain:
        pos = origin.astype(np.float64).copy()
        direction = np.array([1.0, 0.0, 0.0])
        residues = []
        for i in range(n):
            atoms = [Atom(name="CA", element="C", pos=tuple(pos.tolist()))]
            for name in _BACKBONE_OFFSETS:
                offset = _random_unit(rng) * 1.2
                atoms.append(Atom(name=name, element=name[0],
                                  pos=tuple((pos + offset).tolist())))
            resname = str(rng.choice(STANDARD_RESIDUES))
            residues.append(Residue(chain_id=chain_id, seq_index=i + 1,
                                    resname=resname, atoms=tuple(atoms)))
            direction = direction + 0.35 * rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            pos = pos + 3.8 * direction
        return Chain(chain_id=chain_id, role=None, residues=tuple(residues))

    ig_chain = build_chain("H", n_ig, np.zeros(3))
    ag_chain = build_chain("A", n_ag, np.array([0.0, 8.0, 0.0]))

    def cross_min(ag: Chain) -> tuple[float, np.ndarray]:
        ig_atoms = np.concatenate([r.atom_coords() for r in ig_chain.residues])
        ag_atoms = np.concatenate([r.atom_coords() for r in ag.residues])
        diff = ig_atoms[:, None, :] - ag_atoms[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        i, j = np.unravel_index(int(dist.argmin()), dist.shape)
        gap = ag_atoms[j] - ig_atoms[i]
        return float(dist[i, j]), gap / max(float(np.linalg.norm(gap)), 1e-9)

    def shift(chain: Chain, vec: np.ndarray) -> Chain:
        residues = tuple(
            replace(res, atoms=tuple(
                replace(a, pos=tuple((np.asarray(a.pos) + vec).tolist())) for a in res.atoms))
            for res in chain.residues)
        return replace(chain, residues=residues)

    d, axis = cross_min(ag_chain)
    ag_chain = shift(ag_chain, -(d - 6.0) * axis)  # closest pair to ~6 A
    d, axis = cross_min(ag_chain)
    while d < 3.0:  # back off clashes introduced by the adjustment
        ag_chain = shift(ag_chain, 0.5 * axis)
        d, axis = cross_min(ag_chain)

    assembled = Complex(id=complex_id, chains=(ig_chain, ag_chain))
    assembled = assign_roles(assembled, {"H": ROLE_HEAVY, "A": ROLE_ANTIGEN})

    # CDR: the third of Ig residues closest to the antigen centroid (>=1)
    ag_centroid = _partner_ca_coords(assembled, PARTNER_AG).mean(axis=0)
    ig_residues = assembled.chain("H").residues
    dists = [float(np.linalg.norm(res.ca_pos() - ag_centroid)) for res in ig_residues]
    n_cdr = max(1, math.ceil(len(ig_residues) / 3))
    cdr_ranks = sorted(range(len(ig_residues)), key=lambda i: (dists[i], i))[:n_cdr]
    flagged = set(cdr_ranks)
    new_ig = replace(
        assembled.chain("H"),
        residues=tuple(replace(res, is_cdr=(i in flagged)) for i, res in enumerate(ig_residues)))
    return replace(assembled, chains=(new_ig, assembled.chain("A")))


def cdr_annotation_of(c: Complex) -> dict[str, list[tuple[int, int]]]:
    """Contiguous seq_index ranges of the currently flagged CDR residues."""
    annotation: dict[str, list[tuple[int, int]]] = {}
    for chain in c.chains:
        if chain.role not in IG_ROLES:
            continue
        flagged = sorted(res.seq_index for res in chain.residues if res.is_cdr)
        if not flagged:
            continue
        ranges = []
        start = prev = flagged[0]
        for idx in flagged[1:]:
            if idx == prev + 1:
                prev = idx
                continue
            ranges.append((start, prev))
            start = prev = idx
        ranges.append((start, prev))
        annotation[chain.chain_id] = ranges
    return annotation


def write_fixture_set(
    out_dir: str | Path,
    n_ig: int,
    n_ag: int,
    n_near: int,
    n_far: int,
    seed: int,
    val_fraction: float = 0.25,
    test_fraction: float = 0.0,
    with_embeddings: bool = False,
) -> list[SampleRecord]:
    """Emit a complete fixture dataset: PDB decoys, one shared CDR annotation
    file, optional per-chain embedding files, and a manifest of sample lines.

    All paths in the manifest are relative to `out_dir`.  Split tags are
    assigned deterministically per label class so both classes appear in
    every non-empty split.
    """
    if not 0.0 <= val_fraction < 1.0 or not 0.0 <= test_fraction < 1.0:
        raise ConfigError("split fractions must be in [0, 1)")
    out = Path(out_dir)
    (out / "structures").mkdir(parents=True, exist_ok=True)
    base = micro_complex(n_ig, n_ag, seed)
    decoys = forge_decoys(base, n_near, n_far, seed)

    annotation = cdr_annotation_of(base)
    cdr_path = "cdr_annotation.txt"
    (out / cdr_path).write_text(format_cdr_annotation(annotation), encoding="utf-8")

    embedding_paths = None
    if with_embeddings:
        (out / "embeddings").mkdir(exist_ok=True)
        embedding_paths = {}
        for chain in base.chains:
            rng = substream(seed, "emb", base.id, chain.chain_id)
            matrix = (0.1 * rng.standard_normal((len(chain.residues), NODE_FEAT_DIM))).astype(np.float32)
            rel = f"embeddings/{chain.chain_id}.bin"
            save_embeddings(out / rel, matrix)
            embedding_paths[chain.chain_id] = rel

    def split_for(index: int, class_size: int) -> str:
        n_val = round(class_size * val_fraction)
        n_test = round(class_size * test_fraction)
        if index < n_val:
            return "validation"
        if index < n_val + n_test:
            return "test"
        return "train"

    records = []
    class_counters = {0: 0, 1: 0}
    class_sizes = {1: n_near, 0: n_far}
    role_map = {ch.chain_id: ch.role for ch in base.chains}
    for decoy in decoys:
        rel_pdb = f"structures/{decoy.complex.id}.pdb"
        (out / rel_pdb).write_text(to_pdb(decoy.complex), encoding="utf-8")
        index = class_counters[decoy.label]
        class_counters[decoy.label] += 1
        records.append(SampleRecord(
            id=decoy.complex.id,
            structure_path=rel_pdb,
            role_map=dict(role_map),
            embedding_paths=dict(embedding_paths) if embedding_paths else None,
            cdr_annotation_path=cdr_path,
            label=decoy.label,
            dockq=decoy.quality,
            cluster_id=base.id,
            split=split_for(index, class_sizes[decoy.label]),
        ))
    write_manifest(out / "manifest.jsonl", records)
    return records
