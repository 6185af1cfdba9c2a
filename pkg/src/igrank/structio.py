"""Structure-file parsing into validated immunoglobulin-antigen complexes.

Parses plain PDB text (ATOM/HETATM records), performs the standard cleaning
steps (drop non-standard residues, resolve alternate locations by occupancy,
drop residues without an alpha carbon) and attaches chain roles and CDR
annotations.  Residues are renumbered to 1-based ordinals per chain, so
annotation ranges are positional.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    AnnotationError,
    DataError,
    EmptyComplexError,
    RoleAssignmentError,
    StructureParseError,
)

ROLE_ANTIGEN = "antigen"
ROLE_HEAVY = "heavy"
ROLE_LIGHT = "light"
ROLES = (ROLE_ANTIGEN, ROLE_HEAVY, ROLE_LIGHT)
IG_ROLES = (ROLE_HEAVY, ROLE_LIGHT)

STANDARD_RESIDUES = (
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
    "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL",
)


@dataclass(frozen=True)
class Atom:
    name: str
    element: str
    pos: tuple[float, float, float]
    occupancy: float = 1.0
    altloc: str = " "


@dataclass(frozen=True)
class Residue:
    chain_id: str
    seq_index: int
    resname: str
    atoms: tuple[Atom, ...]
    is_cdr: bool = False

    def atom_coords(self) -> np.ndarray:
        return np.array([a.pos for a in self.atoms], dtype=np.float64)

    def ca_pos(self) -> np.ndarray:
        for a in self.atoms:
            if a.name == "CA":
                return np.asarray(a.pos, dtype=np.float64)
        raise DataError(f"residue {self.chain_id}:{self.seq_index} has no CA atom")


@dataclass(frozen=True)
class Chain:
    chain_id: str
    role: str | None
    residues: tuple[Residue, ...]


@dataclass(frozen=True)
class Complex:
    id: str
    chains: tuple[Chain, ...]

    def chain(self, chain_id: str) -> Chain:
        for c in self.chains:
            if c.chain_id == chain_id:
                return c
        raise KeyError(chain_id)

    def residue_count(self) -> int:
        return sum(len(c.residues) for c in self.chains)


def _parse_atom_line(line: str, lineno: int) -> dict:
    if len(line) < 54:
        raise StructureParseError("truncated atom record", lineno)
    try:
        x = float(line[30:38])
        y = float(line[38:46])
        z = float(line[46:54])
    except ValueError:
        raise StructureParseError("unparseable coordinates", lineno) from None
    occ_field = line[54:60].strip() if len(line) >= 60 else ""
    try:
        occupancy = float(occ_field) if occ_field else 1.0
    except ValueError:
        raise StructureParseError("unparseable occupancy", lineno) from None
    resseq_field = line[22:26].strip()
    try:
        resseq = int(resseq_field)
    except ValueError:
        raise StructureParseError(f"unparseable residue number {resseq_field!r}", lineno) from None
    if not all(math.isfinite(v) for v in (x, y, z)):
        raise DataError(f"line {lineno}: non-finite coordinate")
    if not 0.0 <= occupancy <= 1.0:
        raise DataError(f"line {lineno}: occupancy {occupancy} outside [0, 1]")
    name = line[12:16].strip()
    if not name:
        raise StructureParseError("blank atom name", lineno)
    element = line[76:78].strip() if len(line) >= 78 else ""
    if not element:
        element = next((ch for ch in name if ch.isalpha()), "X")
    return {
        "name": name,
        "altloc": line[16],
        "resname": line[17:20].strip(),
        "chain_id": line[21],
        "resseq": resseq,
        "icode": line[26],
        "pos": (x, y, z),
        "occupancy": occupancy,
        "element": element,
    }


def _resolve_altlocs(records: list[dict]) -> list[Atom]:
    """Keep one atom per name: highest occupancy, ties to the smallest altloc."""
    by_name: dict[str, list[dict]] = {}
    order: list[str] = []
    for rec in records:
        if rec["name"] not in by_name:
            order.append(rec["name"])
        by_name.setdefault(rec["name"], []).append(rec)
    atoms = []
    for name in order:
        group = by_name[name]
        best = min(group, key=lambda r: (-r["occupancy"], r["altloc"]))
        atoms.append(Atom(
            name=name,
            element=best["element"],
            pos=best["pos"],
            occupancy=best["occupancy"],
            altloc=best["altloc"],
        ))
    return atoms


def parse_pdb(text: str, complex_id: str = "complex") -> Complex:
    """Parse PDB text into a Complex with roles unassigned.

    Cleaning: residues with a non-standard amino-acid code are removed; in
    each alternate-location group only the highest-occupancy atom survives
    (ties break to the lexicographically smallest altloc); residues lacking
    an alpha carbon are dropped with a warning.  Surviving residues are
    renumbered 1..n per chain in file order.
    """
    residue_records: dict[tuple[str, int, str], list[dict]] = {}
    residue_resname: dict[tuple[str, int, str], str] = {}
    chain_order: list[str] = []
    saw_atom_record = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        tag = line[:6]
        if tag not in ("ATOM  ", "HETATM"):
            continue
        saw_atom_record = True
        rec = _parse_atom_line(line, lineno)
        if rec["resname"] not in STANDARD_RESIDUES:
            continue
        key = (rec["chain_id"], rec["resseq"], rec["icode"])
        if key in residue_resname and residue_resname[key] != rec["resname"]:
            raise StructureParseError(
                f"residue {rec['chain_id']}:{rec['resseq']} changes name "
                f"{residue_resname[key]} -> {rec['resname']}", lineno)
        residue_resname.setdefault(key, rec["resname"])
        residue_records.setdefault(key, []).append(rec)
        if rec["chain_id"] not in chain_order:
            chain_order.append(rec["chain_id"])
    if not saw_atom_record:
        raise StructureParseError("no ATOM/HETATM records found", None)

    chains = []
    for chain_id in chain_order:
        residues = []
        for key, records in residue_records.items():
            if key[0] != chain_id:
                continue
            atoms = _resolve_altlocs(records)
            if not any(a.name == "CA" for a in atoms):
                warnings.warn(
                    f"dropping residue {chain_id}:{key[1]} ({residue_resname[key]}): no CA atom",
                    stacklevel=2)
                continue
            residues.append((key, residue_resname[key], atoms))
        if not residues:
            continue
        chain_residues = tuple(
            Residue(chain_id=chain_id, seq_index=i, resname=resname, atoms=tuple(atoms))
            for i, (_, resname, atoms) in enumerate(residues, start=1)
        )
        chains.append(Chain(chain_id=chain_id, role=None, residues=chain_residues))
    if not chains:
        raise EmptyComplexError("no standard residues with CA atoms survived parsing", None)
    return Complex(id=complex_id, chains=tuple(chains))


def to_pdb(c: Complex) -> str:
    """Serialize a Complex back to PDB text (ATOM records, TER per chain)."""
    lines = []
    serial = 1
    for chain in c.chains:
        for res in chain.residues:
            for atom in res.atoms:
                name = atom.name if len(atom.name) >= 4 else f" {atom.name:<3s}"
                lines.append(
                    f"ATOM  {serial:5d} {name:<4.4s}{atom.altloc:1.1s}{res.resname:>3s} "
                    f"{chain.chain_id:1.1s}{res.seq_index:4d}    "
                    f"{atom.pos[0]:8.3f}{atom.pos[1]:8.3f}{atom.pos[2]:8.3f}"
                    f"{atom.occupancy:6.2f}{0.0:6.2f}          {atom.element:>2.2s}"
                )
                serial += 1
        lines.append("TER")
    lines.append("END")
    return "\n".join(lines) + "\n"


def assign_roles(c: Complex, mapping: dict[str, str]) -> Complex:
    """Attach a role (heavy/light/antigen) to every chain and validate the mix."""
    for chain in c.chains:
        if chain.chain_id not in mapping:
            raise RoleAssignmentError(f"chain {chain.chain_id!r} has no role in the mapping")
    for chain_id, role in mapping.items():
        if role not in ROLES:
            raise RoleAssignmentError(f"unknown role {role!r} for chain {chain_id!r}")
    chains = tuple(replace(chain, role=mapping[chain.chain_id]) for chain in c.chains)
    n_antigen = sum(1 for ch in chains if ch.role == ROLE_ANTIGEN)
    n_ig = sum(1 for ch in chains if ch.role in IG_ROLES)
    if n_ig < 1:
        raise RoleAssignmentError("complex has no immunoglobulin-role chain")
    if n_antigen != 1:
        raise RoleAssignmentError(f"complex must have exactly 1 antigen chain, found {n_antigen}")
    return replace(c, chains=chains)


def apply_cdr_annotation(c: Complex, annotation: dict[str, list[tuple[int, int]]]) -> Complex:
    """Set is_cdr true exactly on the annotated residue ranges (union semantics).

    Ranges are inclusive 1-based seq_index spans on immunoglobulin-role chains;
    annotating an antigen chain or a residue outside the chain is an error.
    """
    chain_ids = {ch.chain_id for ch in c.chains}
    for chain_id in annotation:
        if chain_id not in chain_ids:
            raise AnnotationError(f"annotation references unknown chain {chain_id!r}")
    flagged: dict[str, set[int]] = {}
    for chain in c.chains:
        ranges = annotation.get(chain.chain_id, [])
        if not ranges:
            continue
        if chain.role == ROLE_ANTIGEN:
            raise AnnotationError(f"CDR annotation on antigen chain {chain.chain_id!r}")
        n = len(chain.residues)
        marks: set[int] = set()
        for start, end in ranges:
            if start < 1 or end > n or start > end:
                raise AnnotationError(
                    f"range ({start}, {end}) outside chain {chain.chain_id!r} of length {n}")
            marks.update(range(start, end + 1))
        flagged[chain.chain_id] = marks
    chains = tuple(
        replace(chain, residues=tuple(
            replace(res, is_cdr=res.seq_index in flagged.get(chain.chain_id, ()))
            for res in chain.residues))
        for chain in c.chains
    )
    return replace(c, chains=chains)


def read_cdr_annotation(text: str) -> dict[str, list[tuple[int, int]]]:
    """Parse `chain_id start end` lines (inclusive 1-based) into an annotation map."""
    annotation: dict[str, list[tuple[int, int]]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 3:
            raise AnnotationError(f"line {lineno}: expected 'chain_id start end', got {stripped!r}")
        try:
            start, end = int(parts[1]), int(parts[2])
        except ValueError:
            raise AnnotationError(f"line {lineno}: non-integer range in {stripped!r}") from None
        annotation.setdefault(parts[0], []).append((start, end))
    return annotation


def format_cdr_annotation(annotation: dict[str, list[tuple[int, int]]]) -> str:
    lines = [f"{chain} {start} {end}"
             for chain in sorted(annotation) for start, end in annotation[chain]]
    return "\n".join(lines) + ("\n" if lines else "")


# Fixed Chothia-like windows. Convenience for synthetic fixtures only: this is
# NOT an antibody numbering engine and must not be used on real structures.
_HEURISTIC_WINDOWS = ((26, 32), (52, 56), (95, 102))


def heuristic_cdr_windows(c: Complex) -> dict[str, list[tuple[int, int]]]:
    """Fixed index windows on Ig chains, clipped to chain length (fixtures only)."""
    annotation: dict[str, list[tuple[int, int]]] = {}
    for chain in c.chains:
        if chain.role not in IG_ROLES:
            continue
        n = len(chain.residues)
        windows = [(s, min(e, n)) for s, e in _HEURISTIC_WINDOWS if s <= n]
        if windows:
            annotation[chain.chain_id] = windows
    return annotation
