"""igrank: immunoglobulin-antigen pose classification and quality scoring.

An equivariant graph-network toolkit: structure parsing, residue-graph
featurization, interface/CDR-seeded k-hop sampling, gated message passing,
task losses, training loops, evaluation metrics, and a synthetic decoy forge
for desk-scale verification.
"""

__version__ = "0.1.0"
