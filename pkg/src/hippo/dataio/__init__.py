"""Input parsing, synthetic corpus generation and checkpoint persistence."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .parsers import (
    annotation_matrix,
    ensure_dir,
    parse_annotations,
    parse_edges,
    parse_fasta,
    parse_hierarchy,
    parse_sites,
    write_annotations,
    write_edges,
    write_fasta,
    write_hierarchy,
    write_sites,
)
from .records import AA_ALPHABET, SEQUENCE_ALPHABET, EdgeRecord, ProteinRecord
from .synth import (
    DEFAULT_TYPES,
    InteractionRule,
    SynthCorpus,
    SynthSpec,
    default_interaction_rule,
    expected_edge_density,
    synth_generate,
)

__all__ = [
    "AA_ALPHABET",
    "Checkpoint",
    "DEFAULT_TYPES",
    "EdgeRecord",
    "InteractionRule",
    "ProteinRecord",
    "SEQUENCE_ALPHABET",
    "SynthCorpus",
    "SynthSpec",
    "annotation_matrix",
    "default_interaction_rule",
    "ensure_dir",
    "expected_edge_density",
    "load_checkpoint",
    "parse_annotations",
    "parse_edges",
    "parse_fasta",
    "parse_hierarchy",
    "parse_sites",
    "save_checkpoint",
    "synth_generate",
    "write_annotations",
    "write_edges",
    "write_fasta",
    "write_hierarchy",
    "write_sites",
]
