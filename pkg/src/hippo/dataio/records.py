"""Core record types for proteins and interactions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError

AA_ALPHABET = "ACDEFGHIKLMNPQRSTVWY"
SEQUENCE_ALPHABET = AA_ALPHABET + "X"
_VALID_CHARS = frozenset(SEQUENCE_ALPHABET)


@dataclass
class ProteinRecord:
    id: str
    sequence: str
    keywords: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    family_id: str | None = None
    clan_id: str | None = None

    def __post_init__(self):
        if len(self.sequence) < 1:
            raise DataError(f"protein {self.id!r} has an empty sequence")
        bad = set(self.sequence) - _VALID_CHARS
        if bad:
            raise DataError(
                f"protein {self.id!r} contains characters outside the alphabet: {sorted(bad)}"
            )


@dataclass
class EdgeRecord:
    """Undirected interaction between two distinct proteins.

    ``labels`` is a binary vector over the interaction-type vocabulary that
    accompanies the record list; positive records carry at least one label.
    """

    a: str
    b: str
    labels: np.ndarray

    def __post_init__(self):
        if self.a == self.b:
            raise DataError(f"self-interaction {self.a!r} is not allowed")
        if self.a > self.b:
            self.a, self.b = self.b, self.a
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.labels.sum() == 0:
            raise DataError(f"edge ({self.a!r}, {self.b!r}) carries no interaction label")

    @property
    def pair(self) -> tuple[str, str]:
        return (self.a, self.b)

    def label_names(self, vocab: list[str]) -> list[str]:
        return [vocab[k] for k in np.flatnonzero(self.labels)]
