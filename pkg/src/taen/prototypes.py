"""Jointly learned sub-action prototype bank.

One ordered set of `a` prototype vectors per training class. The free
parameters are an unconstrained (C, a, e) tensor; prototypes are read
through the same eps-guarded row normalization as the embedding, so
every prototype lives on the unit hypersphere and gradients flow to the
raw parameters through the normalization Jacobian.
"""

from dataclasses import dataclass

import numpy as np

from taen.errors import ConfigError
from taen.kernels import normalize_rows


@dataclass
class PrototypeBank:
    """Free parameters, shape (C, a, e); read access normalizes rows."""

    raw: np.ndarray

    @property
    def n_classes(self):
        return self.raw.shape[0]

    @property
    def a(self):
        return self.raw.shape[1]

    @property
    def e(self):
        return self.raw.shape[2]

    def normalized(self):
        """Unit-norm prototypes (C, a, e) and the raw row norms (C, a)."""
        c, a, e = self.raw.shape
        flat, norms = normalize_rows(np.ascontiguousarray(self.raw.reshape(c * a, e)))
        return flat.reshape(c, a, e), norms.reshape(c, a)

    def copy(self):
        return PrototypeBank(raw=self.raw.copy())


def init_prototypes(n_classes, a, e, seed):
    """Raw entries i.i.d. standard normal scaled by 1/sqrt(e).

    The scaling gives each raw prototype expected squared norm 1, so the
    normalization starts near the identity.
    """
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    if a < 1 or e < 1:
        raise ConfigError(f"invalid prototype shape a={a}, e={e}")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n_classes, a, e)) / np.sqrt(e)
    return PrototypeBank(raw=raw)


def prototype(bank, c, i):
    """The normalized prototype of sub-action i of class c."""
    if not (0 <= c < bank.n_classes and 0 <= i < bank.a):
        raise IndexError(
            f"prototype index ({c}, {i}) out of range for bank "
            f"({bank.n_classes}, {bank.a})"
        )
    row = np.ascontiguousarray(bank.raw[c, i].reshape(1, -1))
    normed, _ = normalize_rows(row)
    return normed[0]
