"""Bundles the embedding network, prototype bank and evaluation settings."""

from dataclasses import dataclass, field

import numpy as np

from taen.embednet import MlpParams, forward_rows
from taen.features import segment_pool
from taen.loss import LossWeights
from taen.prototypes import PrototypeBank


@dataclass
class TaenModel:
    params: MlpParams
    bank: PrototypeBank
    a: int
    weights: LossWeights = field(default_factory=LossWeights)
    margin_mode: bool = False
    literal_motion_sign: bool = False
    seed: int = 0

    @property
    def dims(self):
        return self.params.dims

    @property
    def e(self):
        return self.dims[-1]

    @property
    def n_classes(self):
        return self.bank.n_classes

    def embed_rows(self, rows):
        """Embed pooled sub-action rows; returns (a, e) unit-norm points."""
        points, _ = forward_rows(self.params, rows)
        return points

    def embed_video(self, vf):
        """Pool a raw feature sequence and embed it."""
        pooled = segment_pool(vf, self.a)
        return self.embed_rows(pooled.segments)

    def tensors(self):
        """Named parameter tensors in checkpoint order."""
        named = []
        for i, (w, b) in enumerate(zip(self.params.weights, self.params.biases)):
            named.append((f"mlp.{i}.weight", w))
            named.append((f"mlp.{i}.bias", b))
        named.append(("prototypes.raw", self.bank.raw))
        return named

    def all_arrays(self):
        return [t for _, t in self.tensors()]
