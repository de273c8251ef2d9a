"""Distances and training losses over trajectories, with exact gradients.

All distances operate on unit-norm points. The training loss combines
three terms:

  affiliation  sum_i (1 - <E_i, R_i>) against the true class prototypes
               (optionally hinged at a margin alpha),
  motion       sum_i -<E_{i+1}-E_i, R_{i+1}-R_i>, rewarding alignment of
               consecutive displacement vectors,
  diversity    sum over classes and ordered prototype pairs of their
               cosine similarity, spreading each class's prototypes.

Affiliation and motion are averaged over the batch; diversity depends
only on the bank and is added once. The test-time distance reuses the
affiliation and motion forms with configurable weights; by default the
motion term is negated so that aligned motion always lowers the
distance (`literal_motion_sign=True` restores the printed sign).
"""

from dataclasses import dataclass

import numpy as np

from taen.errors import ConfigError, DataError
from taen.kernels import normalize_rows_backward, test_distances
from taen.embednet import Trajectory, backward, forward_rows


@dataclass
class LossWeights:
    w_aff: float = 1.0
    w_mot: float = 0.5
    w_div: float = 20.0
    margin_alpha: float = 0.2
    sigma: float = 0.5

    def validate(self):
        vals = (self.w_aff, self.w_mot, self.w_div, self.margin_alpha, self.sigma)
        if not all(np.isfinite(v) for v in vals):
            raise ConfigError(f"loss weights must be finite, got {self}")
        if self.w_aff < 0 or self.w_mot < 0 or self.w_div < 0 or self.margin_alpha < 0:
            raise ConfigError(f"loss weights must be >= 0, got {self}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        return self


@dataclass
class LossReport:
    total: float
    affiliation: float
    motion: float
    diversity: float


def _points(traj):
    return traj.points if isinstance(traj, Trajectory) else np.asarray(traj)


def cosine_distance(u, v):
    """1 - <u, v> for unit vectors; range [0, 2]."""
    u, v = np.asarray(u), np.asarray(v)
    assert abs(u @ u - 1.0) < 2e-6 and abs(v @ v - 1.0) < 2e-6, "inputs must be unit norm"
    return 1.0 - float(u @ v)


def trajectory_distance(traj, ref):
    """Mean per-index cosine distance between two trajectories (a x e)."""
    e, r = _points(traj), _points(ref)
    if e.shape != r.shape:
        raise DataError(f"trajectory shapes differ: {e.shape} vs {r.shape}")
    a = e.shape[0]
    return float(a - np.einsum("ie,ie->", e, r)) / a


def affiliation_loss(traj, ref, margin_alpha=None):
    """Sum over sub-actions of the cosine distance to the true class
    prototypes; with a margin, each term is hinged at alpha."""
    e, r = _points(traj), _points(ref)
    if e.shape != r.shape:
        raise DataError(f"trajectory shapes differ: {e.shape} vs {r.shape}")
    d = 1.0 - np.einsum("ie,ie->i", e, r)
    if margin_alpha is not None:
        d = np.maximum(d - margin_alpha, 0.0)
    return float(d.sum())


def motion_loss(traj, ref):
    """Negative inner product of consecutive displacement vectors, summed."""
    e, r = _points(traj), _points(ref)
    if e.shape[0] < 2:
        raise DataError("motion needs at least 2 sub-actions")
    de = np.diff(e, axis=0)
    dr = np.diff(r, axis=0)
    return -float(np.einsum("ie,ie->", de, dr))


def diversity_loss(bank):
    """Sum over classes of the cosine similarities between all ordered
    pairs of distinct prototypes within the class."""
    protos, _ = bank.normalized()
    total = 0.0
    for c in range(protos.shape[0]):
        gram = protos[c] @ protos[c].T
        total += gram.sum() - np.trace(gram)
    return float(total)


def total_loss(batch, bank, weights, margin_mode=False):
    """Weighted total over a batch of (trajectory, true class) pairs.

    Affiliation and motion are means over the batch; diversity is added
    once. Returns a LossReport whose total satisfies
    total = w_aff*affiliation + w_mot*motion + w_div*diversity.
    """
    if not batch:
        raise DataError("empty batch")
    protos, _ = bank.normalized()
    alpha = weights.margin_alpha if margin_mode else None
    aff = mot = 0.0
    for traj, label in batch:
        if not (0 <= label < bank.n_classes):
            raise DataError(f"label {label} out of range for {bank.n_classes} classes")
        ref = protos[label]
        aff += affiliation_loss(traj, ref, margin_alpha=alpha)
        if bank.a > 1:
            mot += motion_loss(traj, ref)
    aff /= len(batch)
    mot /= len(batch)
    div = diversity_loss(bank)
    total = weights.w_aff * aff + weights.w_mot * mot + weights.w_div * div
    return LossReport(total=total, affiliation=aff, motion=mot, diversity=div)


def loss_gradients(batch, params, bank, weights, margin_mode=False):
    """Total loss and its exact gradients for one batch.

    `batch` is a list of (pooled rows (a x d_feat), true class). Returns
    (LossReport, (weight grads, bias grads), bank raw gradient). Batch
    items are reduced in list order so results do not depend on any
    evaluation parallelism.
    """
    if not batch:
        raise DataError("empty batch")
    b = len(batch)
    protos, norms = bank.normalized()
    a = bank.a
    alpha = weights.margin_alpha if margin_mode else None

    grad_w = [np.zeros_like(w) for w in params.weights]
    grad_b = [np.zeros_like(v) for v in params.biases]
    grad_protos = np.zeros_like(protos)

    aff_total = mot_total = 0.0
    for rows, label in batch:
        if not (0 <= label < bank.n_classes):
            raise DataError(f"label {label} out of range for {bank.n_classes} classes")
        rows = rows.segments if hasattr(rows, "segments") else rows
        points, cache = forward_rows(params, rows)
        ref = protos[label]

        d = 1.0 - np.einsum("ie,ie->i", points, ref)
        if alpha is None:
            aff_total += d.sum()
            active = np.ones_like(d)
        else:
            hinged = np.maximum(d - alpha, 0.0)
            aff_total += hinged.sum()
            active = (d > alpha).astype(np.float64)

        g_points = -(weights.w_aff / b) * active[:, None] * ref
        grad_protos[label] += -(weights.w_aff / b) * active[:, None] * points

        if a > 1:
            de = np.diff(points, axis=0)
            dr = np.diff(ref, axis=0)
            mot_total += -np.einsum("ie,ie->", de, dr)
            # d(-<de_i, dr_i>)/dE: +dr_i at index i, -dr_i at index i+1
            g_points[:-1] += (weights.w_mot / b) * dr
            g_points[1:] -= (weights.w_mot / b) * dr
            grad_protos[label, :-1] += (weights.w_mot / b) * de
            grad_protos[label, 1:] -= (weights.w_mot / b) * de

        gw, gb, _ = backward(params, cache, g_points)
        for i in range(len(grad_w)):
            grad_w[i] += gw[i]
            grad_b[i] += gb[i]

    div = 0.0
    if a > 1:
        for c in range(bank.n_classes):
            gram = protos[c] @ protos[c].T
            div += gram.sum() - np.trace(gram)
            col_sum = protos[c].sum(axis=0)
            grad_protos[c] += 2.0 * weights.w_div * (col_sum - protos[c])

    c_, a_, e_ = protos.shape
    grad_raw = normalize_rows_backward(
        np.ascontiguousarray(protos.reshape(c_ * a_, e_)),
        np.ascontiguousarray(norms.reshape(c_ * a_)),
        np.ascontiguousarray(grad_protos.reshape(c_ * a_, e_)),
    ).reshape(c_, a_, e_)

    aff = aff_total / b
    mot = mot_total / b
    report = LossReport(
        total=weights.w_aff * aff + weights.w_mot * mot + weights.w_div * div,
        affiliation=aff,
        motion=mot,
        diversity=float(div),
    )
    return report, (grad_w, grad_b), grad_raw


def test_distance(traj, ref, weights, literal_motion_sign=False):
    """Test-time distance between a trajectory and one class trajectory.

    w_aff * sum_i d(E_i, R_i) plus the motion alignment term; by default
    aligned motion lowers the distance, literal mode adds it instead.
    """
    e, r = _points(traj), _points(ref)
    if e.shape != r.shape:
        raise DataError(f"trajectory shapes differ: {e.shape} vs {r.shape}")
    sign = 1.0 if literal_motion_sign else -1.0
    d = test_distances(
        np.ascontiguousarray(e),
        np.ascontiguousarray(r[None, :, :]),
        weights.w_aff,
        weights.w_mot,
        sign,
    )
    return float(d[0])
