"""Mini-batch SGD with momentum over the joint parameter set.

The embedding network and the prototype bank are updated together from
the same batch gradients. Batching is deterministic: the per-epoch
shuffle and all initialization derive from the config seed, so a fixed
seed reproduces training bit for bit.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from taen.checkpoint import save_model
from taen.embednet import init_params
from taen.errors import ConfigError, DataError, NumericError
from taen.features import segment_pool
from taen.kernels import trajectory_distances
from taen.loss import LossWeights, loss_gradients, total_loss
from taen.model import TaenModel
from taen.prototypes import PrototypeBank, init_prototypes

# Seed-stream tags so parameter init, prototype init and shuffling draw
# from independent deterministic streams of one config seed.
_STREAM_PARAMS, _STREAM_PROTOS, _STREAM_SHUFFLE = 0, 1, 2


@dataclass
class TrainConfig:
    batch_size: int = 30
    learning_rate: float = 5e-4
    momentum: float = 0.9
    epochs: int = 30
    seed: int = 0
    a: int = 5
    e: int = 2048
    hidden_dims: list[int] | None = None
    weights: LossWeights = field(default_factory=LossWeights)
    margin_mode: bool = False
    literal_motion_sign: bool = False
    deterministic: bool = True
    checkpoint_every: int = 0

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.a < 1:
            raise ConfigError(f"a must be >= 1, got {self.a}")
        if self.e < 1:
            raise ConfigError(f"e must be >= 1, got {self.e}")
        self.weights.validate()
        if self.a == 1 and self.weights.w_mot != 0.0:
            raise ConfigError("a=1 has no motion; set w_mot=0 to train a single-point model")
        return self

    def mlp_dims(self, d_feat):
        hidden = self.hidden_dims
        if hidden is None:
            hidden = [max(d_feat // 2, 1), max(d_feat // 2, 1)]
        return [d_feat] + list(hidden) + [self.e]


@dataclass
class OptimState:
    velocity: list[np.ndarray]

    @classmethod
    def zeros_like(cls, tensors):
        return cls(velocity=[np.zeros_like(t) for t in tensors])


def sgd_step(tensors, grads, state, learning_rate, momentum):
    """In-place momentum update: v <- m*v + g; p <- p - lr*v."""
    if len(tensors) != len(grads) or len(tensors) != len(state.velocity):
        raise ConfigError("parameter/gradient/velocity counts differ")
    for p, g, v in zip(tensors, grads, state.velocity):
        if p.shape != g.shape:
            raise ConfigError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        v *= momentum
        v += g
        p -= learning_rate * v


def _flat_grads(param_grads, bank_grad):
    gw, gb = param_grads
    out = []
    for w, b in zip(gw, gb):
        out.append(w)
        out.append(b)
    out.append(bank_grad)
    return out


def prepare_batches(dataset, a):
    """Pool every labeled video once; returns list of (rows, label)."""
    items = []
    for v in dataset.videos:
        if v.label is None:
            raise DataError(f"video {v.video_id!r} has no label; training needs labeled videos")
        pooled = segment_pool(v.features, a, label=v.label)
        items.append((pooled.segments, v.label))
    return items


def train(dataset, config, out_path=None, log_path=None, progress=None):
    """Train a model on a labeled dataset.

    Writes a CSV log with one row per step (step, epoch, total, aff, mot,
    div), periodic checkpoints when configured, and a final checkpoint to
    `out_path`. Returns (model, per-step LossReports).
    """
    config.validate()
    if not dataset.videos:
        raise DataError("empty dataset")
    n_classes = len(dataset.class_names)
    present = {v.label for v in dataset.videos}
    if len(present) < 2:
        raise DataError(f"training needs at least 2 classes, got {sorted(present)}")

    items = prepare_batches(dataset, config.a)
    dims = config.mlp_dims(dataset.d_feat)
    params = init_params(dims, seed=[config.seed, _STREAM_PARAMS])
    bank = init_prototypes(n_classes, config.a, config.e, seed=[config.seed, _STREAM_PROTOS])
    model = TaenModel(
        params=params,
        bank=bank,
        a=config.a,
        weights=config.weights,
        margin_mode=config.margin_mode,
        literal_motion_sign=config.literal_motion_sign,
        seed=config.seed,
    )
    state = OptimState.zeros_like(model.all_arrays())

    log_file = open(log_path, "w", newline="") if log_path else None
    log = csv.writer(log_file) if log_file else None
    if log:
        log.writerow(["step", "epoch", "total", "aff", "mot", "div"])

    reports = []
    step = 0
    try:
        for epoch in range(config.epochs):
            order = np.random.default_rng(
                [config.seed, _STREAM_SHUFFLE, epoch]
            ).permutation(len(items))
            for lo in range(0, len(items), config.batch_size):
                batch = [items[i] for i in order[lo : lo + config.batch_size]]
                report, param_grads, bank_grad = loss_gradients(
                    batch, model.params, model.bank, config.weights, config.margin_mode
                )
                if not np.isfinite(report.total):
                    raise NumericError(
                        f"non-finite loss {report.total} at step {step} (epoch {epoch})"
                    )
                sgd_step(
                    model.all_arrays(),
                    _flat_grads(param_grads, bank_grad),
                    state,
                    config.learning_rate,
                    config.momentum,
                )
                reports.append(report)
                if log:
                    log.writerow(
                        [step, epoch, repr(report.total), repr(report.affiliation),
                         repr(report.motion), repr(report.diversity)]
                    )
                step += 1
            if progress:
                progress(epoch, reports)
            if (
                out_path
                and config.checkpoint_every > 0
                and (epoch + 1) % config.checkpoint_every == 0
                and epoch + 1 < config.epochs
            ):
                save_model(f"{out_path}.epoch{epoch + 1}", model)
    finally:
        if log_file:
            log_file.close()

    if out_path:
        os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
        save_model(out_path, model)
    return model, reports


def train_set_accuracy(model, dataset):
    """Fraction of training videos whose nearest class trajectory (mean
    per-index cosine distance to the learned bank) is their own class."""
    protos, _ = model.bank.normalized()
    protos = np.ascontiguousarray(protos)
    correct = 0
    total = 0
    for v in dataset.videos:
        if v.label is None:
            continue
        traj = model.embed_video(v.features)
        d = trajectory_distances(np.ascontiguousarray(traj), protos)
        correct += int(np.argmin(d) == v.label)
        total += 1
    return correct / max(total, 1)


# ---------------------------------------------------------------------------
# Gradient checking


def numeric_gradients(batch, params, bank, weights, margin_mode=False, step=1e-6):
    """Central finite differences of the total loss w.r.t. every parameter."""
    from taen.embednet import forward_rows

    def total():
        batch_traj = []
        for rows, label in batch:
            pts, _ = forward_rows(params, rows)
            batch_traj.append((pts, label))
        return total_loss(batch_traj, bank, weights, margin_mode).total

    tensors = []
    for w, b in zip(params.weights, params.biases):
        tensors.append(w)
        tensors.append(b)
    tensors.append(bank.raw)

    grads = []
    for t in tensors:
        g = np.zeros_like(t)
        flat = t.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = total()
            flat[i] = orig - step
            lo = total()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-3):
    """Max over all entries of |ga - gn| / max(|ga| + |gn|, floor).

    The floor keeps finite-difference noise on near-zero gradients from
    registering as error.
    """
    worst = 0.0
    for ga, gn in zip(analytic, numeric):
        denom = np.maximum(np.abs(ga) + np.abs(gn), floor)
        worst = max(worst, float(np.max(np.abs(ga - gn) / denom)))
    return worst


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_trial: list[float]
    trials: int
    step: float


def _generic_instance(seed, trial):
    """A random tiny instance at a generic point in parameter space.

    Finite differences are only a valid oracle away from the ReLU and
    hinge kinks and the normalization origin, so biases are randomized
    and the batch is redrawn until every row clears those by a wide
    margin relative to the step size.
    """
    from taen.embednet import forward_rows

    rng = np.random.default_rng([seed, 17, trial])
    d_feat = int(rng.integers(3, 9))
    e = int(rng.integers(2, 7))
    a = int(rng.integers(2, 5))
    n_classes = int(rng.integers(2, 5))
    batch_n = int(rng.integers(1, 4))
    hidden = [int(rng.integers(2, 6))]
    if rng.random() < 0.5:
        hidden.append(int(rng.integers(2, 6)))
    dims = [d_feat] + hidden + [e]

    params = init_params(dims, seed=[seed, 18, trial])
    for b in params.biases:
        b += rng.uniform(-0.3, 0.3, size=b.shape)
    bank = init_prototypes(n_classes, a, e, seed=[seed, 19, trial])
    n_params = sum(t.size for t in params.tensors()) + bank.raw.size
    assert n_params <= 10_000

    weights = LossWeights(
        w_aff=float(rng.uniform(0.2, 2.0)),
        w_mot=float(rng.uniform(0.1, 1.0)),
        w_div=float(rng.uniform(0.5, 5.0)),
        margin_alpha=float(rng.uniform(0.05, 0.4)),
    )
    margin_mode = bool(rng.random() < 0.5)
    protos, _ = bank.normalized()

    def _generic(rows, label):
        x = rows
        for i, (w, b) in enumerate(zip(params.weights, params.biases)):
            z = x @ w.T + b
            if i < len(params.weights) - 1:
                if np.abs(z).min() < 1e-3:
                    return False
                x = np.maximum(z, 0.0)
            else:
                x = z
        if np.sqrt((x * x).sum(axis=1)).min() < 5e-2:
            return False
        pts, _ = forward_rows(params, rows)
        d = 1.0 - np.einsum("ie,ie->i", pts, protos[label])
        return np.abs(d - weights.margin_alpha).min() > 1e-4

    batch = []
    for _ in range(batch_n):
        for _attempt in range(100):
            rows = rng.standard_normal((a, d_feat))
            label = int(rng.integers(n_classes))
            if _generic(rows, label):
                batch.append((rows, label))
                break
        else:
            raise NumericError("could not draw a kink-free gradient-check instance")
    return batch, params, bank, weights, margin_mode


def grad_check(trials=20, seed=0, step=1e-6):
    """Compare analytical and central-difference gradients on random tiny
    instances (C<=4, a<=4, e<=6, d_feat<=8, batch<=3)."""
    errors = []
    for trial in range(trials):
        batch, params, bank, weights, margin_mode = _generic_instance(seed, trial)
        _, param_grads, bank_grad = loss_gradients(batch, params, bank, weights, margin_mode)
        analytic = _flat_grads(param_grads, bank_grad)
        numeric = numeric_gradients(batch, params, bank, weights, margin_mode, step)
        errors.append(max_relative_error(analytic, numeric))
    return GradCheckReport(
        max_rel_error=max(errors), per_trial=errors, trials=trials, step=step
    )
