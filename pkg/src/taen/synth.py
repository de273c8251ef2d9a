"""Synthetic feature oracle.

Generates datasets whose classes are ground-truth trajectories in feature
space: each class owns an ordered sequence of anchor directions, and a
video's frames walk that polyline in time order with additive Gaussian
noise. Temporal order is therefore informative by construction, which is
exactly what the trajectory representation is supposed to exploit and
what order-agnostic pooling cannot.

The ``reversed_twins`` option emits class pairs sharing the same anchors
in opposite temporal order - the adversarial case where any single-vector
representation is blind by construction.

Below ``CRITICAL_NOISE_STD`` a nearest-anchor classifier on the raw
features is essentially perfect, which upper-bounds how hard the learned
pipeline may find the data.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from taen.errors import ConfigError, DataError, NumericError
from taen.features import load_dataset, segment_pool, write_features
from taen.kernels import normalize_rows

# Largest per-frame noise std at which the raw-feature nearest-anchor
# baseline stays >= 99% accurate for d_feat >= 64, T >= 40 (measured).
CRITICAL_NOISE_STD = 0.5

_STREAM_ANCHORS, _STREAM_VIDEO, _STREAM_UNTRIMMED = 4, 5, 6


@dataclass
class SynthConfig:
    mode: str = "trimmed"  # "trimmed" | "untrimmed"
    train_classes: int = 20
    test_classes: int = 5
    videos_per_class: int = 20
    d_feat: int = 128
    t_min: int = 40
    t_max: int = 80
    anchors_per_class: int = 5
    noise_std: float = 0.1
    max_inter_class_cos: float = 0.3
    reversed_twins: bool = False
    seed: int = 0
    # untrimmed mode only:
    min_segments: int = 1
    max_segments: int = 3
    jitter: float = 0.05
    distractors_per_video: int = 5

    def validate(self):
        if self.mode not in ("trimmed", "untrimmed"):
            raise ConfigError(f"mode must be 'trimmed' or 'untrimmed', got {self.mode!r}")
        if self.train_classes < 2 or self.test_classes < 1:
            raise ConfigError("need >= 2 train classes and >= 1 test class")
        if self.videos_per_class < 1:
            raise ConfigError("videos_per_class must be >= 1")
        if self.d_feat < 1 or self.anchors_per_class < 1:
            raise ConfigError("d_feat and anchors_per_class must be >= 1")
        if not (1 <= self.t_min <= self.t_max):
            raise ConfigError(f"invalid T range [{self.t_min}, {self.t_max}]")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if self.reversed_twins and (self.train_classes % 2 or self.test_classes % 2):
            raise ConfigError("reversed twins need even class counts per split")
        if not (1 <= self.min_segments <= self.max_segments):
            raise ConfigError("invalid segment count range")
        if self.jitter < 0 or self.distractors_per_video < 0:
            raise ConfigError("jitter and distractors_per_video must be >= 0")
        return self


@dataclass
class SynthResult:
    config: SynthConfig
    train_manifest: str
    test_manifest: str
    anchors: np.ndarray  # (classes, anchors_per_class, d_feat), unit rows
    class_names: list[str]
    proposals_path: str | None = None


def _unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _draw_anchors(config):
    """Per-class anchor sequences; inter-class rows are rejection-sampled
    under the max_inter_class_cos bound. Twin pairs intentionally share
    anchors, so the bound and the separation self-check apply only
    between non-twin classes."""
    total = config.train_classes + config.test_classes
    rng = np.random.default_rng([config.seed, _STREAM_ANCHORS])
    anchors = np.zeros((total, config.anchors_per_class, config.d_feat))
    accepted = []
    for c in range(total):
        if config.reversed_twins and c % 2 == 1:
            anchors[c] = anchors[c - 1][::-1]
            continue
        for i in range(config.anchors_per_class):
            for _attempt in range(1000):
                v = _unit(rng, config.d_feat)
                if not accepted or np.max(np.abs(np.asarray(accepted) @ v)) <= config.max_inter_class_cos:
                    anchors[c, i] = v
                    accepted.append(v)
                    break
            else:
                raise NumericError(
                    "could not draw sufficiently separated anchors; raise "
                    "max_inter_class_cos or d_feat"
                )
    return anchors


def _check_separation(anchors, config):
    """Generator self-check: mean inter-class |cos| below the bound."""
    if config.reversed_twins or config.d_feat < 64:
        return
    total = anchors.shape[0]
    flat = anchors.reshape(total * config.anchors_per_class, -1)
    gram = np.abs(flat @ flat.T)
    mask = np.ones_like(gram, dtype=bool)
    k = config.anchors_per_class
    for c in range(total):
        mask[c * k : (c + 1) * k, c * k : (c + 1) * k] = False
    mean_cos = float(gram[mask].mean())
    if mean_cos >= config.max_inter_class_cos:
        raise NumericError(
            f"anchor separation self-check failed: mean inter-class |cos| "
            f"{mean_cos:.3f} >= {config.max_inter_class_cos}"
        )


def _polyline_point(anchor_seq, u):
    """Point at parameter u in [0, 1] along the anchor polyline."""
    k = anchor_seq.shape[0]
    if k == 1:
        return anchor_seq[0]
    x = u * (k - 1)
    j = min(int(x), k - 2)
    w = x - j
    return (1.0 - w) * anchor_seq[j] + w * anchor_seq[j + 1]


def _video_frames(anchor_seq, t, noise_std, rng):
    taus = np.linspace(0.0, 1.0, t) if t > 1 else np.zeros(1)
    frames = np.stack([_polyline_point(anchor_seq, u) for u in taus])
    if noise_std > 0:
        frames = frames + noise_std * rng.standard_normal(frames.shape)
    return frames


def _class_names(config):
    total = config.train_classes + config.test_classes
    return [f"class_{i:03d}" for i in range(total)]


def gen_synthetic_dataset(config, out_dir):
    """Write trimmed train/test manifests plus feature files.

    Train and test class sets are disjoint; every video of a class walks
    the class polyline. Returns a SynthResult carrying the ground-truth
    anchors for oracle checks.
    """
    config.validate()
    anchors = _draw_anchors(config)
    _check_separation(anchors, config)
    names = _class_names(config)
    feat_dir = os.path.join(out_dir, "features")
    os.makedirs(feat_dir, exist_ok=True)

    entries = {"train": [], "test": []}
    video_index = 0
    for c, name in enumerate(names):
        split = "train" if c < config.train_classes else "test"
        for v in range(config.videos_per_class):
            rng = np.random.default_rng([config.seed, _STREAM_VIDEO, video_index])
            t = int(rng.integers(config.t_min, config.t_max + 1))
            frames = _video_frames(anchors[c], t, config.noise_std, rng)
            vid = f"{name}_v{v:03d}"
            rel = os.path.join("features", f"{vid}.taen")
            write_features(os.path.join(out_dir, rel), vid, frames)
            entries[split].append({"video_id": vid, "feature_path": rel, "label": name})
            video_index += 1

    paths = {}
    for split in ("train", "test"):
        lo, hi = (0, config.train_classes) if split == "train" else (
            config.train_classes, len(names))
        manifest = {"class_names": names[lo:hi], "entries": entries[split]}
        paths[split] = os.path.join(out_dir, f"{split}_manifest.json")
        with open(paths[split], "w") as f:
            json.dump(manifest, f, indent=1)

    return SynthResult(
        config=config,
        train_manifest=paths["train"],
        test_manifest=paths["test"],
        anchors=anchors,
        class_names=names,
    )


def gen_synthetic_untrimmed(config, out_dir):
    """Write an untrimmed detection benchmark.

    Emits a trimmed train manifest (base classes), an untrimmed test
    manifest whose videos are background noise with 1-3 embedded class
    segments annotated in normalized time, and a proposals file holding
    every ground-truth segment (score 1.0) plus jittered copies and
    random distractors with plausible scores.
    """
    config.validate()
    anchors = _draw_anchors(config)
    _check_separation(anchors, config)
    names = _class_names(config)
    test_names = names[config.train_classes :]
    feat_dir = os.path.join(out_dir, "features")
    os.makedirs(feat_dir, exist_ok=True)

    # Trimmed base-class videos for training.
    train_entries = []
    video_index = 0
    for c in range(config.train_classes):
        for v in range(config.videos_per_class):
            rng = np.random.default_rng([config.seed, _STREAM_VIDEO, video_index])
            t = int(rng.integers(config.t_min, config.t_max + 1))
            frames = _video_frames(anchors[c], t, config.noise_std, rng)
            vid = f"{names[c]}_v{v:03d}"
            rel = os.path.join("features", f"{vid}.taen")
            write_features(os.path.join(out_dir, rel), vid, frames)
            train_entries.append({"video_id": vid, "feature_path": rel, "label": names[c]})
            video_index += 1

    # Untrimmed test videos. Each is background noise with segments laid
    # out in disjoint regions; segment classes are drawn from the test
    # split so every video may mix classes.
    test_entries = []
    proposals = []
    n_untrimmed = config.test_classes * config.videos_per_class
    for u in range(n_untrimmed):
        rng = np.random.default_rng([config.seed, _STREAM_UNTRIMMED, u])
        t = int(rng.integers(config.t_min, config.t_max + 1)) * 3
        frames = config.noise_std * rng.standard_normal((t, config.d_feat))
        n_seg = int(rng.integers(config.min_segments, config.max_segments + 1))
        gt = []
        region = 1.0 / n_seg
        for s in range(n_seg):
            length = rng.uniform(0.4, 0.8) * region
            start = s * region + rng.uniform(0.0, region - length)
            end = start + length
            lo, hi = int(round(start * t)), int(round(end * t))
            hi = max(hi, lo + max(config.anchors_per_class, 2))
            hi = min(hi, t)
            lo = min(lo, hi - 1)
            cls = config.train_classes + int(rng.integers(config.test_classes))
            seg_rng = np.random.default_rng([config.seed, _STREAM_UNTRIMMED, u, s])
            frames[lo:hi] = _video_frames(anchors[cls], hi - lo, config.noise_std, seg_rng)
            start_n, end_n = lo / t, hi / t
            gt.append({"start": start_n, "end": end_n, "label": names[cls]})

        vid = f"untrimmed_v{u:03d}"
        rel = os.path.join("features", f"{vid}.taen")
        write_features(os.path.join(out_dir, rel), vid, frames)
        test_entries.append({"video_id": vid, "feature_path": rel, "gt_segments": gt})

        for seg in gt:
            proposals.append(
                {"video_id": vid, "start": seg["start"], "end": seg["end"], "score": 1.0}
            )
            if config.jitter > 0:
                start = max(0.0, seg["start"] - rng.uniform(0.0, config.jitter))
                end = min(1.0, seg["end"] + rng.uniform(0.0, config.jitter))
                proposals.append(
                    {"video_id": vid, "start": start, "end": end,
                     "score": float(rng.uniform(0.5, 0.95))}
                )
        for _ in range(config.distractors_per_video):
            start = rng.uniform(0.0, 0.9)
            end = min(1.0, start + rng.uniform(0.02, 0.3))
            proposals.append(
                {"video_id": vid, "start": start, "end": end,
                 "score": float(rng.uniform(0.05, 0.7))}
            )

    train_path = os.path.join(out_dir, "train_manifest.json")
    with open(train_path, "w") as f:
        json.dump({"class_names": names[: config.train_classes], "entries": train_entries}, f, indent=1)
    test_path = os.path.join(out_dir, "test_manifest.json")
    with open(test_path, "w") as f:
        json.dump({"class_names": test_names, "entries": test_entries}, f, indent=1)
    prop_path = os.path.join(out_dir, "proposals.json")
    with open(prop_path, "w") as f:
        json.dump(proposals, f, indent=1)

    return SynthResult(
        config=config,
        train_manifest=train_path,
        test_manifest=test_path,
        anchors=anchors,
        class_names=names,
        proposals_path=prop_path,
    )


def nearest_anchor_accuracy(result, manifest_path):
    """Raw-feature oracle baseline: pool each video to the true anchor
    count and classify by mean cosine distance to each class's anchors.

    Uses the ground-truth anchors, so this measures the data's intrinsic
    separability, not any learned model.
    """
    config = result.config
    dataset = load_dataset(manifest_path)
    name_to_global = {n: i for i, n in enumerate(result.class_names)}
    class_ids = [name_to_global[n] for n in dataset.class_names]
    refs = np.ascontiguousarray(result.anchors[class_ids])  # (n, a_true, d)

    correct = 0
    for v in dataset.videos:
        if v.label is None:
            raise DataError("nearest-anchor baseline needs labeled videos")
        pooled = segment_pool(v.features, config.anchors_per_class).segments
        rows, _ = normalize_rows(np.ascontiguousarray(pooled))
        sims = np.einsum("ie,nie->n", rows, refs)
        correct += int(np.argmax(sims) == v.label)
    return correct / len(dataset.videos)
