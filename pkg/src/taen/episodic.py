"""Few-shot classification evaluation.

Episodes are n-way k-shot tasks sampled from a novel-class split. Each
support class slot is represented by one trajectory: the k support
videos are embedded, their points are averaged per sub-action index and
re-normalized. A query is classified to the slot with the smallest
test-time trajectory distance.

Per-episode randomness derives from (seed, episode index), so results
are identical at any evaluation parallelism.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from taen.errors import DataError
from taen.kernels import normalize_rows, test_distances

_STREAM_EPISODE = 7


@dataclass
class Episode:
    way: int
    shot: int
    support: list[list[str]]  # way x shot video ids
    query_id: str
    query_slot: int
    class_labels: list[int]  # dataset label per slot


@dataclass
class EvalResult:
    accuracy: float
    ci_low: float
    ci_high: float
    episodes: int

    @property
    def ci_halfwidth(self):
        return (self.ci_high - self.ci_low) / 2.0


def _class_pools(dataset, shot):
    """Labels usable for sampling: need at least `shot` videos each."""
    pools = {}
    for label in range(len(dataset.class_names)):
        vids = [v.video_id for v in dataset.videos_of_class(label)]
        if len(vids) >= shot:
            pools[label] = vids
    return pools


def sample_episode(dataset, way, shot, rng):
    """Sample one episode uniformly without replacement.

    The query class is drawn among sampled slots that still have a video
    left after supplying supports.
    """
    pools = _class_pools(dataset, shot)
    if len(pools) < way:
        raise DataError(
            f"need {way} classes with >= {shot} videos, have {len(pools)}"
        )
    labels = sorted(pools)
    chosen = [labels[i] for i in rng.choice(len(labels), size=way, replace=False)]
    support = []
    for label in chosen:
        vids = pools[label]
        idx = rng.choice(len(vids), size=shot, replace=False)
        support.append([vids[i] for i in idx])

    eligible = [s for s, label in enumerate(chosen) if len(pools[label]) > shot]
    if not eligible:
        raise DataError(
            f"no sampled class has more than {shot} videos to supply a query"
        )
    query_slot = eligible[int(rng.integers(len(eligible)))]
    remaining = [v for v in pools[chosen[query_slot]] if v not in support[query_slot]]
    query_id = remaining[int(rng.integers(len(remaining)))]
    return Episode(
        way=way,
        shot=shot,
        support=support,
        query_id=query_id,
        query_slot=query_slot,
        class_labels=chosen,
    )


def _mean_renormalized(trajs):
    """Average trajectories per sub-action index, re-normalized to the
    sphere (the k-shot class representation)."""
    mean = np.mean(trajs, axis=0)
    points, _ = normalize_rows(np.ascontiguousarray(mean))
    return points


def support_trajectories(model, dataset, episode):
    """One trajectory per slot: embed each support video, average per
    sub-action index, re-normalize."""
    out = []
    for vids in episode.support:
        trajs = [model.embed_video(dataset.by_id(v).features) for v in vids]
        out.append(_mean_renormalized(trajs))
    return np.ascontiguousarray(np.stack(out))


def classify_query(model, query_features, supports, weights=None):
    """Nearest support trajectory by test distance; ties take the lowest
    slot. Returns (slot, per-slot distances)."""
    weights = weights or model.weights
    traj = model.embed_video(query_features)
    sign = 1.0 if model.literal_motion_sign else -1.0
    d = test_distances(
        np.ascontiguousarray(traj),
        np.ascontiguousarray(supports),
        weights.w_aff,
        weights.w_mot,
        sign,
    )
    return int(np.argmin(d)), d


def wald_interval(p, n):
    """95% Wald interval for a binomial proportion, clamped to [0, 1]."""
    half = 1.96 * np.sqrt(max(p * (1.0 - p), 0.0) / n)
    return max(0.0, p - half), min(1.0, p + half)


def _evaluate(traj_of, dataset, way, shot, episodes, seed, w_aff, w_mot, motion_sign,
              threads=None):
    """Shared episodic loop over a per-video trajectory cache."""
    cache = {}
    for v in dataset.videos:
        cache[v.video_id] = np.ascontiguousarray(traj_of(v))

    def run(idx):
        rng = np.random.default_rng([seed, _STREAM_EPISODE, idx])
        ep = sample_episode(dataset, way, shot, rng)
        supports = np.stack(
            [_mean_renormalized([cache[v] for v in vids]) for vids in ep.support]
        )
        d = test_distances(
            cache[ep.query_id], np.ascontiguousarray(supports), w_aff, w_mot, motion_sign
        )
        return int(np.argmin(d)) == ep.query_slot

    if threads is None:
        threads = int(os.environ.get("TAEN_THREADS", "1"))
    hits = np.zeros(episodes, dtype=bool)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for idx, hit in enumerate(pool.map(run, range(episodes))):
                hits[idx] = hit
    else:
        for idx in range(episodes):
            hits[idx] = run(idx)
    acc = float(hits.mean())
    lo, hi = wald_interval(acc, episodes)
    return EvalResult(accuracy=acc, ci_low=lo, ci_high=hi, episodes=episodes)


def evaluate_classification(model, dataset, way, shot, episodes, seed, threads=None):
    """Mean accuracy over episodes, with a 95% binomial interval."""
    sign = 1.0 if model.literal_motion_sign else -1.0
    return _evaluate(
        lambda v: model.embed_video(v.features),
        dataset, way, shot, episodes, seed,
        model.weights.w_aff, model.weights.w_mot, sign,
        threads=threads,
    )


def evaluate_maxpool_baseline(dataset, way, shot, episodes, seed, threads=None):
    """Order-blind baseline: each video is its max-pooled raw feature
    vector (unit-normalized), classified by cosine distance. Uses the
    same episode stream as evaluate_classification for a given seed."""

    def traj_of(v):
        pooled = np.max(v.features.frames, axis=0, keepdims=True)
        points, _ = normalize_rows(np.ascontiguousarray(pooled))
        return points

    return _evaluate(
        traj_of, dataset, way, shot, episodes, seed,
        w_aff=1.0, w_mot=0.0, motion_sign=-1.0, threads=threads,
    )
