"""Few-shot temporal action detection over external class-agnostic proposals.

Pipeline per query video: filter proposals by their proposer score, crop
the feature rows each proposal covers, embed the crop as a trajectory,
assign it the nearest support class with probability exp(-d^2 / (2 sigma^2)),
reject low-confidence assignments as background, then greedy NMS per
(video, class). Episodes mirror the classification protocol except that
support trajectories come from ground-truth crops of untrimmed videos.
"""

import json
import math
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from taen.errors import DataError
from taen.features import VideoFeatures
from taen.kernels import trajectory_distances
from taen.episodic import _mean_renormalized, wald_interval  # noqa: F401  (wald re-exported for CLI)

_STREAM_DET_EPISODE = 8

TIOU_GRID = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass
class Proposal:
    video_id: str
    start: float
    end: float
    score: float


@dataclass
class Detection:
    video_id: str
    start: float
    end: float
    label: int  # slot index within the episode
    score: float


@dataclass
class DetectionResult:
    map_by_tiou: dict
    episodes: int
    missing_gt_classes: int = 0

    @property
    def map_at_05(self):
        return self.map_by_tiou[0.5]

    @property
    def avg_map(self):
        return sum(self.map_by_tiou.values()) / len(self.map_by_tiou)


def load_proposals(path):
    """Read a proposals JSON list of {video_id, start, end, score}."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise DataError(f"cannot read proposals {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise DataError(f"{path}: proposals file must be a JSON list")
    out = []
    for i, p in enumerate(doc):
        start, end, score = float(p["start"]), float(p["end"]), float(p["score"])
        if not (0.0 <= start < end <= 1.0):
            raise DataError(f"{path}: proposal {i} has invalid span [{start}, {end}]")
        out.append(Proposal(video_id=p["video_id"], start=start, end=end, score=score))
    return out


def filter_proposals(proposals, threshold=0.2):
    """Keep proposals whose proposer score is >= threshold."""
    return [p for p in proposals if p.score >= threshold]


def crop_features(vf, proposal):
    """Feature rows covered by a proposal: floor(start*T) .. ceil(end*T)-1,
    clamped to the video; a degenerate crop falls back to the single row
    at floor(start*T)."""
    t = vf.t
    lo = int(math.floor(proposal.start * t))
    hi = int(math.ceil(proposal.end * t))
    lo = min(max(lo, 0), t - 1)
    hi = min(max(hi, lo + 1), t)
    return VideoFeatures(
        video_id=f"{vf.video_id}[{proposal.start:.4f},{proposal.end:.4f}]",
        frames=vf.frames[lo:hi],
    )


def proposal_probability(traj, ref, sigma, weights=None):
    """exp(-d^2 / (2 sigma^2)) with d the mean per-index cosine distance."""
    d = trajectory_distances(
        np.ascontiguousarray(traj), np.ascontiguousarray(ref[None, :, :])
    )[0]
    return float(np.exp(-(d * d) / (2.0 * sigma * sigma)))


def assign_and_score(traj, supports, sigma):
    """Most probable support slot and its probability; ties take the
    lowest slot."""
    d = trajectory_distances(np.ascontiguousarray(traj), np.ascontiguousarray(supports))
    probs = np.exp(-(d * d) / (2.0 * sigma * sigma))
    slot = int(np.argmax(probs))
    return slot, float(probs[slot])


def temporal_iou(a, b):
    """Intersection over union of two (start, end) intervals."""
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    if inter == 0.0:
        return 0.0
    union = max(a[1], b[1]) - min(a[0], b[0])
    return inter / union


def nms(detections, tiou_threshold=0.5):
    """Greedy per (video, class): sort by score descending (ties by
    earlier start), keep a detection iff its tIoU with every kept
    same-group detection is below the threshold."""
    groups = defaultdict(list)
    for det in detections:
        groups[(det.video_id, det.label)].append(det)
    kept = []
    for key in sorted(groups):
        group = sorted(groups[key], key=lambda d: (-d.score, d.start, d.end))
        chosen = []
        for det in group:
            if all(
                temporal_iou((det.start, det.end), (c.start, c.end)) < tiou_threshold
                for c in chosen
            ):
                chosen.append(det)
        kept.extend(chosen)
    return kept


def average_precision(detections, ground_truth, tiou_threshold=0.5):
    """Interpolation-free AP for one class.

    Detections are ranked by score descending; each is greedily matched
    to the highest-tIoU unmatched ground-truth segment in the same video
    with tIoU >= threshold. AP sums precision-at-rank times the recall
    increment over matched ranks. No ground truth yields 0.
    """
    if not ground_truth:
        return 0.0
    ranked = sorted(detections, key=lambda d: (-d.score, d.video_id, d.start, d.end))
    gt_by_video = defaultdict(list)
    for i, g in enumerate(ground_truth):
        gt_by_video[g[0]].append((i, (g[1], g[2])))
    matched = set()
    n_gt = len(ground_truth)
    ap = 0.0
    tp = 0
    for rank, det in enumerate(ranked, start=1):
        best_iou, best_idx = 0.0, None
        for idx, span in gt_by_video.get(det.video_id, ()):
            if idx in matched:
                continue
            iou = temporal_iou((det.start, det.end), span)
            if iou > best_iou:
                best_iou, best_idx = iou, idx
        if best_idx is not None and best_iou >= tiou_threshold:
            matched.add(best_idx)
            tp += 1
            ap += (tp / rank) * (1.0 / n_gt)
    return ap


def _sample_detection_episode(dataset, way, shot, rng):
    """Sample classes and support videos for one detection episode.

    A video supports a class if it has a ground-truth segment of it.
    Query videos are all remaining videos containing any sampled class.
    """
    videos_with = defaultdict(list)
    for v in dataset.videos:
        for label in sorted({s.label for s in v.gt_segments}):
            videos_with[label].append(v.video_id)
    usable = [c for c in sorted(videos_with) if len(videos_with[c]) >= shot + 1]
    if len(usable) < way:
        raise DataError(
            f"need {way} classes with >= {shot + 1} untrimmed videos, have {len(usable)}"
        )
    chosen = [usable[i] for i in rng.choice(len(usable), size=way, replace=False)]
    support_ids = []
    for label in chosen:
        vids = videos_with[label]
        idx = rng.choice(len(vids), size=shot, replace=False)
        support_ids.append([vids[i] for i in idx])
    in_support = {v for vids in support_ids for v in vids}
    queries = sorted(
        {
            v
            for label in chosen
            for v in videos_with[label]
            if v not in in_support
        }
    )
    if not queries:
        raise DataError("no query videos left after sampling supports")
    return chosen, support_ids, queries


def evaluate_detection(
    model,
    dataset,
    proposals,
    way,
    shot,
    episodes,
    seed,
    proposal_threshold=0.2,
    confidence_threshold=0.3,
    nms_threshold=0.5,
    tiou_grid=TIOU_GRID,
    threads=None,
):
    """Episodic mAP over a tIoU grid.

    Per episode: supports are ground-truth crops of k videos per class
    (one segment per video, chosen by the episode RNG), averaged and
    re-normalized per sub-action index; every query video's filtered
    proposals are classified and scored, low-confidence assignments are
    rejected, NMS runs per (video, class), and AP is computed per class
    and averaged. Episode means are averaged over episodes.
    """
    props_by_video = defaultdict(list)
    for p in filter_proposals(proposals, proposal_threshold):
        props_by_video[p.video_id].append(p)

    traj_cache = {}

    def crop_traj(video_id, start, end):
        key = (video_id, start, end)
        if key not in traj_cache:
            vf = dataset.by_id(video_id).features
            traj_cache[key] = model.embed_video(
                crop_features(vf, Proposal(video_id, start, end, 1.0))
            )
        return traj_cache[key]

    def run(idx):
        rng = np.random.default_rng([seed, _STREAM_DET_EPISODE, idx])
        classes, support_ids, queries = _sample_detection_episode(dataset, way, shot, rng)

        supports = []
        for slot, label in enumerate(classes):
            crops = []
            for vid in support_ids[slot]:
                segs = [s for s in dataset.by_id(vid).gt_segments if s.label == label]
                seg = segs[int(rng.integers(len(segs)))]
                crops.append(crop_traj(vid, seg.start, seg.end))
            supports.append(_mean_renormalized(crops))
        supports = np.ascontiguousarray(np.stack(supports))

        detections = []
        for vid in queries:
            for p in props_by_video.get(vid, ()):
                traj = crop_traj(vid, p.start, p.end)
                slot, score = assign_and_score(traj, supports, model.weights.sigma)
                if score >= confidence_threshold:
                    detections.append(
                        Detection(video_id=vid, start=p.start, end=p.end,
                                  label=slot, score=score)
                    )
        detections = nms(detections, nms_threshold)

        gt_by_slot = defaultdict(list)
        for vid in queries:
            for seg in dataset.by_id(vid).gt_segments:
                if seg.label in classes:
                    gt_by_slot[classes.index(seg.label)].append((vid, seg.start, seg.end))

        by_slot = defaultdict(list)
        for det in detections:
            by_slot[det.label].append(det)

        ep_map = {}
        missing = 0
        for t in tiou_grid:
            aps = []
            for slot in range(way):
                if not gt_by_slot.get(slot):
                    missing += 1
                    aps.append(0.0)
                    continue
                aps.append(average_precision(by_slot.get(slot, []), gt_by_slot[slot], t))
            ep_map[t] = float(np.mean(aps))
        return ep_map, missing

    if threads is None:
        threads = int(os.environ.get("TAEN_THREADS", "1"))
    results = [None] * episodes
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for idx, res in enumerate(pool.map(run, range(episodes))):
                results[idx] = res
    else:
        for idx in range(episodes):
            results[idx] = run(idx)

    map_by_tiou = {
        t: float(np.mean([r[0][t] for r in results])) for t in tiou_grid
    }
    missing = sum(r[1] for r in results)
    return DetectionResult(
        map_by_tiou=map_by_tiou, episodes=episodes, missing_gt_classes=missing
    )
