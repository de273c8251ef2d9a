"""Feature file IO, segment pooling and dataset manifests.

Feature file format (little-endian, no padding):

    magic   4 bytes  b"TAEN"
    version u32      1
    T       u32      number of feature rows
    d_feat  u32      feature dimension
    payload T * d_feat float32, row-major

Manifest: a JSON document ``{"class_names": [...], "entries": [...]}``
where each entry has ``video_id``, ``feature_path`` (relative to the
manifest file), optional ``label`` (a class name) and, for untrimmed
videos, optional ``gt_segments``: a list of ``{"start", "end", "label"}``
with times as fractions of the video duration in [0, 1].

Values are stored as float32 on disk and promoted to float64 for all
computation.
"""

import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from taen.errors import DataError
from taen.kernels import pool_segments

MAGIC = b"TAEN"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FeatureFormatError(DataError):
    """Base class for malformed feature files."""


class BadHeaderError(FeatureFormatError):
    """Bad magic, version or header size; message names the byte offset."""


class TruncatedPayloadError(FeatureFormatError):
    """Payload shorter than the header declares; message names the row."""


class NonFiniteFeatureError(FeatureFormatError):
    """NaN or Inf in the payload; message names the row."""


@dataclass
class VideoFeatures:
    """Raw backbone feature sequence for one video, shape (T, d_feat)."""

    video_id: str
    frames: np.ndarray

    @property
    def t(self):
        return self.frames.shape[0]

    @property
    def d_feat(self):
        return self.frames.shape[1]


@dataclass
class PooledVideo:
    """Fixed-length sub-action representation, shape (a, d_feat)."""

    video_id: str
    segments: np.ndarray
    label: int | None = None


@dataclass
class GtSegment:
    start: float
    end: float
    label: int


@dataclass
class LoadedVideo:
    video_id: str
    features: VideoFeatures
    label: int | None = None
    gt_segments: list[GtSegment] = field(default_factory=list)


@dataclass
class Dataset:
    """A manifest with all referenced features loaded into memory."""

    class_names: list[str]
    videos: list[LoadedVideo]
    d_feat: int

    def by_id(self, video_id):
        if not hasattr(self, "_index"):
            self._index = {v.video_id: v for v in self.videos}
        return self._index[video_id]

    def videos_of_class(self, label):
        """Trimmed videos carrying the given class label."""
        return [v for v in self.videos if v.label == label]

    def classes_present(self):
        """Labels that occur either as video labels or in gt segments."""
        found = set()
        for v in self.videos:
            if v.label is not None:
                found.add(v.label)
            for seg in v.gt_segments:
                found.add(seg.label)
        return sorted(found)


def write_features(path, video_id, frames):
    """Write one video's features in the binary format.

    `frames` is cast to float32; non-finite values are rejected.
    """
    arr = np.asarray(frames)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError(f"features must be a T x d_feat matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.argwhere(~np.isfinite(arr))[0][0])
        raise NonFiniteFeatureError(f"{video_id}: non-finite value at row {bad}")
    arr = arr.astype("<f4")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, arr.shape[0], arr.shape[1]))
        f.write(arr.tobytes(order="C"))


def load_features(path, video_id=None):
    """Load one feature file, validating format and finiteness.

    Returns a VideoFeatures with float64 frames. `video_id` defaults to
    the file stem.
    """
    if video_id is None:
        video_id = os.path.splitext(os.path.basename(path))[0]
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise DataError(f"cannot read feature file {path}: {exc}") from exc

    if len(raw) < _HEADER.size:
        raise BadHeaderError(
            f"{path}: header truncated at byte {len(raw)} (need {_HEADER.size})"
        )
    magic, version, t, d = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise BadHeaderError(f"{path}: bad magic {magic!r} at byte offset 0")
    if version != FORMAT_VERSION:
        raise BadHeaderError(f"{path}: unsupported version {version} at byte offset 4")
    if t < 1 or d < 1:
        raise BadHeaderError(f"{path}: invalid shape T={t}, d_feat={d} at byte offset 8")

    payload = raw[_HEADER.size :]
    n_vals = len(payload) // 4
    if n_vals < t * d:
        raise TruncatedPayloadError(
            f"{path}: payload truncated at row {n_vals // d} "
            f"({n_vals} of {t * d} values present)"
        )
    values = np.frombuffer(payload[: t * d * 4], dtype="<f4").reshape(t, d)
    if not np.all(np.isfinite(values)):
        bad = int(np.argwhere(~np.isfinite(values))[0][0])
        raise NonFiniteFeatureError(f"{path}: non-finite value at row {bad}")
    return VideoFeatures(video_id=video_id, frames=values.astype(np.float64))


def segment_pool(vf, a, label=None):
    """Pool a video into `a` contiguous sub-action segments by averaging.

    Blocks partition the T rows in temporal order with sizes differing by
    at most one; earlier blocks take the extra row. When T < a the last
    available pooled row is replicated so the trajectory length stays
    fixed.
    """
    if a < 1:
        raise DataError(f"sub-action count must be >= 1, got {a}")
    pooled = pool_segments(np.ascontiguousarray(vf.frames, dtype=np.float64), a)
    return PooledVideo(video_id=vf.video_id, segments=pooled, label=label)


def _parse_manifest(doc, path):
    if not isinstance(doc, dict) or "entries" not in doc or "class_names" not in doc:
        raise DataError(f"{path}: manifest must have 'class_names' and 'entries'")
    class_names = doc["class_names"]
    if not isinstance(class_names, list) or any(
        not isinstance(c, str) for c in class_names
    ):
        raise DataError(f"{path}: class_names must be a list of strings")
    label_of = {name: i for i, name in enumerate(class_names)}
    if len(label_of) != len(class_names):
        raise DataError(f"{path}: duplicate class names")

    seen = set()
    parsed = []
    for entry in doc["entries"]:
        vid = entry.get("video_id")
        if not isinstance(vid, str):
            raise DataError(f"{path}: entry without a string video_id")
        if vid in seen:
            raise DataError(f"{path}: duplicate video_id {vid!r}")
        seen.add(vid)
        if "feature_path" not in entry:
            raise DataError(f"{path}: entry {vid!r} missing feature_path")

        label = None
        if entry.get("label") is not None:
            if entry["label"] not in label_of:
                raise DataError(f"{path}: video {vid!r} has unknown label {entry['label']!r}")
            label = label_of[entry["label"]]

        segments = []
        for seg in entry.get("gt_segments") or []:
            start, end = float(seg["start"]), float(seg["end"])
            if not (0.0 <= start < end <= 1.0):
                raise DataError(
                    f"{path}: video {vid!r} has invalid gt segment [{start}, {end}]"
                )
            if seg["label"] not in label_of:
                raise DataError(
                    f"{path}: video {vid!r} gt segment has unknown label {seg['label']!r}"
                )
            segments.append(GtSegment(start=start, end=end, label=label_of[seg["label"]]))
        parsed.append((vid, entry["feature_path"], label, segments))
    return class_names, parsed


def load_dataset(manifest_path, threads=None):
    """Load a manifest and every feature file it references.

    Feature files may be read in parallel (`threads` > 1 or TAEN_THREADS);
    the resulting dataset is identical to sequential loading.
    """
    try:
        with open(manifest_path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise DataError(f"cannot read manifest {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest_path}: invalid JSON: {exc}") from exc

    class_names, parsed = _parse_manifest(doc, manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))

    def _load(item):
        vid, rel, label, segments = item
        fpath = rel if os.path.isabs(rel) else os.path.join(base, rel)
        if not os.path.exists(fpath):
            raise DataError(f"{manifest_path}: video {vid!r} references missing file {fpath}")
        return LoadedVideo(
            video_id=vid,
            features=load_features(fpath, video_id=vid),
            label=label,
            gt_segments=segments,
        )

    if threads is None:
        threads = int(os.environ.get("TAEN_THREADS", "1"))
    if threads > 1 and len(parsed) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            videos = list(pool.map(_load, parsed))
    else:
        videos = [_load(item) for item in parsed]

    dims = {}
    for v in videos:
        dims.setdefault(v.features.d_feat, []).append(v.video_id)
    if len(dims) > 1:
        detail = "; ".join(
            f"d_feat={d}: {ids[0]}" + (f" (+{len(ids) - 1} more)" if len(ids) > 1 else "")
            for d, ids in sorted(dims.items())
        )
        raise DataError(f"{manifest_path}: inconsistent feature dimensions: {detail}")

    return Dataset(class_names=class_names, videos=videos, d_feat=next(iter(dims)))
