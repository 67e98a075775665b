"""On-disk formats: binary feature arrays with JSON indices, annotation CSVs."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Dict

import numpy as np

from ..constants import INVALID, UNLABELED

INDEX_NAME = "index.json"


def write_array(path, array: np.ndarray) -> None:
    """Raw little-endian float32, row-major."""
    np.ascontiguousarray(array, dtype="<f4").tofile(path)


def read_array(path, frame_count: int, dim: int) -> np.ndarray:
    data = np.fromfile(path, dtype="<f4")
    if data.size != frame_count * dim:
        raise ValueError(f"{path}: expected {frame_count}x{dim} floats, found {data.size}")
    return data.reshape(frame_count, dim).astype(np.float32)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


class FeatureStore:
    """Directory of per-video ``<id>.bin`` arrays indexed by ``index.json``.

    Index entries: ``{video_id: {"path", "frame_count", "dim", ...}}``; any
    extra keys (for example ``missing_audio``) are kept verbatim. Store-wide
    metadata lives under the reserved ``"_meta"`` key.
    """

    def __init__(self, root):
        self.root = Path(root)
        index_path = self.root / INDEX_NAME
        raw = read_json(index_path) if index_path.exists() else {}
        self.meta = raw.pop("_meta", {})
        self.index: Dict[str, dict] = raw

    def __contains__(self, video_id) -> bool:
        return video_id in self.index

    def __len__(self) -> int:
        return len(self.index)

    def put(self, video_id: str, array: np.ndarray, **extra) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        name = f"{video_id}.bin"
        write_array(self.root / name, array)
        self.index[video_id] = {"path": name, "frame_count": int(array.shape[0]), "dim": int(array.shape[1]), **extra}

    def get(self, video_id: str) -> np.ndarray:
        entry = self.index[video_id]
        return read_array(self.root / entry["path"], entry["frame_count"], entry["dim"])

    def save_index(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        out = dict(self.index)
        if self.meta:
            out["_meta"] = self.meta
        write_json(self.root / INDEX_NAME, out)


def write_annotations(path, valence, arousal, emotion) -> None:
    """CSV ``frame,valence,arousal,emotion``; -5 marks INVALID/UNLABELED."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "valence", "arousal", "emotion"])
        for i, (v, a, e) in enumerate(zip(valence, arousal, emotion)):
            w.writerow([i, f"{v:.6f}", f"{a:.6f}", int(e)])


def read_annotations(path, frame_count: int):
    """Per-frame arrays; frames missing from the CSV come back INVALID/UNLABELED.

    Returns:
        dict with float32 ``valence``/``arousal`` (INVALID where absent) and
        int64 ``emotion``.
    """
    valence = np.full(frame_count, INVALID, dtype=np.float32)
    arousal = np.full(frame_count, INVALID, dtype=np.float32)
    emotion = np.full(frame_count, UNLABELED, dtype=np.int64)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            i = int(row["frame"])
            if 0 <= i < frame_count:
                valence[i] = float(row["valence"])
                arousal[i] = float(row["arousal"])
                emotion[i] = int(row["emotion"])
    return {"valence": valence, "arousal": arousal, "emotion": emotion}


def label_mask(values: np.ndarray) -> np.ndarray:
    """Valid valence/arousal entries: not the sentinel and within [-1, 1]."""
    return (values != INVALID) & (np.abs(values) <= 1.0)
