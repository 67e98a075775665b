"""Command-line workflows: make-synth, preprocess-audio, train, evaluate, predict."""

from __future__ import annotations

import csv
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import click
import numpy as np

from .checkpoint import CheckpointManifest, load_component
from .config import Config
from .constants import AUDIO_DIM
from .data.audio import VideoMetadata
from .data.corpus import Corpus, audio_feature_stats, extract_video_audio
from .data.store import FeatureStore, read_json, write_json
from .data.synth import synth_dataset
from .errors import AffectFusionError, IncompatibleCheckpoint
from .inference import STAGE_MODEL, build_model, predict_video, report_for
from .models import FusionNetwork, VisualNetwork
from .training import Stage, run_stage

logger = logging.getLogger("affectfusion")


def preprocess_audio(corpus_dir, out_dir, window_ms: float = 25.0) -> dict:
    """Extract a synchronized feature track for every video in a corpus.

    Videos without usable audio get a zero track flagged ``missing_audio``
    in the index. Videos that fail outright are logged and skipped.

    Returns:
        Summary with ``processed``, ``skipped``, ``missing_audio`` and
        ``per_fps`` counts.
    """
    corpus_dir = Path(corpus_dir)
    index = read_json(corpus_dir / "index.json")
    store = FeatureStore(out_dir)
    store.index.clear()
    tracks, skipped, missing, per_fps = [], [], [], Counter()
    for entry in index["videos"]:
        vid = entry["video_id"]
        try:
            meta = VideoMetadata(vid, float(entry["fps"]), int(entry["frame_count"]), int(entry.get("audio_sample_rate", 16000)))
            track, is_missing = extract_video_audio(corpus_dir / "videos" / vid, meta, window_ms)
        except Exception as exc:  # one bad video must not stop the corpus
            logger.error("%s: audio extraction failed: %s", vid, exc)
            skipped.append(vid)
            continue
        store.put(vid, track.features, missing_audio=is_missing, valid_frames=int(track.mask.sum()))
        tracks.append(track)
        per_fps[str(meta.fps)] += 1
        if is_missing:
            missing.append(vid)
    mean, std = audio_feature_stats(tracks)
    store.meta = {"mean": mean.tolist(), "std": std.tolist(), "dim": AUDIO_DIM, "window_ms": window_ms}
    store.save_index()
    return {
        "processed": len(tracks),
        "skipped": len(skipped),
        "missing_audio": missing,
        "per_fps": dict(sorted(per_fps.items())),
    }


def load_checkpoint_model(checkpoint):
    """Rebuild the network stored in a checkpoint directory, in eval mode."""
    manifest = CheckpointManifest.load(checkpoint)
    cfg = manifest.resolved_config()
    model = build_model(STAGE_MODEL[manifest.stage], cfg)
    if isinstance(model, FusionNetwork):
        parts = {"visual": model.visual, "acoustic": model.acoustic, "fusion": model}
    elif isinstance(model, VisualNetwork):
        parts = {"visual": model}
    else:
        parts = {"acoustic": model}
    for name, module in parts.items():
        load_component(manifest, name, module)
    model.eval()
    return model, cfg, manifest


def _check_compatible(cfg: Config, corpus: Corpus) -> None:
    problems = []
    if cfg.data.crop_size != cfg.model.visual.input_size:
        problems.append(f"crop size {cfg.data.crop_size} != visual input size {cfg.model.visual.input_size}")
    if corpus.frame_size < cfg.data.crop_size:
        problems.append(f"corpus frames are {corpus.frame_size}px, smaller than the {cfg.data.crop_size}px crop")
    store = corpus.audio_store
    if store is not None and store.meta.get("dim", AUDIO_DIM) != cfg.model.acoustic.input_dim:
        problems.append(f"audio features are {store.meta.get('dim')}-d, model expects {cfg.model.acoustic.input_dim}")
    if problems:
        raise IncompatibleCheckpoint(problems)


def _write_predictions(path: Path, valence: np.ndarray, arousal: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "valence", "arousal"])
        for i, (v, a) in enumerate(zip(valence, arousal)):
            w.writerow([i, f"{v:.6f}", f"{a:.6f}"])


def _predict_all(checkpoint, corpus_dir, out_dir, audio_features_dir=None, require_labels=True):
    model, cfg, _ = load_checkpoint_model(checkpoint)
    corpus = Corpus(corpus_dir, audio_features_dir, cfg.data.logmel_window_ms)
    _check_compatible(cfg, corpus)
    out_dir = Path(out_dir)
    (out_dir / "predictions").mkdir(parents=True, exist_ok=True)
    predictions, flagged = {}, []
    for vid in corpus.video_ids:
        pred = predict_video(model, corpus, vid, cfg, require_labels=require_labels)
        if pred is None:
            continue
        predictions[vid] = pred
        _write_predictions(out_dir / "predictions" / f"{vid}.csv", *pred)
        if corpus.raw_audio(vid)[1]:
            flagged.append(vid)
    skipped = len(corpus.video_ids) - len(predictions)
    return corpus, predictions, flagged, skipped


def evaluate(checkpoint, corpus_dir, out_dir, audio_features_dir=None) -> dict:
    """Predict every annotated video and write ``report.json`` plus per-video CSVs."""
    corpus, predictions, flagged, skipped = _predict_all(checkpoint, corpus_dir, out_dir, audio_features_dir)
    report = report_for(predictions, corpus).to_dict()
    report["flagged_missing_audio"] = flagged
    report["skipped"] = skipped
    write_json(Path(out_dir) / "report.json", report)
    return report


def predict(checkpoint, corpus_dir, out_dir, audio_features_dir=None) -> dict:
    _, predictions, flagged, skipped = _predict_all(
        checkpoint, corpus_dir, out_dir, audio_features_dir, require_labels=False
    )
    return {"videos": len(predictions), "flagged_missing_audio": flagged, "skipped": skipped}


def _snapshot(out_dir, cfg: Config) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "resolved_config.yaml")


def _resolve(config, seed, overrides) -> Config:
    cfg = Config.load(config, overrides)
    if seed is not None:
        cfg.seed = seed
    return cfg


def _emit(summary: dict) -> None:
    click.echo(json.dumps(summary, sort_keys=True))


_common = [
    click.option("--config", "config", type=click.Path(exists=True, dir_okay=False), default=None),
    click.option("--seed", type=int, default=None),
    click.option("--override", "overrides", multiple=True, metavar="K=V"),
    click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True),
]


def common_options(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    """Multi-modal valence/arousal estimation workflows."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


@main.command("make-synth")
@common_options
@click.option("--num-videos", type=int, default=8)
@click.option("--duration", type=float, default=4.0)
@click.option("--frame-size", type=int, default=None, help="defaults to data.frame_size")
@click.option("--fps", "fps_list", type=float, multiple=True)
@click.option("--drop-audio", type=int, multiple=True, help="video indices written without audio")
def make_synth_cmd(config, seed, overrides, out_dir, num_videos, duration, frame_size, fps_list, drop_audio):
    """Write a deterministic synthetic corpus."""
    cfg = _resolve(config, seed, overrides)
    _snapshot(out_dir, cfg)
    kwargs = {"fps_list": fps_list} if fps_list else {}
    synth_dataset(
        out_dir,
        seed=cfg.seed,
        num_videos=num_videos,
        duration=duration,
        frame_size=frame_size or cfg.data.frame_size,
        drop_audio=drop_audio,
        **kwargs,
    )
    _emit({"command": "make-synth", "videos": num_videos, "out": str(out_dir)})


@main.command("preprocess-audio")
@common_options
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True, file_okay=False), required=True)
def preprocess_audio_cmd(config, seed, overrides, out_dir, corpus_dir):
    """Extract synchronized log-Mel features for every video."""
    cfg = _resolve(config, seed, overrides)
    _snapshot(out_dir, cfg)
    summary = preprocess_audio(corpus_dir, out_dir, cfg.data.logmel_window_ms)
    _emit({"command": "preprocess-audio", **summary})
    if summary["processed"] == 0:
        sys.exit(1)


@main.command("train")
@common_options
@click.option("--stage", type=click.Choice([s.value for s in Stage]), required=True)
@click.option("--resume", type=click.Path(file_okay=False), default=None, help="checkpoint directory of this stage")
def train_cmd(config, seed, overrides, out_dir, stage, resume):
    """Run one training stage."""
    cfg = _resolve(config, seed, overrides)
    _snapshot(out_dir, cfg)
    try:
        manifest = run_stage(stage, cfg, out_dir, resume=resume)
    except AffectFusionError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(2)
    _emit(
        {
            "command": "train",
            "stage": manifest.stage,
            "epoch": manifest.epoch,
            "iteration": manifest.iteration,
            "skipped": manifest.skipped_batches,
            "checkpoint": manifest.path,
        }
    )


@main.command("evaluate")
@common_options
@click.option("--checkpoint", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True, file_okay=False), required=True)
def evaluate_cmd(config, seed, overrides, out_dir, checkpoint, corpus_dir):
    """Score a checkpoint on an annotated corpus."""
    cfg = _resolve(config, seed, overrides)
    _snapshot(out_dir, cfg)
    try:
        report = evaluate(checkpoint, corpus_dir, out_dir, cfg.data.audio_features_dir)
    except AffectFusionError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(2)
    keys = ("ccc_valence", "ccc_arousal", "ccc_mean", "skipped", "flagged_missing_audio")
    _emit({"command": "evaluate", **{k: report[k] for k in keys}})


@main.command("predict")
@common_options
@click.option("--checkpoint", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True, file_okay=False), required=True)
def predict_cmd(config, seed, overrides, out_dir, checkpoint, corpus_dir):
    """Write per-frame predictions without scoring."""
    cfg = _resolve(config, seed, overrides)
    _snapshot(out_dir, cfg)
    try:
        summary = predict(checkpoint, corpus_dir, out_dir, cfg.data.audio_features_dir)
    except AffectFusionError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(2)
    _emit({"command": "predict", **summary})


if __name__ == "__main__":
    main()
