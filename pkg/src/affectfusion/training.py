"""Learning-rate schedules, the per-batch multi-task loss and the staged training loop.

Stages run in order: ``visual`` and ``audio`` (independent, single modality),
``fusion-init`` (encoders frozen, fixed number of epochs) and ``finetune``
(everything trainable, plateau-driven decay).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional

import torch
from torch import nn

from .checkpoint import CheckpointManifest, load_component, load_trainer_state, save_checkpoint
from .config import Config
from .data.corpus import Corpus, iterate_batches, training_windows
from .errors import DegenerateBatch, DegenerateInput, MissingCheckpoint, StageOrderViolation
from .inference import STAGE_MODEL, build_model, evaluate_model, run_model
from .metrics import LossWeights, ccc_loss, combined_loss, emotion_cross_entropy
from .models import FusionNetwork, VisualNetwork, load_pretrained_trunk

logger = logging.getLogger(__name__)

LOG_FIELDS = ["stage", "epoch", "iteration", "lr", "loss_v", "loss_a", "loss_emot", "total", "skipped"]


class Stage(str, Enum):
    VISUAL = "visual"
    AUDIO = "audio"
    FUSION_INIT = "fusion-init"
    FINETUNE = "finetune"


PREREQUISITES = {
    Stage.VISUAL: (),
    Stage.AUDIO: (),
    Stage.FUSION_INIT: (Stage.VISUAL, Stage.AUDIO),
    Stage.FINETUNE: (Stage.FUSION_INIT,),
}


@dataclass
class CyclicalLRState:
    base_lr: float = 1e-7
    max_lr: float = 1e-4
    step_size_up: int = 1
    iteration: int = 0

    def __post_init__(self):
        if not self.base_lr < self.max_lr:
            raise ValueError("base_lr must be below max_lr")
        if self.step_size_up < 1:
            raise ValueError("step_size_up must be >= 1")

    def lr(self) -> float:
        return cyclical_lr(self.iteration, self.base_lr, self.max_lr, self.step_size_up)


def cyclical_lr(iteration: int, base_lr: float, max_lr: float, step_size_up: int) -> float:
    """Triangular cyclical learning rate.

    Rises linearly from ``base_lr`` to ``max_lr`` over ``step_size_up``
    iterations, falls back over the next ``step_size_up`` and repeats.
    """
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    pos = iteration % (2 * step_size_up)
    frac = pos / step_size_up if pos <= step_size_up else (2 * step_size_up - pos) / step_size_up
    return base_lr + (max_lr - base_lr) * frac


class PlateauDecay:
    """Multiply the learning rate by ``factor`` after ``patience`` consecutive
    evaluations without a new best validation CCC."""

    def __init__(self, optimizer: torch.optim.Optimizer, factor: float = 0.5, patience: int = 2):
        self.optimizer = optimizer
        # ReduceLROnPlateau acts once the bad-epoch count *exceeds* its patience
        self._inner = torch.optim.lr_scheduler.ReduceLROnPlateau(
            optimizer, mode="max", factor=factor, patience=patience - 1, threshold=0.0, threshold_mode="abs"
        )

    @property
    def lr(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    def step(self, metric: float) -> float:
        self._inner.step(metric)
        return self.lr

    def state_dict(self):
        return self._inner.state_dict()

    def load_state_dict(self, state):
        self._inner.load_state_dict(state)


def _ccc_term(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor, per_window: bool) -> torch.Tensor:
    if not per_window:
        return ccc_loss(pred, target, mask)
    losses = []
    for p, t, m in zip(pred, target, mask):
        try:
            losses.append(ccc_loss(p, t, m))
        except DegenerateInput:
            continue
    if not losses:
        raise DegenerateInput("no window has a defined CCC")
    return torch.stack(losses).mean()


def training_loss_for_batch(
    valence: torch.Tensor,
    arousal: torch.Tensor,
    emotion_logits: Optional[torch.Tensor],
    batch: dict,
    stage: Stage,
    weights: LossWeights = LossWeights(),
    per_window: bool = False,
):
    """Stage loss and its breakdown ``{loss_v, loss_a, loss_emot, total}``.

    The CCC terms pool every valid frame in the batch (or average per-window
    CCC losses with ``per_window``). Only the visual stage adds the emotion
    term.

    Raises:
        DegenerateBatch: a CCC term is undefined for this batch.
    """
    stage = Stage(stage)
    try:
        loss_v = _ccc_term(valence, batch["valence"].to(valence.dtype), batch["valence_mask"], per_window)
        loss_a = _ccc_term(arousal, batch["arousal"].to(arousal.dtype), batch["arousal_mask"], per_window)
    except DegenerateInput as exc:
        raise DegenerateBatch(str(exc)) from exc

    if stage is Stage.VISUAL and emotion_logits is not None:
        loss_emot = emotion_cross_entropy(emotion_logits, batch["emotion"])
        total = combined_loss(loss_v, loss_a, loss_emot, weights)
    else:
        loss_emot = torch.zeros((), dtype=loss_v.dtype)
        total = 0.5 * (loss_v + loss_a)
    parts = {
        "loss_v": loss_v.item(),
        "loss_a": loss_a.item(),
        "loss_emot": loss_emot.item(),
        "total": total.item(),
    }
    return total, parts


def set_determinism(seed: int, deterministic: bool = True) -> None:
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True)


def checkpoint_dir(out_dir, stage) -> Path:
    return Path(out_dir) / "checkpoints" / Stage(stage).value


def _prerequisite(stage: Stage, prereq: Stage, cfg: Config, out_dir) -> CheckpointManifest:
    explicit = {
        Stage.VISUAL: cfg.training.visual_checkpoint,
        Stage.AUDIO: cfg.training.audio_checkpoint,
        Stage.FUSION_INIT: cfg.training.fusion_checkpoint,
    }[prereq]
    if explicit:
        manifest = CheckpointManifest.load(explicit)  # MissingCheckpoint if absent
    else:
        try:
            manifest = CheckpointManifest.load(checkpoint_dir(out_dir, prereq))
        except MissingCheckpoint:
            raise StageOrderViolation(
                f"stage {stage.value!r} needs a completed {prereq.value!r} checkpoint; run that stage first"
            ) from None
    if manifest.stage != prereq.value:
        raise StageOrderViolation(f"expected a {prereq.value!r} checkpoint, got {manifest.stage!r} at {manifest.path}")
    return manifest


def prepare_model(stage: Stage, cfg: Config, out_dir) -> nn.Module:
    """Build the stage's network and load whatever earlier stages produced."""
    manifests = {p: _prerequisite(stage, p, cfg, out_dir) for p in PREREQUISITES[stage]}
    model = build_model(STAGE_MODEL[stage.value], cfg)
    if stage is Stage.VISUAL and cfg.training.pretrained_trunk:
        load_pretrained_trunk(model, cfg.training.pretrained_trunk, strict=False)
    elif stage is Stage.FUSION_INIT:
        load_component(manifests[Stage.VISUAL], "visual", model.visual)
        load_component(manifests[Stage.AUDIO], "acoustic", model.acoustic)
    elif stage is Stage.FINETUNE:
        m = manifests[Stage.FUSION_INIT]
        for name in ("visual", "acoustic", "fusion"):
            load_component(m, name, {"visual": model.visual, "acoustic": model.acoustic, "fusion": model}[name])
    return model


class StageTrainer:
    """Runs one training stage and writes its checkpoint and metric log."""

    def __init__(
        self,
        stage,
        model: nn.Module,
        cfg: Config,
        corpus: Corpus,
        out_dir,
        val_corpus: Optional[Corpus] = None,
    ):
        self.stage = Stage(stage)
        self.model = model
        self.cfg = cfg
        self.tc = cfg.training
        self.corpus = corpus
        self.val_corpus = val_corpus
        self.out_dir = Path(out_dir)
        self.weights = LossWeights(self.tc.lambda_emot)
        self.epoch = 0
        self.iteration = 0
        self.skipped = 0
        self.history: List[Dict] = []
        self.last_report = None

        self.frozen = self.stage is Stage.FUSION_INIT
        if self.frozen:
            for enc in model.encoders():
                enc.requires_grad_(False)
        params = [p for p in model.parameters() if p.requires_grad]
        self.optimizer = torch.optim.Adam(params, lr=self.initial_lr(), weight_decay=self.tc.weight_decay)

        self.video_ids = corpus.video_ids
        if self.stage is Stage.AUDIO:
            self.video_ids = [v for v in corpus.video_ids if corpus.meta[v].fps > cfg.data.audio_only_min_fps]
            dropped = len(corpus.video_ids) - len(self.video_ids)
            if dropped:
                logger.info("audio stage: dropped %d videos at or below %.1f fps", dropped, cfg.data.audio_only_min_fps)
        n_windows = len(
            training_windows(corpus, cfg.data.window_length, cfg.data.windows_per_video, cfg.seed, 0, self.video_ids)
        )
        self.iters_per_epoch = max(1, math.ceil(n_windows / self.tc.batch_size))
        self.clr = None
        if self.stage in (Stage.VISUAL, Stage.AUDIO):
            step = max(1, int(round(self.tc.step_size_epochs * self.iters_per_epoch)))
            self.clr = CyclicalLRState(self.tc.base_lr, self.tc.max_lr, step)
        self.decay = PlateauDecay(self.optimizer, self.tc.decay_factor, self.tc.decay_patience) if self.stage is Stage.FINETUNE else None

    def initial_lr(self) -> float:
        if self.stage is Stage.FUSION_INIT:
            return self.tc.fusion_init_lr
        if self.stage is Stage.FINETUNE:
            return self.tc.finetune_lr
        return self.tc.base_lr

    @property
    def num_epochs(self) -> int:
        return {
            Stage.VISUAL: self.tc.epochs,
            Stage.AUDIO: self.tc.epochs,
            Stage.FUSION_INIT: self.tc.fusion_init_epochs,
            Stage.FINETUNE: self.tc.finetune_epochs,
        }[self.stage]

    def current_lr(self) -> float:
        if self.clr is not None:
            self.clr.iteration = self.iteration
            return self.clr.lr()
        return self.optimizer.param_groups[0]["lr"]

    def _train_mode(self) -> None:
        self.model.train()
        if self.frozen:
            for enc in self.model.encoders():
                enc.eval()

    def _iteration_cap_reached(self) -> bool:
        cap = self.tc.max_iterations
        # fusion-init always runs its full epoch count
        return cap is not None and self.stage is not Stage.FUSION_INIT and self.iteration >= cap

    def _log(self, row: dict) -> None:
        self.history.append(row)
        path = self.out_dir / "metrics.csv"
        new = not path.exists()
        with open(path, "a", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=LOG_FIELDS, lineterminator="\n")
            if new:
                w.writeheader()
            w.writerow(row)

    def train_epoch(self) -> None:
        d = self.cfg.data
        windows = training_windows(self.corpus, d.window_length, d.windows_per_video, self.cfg.seed, self.epoch, self.video_ids)
        self._train_mode()
        for batch in iterate_batches(self.corpus, windows, self.tc.batch_size, d.window_length, self.cfg.seed, self.epoch, d.crop_size):
            if self._iteration_cap_reached():
                return
            lr = self.current_lr()
            for group in self.optimizer.param_groups:
                group["lr"] = lr
            self.optimizer.zero_grad(set_to_none=True)
            valence, arousal, emotion = run_model(self.model, batch)
            try:
                total, parts = training_loss_for_batch(
                    valence, arousal, emotion, batch, self.stage, self.weights, self.tc.ccc_per_window
                )
            except DegenerateBatch as exc:
                self.skipped += 1
                logger.warning("skipping degenerate batch at iteration %d: %s", self.iteration, exc)
                continue
            total.backward()
            self.optimizer.step()
            self._log(
                {"stage": self.stage.value, "epoch": self.epoch, "iteration": self.iteration, "lr": lr, **parts, "skipped": self.skipped}
            )
            self.iteration += 1

    def validate(self):
        corpus = self.val_corpus if self.val_corpus is not None else self.corpus
        self.last_report = evaluate_model(self.model, corpus, self.cfg)
        self._train_mode()
        return self.last_report

    def run(self) -> CheckpointManifest:
        manifest = None
        while self.epoch < self.num_epochs and not self._iteration_cap_reached():
            self.train_epoch()
            self.epoch += 1
            if self.decay is not None:
                report = self.validate()
                new_lr = self.decay.step(report.ccc_mean)
                logger.info("finetune epoch %d: val mean CCC %.4f, lr %.3g", self.epoch, report.ccc_mean, new_lr)
            manifest = self.save()
        if manifest is None:
            manifest = self.save()
        return manifest

    def trainer_state(self) -> dict:
        return {
            "epoch": self.epoch,
            "iteration": self.iteration,
            "skipped": self.skipped,
            "optimizer": self.optimizer.state_dict(),
            "decay": None if self.decay is None else self.decay.state_dict(),
            "torch_rng": torch.get_rng_state(),
        }

    def save(self) -> CheckpointManifest:
        manifest = CheckpointManifest(
            stage=self.stage.value,
            iteration=self.iteration,
            epoch=self.epoch,
            config_hash=self.cfg.hash(),
            config=self.cfg.to_dict(),
            skipped_batches=self.skipped,
        )
        return save_checkpoint(checkpoint_dir(self.out_dir, self.stage), self.model, manifest, self.trainer_state())

    def restore(self, manifest: CheckpointManifest) -> None:
        """Continue from a checkpoint of this same stage."""
        if manifest.stage != self.stage.value:
            raise StageOrderViolation(f"cannot resume stage {self.stage.value!r} from a {manifest.stage!r} checkpoint")
        model = self.model
        if isinstance(model, FusionNetwork):
            parts = {"visual": model.visual, "acoustic": model.acoustic, "fusion": model}
        elif isinstance(model, VisualNetwork):
            parts = {"visual": model}
        else:
            parts = {"acoustic": model}
        for name, module in parts.items():
            load_component(manifest, name, module)
        state = load_trainer_state(manifest)
        if state is not None:
            self.epoch = state["epoch"]
            self.iteration = state["iteration"]
            self.skipped = state["skipped"]
            self.optimizer.load_state_dict(state["optimizer"])
            if self.decay is not None and state["decay"] is not None:
                self.decay.load_state_dict(state["decay"])
            torch.set_rng_state(state["torch_rng"])


def build_trainer(
    stage,
    cfg: Config,
    out_dir,
    corpus: Optional[Corpus] = None,
    val_corpus: Optional[Corpus] = None,
    resume=None,
) -> StageTrainer:
    """Set up a stage: resolve prerequisites, build and load the model.

    Raises:
        StageOrderViolation: a prerequisite stage has not been completed.
        MissingCheckpoint: an explicitly configured checkpoint does not exist.
    """
    stage = Stage(stage)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    set_determinism(cfg.seed, cfg.training.deterministic)
    manifest = None
    if resume is not None:
        manifest = resume if isinstance(resume, CheckpointManifest) else CheckpointManifest.load(resume)
        model = build_model(STAGE_MODEL[stage.value], cfg)
    else:
        model = prepare_model(stage, cfg, out_dir)
    if corpus is None:
        corpus = Corpus(cfg.data.corpus_dir, cfg.data.audio_features_dir, cfg.data.logmel_window_ms)
    if val_corpus is None and cfg.data.val_corpus_dir:
        val_corpus = Corpus(cfg.data.val_corpus_dir, None, cfg.data.logmel_window_ms)
    trainer = StageTrainer(stage, model, cfg, corpus, out_dir, val_corpus)
    if manifest is not None:
        trainer.restore(manifest)
    return trainer


def run_stage(stage, cfg: Config, out_dir, corpus=None, val_corpus=None, resume=None) -> CheckpointManifest:
    """Train one stage and return the manifest of its final checkpoint."""
    return build_trainer(stage, cfg, out_dir, corpus, val_corpus, resume).run()
