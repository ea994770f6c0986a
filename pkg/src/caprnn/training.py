"""Training protocol: epoch loop with validation-based early stopping,
multi-seed experiment orchestration, and the run manifest format."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .captioner import CaptionModel, ModelConfig, build_model, caption_loss_batch, save_checkpoint
from .data import DatasetSplit, Minibatch, Vocabulary, make_batches
from .errors import DivergenceError, NumericError, UsageError
from .nn import adam_step


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_tokens: int
    val_loss: float
    val_tokens: int

    @property
    def train_loss_per_token(self) -> float:
        return self.train_loss / max(1, self.train_tokens)

    @property
    def val_loss_per_token(self) -> float:
        return self.val_loss / max(1, self.val_tokens)


@dataclass
class TrainState:
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")

    @property
    def epochs(self) -> int:
        return len(self.history)


@dataclass
class PreparedData:
    """A dataset split together with the vocabulary it was encoded against."""

    split: DatasetSplit
    vocab: Vocabulary


@dataclass
class RunSpec:
    config: ModelConfig
    data: PreparedData
    seeds: tuple
    out_dir: Path

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if len(set(self.seeds)) != len(self.seeds):
            raise UsageError(f"run seeds must be distinct, got {tuple(self.seeds)}")


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def _eval_batches(entries, vocab: Vocabulary, batch_size: int) -> list[Minibatch]:
    # deterministic corpus order; reuse the batch builder with a fixed layout
    pairs = [(entry, rec) for entry in entries for rec in entry.captions]
    batches = []
    for lo in range(0, len(pairs), batch_size):
        chunk = pairs[lo:lo + batch_size]
        encoded = [vocab.encode(rec.tokens) for _, rec in chunk]
        lengths = np.array([len(e) for e in encoded], dtype=np.int64)
        width = int(lengths.max())
        tokens = np.full((len(chunk), width), vocab.end, dtype=np.int64)
        for r, enc in enumerate(encoded):
            tokens[r, : len(enc)] = enc
        feats = np.stack([entry.feature for entry, _ in chunk])
        batches.append(Minibatch(tokens=tokens, lengths=lengths, features=feats))
    return batches


def validate(model: CaptionModel, entries, vocab: Vocabulary, batch_size: int = 50) -> float:
    """Sum cross-entropy over all captions of a split; mutates nothing."""
    total = 0.0
    for batch in _eval_batches(entries, vocab, batch_size):
        loss = caption_loss_batch(model, batch.features, batch.tokens, batch.lengths)
        total += float(loss.data)
    return total


def _token_count(entries, vocab: Vocabulary) -> int:
    return sum(len(vocab.encode(rec.tokens)) - 1 for e in entries for rec in e.captions)


def train(run: RunSpec, seed: int, *, max_epochs: int = 100, batch_size: int = 50,
          learning_rate: float = 0.001, early_stopping: bool = True,
          restore_best: bool | None = None, validate_fn=None):
    """Train one model to the early-stopping rule; returns (model, TrainState).

    Stops as soon as validation loss exceeds the previous epoch's (checked
    once two epochs have completed) and restores the parameters of the best
    validation epoch.  ``validate_fn(model) -> float`` overrides the real
    validation pass; ``restore_best`` defaults to ``early_stopping`` so that
    fixed-epoch runs keep their final parameters.
    """
    if restore_best is None:
        restore_best = early_stopping
    model = build_model(run.config, seed)
    vocab = run.data.vocab
    val_tokens = _token_count(run.data.split.val, vocab)
    state = TrainState()
    snapshot = None
    prev_val = None
    step = 0
    for epoch in range(1, max_epochs + 1):
        batches = make_batches(run.data.split.train, vocab, batch_size,
                               seed=_epoch_seed(seed, epoch))
        train_loss = 0.0
        train_tokens = 0
        for bi, batch in enumerate(batches):
            try:
                loss = caption_loss_batch(model, batch.features, batch.tokens, batch.lengths)
            except NumericError as exc:
                raise DivergenceError(
                    f"non-finite values at epoch {epoch}, batch {bi}: {exc}",
                    epoch=epoch, batch=bi) from exc
            value = float(loss.data)
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite training loss at epoch {epoch}, batch {bi}",
                    epoch=epoch, batch=bi)
            loss.backward()
            step += 1
            adam_step(model.parameters(), step, lr=learning_rate)
            train_loss += value
            train_tokens += int((batch.lengths - 1).sum())
        if validate_fn is not None:
            val_loss = float(validate_fn(model))
        else:
            val_loss = validate(model, run.data.split.val, vocab, batch_size)
        state.history.append(EpochStats(epoch, train_loss, train_tokens, val_loss, val_tokens))
        if val_loss < state.best_val_loss:
            state.best_val_loss = val_loss
            state.best_epoch = epoch
            snapshot = [p.value.copy() for p in model.parameters()]
        if early_stopping and prev_val is not None and val_loss > prev_val:
            break
        prev_val = val_loss
    if restore_best and snapshot is not None:
        for p, value in zip(model.parameters(), snapshot):
            p.value = value
    return model, state


@dataclass
class RunResult:
    seed: int
    best_val_loss: float
    epochs: int
    checkpoint_path: Path


def manifest_path(out_dir) -> Path:
    return Path(out_dir) / "manifest.tsv"


def read_manifest(path) -> list[RunResult]:
    results = []
    for line in Path(path).read_text(encoding="utf-8").split("\n"):
        if not line:
            continue
        seed, best, epochs, ckpt = line.split("\t")
        results.append(RunResult(int(seed), float(best), int(epochs), Path(ckpt)))
    return results


def run_experiment(run: RunSpec, **train_kwargs) -> list[RunResult]:
    """Train once per seed, checkpointing each run and appending to the manifest.

    A failing run propagates its error; checkpoints and manifest rows of
    already-completed runs are preserved.
    """
    run.out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    with open(manifest_path(run.out_dir), "w", encoding="utf-8") as fh:
        for seed in run.seeds:
            model, state = train(run, seed, **train_kwargs)
            ckpt = run.out_dir / f"checkpoint_seed{seed}.bin"
            save_checkpoint(model, ckpt)
            fh.write(f"{seed}\t{state.best_val_loss!r}\t{state.epochs}\t{ckpt}\n")
            fh.flush()
            results.append(RunResult(seed, state.best_val_loss, state.epochs, ckpt))
    return results
