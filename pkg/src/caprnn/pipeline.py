"""End-to-end experiment pipeline over dataset directories.

A dataset directory holds ``captions.json`` (Karpathy layout) plus
``features.bin``/``features.bin.index``.  Preparation adds per-threshold
vocabulary files ``vocab_<t>.json``, a ``vocab_sizes.tsv`` summary, and
rewrites features unit-normalized.  Grid runs lay out one subdirectory per
(architecture, layer, threshold) cell containing checkpoints, a manifest,
per-seed hypothesis files, and per-seed metric reports.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import decoding
from .captioner import CaptionModel, ModelConfig, load_checkpoint
from .data import (
    DatasetSplit,
    Vocabulary,
    load_dataset,
    synth_corpus,
    write_dataset_dir,
)
from .errors import IntegrityError, UsageError
from .metrics import EvalCorpus, MetricReport, evaluate, write_metric_report
from .training import PreparedData, RunResult, RunSpec, run_experiment


def captions_path(dataset_dir) -> Path:
    return Path(dataset_dir) / "captions.json"


def features_path(dataset_dir) -> Path:
    return Path(dataset_dir) / "features.bin"


def vocab_path(dataset_dir, threshold: int) -> Path:
    return Path(dataset_dir) / f"vocab_{threshold}.json"


def load_split(dataset_dir) -> DatasetSplit:
    return load_dataset(captions_path(dataset_dir), features_path(dataset_dir))


def load_vocab(dataset_dir, threshold: int) -> Vocabulary:
    """The prepared vocabulary for a threshold, built on the fly if absent."""
    path = vocab_path(dataset_dir, threshold)
    if path.exists():
        return Vocabulary.load(path)
    split = load_split(dataset_dir)
    from .data import build_vocab

    return build_vocab([r.tokens for e in split.train for r in e.captions], threshold)


def load_prepared(dataset_dir, threshold: int) -> PreparedData:
    return PreparedData(split=load_split(dataset_dir), vocab=load_vocab(dataset_dir, threshold))


def prep(dataset_dir, out_dir, thresholds=(3, 4, 5)) -> dict:
    """Normalize features, build per-threshold vocabularies, write summaries."""
    from .data import build_vocab

    split = load_split(dataset_dir)  # load_dataset normalizes features
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset_dir(out, split)
    train_tokens = [r.tokens for e in split.train for r in e.captions]
    vocab_sizes = {}
    for t in thresholds:
        vocab = build_vocab(train_tokens, t)
        vocab.save(vocab_path(out, t))
        vocab_sizes[t] = vocab.size
    summary = "".join(f"{t}\t{v}\n" for t, v in sorted(vocab_sizes.items()))
    (out / "vocab_sizes.tsv").write_text(summary, encoding="utf-8")
    return {
        "out_dir": str(out),
        "vocab_sizes": vocab_sizes,
        "splits": {"train": len(split.train), "val": len(split.val), "test": len(split.test)},
    }


def synth_dataset(out_dir, n_images: int = 8, vocab_size: int = 20, seed: int = 0,
                  feature_dim: int = 8) -> dict:
    """Materialize a synthetic corpus in the on-disk dataset format."""
    split = synth_corpus(n_images=n_images, vocab_size=vocab_size, seed=seed,
                         feature_dim=feature_dim)
    write_dataset_dir(out_dir, split)
    captions = sum(len(e.captions) for e in (*split.train, *split.val, *split.test))
    return {"out_dir": str(out_dir), "images": n_images, "captions": captions,
            "feature_dim": feature_dim}


def train_runs(dataset_dir, out_dir, arch: str, layer: int, min_freq: int,
               seeds, precision: int = 32, image_dim: int | None = None,
               **train_kwargs) -> list[RunResult]:
    """Run the multi-seed training protocol for one grid cell."""
    prepared = load_prepared(dataset_dir, min_freq)
    if image_dim is None:
        image_dim = int(prepared.split.train[0].feature.shape[0])
    config = ModelConfig(architecture=arch, layer_size=layer, vocab_size=prepared.vocab.size,
                         image_dim=image_dim, min_freq=min_freq, precision=precision)
    spec = RunSpec(config=config, data=prepared, seeds=tuple(seeds), out_dir=Path(out_dir))
    return run_experiment(spec, **train_kwargs)


def _vocab_for_model(dataset_dir, model: CaptionModel) -> Vocabulary:
    vocab = load_vocab(dataset_dir, model.config.min_freq)
    if vocab.size != model.config.vocab_size:
        raise IntegrityError(
            f"checkpoint expects vocabulary of size {model.config.vocab_size} but threshold "
            f"{model.config.min_freq} yields {vocab.size}; was the dataset re-prepared?")
    return vocab


def generate(checkpoint, dataset_dir, out_path, split: str = "test", width: int = 3,
             max_len: int = 20) -> dict:
    """Beam-decode every image of a split into the hypothesis file format."""
    model = load_checkpoint(checkpoint)
    vocab = _vocab_for_model(dataset_dir, model)
    entries = load_split(dataset_dir).part(split)
    captions = {}
    for entry in entries:
        indices = decoding.beam_search(model, entry.feature, width=width, max_len=max_len)
        captions[entry.image_id] = [vocab.index_to_token[i] for i in indices]
    decoding.write_hypotheses(out_path, captions)
    return {"out_path": str(out_path), "count": len(captions)}


def evaluate_hypotheses(hyp_path, dataset_dir, min_freq: int = 3,
                        split: str = "test", out_path=None) -> MetricReport:
    """Score a hypothesis file against the split's references."""
    hyps = decoding.read_hypotheses(hyp_path)
    if not hyps:
        raise UsageError(f"hypothesis file {hyp_path} is empty")
    refs = {e.image_id: [r.tokens for r in e.captions]
            for e in load_split(dataset_dir).part(split)}
    entries = {}
    for image_id, hyp in hyps.items():
        if image_id not in refs:
            raise IntegrityError(f"hypothesis image {image_id} is not in the {split} split")
        entries[image_id] = (hyp, refs[image_id])
    corpus = EvalCorpus(entries)
    report = evaluate(corpus, load_vocab(dataset_dir, min_freq))
    if out_path is not None:
        write_metric_report(out_path, report)
    return report


def caption_feature(checkpoint, feature, width: int = 3, max_len: int = 20,
                    vocab: Vocabulary | None = None, model: CaptionModel | None = None) -> dict:
    """Caption one raw feature vector; tokens as indices, words when a vocabulary is given."""
    if model is None:
        model = load_checkpoint(checkpoint)
    feat = np.asarray(feature, dtype=np.float32)
    norm = float(np.linalg.norm(feat))
    if norm > 0:
        feat = feat / norm
    hyps = decoding.beam_search_hypotheses(model, feat, width=width, max_len=max_len)
    best = hyps[0]
    indices = decoding.strip_specials(best.tokens)
    out = {"tokens": indices, "logprob": best.logprob, "words": None}
    if vocab is not None:
        out["words"] = [vocab.index_to_token[i] for i in indices]
    return out


def cell_name(arch: str, layer: int, min_freq: int) -> str:
    return f"{arch}_x{layer}_t{min_freq}"


def run_grid(dataset_dir, out_dir, archs=("merge", "inject"), layers=(128, 256, 512),
             min_freqs=(3, 4, 5), seeds=(1, 2, 3), width: int = 3, max_len: int = 20,
             precision: int = 32, **train_kwargs) -> list[dict]:
    """Train, decode, and score every grid cell; one subdirectory per cell."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = []
    for min_freq in min_freqs:
        vocab = load_vocab(dataset_dir, min_freq)
        for layer in layers:
            for arch in archs:
                cell_dir = out / cell_name(arch, layer, min_freq)
                results = train_runs(dataset_dir, cell_dir, arch, layer, min_freq, seeds,
                                     precision=precision, **train_kwargs)
                metric_files = []
                for res in results:
                    hyp_path = cell_dir / f"hypotheses_seed{res.seed}.tsv"
                    generate(res.checkpoint_path, dataset_dir, hyp_path,
                             split="test", width=width, max_len=max_len)
                    metrics_path = cell_dir / f"metrics_seed{res.seed}.tsv"
                    evaluate_hypotheses(hyp_path, dataset_dir, min_freq=min_freq,
                                        split="test", out_path=metrics_path)
                    metric_files.append(str(metrics_path))
                cell = {"arch": arch, "layer": layer, "min_freq": min_freq,
                        "vocab_size": vocab.size, "seeds": list(seeds),
                        "metric_files": metric_files}
                (cell_dir / "cell.json").write_text(json.dumps(cell, indent=2), encoding="utf-8")
                cells.append(cell)
    return cells
