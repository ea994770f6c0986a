"""Beam-search caption generation, with a greedy baseline for debugging.

The search drives any object exposing ``decode_start(feature)`` and
``decode_step(state, tokens)`` returning next-token logits, which is what
:class:`~caprnn.captioner.CaptionModel` provides.  Scores are raw cumulative
log-probabilities; no length normalization is applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .captioner import END_INDEX, START_INDEX, UNKNOWN_INDEX
from .errors import UsageError

_SPECIALS = (START_INDEX, END_INDEX, UNKNOWN_INDEX)


@dataclass(frozen=True)
class Hypothesis:
    """Emitted tokens (start excluded; end not stored) and their cumulative score."""

    tokens: tuple
    logprob: float
    finished: bool


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64, copy=False)
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    with np.errstate(divide="ignore"):
        return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def beam_search_hypotheses(model, feature, width: int = 3, max_len: int = 20) -> list[Hypothesis]:
    """All finished hypotheses, best first.

    Each round expands every active hypothesis with all vocabulary
    continuations and keeps the top `width` by cumulative log-probability.
    Emitting the end token finalizes a hypothesis; reaching `max_len` emitted
    tokens finalizes it as-is.
    """
    if width < 1:
        raise UsageError(f"beam width must be at least 1, got {width}")
    if max_len < 1:
        raise UsageError(f"max_len must be at least 1, got {max_len}")
    logits, state = model.decode_start(np.asarray(feature))
    logp = _log_softmax(logits)
    vocab = logp.shape[-1]
    active_tokens: list[tuple] = [()]
    active_scores = np.zeros(1, dtype=np.float64)
    finished: list[Hypothesis] = []
    while active_tokens:
        candidates = (active_scores[:, None] + logp).reshape(-1)
        top = np.argsort(-candidates, kind="stable")[: min(width, candidates.size)]
        next_tokens: list[tuple] = []
        next_scores: list[float] = []
        parent_rows: list[int] = []
        step_tokens: list[int] = []
        for pos in top:
            parent, tok = divmod(int(pos), vocab)
            score = float(candidates[pos])
            if tok == END_INDEX:
                finished.append(Hypothesis(active_tokens[parent], score, True))
            elif len(active_tokens[parent]) + 1 >= max_len:
                finished.append(Hypothesis(active_tokens[parent] + (tok,), score, True))
            else:
                next_tokens.append(active_tokens[parent] + (tok,))
                next_scores.append(score)
                parent_rows.append(parent)
                step_tokens.append(tok)
        if not next_tokens:
            break
        logits, state = model.decode_step(state.select(parent_rows), np.asarray(step_tokens))
        logp = _log_softmax(logits)
        active_scores = np.array(next_scores, dtype=np.float64)
        active_tokens = next_tokens
    finished.sort(key=lambda h: -h.logprob)
    return finished


def strip_specials(tokens) -> list[int]:
    return [t for t in tokens if t not in _SPECIALS]


def beam_search(model, feature, width: int = 3, max_len: int = 20) -> list[int]:
    """Best finished hypothesis with special tokens stripped."""
    hyps = beam_search_hypotheses(model, feature, width=width, max_len=max_len)
    return strip_specials(hyps[0].tokens) if hyps else []


def greedy_decode(model, feature, max_len: int = 20) -> list[int]:
    """Follow the argmax token at every step; equals beam search at width 1."""
    if max_len < 1:
        raise UsageError(f"max_len must be at least 1, got {max_len}")
    logits, state = model.decode_start(np.asarray(feature))
    emitted = []
    while True:
        logp = _log_softmax(logits[0])
        tok = int(np.argmax(logp))
        if tok == END_INDEX:
            break
        emitted.append(tok)
        if len(emitted) >= max_len:
            break
        logits, state = model.decode_step(state, np.array([tok]))
    return strip_specials(emitted)


def write_hypotheses(path, captions: dict) -> None:
    """One line per image: "image_id<TAB>caption tokens space-separated"."""
    lines = []
    for image_id in captions:
        lines.append(f"{image_id}\t{' '.join(captions[image_id])}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_hypotheses(path) -> dict:
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for line in text.split("\n"):
        if not line:
            continue
        image_id, _, caption = line.partition("\t")
        out[image_id] = caption.split() if caption else []
    return out
