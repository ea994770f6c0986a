"""Corpus-level caption metrics: BLEU-(1..4), ROUGE-L, CIDEr-D, and the
percentage of the training vocabulary exercised by generated captions.

The BLEU and CIDEr-D formulations follow the MSCOCO evaluation conventions:
corpus-level clipped precisions with the closest-reference-length brevity
penalty for BLEU, and tf-idf weighted n-gram cosines with count clipping and
a Gaussian length penalty (sigma 6, scaled by 10) for CIDEr-D.  ROUGE-L is
the LCS F-measure with beta 1.2, maximized over references per image.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .data import SPECIAL_TOKENS, Vocabulary
from .errors import FormatError, UsageError

ROUGE_BETA = 1.2
CIDER_SIGMA = 6.0
CIDER_MAX_N = 4


class EvalCorpus:
    """Per image: one hypothesis token sequence and its reference sequences."""

    def __init__(self, entries: dict):
        self.entries = {}
        for image_id, (hyp, refs) in entries.items():
            if not refs:
                raise UsageError(f"image {image_id} has a hypothesis but no references")
            self.entries[image_id] = (
                [t.lower() for t in hyp],
                [[t.lower() for t in ref] for ref in refs],
            )

    def __len__(self) -> int:
        return len(self.entries)

    def image_ids(self) -> list[str]:
        return sorted(self.entries)

    def hypotheses(self) -> list[list[str]]:
        return [self.entries[i][0] for i in self.image_ids()]


@dataclass
class MetricReport:
    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    rouge_l: float
    cider: float
    vocab_usage_percent: float

    def as_dict(self) -> dict:
        return {
            "bleu1": self.bleu1, "bleu2": self.bleu2, "bleu3": self.bleu3,
            "bleu4": self.bleu4, "rouge_l": self.rouge_l, "cider": self.cider,
            "vocab_usage_percent": self.vocab_usage_percent,
        }


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(corpus: EvalCorpus, n: int) -> float:
    """Corpus-level BLEU-n: geometric mean of clipped k-gram precisions for
    k = 1..n, times the brevity penalty exp(min(0, 1 - r/c))."""
    if not 1 <= n <= 4:
        raise UsageError(f"BLEU order must be between 1 and 4, got {n}")
    if len(corpus) == 0:
        raise UsageError("cannot score an empty corpus")
    correct = [0] * n
    guess = [0] * n
    hyp_len = 0
    ref_len = 0
    for image_id in corpus.image_ids():
        hyp, refs = corpus.entries[image_id]
        hyp_len += len(hyp)
        # closest reference length; ties broken toward the shorter reference
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
        for k in range(1, n + 1):
            counts = _ngram_counts(hyp, k)
            max_ref: dict = {}
            for ref in refs:
                for gram, c in _ngram_counts(ref, k).items():
                    if c > max_ref.get(gram, 0):
                        max_ref[gram] = c
            correct[k - 1] += sum(min(c, max_ref.get(g, 0)) for g, c in counts.items())
            guess[k - 1] += max(0, len(hyp) - k + 1)
    if hyp_len == 0 or any(c == 0 or g == 0 for c, g in zip(correct, guess)):
        return 0.0
    log_precision = sum(math.log(c / g) for c, g in zip(correct, guess)) / n
    brevity = math.exp(min(0.0, 1.0 - ref_len / hyp_len))
    return brevity * math.exp(log_precision)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def _rouge_pair(hyp: list[str], ref: list[str]) -> float:
    lcs = _lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(hyp)
    recall = lcs / len(ref)
    b2 = ROUGE_BETA ** 2
    return (1 + b2) * precision * recall / (recall + b2 * precision)


def rouge_l_scores(corpus: EvalCorpus) -> dict:
    """Per-image best LCS F-measure against any reference; empty hypotheses score 0."""
    if len(corpus) == 0:
        raise UsageError("cannot score an empty corpus")
    scores = {}
    for image_id in corpus.image_ids():
        hyp, refs = corpus.entries[image_id]
        scores[image_id] = max(_rouge_pair(hyp, ref) for ref in refs) if hyp else 0.0
    return scores


def rouge_l(corpus: EvalCorpus) -> float:
    """Mean over images of the best LCS F-measure against any reference."""
    scores = rouge_l_scores(corpus)
    return sum(scores.values()) / len(scores)


def _tfidf(tokens: list[str], doc_freq: Counter, log_n: float):
    vecs = []
    norms = []
    for k in range(1, CIDER_MAX_N + 1):
        vec = {}
        sq = 0.0
        for gram, tf in _ngram_counts(tokens, k).items():
            w = tf * (log_n - math.log(max(1.0, doc_freq[gram])))
            vec[gram] = w
            sq += w * w
        vecs.append(vec)
        norms.append(math.sqrt(sq))
    return vecs, norms


def cider_scores(corpus: EvalCorpus) -> dict:
    """Per-image CIDEr-D, with document frequencies from the whole corpus."""
    if len(corpus) < 2:
        raise UsageError("CIDEr needs at least two images to estimate document frequencies")
    doc_freq: Counter = Counter()
    for image_id in corpus.image_ids():
        _, refs = corpus.entries[image_id]
        seen = set()
        for ref in refs:
            for k in range(1, CIDER_MAX_N + 1):
                seen.update(_ngram_counts(ref, k))
        doc_freq.update(seen)
    log_n = math.log(len(corpus))
    scores = {}
    for image_id in corpus.image_ids():
        hyp, refs = corpus.entries[image_id]
        hyp_vecs, hyp_norms = _tfidf(hyp, doc_freq, log_n)
        acc = [0.0] * CIDER_MAX_N
        for ref in refs:
            ref_vecs, ref_norms = _tfidf(ref, doc_freq, log_n)
            penalty = math.exp(-((len(hyp) - len(ref)) ** 2) / (2.0 * CIDER_SIGMA ** 2))
            for k in range(CIDER_MAX_N):
                dot = 0.0
                for gram, hw in hyp_vecs[k].items():
                    rw = ref_vecs[k].get(gram, 0.0)
                    dot += min(hw, rw) * rw
                if hyp_norms[k] != 0.0 and ref_norms[k] != 0.0:
                    dot /= hyp_norms[k] * ref_norms[k]
                acc[k] += dot * penalty
        scores[image_id] = sum(acc) / CIDER_MAX_N / len(refs) * 10.0
    return scores


def cider(corpus: EvalCorpus) -> float:
    """CIDEr-D: clipped tf-idf n-gram cosines (n = 1..4) with a Gaussian
    length penalty, averaged over references and n, scaled by 10."""
    scores = cider_scores(corpus)
    return sum(scores.values()) / len(scores)


def vocab_usage(hypotheses, vocab: Vocabulary) -> float:
    """Share of the non-special vocabulary that appears in generated captions,
    as a percentage."""
    content = set(vocab.content_tokens())
    if not content:
        return 0.0
    used = set()
    for hyp in hypotheses:
        used.update(t.lower() for t in hyp)
    used -= set(SPECIAL_TOKENS)
    return 100.0 * len(used & content) / len(content)


def evaluate(corpus: EvalCorpus, vocab: Vocabulary) -> MetricReport:
    """All metrics over one corpus; deterministic in corpus and vocabulary."""
    return MetricReport(
        bleu1=bleu(corpus, 1),
        bleu2=bleu(corpus, 2),
        bleu3=bleu(corpus, 3),
        bleu4=bleu(corpus, 4),
        rouge_l=rouge_l(corpus),
        cider=cider(corpus),
        vocab_usage_percent=vocab_usage(corpus.hypotheses(), vocab),
    )


def write_metric_report(path, report: MetricReport) -> None:
    """Flat key-value lines, "metric<TAB>value" at 6 decimal places."""
    lines = [f"{key}\t{value:.6f}\n" for key, value in report.as_dict().items()]
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_metric_report(path) -> MetricReport:
    values = {}
    for line in Path(path).read_text(encoding="utf-8").split("\n"):
        if not line:
            continue
        key, _, value = line.partition("\t")
        values[key] = float(value)
    try:
        return MetricReport(**values)
    except TypeError as exc:
        raise FormatError(f"metric report {path} is missing fields: {exc}") from exc
