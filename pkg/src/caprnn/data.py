"""Dataset ingestion, vocabulary construction, caption encoding, feature
storage, minibatching, and a synthetic grounded corpus for desk-scale runs.

Caption files use the Karpathy JSON layout (top-level "images" array whose
entries carry "split", "filename", and tokenized "sentences").  Feature files
are binary: magic "FEAT0001", u32 count, u32 dim, then count*dim little-endian
float32 values, with row order given by a sidecar "<path>.index" file of image
filenames (one per line, UTF-8, LF).
"""

from __future__ import annotations

import json
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .captioner import END_INDEX, START_INDEX, UNKNOWN_INDEX
from .errors import FormatError, IntegrityError, NumericError, UsageError

START_TOKEN = "<beg>"
END_TOKEN = "<end>"
UNKNOWN_TOKEN = "<unk>"
SPECIAL_TOKENS = (START_TOKEN, END_TOKEN, UNKNOWN_TOKEN)

FEATURE_MAGIC = b"FEAT0001"


@dataclass
class Vocabulary:
    """Bidirectional token/index mapping with the three specials at indices 0-2."""

    index_to_token: list[str]
    threshold: int
    token_to_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.index_to_token[:3]) != SPECIAL_TOKENS:
            raise UsageError(f"vocabulary must start with the specials {SPECIAL_TOKENS}")
        self.token_to_index = {tok: i for i, tok in enumerate(self.index_to_token)}
        if len(self.token_to_index) != len(self.index_to_token):
            raise UsageError("vocabulary contains duplicate tokens")

    @property
    def size(self) -> int:
        return len(self.index_to_token)

    @property
    def start(self) -> int:
        return START_INDEX

    @property
    def end(self) -> int:
        return END_INDEX

    @property
    def unknown(self) -> int:
        return UNKNOWN_INDEX

    def content_tokens(self) -> list[str]:
        return self.index_to_token[3:]

    def encode(self, tokens) -> list[int]:
        body = [self.token_to_index.get(t.lower(), UNKNOWN_INDEX) for t in tokens]
        return [START_INDEX] + body + [END_INDEX]

    def decode(self, indices, strip_specials: bool = True) -> list[str]:
        toks = [self.index_to_token[i] for i in indices]
        if strip_specials:
            toks = [t for t in toks if t not in SPECIAL_TOKENS]
        return toks

    def save(self, path) -> None:
        payload = {"threshold": self.threshold, "tokens": self.index_to_token}
        Path(path).write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls(index_to_token=list(payload["tokens"]), threshold=int(payload["threshold"]))
        except (KeyError, ValueError) as exc:
            raise FormatError(f"unreadable vocabulary file {path}: {exc}") from exc


@dataclass
class CaptionRecord:
    image_id: str
    caption_id: int
    tokens: list[str]


@dataclass
class ImageEntry:
    image_id: str
    feature: np.ndarray
    captions: list[CaptionRecord]


@dataclass
class DatasetSplit:
    train: list[ImageEntry]
    val: list[ImageEntry]
    test: list[ImageEntry]

    def part(self, name: str) -> list[ImageEntry]:
        try:
            return getattr(self, name)
        except AttributeError:
            raise UsageError(f"unknown split {name!r}; expected train, val, or test") from None


@dataclass
class Minibatch:
    """Padded token-index matrix with true lengths and aligned feature rows."""

    tokens: np.ndarray
    lengths: np.ndarray
    features: np.ndarray

    @property
    def size(self) -> int:
        return self.tokens.shape[0]


def build_vocab(train_captions, threshold: int) -> Vocabulary:
    """Tokens with training frequency >= threshold, plus the specials.

    Index order is deterministic: specials first, then by descending
    frequency with lexicographic tie-breaking.
    """
    if threshold < 1:
        raise UsageError(f"threshold must be at least 1, got {threshold}")
    counts = Counter()
    for tokens in train_captions:
        counts.update(t.lower() for t in tokens)
    if not counts:
        raise UsageError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= threshold),
                  key=lambda t: (-counts[t], t))
    return Vocabulary(index_to_token=list(SPECIAL_TOKENS) + kept, threshold=threshold)


def encode_caption(tokens, vocab: Vocabulary) -> list[int]:
    """[start] + mapped tokens (out-of-vocabulary -> unknown) + [end]."""
    return vocab.encode(tokens)


def normalize_feature(vector: np.ndarray) -> np.ndarray:
    vec = np.asarray(vector, dtype=np.float32)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0 or not np.isfinite(norm):
        raise NumericError("cannot normalize a zero or non-finite feature vector")
    return vec / norm


def load_karpathy_captions(path) -> dict:
    """Parse a Karpathy-layout caption file into {split: [(image_id, [token lists])]}."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"caption file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        images = payload["images"]
    except (ValueError, KeyError) as exc:
        raise FormatError(f"caption file {path} is not Karpathy-layout JSON: {exc}") from exc
    splits: dict = {"train": [], "val": [], "test": []}
    for entry in images:
        try:
            split = entry["split"]
            filename = entry["filename"]
            sentences = [list(s["tokens"]) for s in entry["sentences"]]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"caption file {path} has a malformed image entry: {exc}") from exc
        if split not in splits:
            raise FormatError(f"caption file {path} uses unsupported split {split!r}")
        splits[split].append((filename, sentences))
    return splits


def read_feature_file(path) -> np.ndarray:
    """Read a FEAT0001 binary feature file into a (count, dim) float32 array."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"feature file not found: {path}")
    blob = path.read_bytes()
    if blob[:8] != FEATURE_MAGIC:
        raise FormatError(f"feature file {path} has bad magic {blob[:8]!r}")
    if len(blob) < 16:
        raise FormatError(f"feature file {path} is truncated before its header")
    count, dim = struct.unpack("<II", blob[8:16])
    expected = 16 + count * dim * 4
    if len(blob) != expected:
        raise FormatError(
            f"feature file {path} holds {len(blob)} bytes, expected {expected} for {count}x{dim}")
    data = np.frombuffer(blob, dtype="<f4", offset=16)
    return data.reshape(count, dim).copy()


def read_feature_index(path) -> list[str]:
    index_path = Path(str(path) + ".index")
    if not index_path.exists():
        raise FileNotFoundError(f"feature index file not found: {index_path}")
    lines = index_path.read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def write_feature_file(path, names, matrix: np.ndarray) -> None:
    """Write features in the FEAT0001 format plus the sidecar index file."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2 or matrix.shape[0] != len(names):
        raise UsageError(f"feature matrix shape {matrix.shape} does not match {len(names)} names")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.tobytes())
    Path(str(path) + ".index").write_text("".join(n + "\n" for n in names), encoding="utf-8")


def load_dataset(caption_path, feature_path, normalize: bool = True) -> DatasetSplit:
    """Join captions with their image feature rows into train/val/test splits."""
    splits = load_karpathy_captions(caption_path)
    features = read_feature_file(feature_path)
    names = read_feature_index(feature_path)
    if len(names) != features.shape[0]:
        raise FormatError(
            f"feature index lists {len(names)} names for {features.shape[0]} rows")
    row_of = {name: k for k, name in enumerate(names)}
    out: dict = {}
    caption_id = 0
    for split, entries in splits.items():
        images = []
        for image_id, sentences in entries:
            if image_id not in row_of:
                raise IntegrityError(f"image {image_id} has no feature row")
            vec = features[row_of[image_id]]
            if normalize:
                vec = normalize_feature(vec)
            captions = []
            for tokens in sentences:
                captions.append(CaptionRecord(image_id=image_id, caption_id=caption_id, tokens=tokens))
                caption_id += 1
            images.append(ImageEntry(image_id=image_id, feature=vec, captions=captions))
        out[split] = images
    return DatasetSplit(train=out["train"], val=out["val"], test=out["test"])


def make_batches(entries, vocab: Vocabulary, batch_size: int = 50, seed: int = 0) -> list[Minibatch]:
    """Shuffle all captions of a split deterministically and chunk them.

    Every caption appears exactly once; the last batch may be smaller.
    Token rows are padded with the end index, and `lengths` marks how much
    of each row is real so padding never contributes to the loss.
    """
    if batch_size < 1:
        raise UsageError(f"batch_size must be positive, got {batch_size}")
    pairs = [(entry, rec) for entry in entries for rec in entry.captions]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = rng.permutation(len(pairs))
    batches = []
    for lo in range(0, len(pairs), batch_size):
        chunk = [pairs[k] for k in order[lo:lo + batch_size]]
        encoded = [vocab.encode(rec.tokens) for _, rec in chunk]
        lengths = np.array([len(e) for e in encoded], dtype=np.int64)
        width = int(lengths.max())
        tokens = np.full((len(chunk), width), END_INDEX, dtype=np.int64)
        for r, enc in enumerate(encoded):
            tokens[r, : len(enc)] = enc
        feats = np.stack([entry.feature for entry, _ in chunk])
        batches.append(Minibatch(tokens=tokens, lengths=lengths, features=feats))
    return batches


# -- synthetic grounded corpus ------------------------------------------------

_SLOT_STEMS = ("color", "animal", "action", "place")
_GLUE = ("the", "on")


def _slot_pools(vocab_size: int) -> list[list[str]]:
    per_slot = max(2, (vocab_size - len(SPECIAL_TOKENS) - len(_GLUE)) // len(_SLOT_STEMS))
    return [[f"{stem}{k}" for k in range(per_slot)] for stem in _SLOT_STEMS]


def _synth_caption(feature: np.ndarray, pools: list[list[str]]) -> list[str]:
    words = []
    for j, pool in enumerate(pools):
        # bucket the j-th component of the unit vector into the pool
        frac = (float(feature[j]) + 1.0) / 2.0
        words.append(pool[min(len(pool) - 1, int(frac * len(pool)))])
    color, animal, action, place = words
    return ["the", color, animal, action, "on", "the", place]


def synth_corpus(n_images: int = 8, vocab_size: int = 20, seed: int = 0,
                 feature_dim: int = 8) -> DatasetSplit:
    """Random unit feature vectors with captions that are a deterministic
    function of the features, so a model can learn them exactly.

    Each image carries five identical caption records (the grammar is
    deterministic given the feature).  Eight images split 6/1/1; larger
    corpora put one eighth of the images in each of val and test.
    """
    if n_images < 2:
        raise UsageError(f"synth_corpus needs at least 2 images, got {n_images}")
    rng = np.random.default_rng(seed)
    pools = _slot_pools(vocab_size)
    entries = []
    caption_id = 0
    for k in range(n_images):
        vec = rng.standard_normal(feature_dim).astype(np.float32)
        vec = normalize_feature(vec)
        image_id = f"synth_{k:04d}.jpg"
        tokens = _synth_caption(vec, pools)
        captions = []
        for _ in range(5):
            captions.append(CaptionRecord(image_id=image_id, caption_id=caption_id, tokens=tokens))
            caption_id += 1
        entries.append(ImageEntry(image_id=image_id, feature=vec, captions=captions))
    side = max(1, n_images // 8)
    train = entries[: n_images - 2 * side]
    return DatasetSplit(train=train, val=entries[len(train):len(train) + side],
                        test=entries[len(train) + side:])


def write_caption_json(path, split: DatasetSplit) -> None:
    """Materialize a DatasetSplit's captions in the Karpathy JSON layout."""
    images = []
    for name, entries in (("train", split.train), ("val", split.val), ("test", split.test)):
        for entry in entries:
            images.append({
                "split": name,
                "filename": entry.image_id,
                "sentences": [{"tokens": rec.tokens} for rec in entry.captions],
            })
    Path(path).write_text(json.dumps({"images": images}), encoding="utf-8")


def write_dataset_dir(out_dir, split: DatasetSplit) -> None:
    """Write captions.json plus features.bin/.index for a whole dataset."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_caption_json(out / "captions.json", split)
    entries = [*split.train, *split.val, *split.test]
    names = [e.image_id for e in entries]
    write_feature_file(out / "features.bin", names, np.stack([e.feature for e in entries]))
