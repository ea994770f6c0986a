"""The two caption-generator architectures and their shared plumbing.

Both models share a word embedding, a linear image projection, an LSTM cell,
and a dense softmax output layer.  They differ only in where the image
enters: the "inject" model concatenates the projected image with every word
embedding fed to the LSTM, while the "merge" model runs the LSTM over words
alone and concatenates the projected image with the final hidden state just
before the output layer.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .errors import ConfigError, FormatError, UsageError

ARCHITECTURES = ("inject", "merge")
DEFAULT_LAYER_SIZES = (128, 256, 512)
DEFAULT_THRESHOLDS = (3, 4, 5)

START_INDEX = 0
END_INDEX = 1
UNKNOWN_INDEX = 2

CHECKPOINT_MAGIC = b"CAPRNN01"


@dataclass(frozen=True)
class ModelConfig:
    """Architecture choice plus the sizes that fully determine a model.

    ``layer_size`` is the shared extent of the word embedding, the LSTM
    state, and the projected image vector.  ``vocab_size`` counts the three
    special tokens.
    """

    architecture: str
    layer_size: int
    vocab_size: int
    image_dim: int = 4096
    min_freq: int = 3
    precision: int = 32
    seed: int = 0

    def validate(self) -> None:
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.layer_size < 1:
            raise ConfigError(f"layer_size must be positive, got {self.layer_size}")
        if self.vocab_size < 4:
            raise ConfigError(f"vocab_size must be at least 4 (specials plus one word), got {self.vocab_size}")
        if self.image_dim < 1:
            raise ConfigError(f"image_dim must be positive, got {self.image_dim}")
        if self.min_freq < 1:
            raise ConfigError(f"min_freq must be at least 1, got {self.min_freq}")
        if self.precision not in (32, 64):
            raise ConfigError(f"precision must be 32 or 64, got {self.precision}")

    @property
    def lstm_input_size(self) -> int:
        return 2 * self.layer_size if self.architecture == "inject" else self.layer_size

    @property
    def output_input_size(self) -> int:
        return self.layer_size if self.architecture == "inject" else 2 * self.layer_size


class _Wired:
    """Leaf tensors for one forward pass, so each parameter gets one graph node."""

    __slots__ = ("embedding", "proj_w", "proj_b", "cell", "out_w", "out_b")

    def __init__(self, model: "CaptionModel"):
        self.embedding = model.embedding.as_tensor()
        self.proj_w = model.proj_w.as_tensor()
        self.proj_b = model.proj_b.as_tensor()
        self.cell = model.cell.wired()
        self.out_w = model.out_w.as_tensor()
        self.out_b = model.out_b.as_tensor()


@dataclass
class DecodeState:
    """Detached per-hypothesis decoder state used by the search procedures."""

    hidden: np.ndarray
    cell: np.ndarray
    proj: np.ndarray

    @property
    def batch(self) -> int:
        return self.hidden.shape[0]

    def select(self, idx) -> "DecodeState":
        idx = np.asarray(idx, dtype=np.int64)
        return DecodeState(self.hidden[idx], self.cell[idx], self.proj[idx])


class CaptionModel:
    def __init__(self, config: ModelConfig, embedding: nn.Parameter, proj_w: nn.Parameter,
                 proj_b: nn.Parameter, cell: nn.LstmCellParams, out_w: nn.Parameter,
                 out_b: nn.Parameter):
        self.config = config
        self.embedding = embedding
        self.proj_w = proj_w
        self.proj_b = proj_b
        self.cell = cell
        self.out_w = out_w
        self.out_b = out_b

    def parameters(self) -> list[nn.Parameter]:
        return [self.embedding, self.proj_w, self.proj_b, *self.cell.parameters(),
                self.out_w, self.out_b]

    @property
    def dtype(self):
        return T.dtype_for(self.config.precision)

    @property
    def vocab_size(self) -> int:
        return self.config.vocab_size

    def num_params(self) -> int:
        return sum(p.value.size for p in self.parameters())

    # -- stepping shared by training and decoding --

    def _input(self, wires: _Wired, embed: T.Tensor, proj: T.Tensor) -> T.Tensor:
        if self.config.architecture == "inject":
            return T.concat([embed, proj], axis=-1)
        return embed

    def _logits(self, wires: _Wired, state: nn.LstmState, proj: T.Tensor) -> T.Tensor:
        if self.config.architecture == "merge":
            multimodal = T.concat([state.hidden, proj], axis=-1)
            return nn.dense_forward(multimodal, wires.out_w, wires.out_b)
        return nn.dense_forward(state.hidden, wires.out_w, wires.out_b)

    def _project(self, wires: _Wired, features: np.ndarray) -> T.Tensor:
        feats = T.Tensor(np.ascontiguousarray(features, dtype=self.dtype))
        return nn.dense_forward(feats, wires.proj_w, wires.proj_b)

    def _consume(self, wires: _Wired, tokens: np.ndarray, proj: T.Tensor,
                 state: nn.LstmState) -> nn.LstmState:
        embed = nn.embedding_lookup(tokens, wires.embedding)
        return nn.lstm_step(self._input(wires, embed, proj), state, wires.cell)

    # -- decoding interface --

    def decode_start(self, features: np.ndarray):
        """Project the image and consume the start token; returns (logits, state)."""
        features = np.atleast_2d(np.asarray(features, dtype=self.dtype))
        wires = _Wired(self)
        proj = self._project(wires, features)
        batch = features.shape[0]
        state = nn.zero_state(self.config.layer_size, self.config.precision, batch=batch)
        start = np.full(batch, START_INDEX, dtype=np.int64)
        state = self._consume(wires, start, proj, state)
        logits = self._logits(wires, state, proj)
        return logits.data, DecodeState(state.hidden.data, state.cell.data, proj.data)

    def decode_step(self, state: DecodeState, tokens: np.ndarray):
        """Consume one token per hypothesis; returns (logits, new state)."""
        wires = _Wired(self)
        proj = T.Tensor(state.proj)
        prev = nn.LstmState(T.Tensor(state.hidden), T.Tensor(state.cell))
        nxt = self._consume(wires, np.asarray(tokens, dtype=np.int64), proj, prev)
        logits = self._logits(wires, nxt, proj)
        return logits.data, DecodeState(nxt.hidden.data, nxt.cell.data, state.proj)


def build_model(config: ModelConfig, seed: int | None = None) -> CaptionModel:
    """Xavier weights, zero biases; deterministic for a fixed seed."""
    config.validate()
    if seed is None:
        seed = config.seed
    rng = np.random.default_rng(seed)
    seeds = [int(s) for s in rng.integers(0, 2 ** 62, size=16)]
    x, v, i, prec = config.layer_size, config.vocab_size, config.image_dim, config.precision
    dt = T.dtype_for(prec)
    embedding = nn.Parameter("embedding", nn.xavier_init((v, x), seeds[0], prec))
    proj_w = nn.Parameter("image_proj.w", nn.xavier_init((i, x), seeds[1], prec))
    proj_b = nn.Parameter("image_proj.b", np.zeros(x, dt))
    cell = nn.init_lstm("lstm", config.lstm_input_size, x, seeds[2:10], prec)
    out_w = nn.Parameter("output.w", nn.xavier_init((config.output_input_size, v), seeds[10], prec))
    out_b = nn.Parameter("output.b", np.zeros(v, dt))
    return CaptionModel(config, embedding, proj_w, proj_b, cell, out_w, out_b)


def _as_batch(model: CaptionModel, feature, prefix):
    feats = np.asarray(feature, dtype=model.dtype)
    toks = np.asarray(prefix, dtype=np.int64)
    single = toks.ndim == 1
    if single:
        toks = toks[None, :]
    if feats.ndim == 1:
        feats = feats[None, :]
    if feats.shape[0] == 1 and toks.shape[0] > 1:
        feats = np.repeat(feats, toks.shape[0], axis=0)
    if feats.shape[0] != toks.shape[0]:
        raise UsageError(f"{feats.shape[0]} features for {toks.shape[0]} prefixes")
    return feats, toks, single


def forward(model: CaptionModel, feature, prefix) -> np.ndarray:
    """Next-token logits after encoding a start-bracketed prefix.

    Accepts a single (feature, prefix) pair or a batch of B; returns logits
    of extent (v,) or (B, v) accordingly.
    """
    feats, toks, single = _as_batch(model, feature, prefix)
    if toks.shape[1] == 0:
        raise UsageError("prefix must contain at least the start token")
    if (toks[:, 0] != START_INDEX).any():
        raise UsageError("prefix must begin with the start token")
    wires = _Wired(model)
    proj = model._project(wires, feats)
    state = nn.zero_state(model.config.layer_size, model.config.precision, batch=toks.shape[0])
    for t in range(toks.shape[1]):
        state = model._consume(wires, toks[:, t], proj, state)
    logits = model._logits(wires, state, proj)
    return logits.data[0] if single else logits.data


def caption_loss_batch(model: CaptionModel, features: np.ndarray, tokens: np.ndarray,
                       lengths: np.ndarray) -> T.Tensor:
    """Teacher-forced sum cross-entropy over a padded caption batch.

    Position t of each caption predicts token t+1; padded positions are
    masked out of both the loss and its gradient.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    if (lengths < 2).any():
        raise UsageError("captions must hold at least start and end tokens")
    wires = _Wired(model)
    proj = model._project(wires, features)
    state = nn.zero_state(model.config.layer_size, model.config.precision, batch=tokens.shape[0])
    dt = model.dtype
    total: T.Tensor | None = None
    for t in range(tokens.shape[1] - 1):
        state = model._consume(wires, tokens[:, t], proj, state)
        mask = (t + 1 < lengths).astype(dt)
        if not mask.any():
            break
        logits = model._logits(wires, state, proj)
        step_loss = T.xent_sum(logits, tokens[:, t + 1], mask)
        total = step_loss if total is None else T.add(total, step_loss)
    assert total is not None
    return total


def caption_loss(model: CaptionModel, feature, caption) -> T.Tensor:
    """Sum cross-entropy of one caption under teacher forcing; scalar tensor."""
    toks = np.asarray(caption, dtype=np.int64)
    if toks.ndim != 1 or toks.shape[0] < 2:
        raise UsageError("caption must be a sequence of at least two token indices")
    if toks[0] != START_INDEX or toks[-1] != END_INDEX:
        raise UsageError("caption must be bracketed by the start and end tokens")
    feats = np.atleast_2d(np.asarray(feature, dtype=model.dtype))
    return caption_loss_batch(model, feats, toks[None, :], np.array([toks.shape[0]]))


def count_params(config: ModelConfig) -> dict:
    """Closed-form parameter counts per component, by architecture."""
    config.validate()
    x, v, i = config.layer_size, config.vocab_size, config.image_dim
    counts = {"embedding": v * x, "image_proj": (i + 1) * x}
    if config.architecture == "inject":
        counts["lstm"] = 4 * ((2 * x) * x + x * x + x)
        counts["output"] = (x + 1) * v
    else:
        counts["lstm"] = 4 * (x * x + x * x + x)
        counts["output"] = (2 * x + 1) * v
    counts["total"] = sum(counts.values())
    return counts


def save_checkpoint(model: CaptionModel, path) -> None:
    """Write the checkpoint format: magic, length-prefixed JSON config record,
    then named tensors as (name, rank, extents, little-endian float32 data)."""
    cfg = json.dumps(dataclasses.asdict(model.config), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        for p in model.parameters():
            name = p.name.encode("utf-8")
            arr = np.ascontiguousarray(p.value, dtype="<f4")
            fh.write(struct.pack("<H", len(name)))
            fh.write(name)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path) -> CaptionModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}")
        (cfg_len,) = struct.unpack("<I", _read_exact(fh, 4, "config length"))
        try:
            cfg = ModelConfig(**json.loads(_read_exact(fh, cfg_len, "config").decode("utf-8")))
        except (ValueError, TypeError) as exc:
            raise FormatError(f"unreadable checkpoint config record: {exc}") from exc
        tensors = {}
        while True:
            head = fh.read(2)
            if not head:
                break
            if len(head) != 2:
                raise FormatError("truncated checkpoint while reading tensor name length")
            (name_len,) = struct.unpack("<H", head)
            name = _read_exact(fh, name_len, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, "tensor rank"))
            shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "tensor extents"))
            count = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(_read_exact(fh, 4 * count, f"tensor {name}"), dtype="<f4")
            tensors[name] = data.reshape(shape)
    model = build_model(cfg)
    expected = {p.name for p in model.parameters()}
    if set(tensors) != expected:
        missing = sorted(expected - set(tensors))
        extra = sorted(set(tensors) - expected)
        raise FormatError(f"checkpoint tensors do not match config: missing {missing}, unexpected {extra}")
    for p in model.parameters():
        stored = tensors[p.name]
        if stored.shape != p.value.shape:
            raise FormatError(f"tensor {p.name} has extents {stored.shape}, expected {p.value.shape}")
        p.value = stored.astype(model.dtype)
        p.grad = np.zeros_like(p.value)
        p.m = np.zeros_like(p.value)
        p.v = np.zeros_like(p.value)
    return model
