"""Token tagger: a small self-attention encoder plus an N-slot detection head.

The encoder is a desk-scale stand-in for a large pretrained model: learned
token embeddings over the training vocabulary (with an out-of-vocabulary
bucket), fixed sinusoidal position signals, and a few blocks of single-head
self-attention with feedforward layers, residuals and layer normalization.
The head maps each H-wide hidden state to N x C logits; a softmax over the
class axis yields the (T, N, C) probability tensor.  Growing N only grows
the head, the encoder is untouched.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from . import autodiff
from .autodiff import Tensor, embedding, layer_norm
from .core import (
    N_CLASSES,
    Extraction,
    LabelGrid,
    NoTriplet,
    PredictionTensor,
    SlotieError,
    TokenClass,
    TokenSequence,
    TripletMask,
    mask_to_extraction,
)


class TooLong(SlotieError):
    """Raised when a sentence exceeds the configured token cap."""


class CheckpointError(SlotieError):
    """Raised for unreadable or version-mismatched checkpoints."""


OOV_TOKEN = "<unk>"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs; defaults match the reference configuration."""

    n_slots: int = 20
    hidden: int = 64
    blocks: int = 2
    ff_multiplier: int = 4
    max_len: int = 256
    frozen_encoder: bool = False

    def __post_init__(self) -> None:
        if min(self.n_slots, self.hidden, self.blocks, self.ff_multiplier, self.max_len) < 1:
            raise ValueError("all architecture sizes must be >= 1")


def build_vocab(sequences) -> dict[str, int]:
    """Token-to-id map in first-appearance order; id 0 is the OOV bucket."""
    vocab: dict[str, int] = {OOV_TOKEN: 0}
    for seq in sequences:
        for token in seq.tokens:
            if token not in vocab:
                vocab[token] = len(vocab)
    return vocab


def sinusoidal_positions(max_len: int, width: int) -> np.ndarray:
    """The standard interleaved sin/cos position table, shape (max_len, width)."""
    positions = np.arange(max_len, dtype=np.float64)[:, None]
    dims = np.arange(width, dtype=np.float64)[None, :]
    angles = positions / np.power(10000.0, 2.0 * (dims // 2) / width)
    table = np.zeros((max_len, width))
    table[:, 0::2] = np.sin(angles[:, 0::2])
    table[:, 1::2] = np.cos(angles[:, 1::2])
    return table


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    scale = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, scale, size=(fan_in, fan_out))


@runtime_checkable
class EncoderContract(Protocol):
    """What the tagger needs from a token encoder.

    Any object with an H-wide ``encode`` over token sequences (one hidden
    row per token) and a ``trainable_parameters`` map can replace the
    reference encoder, e.g. to wrap a large pretrained model.
    """

    @property
    def hidden_width(self) -> int: ...

    def encode(self, seq: TokenSequence) -> Tensor: ...

    def trainable_parameters(self) -> dict[str, Tensor]: ...


class ReferenceEncoder:
    """Embeddings + sinusoidal positions + K post-norm attention blocks."""

    def __init__(self, vocab: dict[str, int], config: ModelConfig, seed: int = 0):
        self.vocab = dict(vocab)
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
        hidden = config.hidden
        ff = config.hidden * config.ff_multiplier
        trainable = not config.frozen_encoder
        self.embed = Tensor(rng.normal(0.0, 0.1, size=(len(self.vocab), hidden)), trainable)
        # Position signals are fixed; scaled down so content embeddings dominate.
        self.positions = 0.1 * sinusoidal_positions(config.max_len, hidden)
        self.block_params: list[dict[str, Tensor]] = []
        for _ in range(config.blocks):
            block = {
                "wq": Tensor(_xavier(rng, hidden, hidden), trainable),
                "bq": Tensor(np.zeros(hidden), trainable),
                "wk": Tensor(_xavier(rng, hidden, hidden), trainable),
                "bk": Tensor(np.zeros(hidden), trainable),
                "wv": Tensor(_xavier(rng, hidden, hidden), trainable),
                "bv": Tensor(np.zeros(hidden), trainable),
                "wo": Tensor(_xavier(rng, hidden, hidden), trainable),
                "bo": Tensor(np.zeros(hidden), trainable),
                "ln1_g": Tensor(np.ones(hidden), trainable),
                "ln1_b": Tensor(np.zeros(hidden), trainable),
                "w1": Tensor(_xavier(rng, hidden, ff), trainable),
                "b1": Tensor(np.zeros(ff), trainable),
                "w2": Tensor(_xavier(rng, ff, hidden), trainable),
                "b2": Tensor(np.zeros(hidden), trainable),
                "ln2_g": Tensor(np.ones(hidden), trainable),
                "ln2_b": Tensor(np.zeros(hidden), trainable),
            }
            self.block_params.append(block)

    def token_ids(self, seq: TokenSequence) -> np.ndarray:
        oov = self.vocab[OOV_TOKEN]
        return np.array([self.vocab.get(tok, oov) for tok in seq.tokens], dtype=np.int64)

    def encode(self, seq: TokenSequence) -> Tensor:
        hidden, _ = self._encode(seq, want_attention=False)
        return hidden

    def encode_with_attention(self, seq: TokenSequence) -> tuple[Tensor, list[np.ndarray]]:
        """Hidden states plus each block's attention matrix (for inspection)."""
        return self._encode(seq, want_attention=True)

    def _encode(self, seq: TokenSequence, want_attention: bool) -> tuple[Tensor, list[np.ndarray]]:
        n_tokens = len(seq)
        if n_tokens > self.config.max_len:
            raise TooLong(f"{n_tokens} tokens exceed the {self.config.max_len}-token cap")
        x = embedding(self.embed, self.token_ids(seq)) + Tensor(self.positions[:n_tokens])
        scale = 1.0 / np.sqrt(self.config.hidden)
        attentions: list[np.ndarray] = []
        for blk in self.block_params:
            q = x @ blk["wq"] + blk["bq"]
            k = x @ blk["wk"] + blk["bk"]
            v = x @ blk["wv"] + blk["bv"]
            attn = ((q @ k.transpose()) * scale).softmax(axis=-1)
            if want_attention:
                attentions.append(attn.data.copy())
            y = (attn @ v) @ blk["wo"] + blk["bo"]
            x = layer_norm(x + y, blk["ln1_g"], blk["ln1_b"])
            f = (x @ blk["w1"] + blk["b1"]).relu() @ blk["w2"] + blk["b2"]
            x = layer_norm(x + f, blk["ln2_g"], blk["ln2_b"])
        return x, attentions

    @property
    def hidden_width(self) -> int:
        return self.config.hidden

    def named_parameters(self) -> dict[str, Tensor]:
        params = {"embed": self.embed}
        for i, blk in enumerate(self.block_params):
            for name, tensor in blk.items():
                params[f"block{i}.{name}"] = tensor
        return params

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {n: t for n, t in self.named_parameters().items() if t.requires_grad}


class DetectionHead:
    """Affine map from H hidden features to N x C logits per token."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        out = config.n_slots * N_CLASSES
        self.config = config
        self.weight = Tensor(_xavier(rng, config.hidden, out), requires_grad=True)
        self.bias = Tensor(np.zeros(out), requires_grad=True)

    def __call__(self, hidden: Tensor) -> Tensor:
        n_tokens = hidden.shape[0]
        logits = hidden @ self.weight + self.bias
        return logits.reshape(n_tokens, self.config.n_slots, N_CLASSES).softmax(axis=-1)

    def named_parameters(self) -> dict[str, Tensor]:
        return {"head.weight": self.weight, "head.bias": self.bias}


class SlotTagger:
    """Encoder + head; produces the (T, N, C) probability tensor.

    Any ``EncoderContract`` implementation may replace the reference
    encoder (its hidden width must match ``config.hidden``); only models
    built on the reference encoder can be saved to a checkpoint.
    """

    def __init__(
        self,
        vocab: dict[str, int],
        config: ModelConfig = ModelConfig(),
        seed: int = 0,
        encoder: EncoderContract | None = None,
    ):
        if OOV_TOKEN not in vocab or vocab[OOV_TOKEN] != 0:
            raise ValueError(f"vocab must map {OOV_TOKEN!r} to id 0")
        self.config = config
        self.seed = seed
        self.encoder = encoder if encoder is not None else ReferenceEncoder(vocab, config, seed)
        if self.encoder.hidden_width != config.hidden:
            raise ValueError(
                f"encoder width {self.encoder.hidden_width} differs from "
                f"configured hidden size {config.hidden}"
            )
        self._vocab = dict(vocab)
        self.head = DetectionHead(config, seed)
        self._last_output: Tensor | None = None

    @property
    def vocab(self) -> dict[str, int]:
        return self._vocab

    def forward(self, seq: TokenSequence) -> PredictionTensor:
        """Run the model, recording the graph for a later ``backward``."""
        output = self.head(self.encoder.encode(seq))
        self._last_output = output
        return PredictionTensor(output.data)

    def predict(self, seq: TokenSequence) -> PredictionTensor:
        """Inference-only forward; no graph is recorded."""
        with autodiff.no_grad():
            return PredictionTensor(self.head(self.encoder.encode(seq)).data)

    def backward(self, prob_grad: np.ndarray) -> None:
        """Push a (T, N, C) gradient w.r.t. the probabilities into the
        parameters of the most recent ``forward``."""
        if self._last_output is None:
            raise autodiff.GraphError("backward called before any forward pass")
        self._last_output.backward(prob_grad)
        self._last_output = None

    def named_parameters(self) -> dict[str, Tensor]:
        if isinstance(self.encoder, ReferenceEncoder):
            params = self.encoder.named_parameters()
        else:
            params = dict(self.encoder.trainable_parameters())
        params.update(self.head.named_parameters())
        return params

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {name: t for name, t in self.named_parameters().items() if t.requires_grad}

    def zero_grad(self) -> None:
        for tensor in self.named_parameters().values():
            tensor.zero_grad()

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        if not isinstance(self.encoder, ReferenceEncoder):
            raise CheckpointError("only reference-encoder models can be checkpointed")
        id_to_token = sorted(self.vocab, key=self.vocab.get)
        meta = {
            "format_version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "vocab": id_to_token,
            "seed": self.seed,
        }
        arrays = {name: t.data for name, t in self.named_parameters().items()}
        np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)

    @classmethod
    def load(cls, path) -> "SlotTagger":
        try:
            archive = np.load(path, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        with archive:
            if "__meta__" not in archive:
                raise CheckpointError("checkpoint carries no metadata")
            meta = json.loads(str(archive["__meta__"]))
            if meta.get("format_version") != CHECKPOINT_VERSION:
                raise CheckpointError(
                    f"checkpoint version {meta.get('format_version')} is not "
                    f"supported (expected {CHECKPOINT_VERSION})"
                )
            vocab = {token: i for i, token in enumerate(meta["vocab"])}
            model = cls(vocab, ModelConfig(**meta["config"]), seed=meta["seed"])
            for name, tensor in model.named_parameters().items():
                if name not in archive:
                    raise CheckpointError(f"checkpoint is missing parameter {name}")
                stored = archive[name]
                if stored.shape != tensor.data.shape:
                    raise CheckpointError(
                        f"parameter {name} has shape {stored.shape}, expected {tensor.data.shape}"
                    )
                tensor.data = stored.astype(np.float64)
        return model


def decode_grid(p: PredictionTensor) -> LabelGrid:
    """Argmax labels per slot, kept as a full N-mask grid (no filtering)."""
    labels = p.probs.argmax(axis=2)
    masks = tuple(
        TripletMask(tuple(TokenClass(int(c)) for c in labels[:, n]))
        for n in range(p.n_slots)
    )
    return LabelGrid(masks, p.n_slots)


def slot_confidence(p_slot: np.ndarray, mask: TripletMask, aggregator: str = "min") -> float:
    """Confidence of one decoded mask from its slot probabilities.

    ``min`` takes the lowest argmax-class probability over the mask's
    non-Background tokens; ``geomean`` takes their geometric mean.
    """
    indices = [t for t, lab in enumerate(mask.labels) if lab != TokenClass.BACKGROUND]
    if not indices:
        raise NoTriplet("cannot score an all-Background mask")
    chosen = np.array([p_slot[t, int(mask.labels[t])] for t in indices])
    if aggregator == "min":
        return float(chosen.min())
    if aggregator == "geomean":
        return float(np.exp(np.log(np.maximum(chosen, 1e-12)).mean()))
    raise ValueError(f"unknown confidence aggregator {aggregator!r}")


def decode(
    p: PredictionTensor,
    seq: TokenSequence,
    require_all_parts: bool = True,
    deduplicate: bool = True,
    confidence_aggregator: str = "min",
) -> list[Extraction]:
    """Turn the probability tensor into extractions.

    Per slot, take the argmax class of every token; drop all-Background
    masks, and with ``require_all_parts`` also drop masks missing a
    Subject, Relation or Object.  Identical masks collapse to the lowest
    slot index.  Survivors are rendered to strings and scored.
    """
    if p.n_tokens != len(seq):
        raise ValueError("prediction tensor and sentence cover different token counts")
    labels = p.probs.argmax(axis=2)
    extractions: list[Extraction] = []
    seen: set[tuple[int, ...]] = set()
    for n in range(p.n_slots):
        slot_labels = labels[:, n]
        if not slot_labels.any():
            continue
        mask = TripletMask(tuple(TokenClass(int(c)) for c in slot_labels))
        if require_all_parts and not mask.has_all_parts:
            continue
        key = tuple(int(c) for c in slot_labels)
        if deduplicate:
            if key in seen:
                continue
            seen.add(key)
        confidence = slot_confidence(p.probs[:, n, :], mask, confidence_aggregator)
        bare = mask_to_extraction(seq, mask)
        extractions.append(
            Extraction(bare.arg1, bare.rel, bare.arg2, confidence=confidence)
        )
    return extractions
