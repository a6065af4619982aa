"""Sequence encoders, tokenization, and classifier heads.

Every encoder exposes the same narrow contract: tokenize with truncation to a
maximum length, encode token sequences into per-token representations whose
first row (the sequence-start position) is the pooled sentence vector, and
hand out trainable parameters.  External pre-trained checkpoints are reached
only through this adapter surface; the built-in tiny transformer makes the
whole pipeline runnable and testable at desk scale without any checkpoint.
"""

from __future__ import annotations

import abc
import math
import zlib
from dataclasses import dataclass
from typing import Callable, Sequence

import torch
from torch import Tensor, nn

TINY_KIND = "tiny-reference"
EXTERNAL_KIND = "external-pretrained"

DEFAULT_MAX_LENGTH = 200
DEFAULT_WIDTH = 32
DEFAULT_BUCKETS = 4096
DEFAULT_DROPOUT = 0.3
START_TOKEN_ID = 0


class EncoderError(ValueError):
    """Invalid encoder configuration, token ids, or tensor shapes."""


@dataclass(frozen=True)
class EncoderSpec:
    """Which encoder to build and its contract-relevant dimensions.

    ``kind`` is ``tiny-reference`` (built-in, deterministic given a seed) or
    ``external-pretrained`` (resolved through the adapter registry by
    ``name``).  ``freeze`` keeps encoder weights fixed during training; the
    default is full fine-tuning.
    """

    kind: str = TINY_KIND
    d: int = DEFAULT_WIDTH
    num_buckets: int = DEFAULT_BUCKETS
    name: str = ""
    max_length: int = DEFAULT_MAX_LENGTH
    freeze: bool = False

    def __post_init__(self) -> None:
        if self.kind not in (TINY_KIND, EXTERNAL_KIND):
            raise EncoderError(f"unknown encoder kind {self.kind!r}")
        if self.d < 1:
            raise EncoderError("encoder width must be >= 1")
        if self.num_buckets < 2:
            raise EncoderError("need at least 2 hash buckets")
        if self.max_length < 1:
            raise EncoderError("max_length must be >= 1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "d": self.d,
            "num_buckets": self.num_buckets,
            "name": self.name,
            "max_length": self.max_length,
            "freeze": self.freeze,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "EncoderSpec":
        return cls(**{k: payload[k] for k in cls.__dataclass_fields__ if k in payload})


@dataclass(frozen=True)
class TokenSequence:
    """Token ids for one post; position 0 is the sequence-start token."""

    token_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.token_ids) < 1:
            raise EncoderError("token sequence must contain the sequence-start token")

    @property
    def length(self) -> int:
        return len(self.token_ids)


@dataclass(frozen=True)
class EncoderOutput:
    """Per-token representations; row 0 is the pooled first-token vector."""

    token_reps: Tensor

    @property
    def first_token_rep(self) -> Tensor:
        return self.token_reps[0]


class ClassifierHead(nn.Module):
    """One dropout layer plus one affine layer mapping a pooled vector to logits.

    Dropout is inverted (mask scaled by ``1/(1-p)``) and applied only in
    train mode, so eval-mode logits are exactly ``weight @ rep + bias``.
    """

    def __init__(
        self,
        in_width: int,
        k: int,
        dropout_rate: float = DEFAULT_DROPOUT,
        *,
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ) -> None:
        super().__init__()
        if k < 1:
            raise EncoderError("head must emit at least one logit")
        if not 0.0 <= dropout_rate < 1.0:
            raise EncoderError("dropout rate must be in [0, 1)")
        self.in_width = in_width
        self.k = k
        self.dropout_rate = dropout_rate
        gen = torch.Generator().manual_seed(seed)
        bound = 1.0 / math.sqrt(in_width)
        weight = torch.empty(k, in_width, dtype=dtype).uniform_(-bound, bound, generator=gen)
        self.weight = nn.Parameter(weight)
        self.bias = nn.Parameter(torch.zeros(k, dtype=dtype))

    def forward(
        self,
        rep: Tensor,
        mode: str = "eval",
        generator: torch.Generator | None = None,
    ) -> Tensor:
        if mode not in ("train", "eval"):
            raise EncoderError(f"mode must be 'train' or 'eval', got {mode!r}")
        if rep.shape[-1] != self.in_width:
            raise EncoderError(
                f"representation width {rep.shape[-1]} does not match head input width {self.in_width}"
            )
        if mode == "train" and self.dropout_rate > 0.0:
            keep = 1.0 - self.dropout_rate
            mask = (
                torch.rand(rep.shape, generator=generator, dtype=rep.dtype) < keep
            ).to(rep.dtype) / keep
            rep = rep * mask
        return nn.functional.linear(rep, self.weight, self.bias)


def head_forward(
    rep: Tensor,
    head: ClassifierHead,
    mode: str = "eval",
    generator: torch.Generator | None = None,
) -> Tensor:
    return head(rep, mode=mode, generator=generator)


def hash_bucket(word: str, num_buckets: int = DEFAULT_BUCKETS) -> int:
    """Deterministic embedding bucket for a whitespace token (0 is reserved
    for the sequence-start token)."""
    return 1 + zlib.crc32(word.encode("utf-8")) % (num_buckets - 1)


class SequenceEncoder(nn.Module, abc.ABC):
    """Adapter contract every encoder satisfies (tiny built-in or external)."""

    spec: EncoderSpec

    @abc.abstractmethod
    def tokenize_truncate(self, text: str, max_length: int | None = None) -> TokenSequence:
        """Prepend the sequence-start token, keep the left prefix up to max_length."""

    @abc.abstractmethod
    def encode_batch(self, sequences: Sequence[TokenSequence]) -> Tensor:
        """Encode padded sequences into first-token representations, shape (B, d)."""

    @abc.abstractmethod
    def encode(self, tokens: TokenSequence) -> EncoderOutput:
        """Encode one sequence into per-token representations."""

    def trainable_parameters(self) -> list[nn.Parameter]:
        if self.spec.freeze:
            return []
        return list(self.parameters())


def _sinusoidal_positions(max_length: int, d: int, dtype: torch.dtype) -> Tensor:
    position = torch.arange(max_length, dtype=torch.float64).unsqueeze(1)
    step = torch.arange(0, d, 2, dtype=torch.float64)
    angles = position / torch.pow(10000.0, step / d)
    table = torch.zeros(max_length, d, dtype=torch.float64)
    table[:, 0::2] = torch.sin(angles)
    table[:, 1::2] = torch.cos(angles[:, : d // 2])
    return table.to(dtype)


class TinyTransformerEncoder(SequenceEncoder):
    """Small deterministic attention encoder for desk-scale runs.

    Whitespace tokens hash into ``num_buckets`` embedding rows (id 0 is the
    sequence-start token); one pre-norm self-attention block with 2 heads and
    a feed-forward layer produces the contextual representations.  All
    initialization is driven by a single seeded generator, so construction is
    bit-reproducible.
    """

    N_HEADS = 2

    def __init__(
        self,
        spec: EncoderSpec,
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ) -> None:
        super().__init__()
        if spec.kind != TINY_KIND:
            raise EncoderError(f"TinyTransformerEncoder requires kind={TINY_KIND!r}")
        if spec.d % self.N_HEADS != 0:
            raise EncoderError(f"width {spec.d} not divisible by {self.N_HEADS} heads")
        self.spec = spec
        self.seed = seed
        d = spec.d
        gen = torch.Generator().manual_seed(seed)

        def linear(out_features: int, in_features: int) -> tuple[nn.Parameter, nn.Parameter]:
            bound = 1.0 / math.sqrt(in_features)
            w = torch.empty(out_features, in_features, dtype=dtype).uniform_(
                -bound, bound, generator=gen
            )
            return nn.Parameter(w), nn.Parameter(torch.zeros(out_features, dtype=dtype))

        embed = torch.empty(spec.num_buckets, d, dtype=dtype).normal_(
            0.0, 0.5, generator=gen
        )
        self.embed = nn.Parameter(embed)
        self.qkv_weight, self.qkv_bias = linear(3 * d, d)
        self.out_weight, self.out_bias = linear(d, d)
        self.ff1_weight, self.ff1_bias = linear(2 * d, d)
        self.ff2_weight, self.ff2_bias = linear(d, 2 * d)
        self.ln1 = nn.LayerNorm(d, dtype=dtype)
        self.ln2 = nn.LayerNorm(d, dtype=dtype)
        self.register_buffer(
            "positions",
            _sinusoidal_positions(spec.max_length, d, dtype),
            persistent=False,
        )

    def _bucket(self, word: str) -> int:
        return hash_bucket(word, self.spec.num_buckets)

    def tokenize_truncate(self, text: str, max_length: int | None = None) -> TokenSequence:
        max_length = self.spec.max_length if max_length is None else max_length
        if max_length < 1:
            raise EncoderError("max_length must be >= 1")
        ids = [START_TOKEN_ID] + [self._bucket(word) for word in text.split()]
        return TokenSequence(tuple(ids[:max_length]))

    def _check_ids(self, sequences: Sequence[TokenSequence]) -> None:
        for seq in sequences:
            if seq.length > self.spec.max_length:
                raise EncoderError(
                    f"sequence of length {seq.length} exceeds max_length {self.spec.max_length}"
                )
            for token_id in seq.token_ids:
                if not 0 <= token_id < self.spec.num_buckets:
                    raise EncoderError(f"token id {token_id} out of range [0, {self.spec.num_buckets})")

    def forward(self, ids: Tensor, pad_mask: Tensor) -> Tensor:
        """ids (B, L) int64, pad_mask (B, L) bool with True at real positions."""
        batch, length = ids.shape
        d = self.spec.d
        x = self.embed[ids] + self.positions[:length]

        h = self.ln1(x)
        qkv = nn.functional.linear(h, self.qkv_weight, self.qkv_bias)
        q, k, v = qkv.chunk(3, dim=-1)
        head_dim = d // self.N_HEADS

        def split_heads(t: Tensor) -> Tensor:
            return t.view(batch, length, self.N_HEADS, head_dim).transpose(1, 2)

        q, k, v = split_heads(q), split_heads(k), split_heads(v)
        scores = q @ k.transpose(-2, -1) / math.sqrt(head_dim)
        scores = scores.masked_fill(~pad_mask[:, None, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(batch, length, d)
        x = x + nn.functional.linear(ctx, self.out_weight, self.out_bias)

        h = self.ln2(x)
        h = nn.functional.linear(h, self.ff1_weight, self.ff1_bias)
        h = nn.functional.gelu(h)
        x = x + nn.functional.linear(h, self.ff2_weight, self.ff2_bias)
        return x

    def _encode_padded(self, sequences: Sequence[TokenSequence]) -> Tensor:
        self._check_ids(sequences)
        lengths = [seq.length for seq in sequences]
        max_len = max(lengths)
        ids = torch.zeros(len(sequences), max_len, dtype=torch.int64)
        mask = torch.zeros(len(sequences), max_len, dtype=torch.bool)
        for i, seq in enumerate(sequences):
            ids[i, : seq.length] = torch.tensor(seq.token_ids, dtype=torch.int64)
            mask[i, : seq.length] = True
        reps = self.forward(ids, mask)
        if not torch.isfinite(reps[mask]).all():
            raise EncoderError("encoder produced non-finite representations")
        return reps

    def encode_batch(self, sequences: Sequence[TokenSequence]) -> Tensor:
        return self._encode_padded(sequences)[:, 0, :]

    def encode(self, tokens: TokenSequence) -> EncoderOutput:
        reps = self._encode_padded([tokens])
        return EncoderOutput(token_reps=reps[0])


_EXTERNAL_FACTORIES: dict[str, Callable[[EncoderSpec, int], SequenceEncoder]] = {}


def register_external_encoder(
    name: str, factory: Callable[[EncoderSpec, int], SequenceEncoder]
) -> None:
    """Register an adapter factory for a pre-trained checkpoint identifier."""
    _EXTERNAL_FACTORIES[name] = factory


def build_encoder(
    spec: EncoderSpec, seed: int = 0, dtype: torch.dtype = torch.float32
) -> SequenceEncoder:
    if spec.kind == TINY_KIND:
        return TinyTransformerEncoder(spec, seed=seed, dtype=dtype)
    factory = _EXTERNAL_FACTORIES.get(spec.name)
    if factory is None:
        raise EncoderError(
            f"no adapter registered for external encoder {spec.name!r}; "
            "use register_external_encoder()"
        )
    return factory(spec, seed)
