"""Shared primitives: character vocabulary, distributions, temperature, sampling.

Everything downstream (models, the speculative decoder, the benchmark
harness) builds on the types in this module. All randomness in the package
flows through `make_rng`, which derives named Philox substreams from a single
64-bit seed, so every run is reproducible from (seed, inputs) alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

import numpy as np

BOS_ID = 0
EOS_ID = 1
UNK_ID = 2
RESERVED_TOKENS = ("<bos>", "<eos>", "<unk>")

# Named RNG substreams (spawn keys for make_rng / derive_seed). Streams derived
# from the same seed are statistically independent; draws within one stream are
# consumed one at a time, in the order documented by the consuming function.
DRAFT_STREAM = 0      # drafter sampling inside the speculative decode loop
ACCEPT_STREAM = 1     # accept/reject draws, then the residual or bonus sample
GENERATE_STREAM = 2   # plain autoregressive generation
DISTILL_STREAM = 3    # per-record seeds for distillation jobs
BENCH_STREAM = 4      # per-prompt seeds inside benchmark runs

# A token sequence is a plain list of vocabulary ids.
TokenSequence = list[int]

_SEED_MASK = 0xFFFF_FFFF_FFFF_FFFF


class FormatError(ValueError):
    """A file or stream violates one of the documented on-disk formats."""


def make_rng(seed: int, stream: int, *path: int) -> np.random.Generator:
    """Philox generator for the given substream of ``seed``.

    Stream contract: one generator per (seed, stream, *path) tuple, uniforms
    drawn with ``rng.random()``. Philox is counter-based, so the mapping from
    (seed, substream) to the variate sequence is fixed across platforms.
    """
    key = np.random.SeedSequence(seed & _SEED_MASK, spawn_key=(stream, *path))
    return np.random.Generator(np.random.Philox(key))


def derive_seed(seed: int, stream: int, *path: int) -> int:
    """Stable 64-bit child seed for (seed, stream, *path)."""
    key = np.random.SeedSequence(seed & _SEED_MASK, spawn_key=(stream, *path))
    return int(key.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class Vocabulary:
    """Ordered character inventory with reserved ids 0=<bos>, 1=<eos>, 2=<unk>.

    Non-reserved tokens are single Unicode scalar values in first-appearance
    order over the corpus they were built from.
    """

    tokens: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tokens = tuple(self.tokens)
        object.__setattr__(self, "tokens", tokens)
        if len(tokens) < 3 or tokens[:3] != RESERVED_TOKENS:
            raise ValueError("vocabulary must start with the reserved <bos>/<eos>/<unk> tokens")
        index = {}
        for i, tok in enumerate(tokens):
            if tok in index:
                raise ValueError(f"duplicate token {tok!r} in vocabulary")
            index[tok] = i
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def lookup(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise KeyError(f"token {token!r} not in vocabulary") from None

    def token_at(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.tokens):
            raise ValueError(f"token id {token_id} out of range for vocabulary of size {self.size}")
        return self.tokens[token_id]

    def id_or_unk(self, char: str) -> int:
        return self._index.get(char, UNK_ID)


def build_vocab(corpus: Union[str, Iterable[str]]) -> Vocabulary:
    """Vocabulary over every distinct scalar value in the text, appearance order.

    ``corpus`` is a string or an iterable of string chunks; an empty corpus
    yields just the three reserved tokens.
    """
    chunks = (corpus,) if isinstance(corpus, str) else corpus
    seen: dict[str, None] = {}
    for chunk in chunks:
        for ch in chunk:
            if ch not in seen:
                seen[ch] = None
    return Vocabulary(RESERVED_TOKENS + tuple(seen))


def encode(text: str, vocab: Vocabulary) -> TokenSequence:
    """Map each scalar value to its id; characters outside the vocabulary map to <unk>."""
    return [vocab.id_or_unk(ch) for ch in text]


def decode_tokens(ids: Iterable[int], vocab: Vocabulary) -> str:
    """Inverse of encode on reserved-free sequences; reserved ids render as ''."""
    out = []
    for token_id in ids:
        if not 0 <= token_id < vocab.size:
            raise ValueError(f"corrupted sequence: token id {token_id} out of range")
        if token_id <= UNK_ID:
            continue
        out.append(vocab.tokens[token_id])
    return "".join(out)


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector over a vocabulary: non-negative, sums to 1 within 1e-9."""

    probs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.probs, dtype=np.float64, copy=True)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("distribution must be a non-empty 1-D vector")
        if np.any(arr < 0):
            raise ValueError("distribution entries must be non-negative")
        total = float(arr.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"distribution sums to {total!r}, not 1")
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    def __len__(self) -> int:
        return self.probs.size

    def p(self, token_id: int) -> float:
        return float(self.probs[token_id])


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling knobs for plain autoregressive generation."""

    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


def apply_temperature(d: Distribution, temperature: float) -> Distribution:
    """Temperature transform: T=0 is an exact argmax one-hot, T=1 the identity,
    otherwise entries are raised to 1/T and renormalized (computed in log space
    so extreme temperatures cannot underflow the whole vector)."""
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    probs = d.probs
    if temperature == 0.0:
        out = np.zeros_like(probs)
        out[int(np.argmax(probs))] = 1.0
        return Distribution(out)
    if temperature == 1.0:
        return d
    if not np.any(probs > 0):
        raise ValueError("cannot rescale an all-zero distribution")
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    scaled = logp / temperature
    scaled -= scaled.max()
    w = np.exp(scaled)
    return Distribution(w / w.sum())


def sample(d: Distribution, rng) -> int:
    """Inverse-CDF draw using a single uniform variate from ``rng.random()``.

    Returns id i with probability d[i]; deterministic given the rng state.
    """
    u = rng.random()
    cdf = np.cumsum(d.probs)
    idx = int(np.searchsorted(cdf, u, side="right"))
    if idx >= len(cdf):
        # Cumulative rounding can leave cdf[-1] a hair below 1.0.
        idx = int(np.flatnonzero(d.probs > 0)[-1])
    return idx


def argmax(d: Distribution) -> int:
    """Index of the maximum entry; ties break toward the lowest token id."""
    return int(np.argmax(d.probs))


def _escape_token(token: str) -> str:
    return token.replace("\\", "\\\\").replace("\n", "\\n").replace("\r", "\\r")


def _unescape_token(line: str) -> str:
    out = []
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line):
            nxt = line[i + 1]
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
            if nxt == "r":
                out.append("\r")
                i += 2
                continue
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def save_vocab(vocab: Vocabulary, path) -> None:
    """Write the vocabulary file format: 3 reserved header lines, then one
    token per line, line number - 1 = id. Newline, carriage-return and
    backslash tokens are escaped as \\n, \\r and \\\\ (single-character tokens
    never collide with these two-character escapes)."""
    lines = list(RESERVED_TOKENS) + [_escape_token(t) for t in vocab.tokens[3:]]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_vocab(path) -> Vocabulary:
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 3 or tuple(lines[:3]) != RESERVED_TOKENS:
        raise FormatError(f"{path}: vocabulary file must start with the reserved header lines")
    tokens = RESERVED_TOKENS + tuple(_unescape_token(line) for line in lines[3:])
    try:
        return Vocabulary(tokens)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
