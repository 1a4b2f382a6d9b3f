"""Count-based n-gram language models with add-k smoothing.

One model class plays both roles in speculative decoding: the large target
model and the small drafter differ only in order and training data. Training
is weighted count accumulation, so the pretrain-then-finetune recipe is exact
and a finetuned model is bit-reproducible from its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .core import (
    BOS_ID,
    EOS_ID,
    GENERATE_STREAM,
    RESERVED_TOKENS,
    Distribution,
    FormatError,
    SamplerConfig,
    TokenSequence,
    Vocabulary,
    _escape_token,
    _unescape_token,
    apply_temperature,
    build_vocab,
    encode,
    make_rng,
    sample,
)

MODEL_FORMAT_VERSION = 1

# next_dist results are memoized per model; contexts repeat heavily during
# generation, and models never change after training.
_DIST_CACHE_LIMIT = 200_000


class ModelFormatError(FormatError):
    """Model file is malformed."""


class ModelVersionError(FormatError):
    """Model file carries an unsupported format version."""


class CorpusFormatError(FormatError):
    """Corpus TSV file is malformed."""


@dataclass(frozen=True)
class Corpus:
    """Bitext records (prompt text, completion text) with a language tag pair."""

    records: tuple[tuple[str, str], ...]
    langs: Optional[tuple[str, str]] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple((p, c) for p, c in self.records))
        if self.langs is not None:
            object.__setattr__(self, "langs", (self.langs[0], self.langs[1]))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[tuple[str, str]]:
        return iter(self.records)

    def token_count(self) -> int:
        """Total scalar values across prompts and completions (characters map
        1:1 to token ids, so this equals the encoded token count)."""
        return sum(len(p) + len(c) for p, c in self.records)

    def without_empty_completions(self) -> "Corpus":
        kept = tuple(r for r in self.records if r[1] != "")
        return Corpus(kept, self.langs, dict(self.meta))


def _corpus_text(corpus: Corpus) -> Iterator[str]:
    for prompt, completion in corpus.records:
        yield prompt
        yield completion


class NGramModel:
    """Add-k smoothed n-gram model over a shared character vocabulary.

    Contexts are the last order-1 ids, left-padded with <bos>. Counts are
    real-valued so weighted finetuning stays exact. Models are immutable once
    published by a training function; concurrent readers are safe.
    """

    def __init__(self, order: int, k: float, vocab: Vocabulary,
                 counts: Optional[dict] = None, provenance: str = "untrained"):
        if order < 1:
            raise ValueError("order must be >= 1")
        if k <= 0:
            raise ValueError("smoothing k must be > 0")
        self.order = int(order)
        self.k = float(k)
        self.vocab = vocab
        self.counts: dict[tuple[int, ...], dict[int, float]] = counts if counts is not None else {}
        self.provenance = provenance
        self._totals: dict[tuple[int, ...], float] = {
            ctx: float(sum(per_tok.values())) for ctx, per_tok in self.counts.items()
        }
        self._dist_cache: dict[tuple[int, ...], Distribution] = {}

    def __eq__(self, other) -> bool:
        if not isinstance(other, NGramModel):
            return NotImplemented
        return (self.order == other.order and self.k == other.k
                and self.vocab == other.vocab and self.provenance == other.provenance
                and self.counts == other.counts)

    __hash__ = None

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_dist_cache"] = {}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    def _pad_context(self, context) -> tuple[int, ...]:
        n1 = self.order - 1
        if n1 == 0:
            return ()
        tail = tuple(context[-n1:]) if context else ()
        if len(tail) < n1:
            tail = (BOS_ID,) * (n1 - len(tail)) + tail
        return tail

    def next_dist(self, context: TokenSequence) -> Distribution:
        """Add-k next-token distribution given the (padded) context:
        P(x | ctx) = (count(ctx, x) + k) / (total(ctx) + k * |V|)."""
        ctx = self._pad_context(context)
        cached = self._dist_cache.get(ctx)
        if cached is not None:
            return cached
        size = self.vocab.size
        weights = np.full(size, self.k, dtype=np.float64)
        per_tok = self.counts.get(ctx)
        total = self.k * size
        if per_tok:
            for tok, count in per_tok.items():
                weights[tok] += count
            total += self._totals[ctx]
        dist = Distribution(weights / total)
        if len(self._dist_cache) < _DIST_CACHE_LIMIT:
            self._dist_cache[ctx] = dist
        return dist

    def _add_stream(self, ids: TokenSequence, weight: float) -> None:
        # Training-time only; the model must not have been published yet.
        n1 = self.order - 1
        padded = [BOS_ID] * n1 + list(ids) + [EOS_ID]
        counts = self.counts
        totals = self._totals
        for i in range(n1, len(padded)):
            ctx = tuple(padded[i - n1:i])
            tok = padded[i]
            per_tok = counts.get(ctx)
            if per_tok is None:
                per_tok = {}
                counts[ctx] = per_tok
                totals[ctx] = 0.0
            per_tok[tok] = per_tok.get(tok, 0.0) + weight
            totals[ctx] += weight


def _accumulate(model: NGramModel, corpus: Corpus, weight: float) -> None:
    for i, (prompt, completion) in enumerate(corpus.records):
        if completion == "":
            raise ValueError(f"training record {i} has an empty completion")
        model._add_stream(encode(prompt + completion, model.vocab), weight)


def pretrain(corpus: Corpus, order: int, k: float = 0.5,
             vocab: Optional[Vocabulary] = None, provenance: str = "pretrained") -> NGramModel:
    """Count n-grams over <bos>-padded, <eos>-terminated prompt+completion streams.

    When no vocabulary is supplied, one is built from the corpus itself; pass
    a shared vocabulary when several models must interoperate.
    """
    if len(corpus) == 0:
        raise ValueError("pretrain requires a non-empty corpus")
    if vocab is None:
        vocab = build_vocab(_corpus_text(corpus))
    model = NGramModel(order, k, vocab, {}, provenance)
    _accumulate(model, corpus, 1.0)
    return model


def finetune(model: NGramModel, corpus: Corpus, weight: float = 1.0) -> NGramModel:
    """New model with counts = model.counts + weight * counts(corpus).

    The input model is left untouched. Unknown characters in the corpus encode
    to <unk> under the model's vocabulary.
    """
    if weight <= 0:
        raise ValueError("finetune weight must be > 0")
    copied = {ctx: dict(per_tok) for ctx, per_tok in model.counts.items()}
    tag = f"{corpus.langs[0]}-{corpus.langs[1]}" if corpus.langs else "untagged"
    tuned = NGramModel(model.order, model.k, model.vocab, copied,
                       provenance=f"{model.provenance};finetuned:{tag}")
    _accumulate(tuned, corpus, weight)
    return tuned


def generate(model: NGramModel, prompt: TokenSequence, cfg: SamplerConfig,
             max_len: int) -> TokenSequence:
    """Autoregressive generation: sample from the temperature-adjusted next-token
    distribution until <eos> or max_len emitted tokens. Returns only the
    continuation, without the terminating <eos>."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    rng = make_rng(cfg.seed, GENERATE_STREAM)
    context = list(prompt)
    out: TokenSequence = []
    while len(out) < max_len:
        dist = apply_temperature(model.next_dist(context), cfg.temperature)
        token = sample(dist, rng)
        if token == EOS_ID:
            break
        out.append(token)
        context.append(token)
    return out


def save_model(model: NGramModel, path) -> None:
    """Versioned text format, bit-reproducible for identical models: header,
    vocabulary block, then one count line per (context..., token, count)
    sorted lexicographically by ids."""
    if "\n" in model.provenance or "\r" in model.provenance:
        raise ValueError("provenance must not contain newlines")
    lines = [
        f"version={MODEL_FORMAT_VERSION}",
        f"order={model.order}",
        f"k={model.k!r}",
        f"provenance={model.provenance}",
        f"vocab={model.vocab.size}",
    ]
    lines.extend(RESERVED_TOKENS)
    lines.extend(_escape_token(t) for t in model.vocab.tokens[3:])
    entries = []
    for ctx, per_tok in model.counts.items():
        for tok, count in per_tok.items():
            entries.append(ctx + (tok,) + (count,))
    entries.sort(key=lambda e: e[:-1])
    lines.append(f"counts={len(entries)}")
    for entry in entries:
        ids = " ".join(str(i) for i in entry[:-1])
        lines.append(f"{ids} {entry[-1]!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _expect_header(lines: list[str], idx: int, key: str, path) -> str:
    if idx >= len(lines) or not lines[idx].startswith(key + "="):
        raise ModelFormatError(f"{path}: expected '{key}=' on line {idx + 1}")
    return lines[idx][len(key) + 1:]


def load_model(path) -> NGramModel:
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    version_raw = _expect_header(lines, 0, "version", path)
    try:
        version = int(version_raw)
    except ValueError:
        raise ModelFormatError(f"{path}: unparsable version {version_raw!r}") from None
    if version != MODEL_FORMAT_VERSION:
        raise ModelVersionError(
            f"{path}: format version {version} unsupported (expected {MODEL_FORMAT_VERSION})")
    try:
        order = int(_expect_header(lines, 1, "order", path))
        k = float(_expect_header(lines, 2, "k", path))
    except ValueError:
        raise ModelFormatError(f"{path}: unparsable order or k header") from None
    provenance = _expect_header(lines, 3, "provenance", path)
    try:
        vocab_size = int(_expect_header(lines, 4, "vocab", path))
    except ValueError:
        raise ModelFormatError(f"{path}: unparsable vocab size") from None
    vocab_end = 5 + vocab_size
    if vocab_end > len(lines):
        raise ModelFormatError(f"{path}: truncated vocabulary block")
    vocab_lines = lines[5:vocab_end]
    if tuple(vocab_lines[:3]) != RESERVED_TOKENS:
        raise ModelFormatError(f"{path}: vocabulary block missing reserved header")
    try:
        vocab = Vocabulary(RESERVED_TOKENS + tuple(_unescape_token(t) for t in vocab_lines[3:]))
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
    try:
        n_counts = int(_expect_header(lines, vocab_end, "counts", path))
    except ValueError:
        raise ModelFormatError(f"{path}: unparsable counts size") from None
    counts_start = vocab_end + 1
    if counts_start + n_counts > len(lines):
        raise ModelFormatError(f"{path}: truncated counts block")
    counts: dict[tuple[int, ...], dict[int, float]] = {}
    for ln in range(counts_start, counts_start + n_counts):
        parts = lines[ln].split(" ")
        if len(parts) != order + 1:
            raise ModelFormatError(f"{path}: line {ln + 1}: expected {order + 1} fields")
        try:
            ids = [int(p) for p in parts[:-1]]
            count = float(parts[-1])
        except ValueError:
            raise ModelFormatError(f"{path}: line {ln + 1}: unparsable count entry") from None
        if any(not 0 <= i < vocab_size for i in ids):
            raise ModelFormatError(f"{path}: line {ln + 1}: token id out of range")
        if count < 0:
            raise ModelFormatError(f"{path}: line {ln + 1}: negative count")
        ctx, tok = tuple(ids[:-1]), ids[-1]
        counts.setdefault(ctx, {})[tok] = count
    if counts_start + n_counts != len(lines):
        raise ModelFormatError(f"{path}: trailing garbage after counts block")
    try:
        return NGramModel(order, k, vocab, counts, provenance)
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc


def load_corpus(path) -> Corpus:
    """Read the corpus TSV: leading '#key=value' header lines, then one record
    per line as 'source<TAB>target'."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    langs = None
    meta: dict[str, str] = {}
    records = []
    in_header = True
    for ln, line in enumerate(lines, start=1):
        if in_header and line.startswith("#"):
            body = line[1:]
            if "=" not in body:
                raise CorpusFormatError(f"{path}: line {ln}: header must be '#key=value'")
            key, _, value = body.partition("=")
            if key == "langs":
                parts = value.split(",")
                if len(parts) != 2 or not all(parts):
                    raise CorpusFormatError(f"{path}: line {ln}: langs must be 'src,tgt'")
                langs = (parts[0], parts[1])
            else:
                meta[key] = value
            continue
        in_header = False
        parts = line.split("\t")
        if len(parts) != 2:
            raise CorpusFormatError(f"{path}: line {ln}: expected exactly one tab")
        records.append((parts[0], parts[1]))
    return Corpus(tuple(records), langs, meta)


def save_corpus(corpus: Corpus, path) -> None:
    lines = []
    if corpus.langs is not None:
        lines.append(f"#langs={corpus.langs[0]},{corpus.langs[1]}")
    for key in sorted(corpus.meta):
        value = corpus.meta[key]
        if any(c in key or c in value for c in "\t\n\r"):
            raise ValueError(f"corpus meta {key!r} contains tab or newline")
        lines.append(f"#{key}={value}")
    for i, (prompt, completion) in enumerate(corpus.records):
        if any(c in prompt or c in completion for c in "\t\n\r"):
            raise ValueError(f"record {i} contains a tab or newline; not representable in TSV")
        lines.append(f"{prompt}\t{completion}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def truncate_corpus(corpus: Corpus, max_tokens: int) -> Corpus:
    """Prefix of the corpus holding at most max_tokens tokens (prompt plus
    completion characters). The boundary record's completion is cut to land
    exactly on the budget; a cut that would leave it empty drops the record."""
    if max_tokens <= 0:
        raise ValueError("token budget must be > 0")
    kept = []
    used = 0
    for prompt, completion in corpus.records:
        need = len(prompt) + len(completion)
        if used + need <= max_tokens:
            kept.append((prompt, completion))
            used += need
            continue
        room = max_tokens - used - len(prompt)
        if room >= 1 and completion:
            kept.append((prompt, completion[:room]))
        break
    return Corpus(tuple(kept), corpus.langs, dict(corpus.meta))
