"""specdesk: speculative decoding at desk scale.

A draft/verify/accept decoding engine over exactly evaluable character-level
n-gram models, with the full drafter lifecycle around it: pretrain-and-finetune
training, self-distillation corpus generation, a deterministic benchmark
harness, and heuristic drafter routing.
"""

from ._version import __version__
from .core import (
    ACCEPT_STREAM,
    BENCH_STREAM,
    BOS_ID,
    DISTILL_STREAM,
    DRAFT_STREAM,
    EOS_ID,
    GENERATE_STREAM,
    RESERVED_TOKENS,
    UNK_ID,
    Distribution,
    FormatError,
    SamplerConfig,
    TokenSequence,
    Vocabulary,
    apply_temperature,
    argmax,
    build_vocab,
    decode_tokens,
    derive_seed,
    encode,
    load_vocab,
    make_rng,
    sample,
    save_vocab,
)
from .lm import (
    Corpus,
    CorpusFormatError,
    ModelFormatError,
    ModelVersionError,
    NGramModel,
    finetune,
    generate,
    load_corpus,
    load_model,
    pretrain,
    save_corpus,
    save_model,
    truncate_corpus,
)
from .specdec import (
    DecodeStats,
    Draft,
    SpecConfig,
    VerificationOutcome,
    VocabularyMismatchError,
    decode_speculative,
    draft,
    residual_dist,
    score_parallel,
    verify_greedy,
    verify_stochastic,
)
from .distill import (
    DEFAULT_TEMPERATURES,
    LANGUAGE_NAMES,
    DistillJob,
    make_prompt,
    self_distill,
    with_task_prompts,
)
from .bench import (
    CostModel,
    EvalConfig,
    ExperimentGrid,
    GridResult,
    ReportTable,
    ScalingCurve,
    WallclockResult,
    acceptance_rate,
    cost_speedup,
    emit_report,
    mean_accepted,
    merge_stats,
    run_grid,
    scaling_curve,
    spearman,
    wallclock_speedup,
)
from .routing import DrafterRegistry, detect_source_language, load_registry, select_drafter
