"""radprep: prepare radiology-report corpora for instruction tuning and
evaluate generated impressions.

The pipeline stages live in submodules and compose cleanly:

- corpus: CSV ingestion, the canonical JSON-Lines dataset, section extraction
- deid: sentence-level removal of clinician and patient name mentions
- curation: instruction-pair construction, filtering, train/eval split
- packing: tokenization, token caching, fixed-capacity block packing
- metrics: ROUGE-L, ROUGE-N, and embedding-based similarity scoring
- judge: LLM-as-judge scoring with retries and resumable verdict files
- cli: the radprep command-line entry points
"""

from . import errors
from .cli import (
    PipelineConfig,
    SummaryRow,
    SummaryTable,
    load_config,
    render_summary,
)
from .corpus import (
    DEFAULT_MARKERS,
    DEFAULT_SCHEMA,
    IngestStats,
    RawRecord,
    ReportDoc,
    SectionMarkers,
    SourceSchema,
    extract_sections,
    read_csv_stream,
    read_json_dataset,
    write_json_dataset,
)
from .curation import (
    DEFAULT_INSTRUCTIONS,
    DEFAULT_PREPENDS,
    CurationConfig,
    InstructionPair,
    RejectionKind,
    RejectionReason,
    SplitAssignment,
    build_pair,
    derive_seed,
    filter_report,
    normalize_whitespace,
    read_pairs_jsonl,
    split_dataset,
    word_count,
    write_pairs_jsonl,
    write_rejections_csv,
)
from .deid import (
    DeidResult,
    NamePatternSet,
    deidentify,
    deidentify_text,
    flag_name_sentences,
    segment_sentences,
)
from .judge import (
    ChatCompletionClient,
    JudgeClientConfig,
    JudgePrompt,
    JudgeRunResult,
    JudgeVerdict,
    build_judge_prompt,
    judge_corpus,
    judge_pair,
    parse_verdict,
)
from .metrics import (
    BertScoreTriple,
    DeterministicHashEmbedder,
    EmbeddingServiceClient,
    OneHotEmbedder,
    PairScores,
    RougeScore,
    bertscore,
    lcs_length,
    metric_tokenize,
    rouge_l,
    rouge_n,
    score_corpus,
    write_scores_csv,
)
from .packing import (
    AttentionLayout,
    PackedBlock,
    TokenCache,
    TokenizedRecord,
    WhitespaceTokenizer,
    attention_layout,
    encode_pair,
    pack_sequences,
    pad_block,
    read_packed_dataset,
    tokenize_cached,
    write_packed_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "__version__",
    # corpus
    "DEFAULT_MARKERS", "DEFAULT_SCHEMA", "IngestStats", "RawRecord",
    "ReportDoc", "SectionMarkers", "SourceSchema", "extract_sections",
    "read_csv_stream", "read_json_dataset", "write_json_dataset",
    # deid
    "DeidResult", "NamePatternSet", "deidentify", "deidentify_text",
    "flag_name_sentences", "segment_sentences",
    # curation
    "CurationConfig", "DEFAULT_INSTRUCTIONS", "DEFAULT_PREPENDS",
    "InstructionPair", "RejectionKind", "RejectionReason",
    "SplitAssignment", "build_pair", "derive_seed", "filter_report",
    "normalize_whitespace", "read_pairs_jsonl", "split_dataset", "word_count",
    "write_pairs_jsonl", "write_rejections_csv",
    # packing
    "AttentionLayout", "PackedBlock", "TokenCache", "TokenizedRecord",
    "WhitespaceTokenizer", "attention_layout", "encode_pair",
    "pack_sequences", "pad_block", "read_packed_dataset", "tokenize_cached",
    "write_packed_dataset",
    # metrics
    "BertScoreTriple", "DeterministicHashEmbedder", "EmbeddingServiceClient",
    "OneHotEmbedder", "PairScores", "RougeScore", "bertscore", "lcs_length",
    "metric_tokenize", "rouge_l", "rouge_n", "score_corpus",
    "write_scores_csv",
    # judge
    "ChatCompletionClient", "JudgeClientConfig", "JudgePrompt",
    "JudgeRunResult", "JudgeVerdict", "build_judge_prompt", "judge_corpus",
    "judge_pair", "parse_verdict",
    # cli
    "PipelineConfig", "SummaryRow", "SummaryTable", "load_config",
    "render_summary",
]
