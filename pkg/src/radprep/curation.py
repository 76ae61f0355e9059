"""Instruction-pair curation: whitespace normalization, exclusion rules,
instruction/prepend sampling, and the deterministic train/eval split.

Randomness is never drawn from a shared sequential generator. Each record gets
its own generator seeded from (master_seed, record_id), so results are
identical whether records are processed serially, in parallel, or reordered.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .corpus import ReportDoc
from .errors import ConfigError

TRAIN = "train"
EVAL = "eval"

DEFAULT_INSTRUCTIONS = (
    "Derive the impression from the given radiology findings.",
    "Summarize the findings into a concise impression.",
    "Write the impression section for this radiology report.",
    "Based on the findings, provide the impression.",
    "Generate the impression that follows from these findings.",
    "Read the findings and produce the corresponding impression.",
    "What impression should be reported for these findings?",
    "Compose the impression summarizing the key findings.",
    "Provide a short impression capturing the essential findings.",
    "From the findings below, formulate the impression.",
    "State the impression supported by the reported findings.",
    "Condense the findings into the impression section.",
    "Produce the radiologist's impression for this exam.",
    "Turn these findings into a brief impression.",
    "Give the impression appropriate for the findings described.",
    "Draft the impression section based on the findings.",
    "Summarize this radiology report as an impression.",
    "Infer the impression from the findings provided.",
    "Write a succinct impression for the findings above.",
    "Report the impression corresponding to these findings.",
)

DEFAULT_PREPENDS = (
    "Impression:",
    "In summary,",
    "Overall,",
    "In conclusion,",
    "Summary:",
    "To summarize,",
    "Conclusion:",
    "In brief,",
    "Key impression:",
    "Taken together,",
)

INSTRUCTION_CATALOG_SIZE = 20
PREPEND_CATALOG_SIZE = 10

INPUT_TEMPLATE = "Exam: {exam_code}\n\n{findings}"

PAIRS_FIELD_ORDER = ("instruction", "input", "output", "record_id",
                     "instruction_index", "prepend_index", "seed_used")


class RejectionKind(enum.Enum):
    MISSING_FINDINGS = "MissingFindings"
    MISSING_IMPRESSION = "MissingImpression"
    FINDINGS_TOO_SHORT = "FindingsTooShort"


@dataclass
class RejectionReason:
    kind: RejectionKind
    detail: str = ""


@dataclass
class InstructionPair:
    """One training example: an instruction, the findings as input, and the
    impression (optionally behind a prepend phrase) as output."""

    record_id: str
    instruction: str
    input: str
    output: str
    instruction_index: int
    prepend_index: int | None
    seed_used: int


@dataclass
class SplitAssignment:
    record_id: str
    bucket: str  # TRAIN or EVAL


@dataclass
class CurationConfig:
    instruction_catalog: Sequence[str] = DEFAULT_INSTRUCTIONS
    prepend_catalog: Sequence[str] = DEFAULT_PREPENDS
    prepend_probability: float = 0.5
    min_findings_words: int = 10
    split_eval_fraction: float = 0.001
    master_seed: int = 0

    def __post_init__(self):
        if len(self.instruction_catalog) != INSTRUCTION_CATALOG_SIZE:
            raise ConfigError(
                f"instruction catalog must have {INSTRUCTION_CATALOG_SIZE} entries, "
                f"got {len(self.instruction_catalog)}")
        if len(self.prepend_catalog) != PREPEND_CATALOG_SIZE:
            raise ConfigError(
                f"prepend catalog must have {PREPEND_CATALOG_SIZE} entries, "
                f"got {len(self.prepend_catalog)}")
        if not 0.0 <= self.prepend_probability <= 1.0:
            raise ConfigError("prepend_probability must be in [0, 1]")
        if not 0.0 <= self.split_eval_fraction <= 1.0:
            raise ConfigError("split_eval_fraction must be in [0, 1]")
        if self.min_findings_words < 0:
            raise ConfigError("min_findings_words must be >= 0")


def load_catalog(path: str | Path, expected_count: int) -> list[str]:
    """Load a plain-text catalog, one entry per line; blank lines ignored."""
    with Path(path).open("r", encoding="utf-8") as fh:
        entries = [line.strip() for line in fh if line.strip()]
    if len(entries) != expected_count:
        raise ConfigError(
            f"{path}: expected {expected_count} catalog entries, got {len(entries)}")
    return entries


_LINE_EDGES = re.compile(r"[ \t]*\n[ \t]*")
_MANY_NEWLINES = re.compile(r"\n{3,}")
_SPACE_RUNS = re.compile(r"[ \t]+")


def normalize_whitespace(text: str) -> str:
    """Collapse space/tab runs to one space and 3+ newline runs to two,
    dropping spaces that touch a line break; trims the ends. Idempotent, and
    non-whitespace characters pass through untouched in order.
    """
    if ("\n" not in text and "\r" not in text and "\t" not in text
            and "  " not in text):
        # every substitution below is an identity on such text
        return text.strip()
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = _LINE_EDGES.sub("\n", text)
    text = _MANY_NEWLINES.sub("\n\n", text)
    text = _SPACE_RUNS.sub(" ", text)
    return text.strip()


def word_count(text: str) -> int:
    """Number of maximal nonempty runs of non-whitespace characters."""
    return len(text.split())


def filter_report(doc: ReportDoc, config: CurationConfig) -> RejectionReason | None:
    """Return None when the doc qualifies, else the first failing rule.

    Check order is fixed (missing findings, missing impression, findings too
    short) so rejection statistics stay stable.
    """
    if not doc.findings:
        return RejectionReason(RejectionKind.MISSING_FINDINGS, "empty findings")
    if not doc.impression:
        return RejectionReason(RejectionKind.MISSING_IMPRESSION, "empty impression")
    n = word_count(doc.findings)
    if n < config.min_findings_words:
        return RejectionReason(
            RejectionKind.FINDINGS_TOO_SHORT,
            f"{n} words < {config.min_findings_words}")
    return None


def derive_seed(master_seed: int, namespace: str, record_id: str = "") -> int:
    """Derive a stable 64-bit seed from (master_seed, namespace, record_id).

    Namespacing keeps independent random decisions (pair sampling, the split)
    uncorrelated even under the same master seed.
    """
    h = hashlib.blake2b(
        record_id.encode("utf-8"),
        digest_size=8,
        key=(master_seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little"),
        person=namespace.encode("ascii"),
    )
    return int.from_bytes(h.digest(), "little")


def build_pair(doc: ReportDoc, config: CurationConfig) -> InstructionPair:
    """Synthesize the instruction pair for one accepted report.

    The record's own generator draws, in order: the instruction index, the
    prepend coin, and (on heads) the prepend index. Fixed draw order is part
    of the reproducibility contract.
    """
    seed = derive_seed(config.master_seed, "pair", doc.record_id)
    rng = random.Random(seed)
    instruction_index = rng.randrange(INSTRUCTION_CATALOG_SIZE)
    prepend_index: int | None = None
    output = doc.impression
    if rng.random() < config.prepend_probability:
        prepend_index = rng.randrange(PREPEND_CATALOG_SIZE)
        output = f"{config.prepend_catalog[prepend_index]} {doc.impression}"
    return InstructionPair(
        record_id=doc.record_id,
        instruction=config.instruction_catalog[instruction_index],
        input=INPUT_TEMPLATE.format(exam_code=doc.exam_code, findings=doc.findings),
        output=output,
        instruction_index=instruction_index,
        prepend_index=prepend_index,
        seed_used=seed,
    )


def split_dataset(record_ids: Sequence[str],
                  config: CurationConfig) -> list[SplitAssignment]:
    """Assign each record to train or eval, deterministically.

    The eval bucket holds round(N * split_eval_fraction) records (half-up;
    Python's round() half-even would disagree on exact .5 boundaries), chosen
    by a seeded sample over positions. Assignments come back in input order.
    """
    if len(set(record_ids)) != len(record_ids):
        raise ValueError("record_ids must be unique")
    n = len(record_ids)
    k = int(n * config.split_eval_fraction + 0.5)
    rng = random.Random(derive_seed(config.master_seed, "split"))
    eval_positions = set(rng.sample(range(n), k))
    return [SplitAssignment(rid, EVAL if i in eval_positions else TRAIN)
            for i, rid in enumerate(record_ids)]


def write_pairs_jsonl(pairs: Iterable[InstructionPair], path: str | Path) -> int:
    """Write pairs as JSON-Lines with fixed key order; returns count."""
    count = 0
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for p in pairs:
            obj = {
                "instruction": p.instruction,
                "input": p.input,
                "output": p.output,
                "record_id": p.record_id,
                "instruction_index": p.instruction_index,
                "prepend_index": p.prepend_index,
                "seed_used": p.seed_used,
            }
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


def read_pairs_jsonl(path: str | Path) -> Iterator[InstructionPair]:
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line == "\n":
                continue
            obj = json.loads(line)
            yield InstructionPair(
                record_id=obj["record_id"],
                instruction=obj["instruction"],
                input=obj["input"],
                output=obj["output"],
                instruction_index=obj["instruction_index"],
                prepend_index=obj["prepend_index"],
                seed_used=obj["seed_used"],
            )


def write_rejections_csv(rows: Iterable[tuple[str, RejectionReason]],
                         path: str | Path) -> int:
    """Log rejected records as CSV (record_id, kind, detail)."""
    count = 0
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "kind", "detail"])
        for record_id, reason in rows:
            writer.writerow([record_id, reason.kind.value, reason.detail])
            count += 1
    return count
