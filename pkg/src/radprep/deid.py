"""Sentence-level name removal.

Reports are segmented into sentences with a small deterministic splitter, and
any sentence matched by a name pattern is dropped whole. Removal over
redaction keeps the surviving text natural at the cost of losing some
context; recall is favored over precision, so capitalized eponyms may be
casualties.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import ReportDoc
from .errors import InvalidPatternError

# Tokens that end with "." without ending a sentence. Compared lowercase.
ABBREVIATIONS = frozenset(
    {"dr.", "mr.", "ms.", "mrs.", "st.", "vs.", "e.g.", "i.e.", "no."})

_PUNCT_RUN = re.compile(r"[.!?]+(?=\s|\Z)")
_TRAILING_TOKEN = re.compile(r"[A-Za-z][A-Za-z.]*\Z")

# Regex features that make a pattern's behavior depend on text outside the
# sentence slice; their presence disables the whole-text fast paths.
_CONTEXT_SENSITIVE = ("^", "$", r"\A", r"\Z", "(?=", "(?!", "(?<")

DEFAULT_PATTERN_SOURCES = (
    ("title_name", r"\b(?:Dr|Mr|Ms|Mrs)\.?\s+[A-Z][a-z]+(?:\s+[A-Z][a-z]+)?"),
    ("attribution", r"\b(?:[Dd]ictated|[Ss]igned|[Rr]eviewed|[Rr]eported|"
                    r"[Tt]ranscribed)\s+by\s+[A-Z][A-Za-z]*|"
                    r"\b[Dd]iscussed\s+with\s+[A-Z][A-Za-z]*"),
    ("surname_given", r"\b[A-Z][A-Za-z]+,\s*[A-Z][a-z]+\b"),
    ("credential", r"\b[A-Z][a-z]+(?:\s+[A-Z][a-z]+)*\s*,\s*(?:MD|DO|RN|NP)\b"),
)


@dataclass
class NamePatternSet:
    """Ordered name-matching regexes with stable parallel identifiers."""

    patterns: list[str]
    pattern_ids: list[str]

    def __post_init__(self):
        if not self.patterns:
            raise InvalidPatternError("pattern set must be nonempty")
        if len(self.patterns) != len(self.pattern_ids):
            raise InvalidPatternError("patterns and pattern_ids must be parallel")
        if len(set(self.pattern_ids)) != len(self.pattern_ids):
            raise InvalidPatternError("pattern_ids must be unique")
        self._compiled = []
        for pid, src in zip(self.pattern_ids, self.patterns):
            try:
                self._compiled.append(re.compile(src))
            except re.error as exc:
                raise InvalidPatternError(f"pattern {pid!r}: {exc}") from exc
        # Anchors and lookarounds can behave differently on a sentence slice
        # than on the full text, so they disable the combined prefilter.
        simple = not any(tok in src for src in self.patterns
                         for tok in _CONTEXT_SENSITIVE)
        self._combined = (re.compile("|".join(f"(?:{p})" for p in self.patterns))
                          if simple else None)

    @classmethod
    def default(cls) -> "NamePatternSet":
        ids = [pid for pid, _ in DEFAULT_PATTERN_SOURCES]
        return cls([src for _, src in DEFAULT_PATTERN_SOURCES], ids)

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "NamePatternSet":
        """Parse one regex per line; "#" lines are comments.

        A line may carry an explicit identifier as "id:NAME <regex>";
        otherwise the 1-based line number (of the source file) is the id.
        """
        patterns: list[str] = []
        ids: list[str] = []
        for line_no, line in enumerate(lines, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if text.startswith("id:"):
                head, _, rest = text.partition(" ")
                pid = head[3:]
                if not pid or not rest.strip():
                    raise InvalidPatternError(
                        f"line {line_no}: expected 'id:NAME <regex>'")
                ids.append(pid)
                patterns.append(rest.strip())
            else:
                ids.append(str(line_no))
                patterns.append(text)
        return cls(patterns, ids)

    @classmethod
    def from_file(cls, path: str | Path) -> "NamePatternSet":
        with Path(path).open("r", encoding="utf-8") as fh:
            return cls.from_lines(fh)


@dataclass
class DeidResult:
    """Outcome of de-identifying one text field."""

    text: str
    removed_sentences: int = 0
    fired_patterns: Counter = field(default_factory=Counter)


def segment_sentences(text: str) -> list[tuple[int, int]]:
    """Split text into sentence spans (start, end), covering all non-whitespace.

    A sentence ends at a run of ".", "!", "?" that is followed by whitespace
    and an uppercase letter, or by end of text. Known abbreviations (Dr., St.,
    e.g., ...) never terminate a sentence. Joining the spans with their
    original inter-span whitespace reconstructs the input.
    """
    n = len(text)
    start = 0
    while start < n and text[start].isspace():
        start += 1
    if start >= n:
        return []

    spans: list[tuple[int, int]] = []
    for m in _PUNCT_RUN.finditer(text):
        end = m.end()
        if end <= start:
            continue
        j = end
        while j < n and text[j].isspace():
            j += 1
        if j < n and not ("A" <= text[j] <= "Z"):
            continue
        # Abbreviation entries are short; a 12-char window suffices and keeps
        # this O(1) per boundary candidate.
        token = _TRAILING_TOKEN.search(text, max(0, end - 12), end)
        if token and token.group(0).lower() in ABBREVIATIONS:
            continue
        spans.append((start, end))
        start = j
        if start >= n:
            return spans
    if start < n:
        tail = text[start:].rstrip()
        if tail:
            spans.append((start, start + len(tail)))
    return spans


def flag_name_sentences(text: str, spans: Sequence[tuple[int, int]],
                        patterns: NamePatternSet) -> tuple[list[bool], Counter]:
    """Mark which sentence spans contain a name-pattern match.

    Returns a per-span boolean list and a multiset counting, for every
    flagged sentence, each pattern id that matched it.
    """
    flags: list[bool] = []
    fired: Counter = Counter()
    combined = patterns._combined
    for s, e in spans:
        sent = text[s:e]
        if combined is not None:
            if combined.search(sent) is None:
                flags.append(False)
                continue
            hit = False
            for pid, rx in zip(patterns.pattern_ids, patterns._compiled):
                if rx.search(sent):
                    fired[pid] += 1
                    hit = True
            # The combined regex is a plain alternation of the sources, so a
            # combined hit implies at least one per-pattern hit.
            flags.append(hit)
        else:
            hit = False
            for pid, rx in zip(patterns.pattern_ids, patterns._compiled):
                if rx.search(sent):
                    fired[pid] += 1
                    hit = True
            flags.append(hit)
    return flags, fired


def deidentify_text(text: str, patterns: NamePatternSet) -> DeidResult:
    """Drop every sentence that matches a name pattern.

    With no flagged sentences the text is returned byte-identical; otherwise
    the survivors are joined with single spaces in their original order.
    Applying the function to its own output changes nothing.
    """
    if patterns._combined is not None and patterns._combined.search(text) is None:
        return DeidResult(text=text)
    spans = segment_sentences(text)
    flags, fired = flag_name_sentences(text, spans, patterns)
    removed = sum(flags)
    if removed == 0:
        return DeidResult(text=text)
    kept = [text[s:e] for (s, e), f in zip(spans, flags) if not f]
    return DeidResult(text=" ".join(kept), removed_sentences=removed,
                      fired_patterns=fired)


def deidentify(doc: ReportDoc,
               patterns: NamePatternSet) -> tuple[ReportDoc, dict[str, DeidResult]]:
    """De-identify a ReportDoc's findings and impression independently."""
    findings = deidentify_text(doc.findings, patterns)
    impression = deidentify_text(doc.impression, patterns)
    clean = ReportDoc(
        record_id=doc.record_id,
        exam_code=doc.exam_code,
        findings=findings.text,
        impression=impression.text,
        findings_source=doc.findings_source,
        impression_source=doc.impression_source,
    )
    return clean, {"findings": findings, "impression": impression}
