"""Overlap and embedding-similarity metrics between generated and reference
impressions: ROUGE-L (longest common subsequence), ROUGE-N (clipped n-gram
overlap), and a BERTScore-style greedy matching score.

Tokenization here is intentionally blunt (lowercase, split on anything
non-alphanumeric) and fixed: overlap metrics are only comparable under one
tokenization, so determinism wins over configurability. Raw cosine scores are
reported; no baseline rescaling and no idf weighting unless weights are
passed explicitly.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
import random
import re
from pathlib import Path
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import (
    AlignmentError,
    ConfigError,
    DimensionMismatchError,
    EmptyCorpusError,
    EmptyInputError,
    InvalidNError,
    TransportError,
    ZeroVectorError,
)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

EMBED_URL_ENV = "RADPREP_EMBED_URL"
EMBED_TOKEN_ENV = "RADPREP_EMBED_TOKEN"

SCORES_CSV_COLUMNS = ("record_id", "rouge1_f1", "rouge2_f1", "rougeL_p",
                      "rougeL_r", "rougeL_f1", "bert_p", "bert_r", "bert_f1")


@dataclass
class RougeScore:
    precision: float
    recall: float
    f1: float


@dataclass
class BertScoreTriple:
    precision: float
    recall: float
    f1: float


@runtime_checkable
class EmbeddingProvider(Protocol):
    """Maps a token list to one fixed-dimension vector per token."""

    provider_id: str

    def embed(self, tokens: Sequence[str]) -> list[list[float]]: ...


def metric_tokenize(text: str) -> list[str]:
    """Lowercase and split on any non-alphanumeric character, dropping empties."""
    return _TOKEN_RE.findall(text.lower())


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Longest-common-subsequence length in O(|a|*|b|) time, O(min) memory."""
    if len(b) > len(a):
        a, b = b, a
    if not b:
        return 0
    row = [0] * (len(b) + 1)
    for x in a:
        prev = 0
        for j in range(1, len(row)):
            cur = row[j]
            if x == b[j - 1]:
                row[j] = prev + 1
            elif row[j - 1] > row[j]:
                row[j] = row[j - 1]
            prev = cur
    return row[-1]


def _fbeta(precision: float, recall: float, beta: float) -> float:
    denom = beta * beta * precision + recall
    if denom <= 0:
        return 0.0
    return (1 + beta * beta) * precision * recall / denom


def rouge_l(candidate: str, reference: str, beta: float = 1.0) -> RougeScore:
    """LCS-based ROUGE: precision over candidate tokens, recall over reference
    tokens, F_beta aggregation (balanced F1 by default). Either side empty
    yields the all-zero score."""
    c = metric_tokenize(candidate)
    r = metric_tokenize(reference)
    if not c or not r:
        return RougeScore(0.0, 0.0, 0.0)
    lcs = lcs_length(c, r)
    precision = lcs / len(c)
    recall = lcs / len(r)
    return RougeScore(precision, recall, _fbeta(precision, recall, beta))


def _ngram_counts(tokens: Sequence[str], n: int) -> dict[tuple, int]:
    counts: dict[tuple, int] = {}
    for i in range(len(tokens) - n + 1):
        g = tuple(tokens[i:i + n])
        counts[g] = counts.get(g, 0) + 1
    return counts


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    """Clipped n-gram overlap; zero score when either side has no n-grams."""
    if n < 1:
        raise InvalidNError(f"n must be >= 1, got {n}")
    c = metric_tokenize(candidate)
    r = metric_tokenize(reference)
    nc = len(c) - n + 1
    nr = len(r) - n + 1
    if nc <= 0 or nr <= 0:
        return RougeScore(0.0, 0.0, 0.0)
    counts_c = _ngram_counts(c, n)
    counts_r = _ngram_counts(r, n)
    overlap = sum(min(k, counts_r[g]) for g, k in counts_c.items() if g in counts_r)
    precision = overlap / nc
    recall = overlap / nr
    return RougeScore(precision, recall, _fbeta(precision, recall, 1.0))


def _embed_matrix(embedder: EmbeddingProvider, tokens: list[str]) -> np.ndarray:
    vectors = embedder.embed(tokens)
    if len(vectors) != len(tokens):
        raise AlignmentError(
            f"{embedder.provider_id}: {len(vectors)} vectors for {len(tokens)} tokens")
    try:
        mat = np.asarray(vectors, dtype=np.float64)
    except ValueError as exc:
        raise DimensionMismatchError(
            f"{embedder.provider_id}: inconsistent vector sizes") from exc
    if mat.ndim != 2:
        raise DimensionMismatchError(
            f"{embedder.provider_id}: inconsistent vector sizes")
    if not np.isfinite(mat).all():
        raise ZeroVectorError(f"{embedder.provider_id}: non-finite vector component")
    norms = np.linalg.norm(mat, axis=1)
    if (norms == 0).any():
        raise ZeroVectorError(f"{embedder.provider_id}: zero vector returned")
    return mat / norms[:, None]


def _weighted_mean(values: np.ndarray, tokens: list[str],
                   idf: Mapping[str, float] | None) -> float:
    if idf is None:
        return float(values.mean())
    # Tokens absent from the idf table default to weight 1 (uniform fallback).
    weights = np.asarray([idf.get(t, 1.0) for t in tokens], dtype=np.float64)
    total = weights.sum()
    if total <= 0:
        return 0.0
    return float((values * weights).sum() / total)


def bertscore(candidate: str, reference: str, embedder: EmbeddingProvider,
              idf_weights: Mapping[str, float] | None = None) -> BertScoreTriple:
    """Greedy embedding matching: each token pairs with its most similar
    counterpart by cosine; recall averages over reference tokens, precision
    over candidate tokens (idf-weighted when weights are given)."""
    c_tokens = metric_tokenize(candidate)
    r_tokens = metric_tokenize(reference)
    if not c_tokens or not r_tokens:
        raise EmptyInputError("both candidate and reference must tokenize nonempty")
    c_mat = _embed_matrix(embedder, c_tokens)
    r_mat = _embed_matrix(embedder, r_tokens)
    if c_mat.shape[1] != r_mat.shape[1]:
        raise DimensionMismatchError(
            f"{embedder.provider_id}: candidate dim {c_mat.shape[1]} != "
            f"reference dim {r_mat.shape[1]}")
    sims = c_mat @ r_mat.T
    precision = _weighted_mean(sims.max(axis=1), c_tokens, idf_weights)
    recall = _weighted_mean(sims.max(axis=0), r_tokens, idf_weights)
    denom = precision + recall
    f1 = 2 * precision * recall / denom if denom > 0 else 0.0
    return BertScoreTriple(precision, recall, f1)


class OneHotEmbedder:
    """Test embedder: each distinct token gets its own orthogonal unit axis.

    Index assignment is first-appearance order and sticky for the embedder's
    lifetime, so the same token always maps to the same axis within a scoring
    run. Vocabulary must stay within the fixed dimension.
    """

    def __init__(self, dim: int = 1024):
        self.dim = dim
        self.provider_id = f"onehot-v1-d{dim}"
        self._index: dict[str, int] = {}

    def embed(self, tokens: Sequence[str]) -> list[list[float]]:
        out = []
        for tok in tokens:
            i = self._index.setdefault(tok, len(self._index))
            if i >= self.dim:
                raise ValueError(
                    f"one-hot vocabulary exceeded fixed dimension {self.dim}")
            v = [0.0] * self.dim
            v[i] = 1.0
            out.append(v)
        return out


class DeterministicHashEmbedder:
    """Test embedder: pseudo-random but reproducible unit vectors per token.

    The vector for a token is a function of the token text alone (seeded
    gaussian draws), so scores are stable across processes and runs.
    """

    def __init__(self, dim: int = 64):
        self.dim = dim
        self.provider_id = f"hashed-gauss-v1-d{dim}"
        self._cache: dict[str, list[float]] = {}

    def embed(self, tokens: Sequence[str]) -> list[list[float]]:
        out = []
        for tok in tokens:
            v = self._cache.get(tok)
            if v is None:
                seed = int.from_bytes(
                    hashlib.blake2b(tok.encode("utf-8"), digest_size=8).digest(),
                    "little")
                rng = random.Random(seed)
                raw = [rng.gauss(0.0, 1.0) for _ in range(self.dim)]
                norm = math.sqrt(math.fsum(x * x for x in raw)) or 1.0
                v = [x / norm for x in raw]
                self._cache[tok] = v
            out.append(v)
        return out


class EmbeddingServiceClient:
    """Client for an HTTP token-embedding service.

    Sends {"tokens": [...]} batches and expects {"vectors": [[...], ...]}
    back, one vector per token in order. Endpoint and bearer token come from
    RADPREP_EMBED_URL / RADPREP_EMBED_TOKEN unless passed explicitly. The
    transport is injectable for tests.
    """

    def __init__(self, url: str | None = None, api_token: str | None = None,
                 batch_size: int = 128, timeout: float = 30.0,
                 transport: Callable[[dict], dict] | None = None):
        self.url = url or os.environ.get(EMBED_URL_ENV)
        if not self.url:
            raise ConfigError(
                f"embedding service URL missing: set {EMBED_URL_ENV} or pass url=")
        self.api_token = api_token if api_token is not None \
            else os.environ.get(EMBED_TOKEN_ENV)
        if batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        self.batch_size = batch_size
        self.timeout = timeout
        self.provider_id = f"embed-service:{self.url}"
        self._transport = transport or self._http_transport

    def _http_transport(self, payload: dict) -> dict:
        import requests
        headers = {}
        if self.api_token:
            headers["Authorization"] = f"Bearer {self.api_token}"
        try:
            resp = requests.post(self.url, json=payload, headers=headers,
                                 timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"embedding service unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(
                f"embedding service returned HTTP {resp.status_code}")
        return resp.json()

    def embed(self, tokens: Sequence[str]) -> list[list[float]]:
        vectors: list[list[float]] = []
        for i in range(0, len(tokens), self.batch_size):
            batch = list(tokens[i:i + self.batch_size])
            reply = self._transport({"tokens": batch})
            got = reply.get("vectors")
            if got is None or len(got) != len(batch):
                raise AlignmentError(
                    f"embedding service returned {0 if got is None else len(got)} "
                    f"vectors for {len(batch)} tokens")
            vectors.extend(got)
        return vectors


@dataclass
class PairScores:
    rouge1: RougeScore
    rouge2: RougeScore
    rouge_l: RougeScore
    bert: BertScoreTriple | None = None


def score_corpus(pairs: Sequence[tuple[str, str]],
                 embedder: EmbeddingProvider | None = None,
                 idf_weights: Mapping[str, float] | None = None,
                 ) -> tuple[list[PairScores], dict[str, float]]:
    """Score (generated, reference) pairs; returns per-pair rows and corpus
    means (arithmetic, accumulated in pair order)."""
    if not pairs:
        raise EmptyCorpusError("no pairs to score")
    rows: list[PairScores] = []
    for generated, reference in pairs:
        bert = bertscore(generated, reference, embedder, idf_weights) \
            if embedder is not None else None
        rows.append(PairScores(
            rouge1=rouge_n(generated, reference, 1),
            rouge2=rouge_n(generated, reference, 2),
            rouge_l=rouge_l(generated, reference),
            bert=bert,
        ))
    n = len(rows)
    means = {
        "rouge1_f1": math.fsum(r.rouge1.f1 for r in rows) / n,
        "rouge2_f1": math.fsum(r.rouge2.f1 for r in rows) / n,
        "rougeL_p": math.fsum(r.rouge_l.precision for r in rows) / n,
        "rougeL_r": math.fsum(r.rouge_l.recall for r in rows) / n,
        "rougeL_f1": math.fsum(r.rouge_l.f1 for r in rows) / n,
    }
    if embedder is not None:
        means["bert_p"] = math.fsum(r.bert.precision for r in rows) / n
        means["bert_r"] = math.fsum(r.bert.recall for r in rows) / n
        means["bert_f1"] = math.fsum(r.bert.f1 for r in rows) / n
    return rows, means


def write_scores_csv(rows: Iterable[tuple[str, PairScores]],
                     path: str | Path) -> int:
    """Write per-record scores as CSV; bert columns stay empty when unscored."""
    count = 0
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORES_CSV_COLUMNS)
        for record_id, s in rows:
            bert = ["", "", ""] if s.bert is None else \
                [repr(s.bert.precision), repr(s.bert.recall), repr(s.bert.f1)]
            writer.writerow([
                record_id,
                repr(s.rouge1.f1), repr(s.rouge2.f1),
                repr(s.rouge_l.precision), repr(s.rouge_l.recall),
                repr(s.rouge_l.f1),
            ] + bert)
            count += 1
    return count
