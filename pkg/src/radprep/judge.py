"""LLM-judge harness: build the scoring prompt, call a chat-completion
endpoint with retries/backoff/rate limiting, parse "score then explanation"
replies, and aggregate corpus scores with resumable verdict files.

The judge protocol: the model rates a generated impression against the
reference from 0 to 10 and explains itself after the score. Means exclude
pairs whose judging failed; failures are counted separately.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import (
    AuthError,
    ConfigError,
    EmptyCorpusError,
    EmptyInputError,
    ExhaustedRetriesError,
    NoScoreFoundError,
    RateLimitedError,
    ScoreOutOfRangeError,
    TransportError,
    VerdictParseError,
)

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "RADPREP_JUDGE_API_KEY"

DEFAULT_CRITERIA = (
    "Whether any findings present in the reference impression are missing "
    "from the generated impression.",
    "Whether the generated impression introduces irrelevant or unsupported "
    "extra conclusions.",
    "How closely the wording and style match the reference radiologist's "
    "phrasing.",
    "Whether medical terminology is used precisely and correctly.",
)

# Template v1. Placeholders are instantiated literally (not str.format), so
# braces inside report text cannot break rendering.
DEFAULT_TEMPLATE_V1 = """\
You are an experienced radiologist evaluating an automatically generated
radiology impression against the reference impression written for the same
report.

Rate how well the generated impression matches the reference on a scale of
0 to 10, where a higher score means a better match. Consider:
{criteria}

Reference impression:
{reference}

Generated impression:
{generated}

Reply with the numeric score on the first line, then a brief explanation of
your rating on the following lines.
"""


@dataclass
class JudgePrompt:
    """Prompt template with {generated} and {reference} placeholders (each
    required exactly once) and the evaluation criteria."""

    template: str = DEFAULT_TEMPLATE_V1
    criteria: Sequence[str] = DEFAULT_CRITERIA
    scale_min: int = 0
    scale_max: int = 10

    def __post_init__(self):
        for name in ("{generated}", "{reference}"):
            count = self.template.count(name)
            if count != 1:
                raise ConfigError(
                    f"judge template must contain {name} exactly once, found {count}")

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "JudgePrompt":
        return cls(template=Path(path).read_text(encoding="utf-8"), **kwargs)


_PLACEHOLDER = re.compile(r"\{(generated|reference|criteria)\}")
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")
_EXPLANATION_LEAD = " \t\r\n-–—:;,.)"


def build_judge_prompt(generated: str, reference: str,
                       prompt: JudgePrompt | None = None) -> str:
    """Instantiate the template with both texts (and the criteria list).

    Substitution is a single pass over the template, so placeholder-like
    strings inside the report texts are left alone.
    """
    if prompt is None:
        prompt = JudgePrompt()
    if not generated.strip() or not reference.strip():
        raise EmptyInputError("both generated and reference must be nonempty")
    criteria_text = "\n".join(f"- {c}" for c in prompt.criteria)
    values = {"generated": generated, "reference": reference,
              "criteria": criteria_text}
    out = []
    pos = 0
    for m in _PLACEHOLDER.finditer(prompt.template):
        out.append(prompt.template[pos:m.start()])
        out.append(values[m.group(1)])
        pos = m.end()
    out.append(prompt.template[pos:])
    return "".join(out)


@dataclass
class JudgeVerdict:
    score: float
    explanation: str
    raw_response: str
    attempts: int = 1


def parse_verdict(raw: str, scale_min: float = 0.0,
                  scale_max: float = 10.0) -> JudgeVerdict:
    """Parse a judge reply: the first decimal number is the score (prefixes
    like "Score:" tolerated), everything after it is the explanation.

    Out-of-range scores are an error, never clamped. A score with no
    explanation after it is also a parse failure.
    """
    m = _NUMBER.search(raw)
    if m is None:
        raise NoScoreFoundError(f"no numeric score in response: {raw[:80]!r}")
    score = float(m.group(0))
    if not scale_min <= score <= scale_max:
        raise ScoreOutOfRangeError(
            f"score {score} outside [{scale_min}, {scale_max}]")
    explanation = raw[m.end():].lstrip(_EXPLANATION_LEAD).rstrip()
    if not explanation:
        raise VerdictParseError("no explanation after the score")
    return JudgeVerdict(score=score, explanation=explanation, raw_response=raw)


@dataclass
class JudgeClientConfig:
    endpoint: str
    model_name: str
    api_key_env: str = DEFAULT_API_KEY_ENV
    max_retries: int = 3
    backoff_base: float = 1.0
    max_concurrent: int = 4
    requests_per_minute: int = 0  # 0 = unlimited

    def __post_init__(self):
        if not self.endpoint or not self.model_name:
            raise ConfigError("endpoint and model_name are required")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.max_concurrent < 1:
            raise ConfigError("max_concurrent must be >= 1")
        if self.requests_per_minute < 0:
            raise ConfigError("requests_per_minute must be >= 0")


class _RateLimiter:
    """Spaces request starts at least 60/requests_per_minute seconds apart,
    shared across worker threads."""

    def __init__(self, per_minute: int, clock: Callable[[], float],
                 sleep: Callable[[float], None]):
        self._interval = 60.0 / per_minute if per_minute > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_start = None

    def acquire(self) -> None:
        if self._interval == 0.0:
            return
        with self._lock:
            now = self._clock()
            if self._next_start is None or now >= self._next_start:
                self._next_start = now + self._interval
                wait = 0.0
            else:
                wait = self._next_start - now
                self._next_start += self._interval
        if wait > 0.0:
            self._sleep(wait)


class ChatCompletionClient:
    """Thin chat-completion client with injectable transport and timing.

    The transport takes (payload, headers) and returns (status_code, body
    dict); the default posts JSON over HTTP. The credential is read from the
    configured environment variable at request time, goes only into the
    Authorization header, and is never logged or placed in the payload.
    """

    def __init__(self, config: JudgeClientConfig,
                 transport: Callable[[dict, dict], tuple[int, dict]] | None = None,
                 sleep: Callable[[float], None] = time.sleep,
                 clock: Callable[[], float] = time.monotonic,
                 timeout: float = 60.0):
        self.config = config
        self.timeout = timeout
        self._transport = transport or self._http_transport
        self._sleep = sleep
        self.limiter = _RateLimiter(config.requests_per_minute, clock, sleep)

    def _http_transport(self, payload: dict, headers: dict) -> tuple[int, dict]:
        import requests
        try:
            resp = requests.post(self.config.endpoint, json=payload,
                                 headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"judge endpoint unreachable: {exc}") from exc
        try:
            body = resp.json()
        except ValueError:
            body = {}
        return resp.status_code, body

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise AuthError(
                f"credential missing: set the {self.config.api_key_env} "
                "environment variable")
        return key

    def complete(self, prompt: str) -> str:
        """One request/response cycle; no retries at this layer."""
        payload = {
            "model": self.config.model_name,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        }
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        self.limiter.acquire()
        status, body = self._transport(payload, headers)
        if status in (401, 403):
            raise AuthError(f"judge endpoint rejected credentials (HTTP {status})")
        if status == 429:
            raise RateLimitedError("judge endpoint rate limit (HTTP 429)")
        if status != 200:
            raise TransportError(f"judge endpoint returned HTTP {status}")
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion body: {exc}") from exc


_RETRYABLE = (RateLimitedError, TransportError, VerdictParseError)


def judge_pair(generated: str, reference: str, client: ChatCompletionClient,
               prompt: JudgePrompt | None = None) -> JudgeVerdict:
    """Judge one pair, retrying retryable failures with exponential backoff.

    Attempt k (0-based) sleeps backoff_base * 2**k before the next try.
    AuthError aborts immediately; exhausting retries raises
    ExhaustedRetriesError carrying the last underlying error.
    """
    cfg = client.config
    if prompt is None:
        prompt = JudgePrompt()
    text = build_judge_prompt(generated, reference, prompt)
    last: Exception | None = None
    attempts = 0
    for attempt in range(cfg.max_retries + 1):
        attempts = attempt + 1
        try:
            raw = client.complete(text)
            verdict = parse_verdict(raw, prompt.scale_min, prompt.scale_max)
            verdict.attempts = attempts
            return verdict
        except AuthError:
            raise
        except _RETRYABLE as exc:
            last = exc
            if attempt < cfg.max_retries:
                client._sleep(cfg.backoff_base * (2 ** attempt))
    raise ExhaustedRetriesError(attempts, last)


@dataclass
class JudgeRunResult:
    mean_score: float | None
    judged: int
    failed: int
    skipped_existing: int
    scores: dict[str, float] = field(default_factory=dict)


def _load_existing_verdicts(path: Path) -> dict[str, float]:
    scores: dict[str, float] = {}
    if not path.exists():
        return scores
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                scores[row["record_id"]] = float(row["score"])
            except (ValueError, KeyError):
                logger.warning("skipping malformed verdict line in %s", path)
    return scores


def judge_corpus(pairs: Sequence[tuple[str, str, str]],
                 client: ChatCompletionClient,
                 output_path: str | Path,
                 prompt: JudgePrompt | None = None) -> JudgeRunResult:
    """Judge (record_id, generated, reference) pairs into a verdict file.

    Verdicts append to output_path as they complete (JSON-Lines), so an
    interrupted run resumes by skipping record_ids already present. At most
    max_concurrent requests are in flight. The mean covers every successfully
    judged pair in the file for this corpus; failures count separately and
    are retried on the next run since nothing is written for them.
    """
    if not pairs:
        raise EmptyCorpusError("no pairs to judge")
    if prompt is None:
        prompt = JudgePrompt()
    output_path = Path(output_path)
    existing = _load_existing_verdicts(output_path)
    pending = [(rid, gen, ref) for rid, gen, ref in pairs if rid not in existing]
    skipped = len(pairs) - len(pending)

    requested = {rid for rid, _, _ in pairs}
    scores = {rid: s for rid, s in existing.items() if rid in requested}
    failed = 0
    with output_path.open("a", encoding="utf-8") as fh:
        if pending:
            with ThreadPoolExecutor(max_workers=client.config.max_concurrent) as pool:
                futures = {
                    pool.submit(judge_pair, gen, ref, client, prompt): rid
                    for rid, gen, ref in pending
                }
                for fut in as_completed(futures):
                    rid = futures[fut]
                    try:
                        verdict = fut.result()
                    except ExhaustedRetriesError as exc:
                        failed += 1
                        logger.warning("judging %s failed: %s", rid, exc)
                        continue
                    row = {
                        "record_id": rid,
                        "score": verdict.score,
                        "explanation": verdict.explanation,
                        "model_name": client.config.model_name,
                        "attempts": verdict.attempts,
                        "timestamp": datetime.now(timezone.utc).isoformat(),
                    }
                    fh.write(json.dumps(row, ensure_ascii=False))
                    fh.write("\n")
                    fh.flush()
                    scores[rid] = verdict.score

    mean = sum(scores.values()) / len(scores) if scores else None
    return JudgeRunResult(
        mean_score=mean,
        judged=len(scores),
        failed=failed,
        skipped_existing=skipped,
        scores=scores,
    )
