"""
Driving the LLM judge without a network
========================================

The judge client speaks the chat-completions shape through an injectable
transport, so the whole protocol (prompting, score parsing, retries,
resume) runs here against a scripted stand-in. Swap in the real endpoint
via JudgeClientConfig and the same code paths execute.
"""

import os
import tempfile
from pathlib import Path

from radprep import (
    ChatCompletionClient,
    JudgeClientConfig,
    JudgePrompt,
    judge_corpus,
    judge_pair,
    parse_verdict,
)

# The credential is read from the environment at request time and never
# logged; a placeholder is enough for the offline transport.
os.environ.setdefault("RADPREP_JUDGE_API_KEY", "offline-demo")


def flaky_judge(payload, headers):
    """Rate-limits every first sighting of a prompt, then scores it."""
    text = payload["messages"][0]["content"]
    if text not in flaky_judge.seen:
        flaky_judge.seen.add(text)
        return 429, {}
    score = 9 if "effusion" in text else 4
    body = f"{score}\nKey findings are covered with minor wording drift."
    return 200, {"choices": [{"message": {"content": body}}]}


flaky_judge.seen = set()

config = JudgeClientConfig(endpoint="https://example.invalid/v1/chat",
                           model_name="stub-judge", max_retries=2,
                           backoff_base=0.01)
client = ChatCompletionClient(config, transport=flaky_judge)

# The default prompt template asks for a 0 to 10 score on the first line.
prompt = JudgePrompt()
print("scale:", prompt.scale_min, "to", prompt.scale_max)

verdict = judge_pair("Stable left effusion.", "Small left effusion, stable.",
                     client)
print(f"\nscore {verdict.score} after {verdict.attempts} attempts")
print("explanation:", verdict.explanation)

# Raw replies parse independently of the client, with range enforcement.
print("\nparsed:", parse_verdict("Score: 7.5 - concise but omits laterality."))

# judge_corpus fans out over a thread pool (bounded by max_concurrent) and
# appends verdicts to a JSON-Lines file as they land. Rerunning skips ids
# already present, which is how an interrupted run resumes.
pairs = [
    ("n1", "No acute process.", "No acute cardiopulmonary process."),
    ("n2", "Stable effusion.", "Stable small left effusion."),
    ("n3", "Clear lungs.", "Lungs are clear."),
]
verdict_file = Path(tempfile.mkdtemp()) / "verdicts.jsonl"
first = judge_corpus(pairs, client, verdict_file)
print(f"\nrun 1: judged {first.judged}, mean {first.mean_score:.2f}")
second = judge_corpus(pairs, client, verdict_file)
print(f"run 2: judged {second.judged}, skipped {second.skipped_existing}, "
      f"mean {second.mean_score:.2f}")
