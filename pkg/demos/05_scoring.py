"""
Scoring generated impressions against reference ones
=====================================================

Three overlap families: ROUGE-L (longest common subsequence), ROUGE-N
(clipped n-gram counts), and a BERTScore-style greedy embedding match. All
accept plain strings and share one tokenizer, so scores are comparable
across a corpus.
"""

from radprep import (
    DeterministicHashEmbedder,
    OneHotEmbedder,
    SummaryRow,
    SummaryTable,
    bertscore,
    render_summary,
    rouge_l,
    rouge_n,
    score_corpus,
)

reference = "No acute cardiopulmonary process. Stable small left effusion."
generated = "Stable left pleural effusion. No acute process identified."

rl = rouge_l(generated, reference)
r1 = rouge_n(generated, reference, 1)
r2 = rouge_n(generated, reference, 2)
print(f"rouge-l  P {rl.precision:.4f}  R {rl.recall:.4f}  F1 {rl.f1:.4f}")
print(f"rouge-1  P {r1.precision:.4f}  R {r1.recall:.4f}  F1 {r1.f1:.4f}")
print(f"rouge-2  P {r2.precision:.4f}  R {r2.recall:.4f}  F1 {r2.f1:.4f}")

# With one-hot embeddings, greedy matching degenerates to unigram
# membership; useful for sanity checks since it is predictable by hand.
onehot = bertscore(generated, reference, OneHotEmbedder(dim=64))
print(f"\nbert (one-hot) P {onehot.precision:.4f} R {onehot.recall:.4f}")

# The hash embedder is the no-vocabulary default: deterministic
# pseudo-random unit vectors per token type, near-orthogonal at realistic
# dims, so scores land close to the one-hot ones.
hashed = bertscore(generated, reference, DeterministicHashEmbedder(dim=256))
print(f"bert (hashed)  P {hashed.precision:.4f} R {hashed.recall:.4f}")

# score_corpus aggregates per-pair rows and corpus means.
pairs = [
    (generated, reference),
    (reference, reference),  # perfect copy scores 1.0 across the board
    ("Unremarkable study.", reference),
]
rows, means = score_corpus(pairs, embedder=OneHotEmbedder(dim=64))
print(f"\nscored {len(rows)} pairs; mean rouge-l {means['rougeL_f1']:.4f}")

table = SummaryTable(
    rows=[SummaryRow("demo model", means["rougeL_f1"], means["bert_p"],
                     means["bert_r"], means["bert_f1"])],
    pairs_evaluated=len(rows),
)
print("\n" + render_summary(table, "markdown"))
