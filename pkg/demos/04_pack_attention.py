"""
Packing short sequences into fixed blocks
==========================================

Training batches want fixed-length blocks, but instruction pairs are short
and uneven. Packing lays several pairs end to end (separated by an EOS
token) into each block, records per-position segment ids, and derives an
attention layout in which tokens never attend across a segment boundary.
"""

import tempfile

import numpy as np

from radprep import (
    TokenCache,
    WhitespaceTokenizer,
    attention_layout,
    pack_sequences,
    pad_block,
    tokenize_cached,
)

tokenizer = WhitespaceTokenizer()

# The cache is content addressed: re-encoding identical text is a dict hit.
with TokenCache(tempfile.mkdtemp()) as cache:
    texts = [
        "summarize the findings below",
        "no acute cardiopulmonary process",
        "summarize the findings below",  # repeat, served from memory
        "stable appearance of the chest",
    ]
    records = [tokenize_cached(t, tokenizer, cache, record_id=f"r{i}")
               for i, t in enumerate(texts)]
    print(f"cache: {cache.misses} misses, {cache.hits_memory} memory hits")

blocks = pack_sequences(records, capacity=16, separator=tokenizer.eos_id)
print(f"\npacked {len(records)} records into {len(blocks)} blocks of 16")
for b in blocks:
    ids = [f"{rid}[{start}:{end}]" for rid, start, end in b.boundaries]
    print(f"  block {b.block_id}: used {b.used:2d}  fill {b.fill_ratio():.3f}  {ids}")

# Segment ids label which record owns each position; 0 marks padding.
first = pad_block(blocks[0])
print("\nsegments:", first.segment_ids)

# position_ids restart at each segment so every record sees positions 0..n.
layout = attention_layout(first)
print("positions:", layout.position_ids)

# The mask is block-diagonal and causal. Printed for the padded block: rows
# attend to columns marked #.
mask = layout.to_mask()
print("\nattention mask:")
for row in mask:
    print("  " + "".join("#" if cell else "." for cell in row))

# No attendable pair ever crosses segments.
seg = np.asarray(first.segment_ids)
assert not (mask & (seg[:, None] != seg[None, :])).any()
