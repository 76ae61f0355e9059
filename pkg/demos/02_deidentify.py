"""
Removing clinician names before training
=========================================

Names reach report text through dictation footers, attestations, and the
occasional inline mention. The de-identifier segments text into sentences
and drops any sentence matched by a name pattern. Whole-sentence removal is
deliberately blunt: a dropped attestation costs nothing for summarization
training, while a partially scrubbed one can leak.
"""

from radprep import NamePatternSet, deidentify_text

patterns = NamePatternSet.default()
print("default pattern classes:", ", ".join(patterns.pattern_ids))

TEXT = (
    "The lungs are clear without focal consolidation. "
    "No pleural effusion or pneumothorax. "
    "Dictated by Dr. Elena Vasquez. "
    "Electronically signed by Marcus Webb, MD. "
    "Heart size is within normal limits."
)

result = deidentify_text(TEXT, patterns)
print(f"\nremoved {result.removed_sentences} sentences")
print("fired:", dict(result.fired_patterns))
print("clean:", result.text)

# Running the scrubber on its own output changes nothing, so it is safe to
# apply at several pipeline stages without tracking which text is clean.
again = deidentify_text(result.text, patterns)
assert again.text == result.text and again.removed_sentences == 0
print("\nidempotent: second pass removed nothing")

# Sites with unusual footer conventions supply their own pattern file, one
# regex per line, optionally with a stable identifier prefix. "read by" is
# not an attribution verb the defaults know.
custom = NamePatternSet.from_lines([
    "# footer style used by the PACS migration vendor",
    r"id:vendor_footer \b[Rr]ead by [A-Z][a-z]+",
])
vendor = "No acute process. Report read by Chen at station four."
print("\ncustom pattern:", deidentify_text(vendor, custom).text)
