"""Sentence segmentation and name-removal tests.

Expected outputs for the fixture reports were derived by hand (apply the
segmentation rule, then the flag rule) before implementation and frozen.
"""

import random

import pytest
from hypothesis import given, strategies as st

from radprep.deid import (
    DeidResult,
    NamePatternSet,
    deidentify,
    deidentify_text,
    flag_name_sentences,
    segment_sentences,
)
from radprep.corpus import ReportDoc
from radprep.errors import InvalidPatternError

DEFAULT = NamePatternSet.default()


def _texts(text):
    return [text[s:e] for s, e in segment_sentences(text)]


class TestSegmentation:
    def test_two_plain_sentences(self):
        assert _texts("No fracture. No effusion.") == ["No fracture.", "No effusion."]

    def test_empty(self):
        assert segment_sentences("") == []
        assert segment_sentences("   \n ") == []

    def test_abbreviation_does_not_split(self):
        assert _texts("Seen by Dr. Smith. Stable.") == ["Seen by Dr. Smith.", "Stable."]

    def test_more_abbreviations(self):
        assert _texts("Compared vs. Prior exam.") == ["Compared vs. Prior exam."]
        assert _texts("At St. Mary hospital. Next.") == ["At St. Mary hospital.", "Next."]
        assert _texts("Lesions, e.g. Nodules, seen.") == ["Lesions, e.g. Nodules, seen."]
        assert _texts("Use catheter No. 5 today.") == ["Use catheter No. 5 today."]

    def test_lowercase_after_period_does_not_split(self):
        assert _texts("stable vs. prior exam. no change noted.") == \
            ["stable vs. prior exam. no change noted."]

    def test_exclamation_and_question(self):
        assert _texts("Urgent! Call now. Why? Unclear.") == \
            ["Urgent!", "Call now.", "Why?", "Unclear."]

    def test_no_terminal_punctuation(self):
        assert _texts("trailing fragment") == ["trailing fragment"]
        assert _texts("One. two words") == ["One. two words"]

    @given(st.text(max_size=300))
    def test_spans_cover_exactly_the_non_whitespace(self, text):
        spans = segment_sentences(text)
        prev_end = None
        covered = bytearray(len(text))
        for s, e in spans:
            assert s < e
            if prev_end is not None:
                assert s >= prev_end
                assert text[prev_end:s].strip() == ""
            assert not text[s].isspace()
            assert not text[e - 1].isspace()
            for i in range(s, e):
                covered[i] = 1
            prev_end = e
        for i, ch in enumerate(text):
            if not ch.isspace():
                assert covered[i], f"non-whitespace char at {i} not covered"

    @given(st.text(max_size=300))
    def test_reconstruction(self, text):
        spans = segment_sentences(text)
        if not spans:
            assert text.strip() == ""
            return
        lo, hi = spans[0][0], spans[-1][1]
        rebuilt = ""
        for k, (s, e) in enumerate(spans):
            if k:
                rebuilt += text[spans[k - 1][1]:s]
            rebuilt += text[s:e]
        assert rebuilt == text[lo:hi]


class TestFlagging:
    def _flags(self, text, patterns=DEFAULT):
        spans = segment_sentences(text)
        return flag_name_sentences(text, spans, patterns)

    def test_dictated_by_fires(self):
        flags, fired = self._flags("Dictated by Dr. John Smith.")
        assert flags == [True]
        assert fired["attribution"] >= 1

    def test_clean_sentence_does_not_fire(self):
        flags, fired = self._flags("No acute cardiopulmonary process.")
        assert flags == [False]
        assert not fired

    def test_surname_given_fires_on_first_span_only(self):
        flags, fired = self._flags("Discussed with Smith, John at 3pm. Findings stable.")
        assert flags == [True, False]
        assert fired["surname_given"] == 1

    def test_title_without_period(self):
        flags, _ = self._flags("Mr Jones was contacted.")
        assert flags == [True]

    def test_credential_suffix(self):
        flags, fired = self._flags("Electronically signed by John Smith, MD.")
        assert flags == [True]
        assert fired["credential"] == 1


class TestPatternSet:
    def test_invalid_regex_raises(self):
        with pytest.raises(InvalidPatternError):
            NamePatternSet(["(unclosed"], ["bad"])

    def test_empty_set_raises(self):
        with pytest.raises(InvalidPatternError):
            NamePatternSet([], [])

    def test_duplicate_ids_raise(self):
        with pytest.raises(InvalidPatternError):
            NamePatternSet(["a", "b"], ["x", "x"])

    def test_from_lines_ids_and_comments(self):
        ps = NamePatternSet.from_lines([
            "# a comment",
            "",
            r"id:titles \bDr\.\s+[A-Z]",
            r"\bFoo\b",
        ])
        assert ps.pattern_ids == ["titles", "4"]
        assert ps.patterns == [r"\bDr\.\s+[A-Z]", r"\bFoo\b"]

    def test_from_file(self, tmp_path):
        p = tmp_path / "patterns.txt"
        p.write_text("# names\n\\bZorp\\b\n", encoding="utf-8")
        ps = NamePatternSet.from_file(p)
        assert ps.patterns == [r"\bZorp\b"]
        assert ps.pattern_ids == ["2"]

    def test_anchored_pattern_disables_fast_path_but_still_works(self):
        ps = NamePatternSet([r"^Signed by [A-Z][a-z]+"], ["head"])
        assert ps._combined is None
        res = deidentify_text("Signed by Quill. Lungs clear.", ps)
        assert res.text == "Lungs clear."
        assert res.removed_sentences == 1


CLEAN = [
    "No acute cardiopulmonary process.",
    "Lungs are clear bilaterally.",
    "Heart size is within normal limits.",
    "No pleural effusion or pneumothorax.",
    "Degenerative changes of the spine.",
    "Stable appearance of the chest.",
]

NAMEY = [
    "Dictated by Dr. Alice Wong.",
    "Electronically signed by John Smith, MD.",
    "Discussed with Dr. Patel at the time of interpretation.",
    "Reviewed by Moreau, Claire.",
    "Mr. Okafor returned for followup imaging.",
]


class TestDeidentify:
    def test_middle_sentence_removed(self):
        res = deidentify_text("Stable chest. Reviewed by Dr. Lee. No effusion.", DEFAULT)
        assert res.text == "Stable chest. No effusion."
        assert res.removed_sentences == 1

    def test_clean_text_returned_verbatim(self):
        text = "Stable chest.\n\nNo effusion  noted."
        res = deidentify_text(text, DEFAULT)
        assert res.text == text
        assert res.removed_sentences == 0
        assert not res.fired_patterns

    def test_whole_text_removed(self):
        res = deidentify_text("Electronically signed by John Smith, MD.", DEFAULT)
        assert res.text == ""
        assert res.removed_sentences == 1

    def test_doc_wrapper_covers_both_fields(self):
        doc = ReportDoc("r1", "CT01",
                        findings="Clear lungs. Dictated by Dr. Alice Wong.",
                        impression="Normal study.")
        clean, results = deidentify(doc, DEFAULT)
        assert clean.findings == "Clear lungs."
        assert clean.impression == "Normal study."
        assert results["findings"].removed_sentences == 1
        assert results["impression"].removed_sentences == 0
        assert clean.record_id == doc.record_id

    def test_every_name_template_is_caught(self):
        for sentence in NAMEY:
            res = deidentify_text(sentence, DEFAULT)
            assert res.text == "", sentence
            assert res.removed_sentences == 1

    @given(st.integers(0, 2**32 - 1))
    def test_injection_oracle(self, seed):
        # Inject name sentences at known positions; exactly those must go.
        rng = random.Random(seed)
        kept, injected = [], []
        for _ in range(rng.randrange(1, 12)):
            if rng.random() < 0.3:
                injected.append(rng.choice(NAMEY))
                kept.append(None)
            else:
                s = rng.choice(CLEAN)
                injected.append(s)
                kept.append(s)
        text = " ".join(injected)
        res = deidentify_text(text, DEFAULT)
        expected = [s for s in kept if s is not None]
        assert res.text == (" ".join(expected) if len(expected) < len(kept) else text)
        assert res.removed_sentences == len(kept) - len(expected)

    @given(st.integers(0, 2**32 - 1))
    def test_idempotent(self, seed):
        rng = random.Random(seed)
        parts = [rng.choice(CLEAN + NAMEY) for _ in range(rng.randrange(0, 10))]
        text = " ".join(parts)
        once = deidentify_text(text, DEFAULT)
        twice = deidentify_text(once.text, DEFAULT)
        assert twice.text == once.text
        assert twice.removed_sentences == 0

    def test_output_has_no_pattern_match(self):
        rng = random.Random(7)
        for _ in range(50):
            text = " ".join(rng.choice(CLEAN + NAMEY) for _ in range(8))
            res = deidentify_text(text, DEFAULT)
            assert DEFAULT._combined.search(res.text) is None
