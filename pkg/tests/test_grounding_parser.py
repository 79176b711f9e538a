"""Tests for the grounding format rewards and answer extraction."""

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guirl.parsers.grounding_parser import (
    GroundingParser,
    extract_answer_strict,
    extract_numbers_soft,
    extract_numbers_strict,
    soft_format_reward,
    strict_format_reward,
)
from guirl.types import BBox, FormatSpec

POINT = FormatSpec(expected_coord_count=2)
BOX = FormatSpec(expected_coord_count=4)

# free text that cannot open or close a tag
tag_free_text = st.text(alphabet=st.characters(blacklist_characters="<>"), max_size=20)
whitespace = st.text(alphabet=" \t\n", max_size=4)


@pytest.mark.parsers
class TestStrictFormatReward:
    """Exact-pattern format reward."""

    def test_exemplar_completion(self):
        """Test that a well-formed completion scores 1."""
        assert strict_format_reward("<think>find icon</think> <answer>[1,2,3,4]</answer>") == 1.0

    def test_missing_answer_close(self):
        """Test that an omitted </answer> scores 0."""
        assert strict_format_reward("<think>x</think><answer>[1,2,3,4]") == 0.0

    def test_reversed_blocks(self):
        """Test that answer-before-think scores 0."""
        assert strict_format_reward("<answer>[1,2,3,4]</answer><think>x</think>") == 0.0

    def test_text_between_blocks(self):
        """Test that non-whitespace between the blocks breaks the pattern."""
        assert strict_format_reward("<think>a</think> so <answer>[1]</answer>") == 0.0

    def test_multiline_content(self):
        """Test that block contents may span lines."""
        assert strict_format_reward("<think>a\nb</think>\n<answer>\n[1, 2]\n</answer>") == 1.0

    @settings(max_examples=200)
    @given(think=tag_free_text, answer=tag_free_text, gap=whitespace)
    def test_well_formed_always_passes(self, think, answer, gap):
        """Test that any tag-free content in the canonical layout passes."""
        text = f"<think>{think}</think>{gap}<answer>{answer}</answer>"
        assert strict_format_reward(text) == 1.0

    @settings(max_examples=200)
    @given(
        think=tag_free_text,
        answer=tag_free_text,
        dropped=st.sampled_from(["<think>", "</think>", "<answer>", "</answer>"]),
    )
    def test_any_missing_tag_fails(self, think, answer, dropped):
        """Test that dropping any one tag makes the completion fail."""
        text = f"<think>{think}</think><answer>{answer}</answer>".replace(dropped, "", 1)
        assert strict_format_reward(text) == 0.0


@pytest.mark.parsers
class TestSoftFormatReward:
    """Partial-credit format reward."""

    def test_full_credit_point(self):
        """Test the full-credit point example."""
        assert soft_format_reward("<think>a</think><answer>click (3, 4)</answer>", POINT) == 1.0

    def test_empty_text(self):
        """Test that an empty completion gets nothing."""
        assert soft_format_reward("", POINT) == 0.0

    def test_wrong_arity_forfeits_count_credit(self):
        """Test that four numbers in point mode lose only the count credit."""
        text = "<think>a</think><answer>[1, 2, 3, 4]</answer>"
        assert soft_format_reward(text, POINT) == pytest.approx(5 / 6)

    def test_think_open_only(self):
        """Test that a lone <think> earns a quarter."""
        assert soft_format_reward("<think>reasoning only", POINT) == 0.25

    def test_bbox_full_credit(self):
        """Test that four numbers earn the count credit in bbox mode."""
        assert soft_format_reward("<think>a</think><answer>[1, 2, 3, 4]</answer>", BOX) == 1.0

    @pytest.mark.parametrize(
        "bits", list(itertools.product([False, True], repeat=4)), ids=lambda b: "".join("01"[x] for x in b)
    )
    @pytest.mark.parametrize("numbers", ["", "3, 4", "1, 2, 3, 4"])
    def test_credit_table(self, bits, numbers):
        """Test every tag subset against the hand-summed credits."""
        think_open, think_close, answer_open, answer_close = bits
        text = (
            ("<think>" if think_open else "")
            + "look"
            + ("</think>" if think_close else "")
            + ("<answer>" if answer_open else "")
            + numbers
            + ("</answer>" if answer_close else "")
        )
        count_ok = answer_open and answer_close and numbers == "3, 4"
        credit = (
            Fraction(1, 2) * (think_open + think_close)
            + Fraction(1, 3) * (answer_open + answer_close + count_ok)
        )
        assert soft_format_reward(text, POINT) == float(credit / 2)

    def test_legacy_normalizer_is_clamped(self):
        """Test that the 1.5 divisor never exceeds 1."""
        text = "<think>a</think><answer>[3, 4]</answer>"
        assert soft_format_reward(text, POINT, normalizer=1.5) == 1.0
        assert soft_format_reward("<think>", POINT, normalizer=1.5) == pytest.approx(1 / 3)

    @settings(max_examples=200)
    @given(text=st.text(alphabet=st.sampled_from(list("<>/thinkaswer 0123456789,.[]")), max_size=60))
    def test_range(self, text):
        """Test that the soft reward always lies in [0, 1]."""
        assert 0.0 <= soft_format_reward(text, POINT) <= 1.0


@pytest.mark.parsers
class TestExtraction:
    """Strict and soft number extraction."""

    def test_strict_bbox(self):
        """Test the strict bracketed bbox."""
        assert extract_answer_strict("<answer>[10, 20, 30, 40]</answer>") == BBox(
            x1=10, y1=20, x2=30, y2=40
        )

    def test_strict_rejects_tuple(self):
        """Test that parentheses are not brackets."""
        assert extract_answer_strict("<answer>coords are (10, 20, 30, 40)</answer>") is None

    def test_strict_needs_answer_block(self):
        """Test that numbers outside an answer block are ignored."""
        assert extract_answer_strict("no tags at all [1,2,3,4]") is None

    def test_strict_rejects_inverted_box(self):
        """Test that x1 >= x2 yields no box."""
        assert extract_answer_strict("<answer>[30, 20, 10, 40]</answer>") is None

    def test_strict_point(self):
        """Test strict point extraction."""
        assert extract_numbers_strict("<answer>[7, 9]</answer>", coord_count=2) == [7.0, 9.0]

    def test_soft_decimal(self):
        """Test a decimal in a tuple."""
        assert extract_numbers_soft("<answer>point: (12.5, 48)</answer>") == [12.5, 48.0]

    def test_soft_scopes_to_answer(self):
        """Test that digits in the reasoning are ignored when an answer block exists."""
        assert extract_numbers_soft("<think>step 1: look</think><answer>x=3 y=4</answer>") == [3.0, 4.0]

    def test_soft_without_answer_scans_all(self):
        """Test that the whole text is scanned without an answer block."""
        assert extract_numbers_soft("click at -5, 7.25") == [-5.0, 7.25]

    def test_soft_no_numbers(self):
        """Test that text without numbers yields an empty list."""
        assert extract_numbers_soft("no numbers here") == []

    @pytest.mark.parametrize("digits", [400, 5000])
    def test_strict_oversized_integer(self, digits):
        """Test that an integer beyond the float range is no answer, not an exception."""
        huge = "9" * digits
        assert extract_numbers_strict(f"<answer>[{huge}, 1]</answer>", coord_count=2) == []
        assert extract_answer_strict(f"<answer>[{huge}, 1, 2, 3]</answer>") is None
        assert extract_answer_strict(f"<answer>[0, 0, {huge}, 3]</answer>") is None

    def test_soft_oversized_literal(self):
        """Test that an overflowing literal voids the soft answer too."""
        assert extract_numbers_soft("<answer>(" + "9" * 400 + ", 4)</answer>") == []


@pytest.mark.parsers
class TestGroundingParser:
    """The parser object used by the rubric."""

    def test_variant_selects_extraction(self, soft_parser, strict_parser):
        """Test that strict and soft parsers read a tuple differently."""
        text = "<think>a</think><answer>(10, 20, 30, 40)</answer>"
        assert soft_parser.parse(text) == [10.0, 20.0, 30.0, 40.0]
        assert strict_parser.parse(text) == []

    def test_format_reward_func(self, soft_parser, strict_parser):
        """Test that the returned reward functions match the module functions."""
        text = "<think>a</think><answer>[3, 4]</answer>"
        assert soft_parser.get_format_reward_func()(completion=text) == 1.0
        assert strict_parser.get_format_reward_func()(completion=text) == 1.0
        assert strict_parser.get_format_reward_func()(completion="<answer>[3, 4]") == 0.0

    def test_parse_answer(self, soft_parser):
        """Test that parse_answer returns the answer block content."""
        assert soft_parser.parse_answer("<answer>[3, 4]</answer>") == "[3, 4]"
        assert soft_parser.parse_answer("nothing") is None

    def test_unknown_variant(self):
        """Test that an unknown variant is rejected."""
        with pytest.raises(ValueError):
            GroundingParser(variant="loose")

    def test_non_positive_normalizer(self):
        """Test that the soft divisor must be positive."""
        with pytest.raises(ValueError):
            GroundingParser(soft_normalizer=0.0)

    def test_base_parser_passthrough(self, basic_parser):
        """Test that the base parser returns text unchanged and rewards 1.0."""
        assert basic_parser.parse("abc") == "abc"
        assert basic_parser.get_format_reward_func()(completion="x") == 1.0


FUZZ_TOKENS = [
    "<think>", "</think>", "<answer>", "</answer>",
    "<think", "think>", "</", "<", ">", "/",
    " ", "\n", "\t", "x", "[1, 2]", "[3,4,5,6]",
]


def _whitespace_only(text):
    return all(ch in " \t\n\r\f\v" for ch in text)


def strict_format_oracle(text):
    """Brute force over every tag occurrence, no regular expressions."""

    def positions(tag, start=0):
        out, i = [], text.find(tag, start)
        while i != -1:
            out.append(i)
            i = text.find(tag, i + 1)
        return out

    for p in positions("<think>"):
        for q in positions("</think>", p + len("<think>")):
            after = q + len("</think>")
            for r in positions("<answer>", after):
                if not _whitespace_only(text[after:r]):
                    break
                if positions("</answer>", r + len("<answer>")):
                    return 1.0
    return 0.0


@pytest.mark.slow
@pytest.mark.parsers
class TestStrictFormatFuzz:
    """Strict format reward against an independent oracle."""

    def test_grammar_fuzzed_strings(self):
        """Test 10,000 token-grammar strings against a brute-force tag search."""
        rng = np.random.default_rng(20240611)
        mismatches = []
        for _ in range(10_000):
            length = int(rng.integers(0, 14))
            text = "".join(FUZZ_TOKENS[i] for i in rng.integers(0, len(FUZZ_TOKENS), size=length))
            if strict_format_reward(text) != strict_format_oracle(text):
                mismatches.append(text)
        assert mismatches == []

    def test_oracle_agrees_on_fixed_cases(self):
        """Test the oracle itself on hand-picked completions."""
        assert strict_format_oracle("<think>find icon</think> <answer>[1,2,3,4]</answer>") == 1.0
        assert strict_format_oracle("<think>a</think> so <answer>[1]</answer>") == 0.0
        assert strict_format_oracle("<answer>[1]</answer><think>a</think>") == 0.0
        assert strict_format_oracle("<think><think>a</think>\n<answer></answer>") == 1.0
