"""Score aggregation and grade band tests."""

import random

import pytest

from shapegate.errors import ReportShapeError
from shapegate.rules import TEST_ORDER, Outcome
from shapegate.rules import TestResult as Result
from shapegate.scanner import compute_score, grade_for

# Modifier columns summed from the before/after result tables.
TABLE_BEFORE = {"content-security-policy": -25, "cookies": 0,
                "cross-origin-resource-sharing": 0, "http-public-key-pinning": 0,
                "strict-transport-security": -20, "redirection": 0,
                "referrer-policy": 0, "subresource-integrity": 0,
                "x-content-type-options": -5, "x-frame-options": -20,
                "x-xss-protection": -10}
TABLE_AFTER = {**TABLE_BEFORE, "content-security-policy": 5,
               "x-content-type-options": 0, "x-frame-options": 0,
               "x-xss-protection": 0}


def results_with(modifiers):
    out = []
    for test_id in TEST_ORDER:
        modifier = modifiers.get(test_id, 0)
        outcome = Outcome.FAIL if modifier < 0 else (
            Outcome.PASS if modifier > 0 else Outcome.NEUTRAL)
        out.append(Result(test_id=test_id, outcome=outcome,
                              modifier=modifier, reason="x"))
    return out


def test_all_zero_modifiers():
    # 100 sits exactly on the A+ band boundary.
    assert compute_score(results_with({})) == (100, "A+")


def test_before_table_sums_to_20_f():
    assert sum(TABLE_BEFORE.values()) == -80
    assert compute_score(results_with(TABLE_BEFORE)) == (20, "F")


def test_after_table_sums_to_85_b():
    assert sum(TABLE_AFTER.values()) == -15
    assert compute_score(results_with(TABLE_AFTER)) == (85, "B")


def test_clamping():
    score, _ = compute_score(results_with({t: -50 for t in TEST_ORDER}))
    assert score == 0
    score, grade = compute_score(results_with({t: 50 for t in TEST_ORDER}))
    assert (score, grade) == (135, "A+")


def test_missing_test_raises():
    results = results_with({})[:-1]
    with pytest.raises(ReportShapeError):
        compute_score(results)


def test_duplicate_test_raises():
    results = results_with({})
    results[0] = results[1]
    with pytest.raises(ReportShapeError):
        compute_score(results)


def test_grade_bands():
    assert grade_for(100) == "A+"
    assert grade_for(99) == "A"
    assert grade_for(90) == "A"
    assert grade_for(89) == "B"
    assert grade_for(80) == "B"
    assert grade_for(79) == "C"
    assert grade_for(65) == "C"
    assert grade_for(64) == "D"
    assert grade_for(50) == "D"
    assert grade_for(49) == "F"
    assert grade_for(0) == "F"


def test_score_additivity_without_clamping():
    # Zeroing one modifier shifts the score by exactly that modifier.
    rng = random.Random(7)
    for _ in range(100):
        modifiers = {t: rng.choice([-10, -5, 0, 5]) for t in TEST_ORDER}
        base = 100 + sum(modifiers.values())
        if not 0 <= base <= 135:
            continue
        full, _ = compute_score(results_with(modifiers))
        for test_id in TEST_ORDER:
            zeroed = dict(modifiers)
            removed = zeroed.pop(test_id)
            if not 0 <= base - removed <= 135:
                continue
            partial, _ = compute_score(results_with(zeroed))
            assert full - partial == removed
