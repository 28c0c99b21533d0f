"""Scan orchestration: one fetch, eleven evaluations, one scored report."""

from dataclasses import dataclass
from datetime import datetime, timezone
from typing import List, Optional, Tuple

from .errors import ReportShapeError
from .rules import TEST_ORDER, TestResult, evaluate_test
from .snapshot import (DEFAULT_MAX_REDIRECTS, DEFAULT_TIMEOUT_MS, TargetSnapshot,
                       fetch_target)

BASE_SCORE = 100
MIN_SCORE = 0
MAX_SCORE = 135

# Grade bands, highest first: Table-I posture lands at F, the shaped
# posture at B.
GRADE_BANDS = (
    (100, "A+"),
    (90, "A"),
    (80, "B"),
    (65, "C"),
    (50, "D"),
)


@dataclass
class ScanReport:
    """Eleven test results for one target, in fixed table order."""

    target: str
    fetched_at: str  # RFC 3339 UTC
    tests: List[TestResult]
    score: int
    grade: str


def grade_for(score: int) -> str:
    for threshold, grade in GRADE_BANDS:
        if score >= threshold:
            return grade
    return "F"


def compute_score(results: List[TestResult]) -> Tuple[int, str]:
    """Aggregate eleven results into (score, grade).

    Score is 100 plus the sum of modifiers, clamped to [0, 135]; raises
    ReportShapeError when a test id is missing or duplicated.
    """
    seen = [r.test_id for r in results]
    if sorted(seen) != sorted(TEST_ORDER):
        raise ReportShapeError(
            f"expected one result per test, got {sorted(seen)!r}")
    score = BASE_SCORE + sum(r.modifier for r in results)
    score = max(MIN_SCORE, min(MAX_SCORE, score))
    return score, grade_for(score)


def evaluate_snapshot(snapshot: TargetSnapshot, target: Optional[str] = None) -> ScanReport:
    """Run the eleven tests over an already-captured snapshot."""
    tests = [evaluate_test(test_id, snapshot) for test_id in TEST_ORDER]
    score, grade = compute_score(tests)
    return ScanReport(
        target=target if target is not None else snapshot.initial_url,
        fetched_at=datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        tests=tests,
        score=score,
        grade=grade,
    )


def run_scan(url: str, *, timeout_ms: int = DEFAULT_TIMEOUT_MS,
             max_redirects: int = DEFAULT_MAX_REDIRECTS,
             accept_invalid_tls: bool = False,
             http_probe_port: Optional[int] = None) -> ScanReport:
    """Fetch ``url`` once and evaluate all eleven tests on the snapshot.

    Fetch errors propagate; there is no partial report.
    """
    snapshot = fetch_target(
        url,
        timeout_ms=timeout_ms,
        max_redirects=max_redirects,
        accept_invalid_tls=accept_invalid_tls,
        http_probe_port=http_probe_port,
    )
    return evaluate_snapshot(snapshot, target=url)
