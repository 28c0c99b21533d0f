"""Report rendering and comparison: human tables, JSON, before/after diffs
and the mapping from failing tests to the policy knobs that fix them."""

import json
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

from .errors import ReportShapeError, UsageError
from .policy import FIXABLE_HEADERS
from .rules import TEST_ORDER, TEST_TITLES, Outcome, TestResult
from .scanner import ScanReport

GLYPHS = {Outcome.PASS: "✓", Outcome.FAIL: "×", Outcome.NEUTRAL: "—"}
ASCII_MARKS = {Outcome.PASS: "ok", Outcome.FAIL: "fail", Outcome.NEUTRAL: "--"}


@dataclass
class DiffReport:
    """Field-wise comparison of two scan reports of the same shape."""

    before_score: int
    after_score: int
    delta: int
    fixed: List[str]
    regressed: List[str]
    unchanged_failing: List[str]
    per_test: List[Tuple[str, TestResult, TestResult]]


@dataclass
class RemediationEntry:
    test_id: str
    field_path: Optional[str]
    suggested_value: Optional[str]
    note: str = ""


def _by_id(report: ScanReport) -> dict:
    ids = [t.test_id for t in report.tests]
    if sorted(ids) != sorted(TEST_ORDER):
        raise ReportShapeError(f"report does not cover the eleven tests: {sorted(ids)!r}")
    return {t.test_id: t for t in report.tests}


def diff_reports(before: ScanReport, after: ScanReport) -> DiffReport:
    """Diff two reports; lists are ordered by the fixed table order."""
    before_map = _by_id(before)
    after_map = _by_id(after)

    fixed, regressed, unchanged_failing, per_test = [], [], [], []
    for test_id in TEST_ORDER:
        b, a = before_map[test_id], after_map[test_id]
        per_test.append((test_id, b, a))
        if b.outcome is Outcome.FAIL and a.outcome is Outcome.PASS:
            fixed.append(test_id)
        elif b.outcome is not Outcome.FAIL and a.outcome is Outcome.FAIL:
            regressed.append(test_id)
        elif b.outcome is Outcome.FAIL and a.outcome is Outcome.FAIL:
            unchanged_failing.append(test_id)

    return DiffReport(
        before_score=before.score,
        after_score=after.score,
        delta=after.score - before.score,
        fixed=fixed,
        regressed=regressed,
        unchanged_failing=unchanged_failing,
        per_test=per_test,
    )


def remediation_map(report: ScanReport) -> List[RemediationEntry]:
    """One remediation entry per failing test, in table order."""
    entries = []
    for result in report.tests:
        if result.outcome is not Outcome.FAIL:
            continue
        if result.test_id in FIXABLE_HEADERS:
            name, value = FIXABLE_HEADERS[result.test_id]
            entries.append(RemediationEntry(
                test_id=result.test_id,
                field_path=f"headers.{name}",
                suggested_value=value,
            ))
        elif result.test_id == "strict-transport-security":
            entries.append(RemediationEntry(
                test_id=result.test_id,
                field_path="hsts.enabled",
                suggested_value="true",
                note="requires enable_hsts",
            ))
        else:
            entries.append(RemediationEntry(
                test_id=result.test_id,
                field_path=None,
                suggested_value=None,
                note="manual remediation",
            ))
    return entries


# ---------------------------------------------------------------------------
# JSON serialization (bit-exact report schema)
# ---------------------------------------------------------------------------

def report_to_dict(report: ScanReport) -> dict:
    return {
        "target": report.target,
        "fetched_at": report.fetched_at,
        "tests": [{"id": t.test_id, "outcome": t.outcome.value,
                   "modifier": t.modifier, "reason": t.reason}
                  for t in report.tests],
        "score": report.score,
        "grade": report.grade,
    }


def report_from_dict(data: dict) -> ScanReport:
    try:
        tests = [TestResult(test_id=item["id"], outcome=Outcome(item["outcome"]),
                            modifier=item["modifier"], reason=item["reason"])
                 for item in data["tests"]]
        report = ScanReport(target=data["target"], fetched_at=data["fetched_at"],
                            tests=tests, score=data["score"], grade=data["grade"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportShapeError(f"malformed report document: {exc}")
    _by_id(report)  # enforce the eleven-test shape
    return report


def parse_report_json(text: str) -> ScanReport:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ReportShapeError(f"invalid report JSON: {exc.msg}")
    return report_from_dict(data)


def diff_to_dict(diff: DiffReport) -> dict:
    return {
        "before_score": diff.before_score,
        "after_score": diff.after_score,
        "delta": diff.delta,
        "fixed": list(diff.fixed),
        "regressed": list(diff.regressed),
        "unchanged_failing": list(diff.unchanged_failing),
        "per_test": [{"id": test_id,
                      "before": {"outcome": b.outcome.value, "modifier": b.modifier,
                                 "reason": b.reason},
                      "after": {"outcome": a.outcome.value, "modifier": a.modifier,
                                "reason": a.reason}}
                     for test_id, b, a in diff.per_test],
    }


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _modifier_text(modifier: int) -> str:
    return f"+{modifier}" if modifier > 0 else str(modifier)


def _table(rows: List[Tuple[str, ...]], header: Tuple[str, ...]) -> str:
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header) - 1)]

    def fmt(row):
        cells = [cell.ljust(widths[i]) for i, cell in enumerate(row[:-1])]
        return " | ".join(cells + [row[-1]])

    ruler = "-+-".join("-" * w for w in widths) + "-+-" + "-" * len(header[-1])
    return "\n".join([fmt(header), ruler] + [fmt(row) for row in rows])


def render_report_table(report: ScanReport, ascii_marks: bool = False) -> str:
    marks = ASCII_MARKS if ascii_marks else GLYPHS
    rows = [(TEST_TITLES[t.test_id], marks[t.outcome], _modifier_text(t.modifier), t.reason)
            for t in report.tests]
    table = _table(rows, ("Test", "Pass", "Score", "Reason"))
    return (f"Target: {report.target}\nFetched: {report.fetched_at}\n\n"
            f"{table}\n\nScore: {report.score}  Grade: {report.grade}")


def render_diff_table(diff: DiffReport, ascii_marks: bool = False) -> str:
    marks = ASCII_MARKS if ascii_marks else GLYPHS
    rows = []
    for test_id, b, a in diff.per_test:
        change = ""
        if test_id in diff.fixed:
            change = "fixed"
        elif test_id in diff.regressed:
            change = "regressed"
        elif test_id in diff.unchanged_failing:
            change = "still failing"
        rows.append((TEST_TITLES[test_id],
                     f"{marks[b.outcome]} {_modifier_text(b.modifier)}",
                     f"{marks[a.outcome]} {_modifier_text(a.modifier)}",
                     change))
    table = _table(rows, ("Test", "Before", "After", "Change"))
    summary = (f"Score: {diff.before_score} -> {diff.after_score} "
               f"(delta {_modifier_text(diff.delta)})")
    return f"{table}\n\n{summary}"


def render_remediation_table(entries: List[RemediationEntry]) -> str:
    if not entries:
        return "No failing tests: nothing to remediate."
    rows = [(e.test_id, e.field_path or "-", e.suggested_value or "-", e.note)
            for e in entries]
    return _table(rows, ("Test", "Policy field", "Suggested value", "Note"))


def render(obj: Union[ScanReport, DiffReport], fmt: str = "table",
           ascii_marks: bool = False) -> str:
    """Render a scan report or diff as an aligned table or JSON."""
    if fmt == "json":
        data = report_to_dict(obj) if isinstance(obj, ScanReport) else diff_to_dict(obj)
        return json.dumps(data, indent=2, ensure_ascii=False)
    if fmt == "table":
        if isinstance(obj, ScanReport):
            return render_report_table(obj, ascii_marks)
        return render_diff_table(obj, ascii_marks)
    raise UsageError(f"unknown format {fmt!r} (expected 'table' or 'json')")
