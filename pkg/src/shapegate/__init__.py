"""shapegate: scan a web origin, derive a zero-trust policy, enforce it
through a transparent reverse proxy, and verify the improvement."""

__version__ = "0.1.0"

from .errors import (NetworkError, PolicyParseError, RedirectLoopError,
                     ReportShapeError, SanitizeInputError, ShapegateError,
                     StartupError, TlsError, UsageError)
from .interceptors import (UploadVerdict, check_password, guard_upload,
                           inject_headers, sanitize_pdf, scan_signatures)
from .policy import (PolicyDocument, RiskAssessment, assess_risks,
                     load_policy, plan_from_scan, save_policy, validate_policy)
from .reporting import DiffReport, diff_reports, remediation_map, render
from .rules import TEST_ORDER, Outcome, TestResult, evaluate_test
from .scanner import ScanReport, compute_score, run_scan
from .snapshot import TargetSnapshot, fetch_target

__all__ = [
    "DiffReport", "NetworkError", "Outcome", "PolicyDocument",
    "PolicyParseError", "RedirectLoopError", "ReportShapeError",
    "RiskAssessment", "SanitizeInputError", "ScanReport", "ShapegateError",
    "StartupError", "TargetSnapshot", "TEST_ORDER", "TestResult", "TlsError",
    "UploadVerdict", "UsageError", "assess_risks", "check_password",
    "compute_score", "diff_reports", "evaluate_test", "fetch_target",
    "guard_upload", "inject_headers", "load_policy", "plan_from_scan",
    "remediation_map", "render", "run_scan", "sanitize_pdf",
    "save_policy", "scan_signatures", "validate_policy",
]
