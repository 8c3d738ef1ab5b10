from .proxy_audit import (
    AuditReport,
    TrialRecord,
    TypePrior,
    audit,
    beach_counterexample,
    branch_values,
    focal_utility_table,
)

__all__ = [
    "AuditReport",
    "TrialRecord",
    "TypePrior",
    "audit",
    "beach_counterexample",
    "branch_values",
    "focal_utility_table",
]
