from bugsolve.ingest.extract import (
    IngestConfig,
    RejectReason,
    discussion_utterances,
    extract_all,
    extract_example,
    is_bug_report,
    reject_histogram,
)
from bugsolve.ingest.github import (
    GitHubClient,
    GitHubError,
    NotFoundError,
    RateLimitError,
    TransientError,
    fetch_issue,
)

__all__ = [
    "GitHubClient",
    "GitHubError",
    "IngestConfig",
    "NotFoundError",
    "RateLimitError",
    "RejectReason",
    "TransientError",
    "discussion_utterances",
    "extract_all",
    "extract_example",
    "fetch_issue",
    "is_bug_report",
    "reject_histogram",
]
