"""Minimal GitHub REST client that assembles an issue's event timeline.

Only three endpoint families are used: the issue itself, its comments and its
timeline (plus a commit lookup for ``referenced`` events). The issue body is
turned into the first comment event since it is the opening utterance.
"""
from __future__ import annotations

import logging
import os
import re
import time
from collections.abc import Callable
from datetime import datetime

import httpx

from bugsolve.corpus import Event, RawTimeline

logger = logging.getLogger(__name__)

DEFAULT_HOST = "https://api.github.com"
_TEXT_REF = re.compile(r"(?<![\w/])((?:[\w.-]+/[\w.-]+)?#\d+)\b|\bGH-(\d+)\b", re.IGNORECASE)


class GitHubError(Exception):
    pass


class NotFoundError(GitHubError):
    pass


class RateLimitError(GitHubError):
    def __init__(self, message: str, retry_after: float):
        super().__init__(f"{message} (retry after {retry_after:.0f}s)")
        self.retry_after = retry_after


class TransientError(GitHubError):
    """Network-level failure; the caller may retry."""


def _ts(value: str) -> int:
    return int(datetime.fromisoformat(value.replace("Z", "+00:00")).timestamp())


def _refs_in(text: str, project: str) -> list[str]:
    refs = []
    for m in _TEXT_REF.finditer(text or ""):
        if m.group(1):
            ref = m.group(1)
            refs.append(ref if "/" in ref else f"{project}{ref}")
        else:
            refs.append(f"{project}#{m.group(2)}")
    return refs


def _repo_from_url(url: str) -> str:
    m = re.search(r"/repos/([^/]+/[^/]+)", url or "")
    return m.group(1) if m else ""


class GitHubClient:
    def __init__(
        self,
        token: str | None = None,
        host: str = DEFAULT_HOST,
        max_retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 30.0,
        sleep: Callable[[float], None] = time.sleep,
        transport: httpx.BaseTransport | None = None,
    ):
        token = token if token is not None else os.environ.get("GITHUB_TOKEN")
        headers = {"Accept": "application/vnd.github+json"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(base_url=host, headers=headers, timeout=timeout, transport=transport)
        self.max_retries = max_retries
        self.backoff = backoff
        self._sleep = sleep

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> GitHubClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @staticmethod
    def _retry_after(resp: httpx.Response) -> float:
        if "Retry-After" in resp.headers:
            return float(resp.headers["Retry-After"])
        reset = resp.headers.get("X-RateLimit-Reset")
        if reset:
            return max(float(reset) - time.time(), 0.0)
        return 60.0

    def _request(self, url: str, params: dict | None = None) -> httpx.Response:
        attempt = 0
        while True:
            try:
                resp = self._client.get(url, params=params)
            except httpx.TransportError as exc:
                raise TransientError(f"GET {url}: {exc}") from exc
            if resp.status_code == 404:
                raise NotFoundError(f"GET {url}: not found")
            if resp.status_code in (403, 429):
                wait = self._retry_after(resp)
                if attempt >= self.max_retries:
                    raise RateLimitError(f"GET {url}: HTTP {resp.status_code}", wait)
                delay = max(wait, self.backoff * 2**attempt)
                logger.warning("rate limited on %s, sleeping %.1fs", url, delay)
                self._sleep(delay)
                attempt += 1
                continue
            if resp.status_code >= 500:
                raise TransientError(f"GET {url}: HTTP {resp.status_code}")
            if resp.status_code >= 400:
                raise GitHubError(f"GET {url}: HTTP {resp.status_code}")
            return resp

    def get(self, path: str) -> dict:
        return self._request(path).json()

    def get_all(self, path: str) -> list:
        """Follow ``Link: rel=next`` pagination."""
        items: list = []
        url: str | None = path
        params: dict | None = {"per_page": 100}
        while url:
            resp = self._request(url, params=params)
            items.extend(resp.json())
            url = resp.links.get("next", {}).get("url")
            params = None
        return items

    def fetch_issue(self, project: str, issue_number: int) -> RawTimeline:
        base = f"/repos/{project}/issues/{issue_number}"
        issue = self.get(base)
        comments = self.get_all(f"{base}/comments")
        timeline = self.get_all(f"{base}/timeline")
        own = f"{project}#{issue_number}"

        events: list[Event] = []
        if (issue.get("body") or "").strip():
            events.append(
                Event(kind="comment", actor=issue["user"]["login"], timestamp=_ts(issue["created_at"]), text=issue["body"])
            )
        for c in comments:
            events.append(
                Event(kind="comment", actor=(c.get("user") or {}).get("login", "ghost"), timestamp=_ts(c["created_at"]), text=c.get("body") or "")
            )
        for item in timeline:
            ev = self._timeline_event(item, project, own)
            if ev is not None:
                events.append(ev)
        events.sort(key=lambda e: e.timestamp)

        return RawTimeline(
            project=project,
            issue_number=issue_number,
            title_raw=issue.get("title") or "",
            labels=tuple(lb["name"] if isinstance(lb, dict) else str(lb) for lb in issue.get("labels", [])),
            state=issue.get("state", "open"),
            events=tuple(events),
        )

    def _timeline_event(self, item: dict, project: str, own: str) -> Event | None:
        kind = item.get("event")
        if kind == "cross-referenced":
            src = (item.get("source") or {}).get("issue") or {}
            if "pull_request" not in src:
                return None
            repo = (src.get("repository") or {}).get("full_name") or _repo_from_url(src.get("repository_url", ""))
            text = src.get("title") or ""
            refs = _refs_in(f"{text}\n{src.get('body') or ''}", repo or project)
            return Event(
                kind="pull_request" if repo.lower() == project.lower() else "other",
                actor=(src.get("user") or {}).get("login") or (item.get("actor") or {}).get("login", "ghost"),
                timestamp=_ts(item["created_at"]),
                text=text,
                linked_issues=tuple(dict.fromkeys([own, *refs])),
            )
        if kind == "referenced" and item.get("commit_id"):
            repo = _repo_from_url(item.get("commit_url", "")) or project
            actor = (item.get("actor") or {}).get("login", "ghost")
            if repo.lower() != project.lower():
                return Event(kind="other", actor=actor, timestamp=_ts(item["created_at"]), text="", linked_issues=(own,))
            commit = self.get(f"/repos/{repo}/commits/{item['commit_id']}")
            message = (commit.get("commit") or {}).get("message", "")
            author = (commit.get("author") or {}).get("login") or actor
            return Event(
                kind="commit",
                actor=author,
                timestamp=_ts(item["created_at"]),
                text=message,
                linked_issues=tuple(dict.fromkeys([own, *_refs_in(message, project)])),
            )
        return None


def fetch_issue(project: str, issue_number: int, auth_token: str | None = None, host: str = DEFAULT_HOST) -> RawTimeline:
    with GitHubClient(token=auth_token, host=host) as client:
        return client.fetch_issue(project, issue_number)
