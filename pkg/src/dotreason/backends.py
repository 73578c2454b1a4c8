"""Text-generation backends: scripted replay and OpenAI-compatible HTTP."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Protocol, Union
from urllib.parse import urlparse

import requests

from .trace import CLOSE_TAGS, Role

log = logging.getLogger(__name__)

SYSTEM_PROMPT_VERSION = "v1"


def system_prompt() -> str:
    path = f"assets/system_prompt_{SYSTEM_PROMPT_VERSION}.txt"
    return resources.files(__package__).joinpath(path).read_text("utf-8")


class BackendError(Exception):
    pass


class ScriptExhaustedError(BackendError):
    pass


class TransportError(BackendError):
    pass


class ProtocolError(BackendError):
    pass


class AuthMissingError(BackendError):
    pass


class BadScriptError(BackendError):
    def __init__(self, line: int, message: str) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass(frozen=True)
class BackendRequest:
    prompt: str
    role_hint: Role
    stop_sequences: tuple[str, ...] = CLOSE_TAGS
    max_tokens: int = 512
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.stop_sequences:
            raise ValueError("stop_sequences must not be empty")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class BackendResponse:
    text: str
    usage: Optional[dict[str, int]] = None
    latency_ms: int = 0


class Backend(Protocol):
    # False for backends holding per-session state (the engine claims them).
    shareable: bool

    def generate(self, request: BackendRequest) -> BackendResponse: ...


@dataclass
class ScriptedBackend:
    """Replays canned completions in order.

    With ``strict`` off, the last step repeats forever once the script runs
    out, which is how adversarial never-ending sessions are scripted.
    """

    steps: list[str]
    strict: bool = True
    cursor: int = 0
    received: list[BackendRequest] = field(default_factory=list, repr=False)
    shareable = False

    def generate(self, request: BackendRequest) -> BackendResponse:
        self.received.append(request)
        if self.cursor >= len(self.steps):
            if self.strict or not self.steps:
                raise ScriptExhaustedError(f"script has only {len(self.steps)} steps")
            return BackendResponse(self.steps[-1])
        text = self.steps[self.cursor]
        self.cursor += 1
        return BackendResponse(text)


def parse_script(text: str) -> list[str]:
    """Split script text into steps separated by lines that are exactly ``---``.

    A step holding more than one closing role tag means a separator is
    missing and is rejected.
    """
    if not text.strip():
        return []
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    steps: list[str] = []
    current: list[str] = []
    start = 1
    closes = 0
    for lineno, line in enumerate(lines, start=1):
        if line.rstrip("\r") == "---":
            if not "\n".join(current).strip():
                raise BadScriptError(lineno, "empty step")
            steps.append("\n".join(current))
            current, start, closes = [], lineno + 1, 0
            continue
        closes += sum(line.count(tag) for tag in CLOSE_TAGS)
        if closes > 1:
            raise BadScriptError(lineno, "step contains two completions; missing '---' separator?")
        current.append(line.rstrip("\r"))
    if not "\n".join(current).strip():
        raise BadScriptError(start, "empty step")
    steps.append("\n".join(current))
    return steps


def load_script(path: Union[str, Path], strict: bool = True) -> ScriptedBackend:
    text = Path(path).read_text(encoding="utf-8")
    return ScriptedBackend(parse_script(text), strict=strict)


@dataclass(frozen=True)
class HttpBackendConfig:
    base_url: str
    model: str
    api_key_env: str = "DOT_API_KEY"
    timeout_ms: int = 60000
    retries: int = 2

    def __post_init__(self) -> None:
        parsed = urlparse(self.base_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ValueError(f"base_url must be an absolute http(s) URL, got {self.base_url!r}")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")


class HttpBackend:
    """Chat-completions client; stateless per call and safe to share."""

    shareable = True

    def __init__(self, config: HttpBackendConfig, session: Optional[requests.Session] = None,
                 backoff_s: float = 0.5) -> None:
        self.config = config
        self.session = session or requests.Session()
        self.backoff_s = backoff_s

    @property
    def url(self) -> str:
        return self.config.base_url.rstrip("/") + "/chat/completions"

    def payload(self, request: BackendRequest) -> dict:
        return {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system_prompt()},
                {"role": "user", "content": request.prompt},
            ],
            "stop": list(request.stop_sequences),
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }

    def generate(self, request: BackendRequest) -> BackendResponse:
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise AuthMissingError(f"environment variable {self.config.api_key_env} is not set")
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        payload = self.payload(request)
        last: Optional[BackendError] = None
        for attempt in range(self.config.retries + 1):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            started = time.monotonic()
            try:
                resp = self.session.post(self.url, json=payload, headers=headers,
                                         timeout=self.config.timeout_ms / 1000)
            except requests.RequestException as e:
                last = TransportError(f"{type(e).__name__}: {e}")
                log.warning("attempt %d failed: %s", attempt + 1, last)
                continue
            latency = int((time.monotonic() - started) * 1000)
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TransportError(f"HTTP {resp.status_code}: {resp.text[:300]}")
                log.warning("attempt %d failed: %s", attempt + 1, last)
                continue
            if not 200 <= resp.status_code < 300:
                raise ProtocolError(f"HTTP {resp.status_code}: {resp.text[:300]}")
            return _read_completion(resp, latency)
        assert last is not None
        raise last


def _read_completion(resp: requests.Response, latency_ms: int) -> BackendResponse:
    try:
        data = resp.json()
        content = data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as e:
        raise ProtocolError(f"unparseable completion payload: {e!r}") from e
    if not isinstance(content, str) or not content:
        raise ProtocolError("completion content is empty")
    usage = data.get("usage")
    if usage is not None and not isinstance(usage, dict):
        usage = None
    return BackendResponse(content, usage=usage, latency_ms=latency_ms)
