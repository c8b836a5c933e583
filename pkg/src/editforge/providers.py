"""External model surfaces.

Text-generation providers (QA synthesis): an HTTP chat/completion
client, a replay provider keyed by request hash for offline runs, and a
deterministic rule-based synthesizer used for fixtures and demos.

Answer providers (evaluation targets): HTTP and subprocess adapters plus
small reference models (answer table, constant, copy-first-retrieved)
used for harness self-tests.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence, Union

from editforge.textnorm import normalize

API_KEY_ENV = "QAFORGE_API_KEY"


class ProviderError(Exception):
    pass


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    model: str = "default"
    temperature: float = 0.7
    max_tokens: int = 256


@dataclass
class GenerationResponse:
    text: str
    provider_meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.text:
            raise ProviderError("empty generation response")


class GenerationProvider(Protocol):
    def generate(self, request: GenerationRequest) -> GenerationResponse:
        ...


def request_hash(request: GenerationRequest) -> str:
    payload = json.dumps(
        {
            "model": request.model,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class HttpGenerationProvider:
    """Chat/completion endpoint client with bounded jittered retries."""

    def __init__(
        self,
        endpoint: str,
        api_key: Optional[str] = None,
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff: float = 0.5,
    ) -> None:
        self.endpoint = endpoint
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        import requests

        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": request.model,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                response = requests.post(
                    self.endpoint, json=body, headers=headers, timeout=self.timeout
                )
                if response.status_code == 429:
                    raise ProviderError("rate limited")
                response.raise_for_status()
                data = response.json()
                return GenerationResponse(
                    text=self._extract_text(data), provider_meta={"status": "ok"}
                )
            except Exception as exc:
                last_error = exc
                time.sleep(self.backoff * (2**attempt) * (1.0 + random.random()))
        raise ProviderError(f"generation failed after retries: {last_error}")

    @staticmethod
    def _extract_text(data: dict) -> str:
        if "text" in data:
            return data["text"]
        choices = data.get("choices") or []
        if choices:
            first = choices[0]
            if "text" in first:
                return first["text"]
            message = first.get("message") or {}
            if "content" in message:
                return message["content"]
        raise ProviderError(f"unrecognized response shape: {list(data)}")


class ReplayProvider:
    """Serves canned responses from ``<dir>/<request-hash>.json``.

    With `record_with` set, cache misses are forwarded to the inner
    provider and the response is written down for future replay.
    """

    def __init__(
        self,
        directory: Union[str, Path],
        record_with: Optional[GenerationProvider] = None,
    ) -> None:
        self.directory = Path(directory)
        self.record_with = record_with
        if record_with is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        path = self.directory / f"{request_hash(request)}.json"
        if path.exists():
            data = json.loads(path.read_text(encoding="utf-8"))
            return GenerationResponse(text=data["text"], provider_meta={"replayed": True})
        if self.record_with is None:
            raise ProviderError(f"no canned response for request hash {path.stem}")
        response = self.record_with.generate(request)
        path.write_text(
            json.dumps({"text": response.text}, ensure_ascii=False, indent=1),
            encoding="utf-8",
        )
        return response


class SynthProvider:
    """Deterministic rule-based generator: parses the task section of the
    rendered prompt and emits a well-formed QA response. Assumes labels
    without commas, which the canonical fixtures guarantee."""

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        prompt = request.prompt
        task = prompt[prompt.rfind("Task:") :] if "Task:" in prompt else prompt
        if "Fact Tuple:" in task:
            return GenerationResponse(self._mhop(task))
        if "Fact Triplet:" in task:
            return GenerationResponse(self._fact(task))
        if "Original Question:" in task:
            styled = "Reformulate the question in your distinct style" in prompt
            return GenerationResponse(self._reformulate(task, styled))
        raise ProviderError("unrecognized prompt shape")

    @staticmethod
    def _last_value(task: str, prefix: str) -> str:
        lines = [l.strip() for l in task.splitlines() if l.strip().startswith(prefix)]
        if not lines:
            raise ProviderError(f"prompt lacks a {prefix!r} line")
        return lines[-1][len(prefix) :].strip()

    def _fact(self, task: str) -> str:
        parts = self._last_value(task, "Fact Triplet:").split(", ")
        if len(parts) != 3:
            raise ProviderError("cannot parse fact triplet")
        subject, relation, obj = parts
        return f"Q: What is the {relation} of {subject}?\nA: {obj}"

    def _mhop(self, task: str) -> str:
        value = self._last_value(task, "Fact Tuple:")
        head, _, tail = value.partition(", [MASKED-ENTITY-1], ")
        if not tail:
            raise ProviderError("cannot parse fact tuple")
        e0, _, r1 = head.rpartition(", ")
        r2, _, e2 = tail.partition(", ")
        if not (e0 and r1 and r2 and e2):
            raise ProviderError("cannot parse fact tuple")
        return f"Q: What is the {r2} of the {r1} of {e0}?\nA: {e2}"

    def _reformulate(self, task: str, styled: bool) -> str:
        question = self._last_value(task, "Original Question:")
        prefix = "Tell me this:" if styled else "In other words:"
        return f"Reformulated Question: {prefix} {question}"


def generate_many(
    provider: GenerationProvider,
    requests: Sequence[GenerationRequest],
    max_inflight: int = 8,
) -> list[Union[GenerationResponse, Exception]]:
    """Issue requests with bounded concurrency; results come back in
    input order with per-item exceptions captured, not raised."""

    def one(request: GenerationRequest) -> Union[GenerationResponse, Exception]:
        try:
            return provider.generate(request)
        except Exception as exc:
            return exc

    if not requests:
        return []
    workers = max(1, min(max_inflight, len(requests)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, requests))


# -- answer-producing model providers ----------------------------------


class ModelProvider(Protocol):
    name: str

    def answer(self, question: str, context: Optional[str] = None) -> str:
        ...


class HttpModelProvider:
    """POST {"question", "context"?} -> {"answer"}."""

    def __init__(
        self,
        endpoint: str,
        name: str = "http",
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 0.5,
    ) -> None:
        self.endpoint = endpoint
        self.name = name
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff

    def answer(self, question: str, context: Optional[str] = None) -> str:
        import requests

        body: dict = {"question": question}
        if context is not None:
            body["context"] = context
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                response = requests.post(self.endpoint, json=body, timeout=self.timeout)
                response.raise_for_status()
                return str(response.json()["answer"])
            except Exception as exc:
                last_error = exc
                time.sleep(self.backoff * (2**attempt))
        raise ProviderError(f"model request failed after retries: {last_error}")


class SubprocessModelProvider:
    """Line-oriented adapter: writes one JSON object per question to the
    child's stdin and reads one answer line back from its stdout."""

    def __init__(self, command: Sequence[str], name: str = "subprocess") -> None:
        self.name = name
        self._proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def answer(self, question: str, context: Optional[str] = None) -> str:
        assert self._proc.stdin is not None and self._proc.stdout is not None
        record = {"question": question, "context": context}
        self._proc.stdin.write(json.dumps(record, ensure_ascii=False) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise ProviderError("subprocess model closed its output")
        return line.rstrip("\n")

    def close(self) -> None:
        if self._proc.stdin is not None:
            self._proc.stdin.close()
        self._proc.wait(timeout=10)


class TableModel:
    """Answers from a fixed question->answer table (normalized keys)."""

    def __init__(
        self, table: dict[str, str], default: str = "unknown", name: str = "table"
    ) -> None:
        self.name = name
        self.default = default
        self._table = {normalize(q): a for q, a in table.items()}

    def answer(self, question: str, context: Optional[str] = None) -> str:
        return self._table.get(normalize(question), self.default)


class ConstantModel:
    def __init__(self, text: str = "unknown", name: str = "constant") -> None:
        self.name = name
        self.text = text

    def answer(self, question: str, context: Optional[str] = None) -> str:
        return self.text


class ContextCopyModel:
    """Copies the answer of the first retrieved entry in the context
    ("A: ..." line); the idealized reader of an augmented context."""

    def __init__(self, default: str = "unknown", name: str = "context-copy") -> None:
        self.name = name
        self.default = default

    def answer(self, question: str, context: Optional[str] = None) -> str:
        if context:
            for line in context.splitlines():
                stripped = line.strip()
                if stripped.startswith("A:") and stripped[2:].strip():
                    return stripped[2:].strip()
        return self.default
