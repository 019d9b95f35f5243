"""Chat-completion backed planner and generator.

Speaks the widely deployed ``POST {endpoint}/chat/completions`` protocol and
asks for a JSON-schema constrained response. Plans failing validation are
re-prompted with the diagnostic, never patched.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from typing import Any

import httpx

from ..answers import Answer, to_answer
from ..executor import RetrievedSegments
from ..plan import AnswerSchema, PlanError, RetrievalPlan, answer_schema_to_json, canonicalize, parse_plan, plan_json_schema
from .base import GeneratorUnavailable, PlanInvalidAfterRetries, PlannerUnavailable, QueryRequest

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RemoteConfig:
    endpoint: str = "http://localhost:8000/v1"
    model: str = "default"
    api_key: str = ""
    timeout: float = 60.0
    retries: int = 3
    max_concurrency: int = 4
    trace: bool = False


class ChatClient:
    """Thin synchronous client; bounds in-flight requests with a semaphore."""

    def __init__(self, config: RemoteConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._sem = threading.BoundedSemaphore(max(1, config.max_concurrency))
        headers = {"Content-Type": "application/json"}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._http = httpx.Client(timeout=config.timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._http.close()

    def _redacted(self, payload: Any) -> str:
        text = json.dumps(payload, ensure_ascii=False)
        if self.config.api_key:
            text = text.replace(self.config.api_key, "***")
        return text

    def complete(self, messages: list[dict[str, str]], schema: dict[str, Any] | None = None, name: str = "response") -> str:
        """Message content of the first choice. Raises ``httpx.HTTPError`` on transport failure."""
        body: dict[str, Any] = {"model": self.config.model, "messages": messages, "temperature": 0}
        if schema is not None:
            body["response_format"] = {"type": "json_schema", "json_schema": {"name": name, "schema": schema}}
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        attempts = max(1, self.config.retries)
        last: Exception | None = None
        with self._sem:
            for attempt in range(attempts):
                if self.config.trace:
                    log.debug("request %s %s", url, self._redacted(body))
                try:
                    resp = self._http.post(url, json=body)
                    if resp.status_code >= 500 or resp.status_code == 429:
                        raise httpx.HTTPStatusError(f"server returned {resp.status_code}", request=resp.request, response=resp)
                    resp.raise_for_status()
                    data = resp.json()
                    if self.config.trace:
                        log.debug("response %s", self._redacted(data))
                    return data["choices"][0]["message"]["content"] or ""
                except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                    last = exc
                    status = getattr(getattr(exc, "response", None), "status_code", None)
                    if status is not None and status < 500 and status != 429:
                        break
                    if attempt + 1 < attempts:
                        time.sleep(min(2.0**attempt * 0.25, 4.0))
                except (KeyError, IndexError, TypeError, ValueError) as exc:
                    raise httpx.DecodingError(f"unexpected response shape: {exc}") from exc
        assert last is not None
        raise last


PLANNER_PROMPT = """You turn questions about one long audio recording into retrieval plans.
The recording is stored as time-aligned streams: transcript (text), speaker (label),
emotion (scored labels) and sound_event (scored labels). Reply with one JSON object
matching this schema and nothing else:
{schema}
Rules: the fusion anchor must be one of the selected streams; filters may only target
selected streams; time_window bounds are seconds; answer_schema is a JSON schema with a
single answer key ("answer", "segments", "labels" or "order"), optionally wrapped as
{{"anyOf": [<schema>, {{"const": "This question is not answerable."}}]}}."""


class RemoteLLMPlanner:
    def __init__(self, client: ChatClient):
        self.client = client

    def _messages(self, request: QueryRequest) -> list[dict[str, str]]:
        meta = request.db_metadata
        facts = [f"Question: {request.question}"]
        if meta is not None:
            facts.append(f"Recording duration: {meta.duration:.1f} s")
            facts.append("Streams present: " + ", ".join(s.value for s in meta.streams))
            if meta.speakers:
                facts.append("Known speakers: " + ", ".join(meta.speakers))
            if meta.event_labels:
                facts.append("Known event labels: " + ", ".join(meta.event_labels))
        return [
            {"role": "system", "content": PLANNER_PROMPT.format(schema=json.dumps(plan_json_schema()))},
            {"role": "user", "content": "\n".join(facts)},
        ]

    def plan(self, request: QueryRequest) -> RetrievalPlan:
        messages = self._messages(request)
        attempts = max(1, self.client.config.retries)
        last_error = ""
        for _ in range(attempts):
            try:
                content = self.client.complete(messages, plan_json_schema(), name="retrieval_plan")
            except httpx.HTTPError as exc:
                raise PlannerUnavailable(str(exc)) from exc
            try:
                return canonicalize(parse_plan(content))
            except PlanError as exc:
                last_error = str(exc)
                messages = messages + [
                    {"role": "assistant", "content": content},
                    {"role": "user", "content": f"The plan is invalid: {exc}. Reply with a corrected plan."},
                ]
        raise PlanInvalidAfterRetries(f"no valid plan after {attempts} attempts: {last_error}")


GENERATOR_PROMPT = """Answer the question using only the retrieved evidence rows.
Each row is a tab-separated list of field=value pairs from a time-aligned audio database.
Reply with output that conforms to this JSON schema:
{schema}"""


class RemoteLLMGenerator:
    def __init__(self, client: ChatClient):
        self.client = client

    def generate(self, question: str, context: RetrievedSegments, schema: AnswerSchema) -> Answer:
        wire = answer_schema_to_json(schema)
        messages = [
            {"role": "system", "content": GENERATOR_PROMPT.format(schema=json.dumps(wire))},
            {"role": "user", "content": f"Evidence:\n{context.context_text or '(no rows)'}\n\n{question}"},
        ]
        try:
            raw = self.client.complete(messages, wire if "anyOf" not in wire else None, name="answer")
        except httpx.HTTPError as exc:
            raise GeneratorUnavailable(str(exc)) from exc
        return to_answer(raw, schema)
