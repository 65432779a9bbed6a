"""Predictor gateway: one call surface over remote, replay, and simulated backends.

Every model call is a ChatRequest carrying the rendered prompt plus a cache
key (key_id, call_idx). Remote backends send the prompt to an OpenAI-style
chat-completions endpoint with retries and rate limiting; the replay backend
returns cached transcripts byte-identically; the simulated backend reads the
note embedded in the request context and answers deterministically.
"""

from __future__ import annotations

import datetime as _dt
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Mapping, Protocol

import httpx

from .cases import PatientCase
from .errors import BackendError, ConfigError
from .graph import GuidelineGraph, GuidelinePath, extract_last_path
from .seeds import derive_seed
from .store import Rollout, RolloutRecord, RolloutSet, RolloutStore

# Simulated and replay backends stamp a fixed timestamp so reruns are
# byte-identical; remote transcripts carry wall-clock time.
DETERMINISTIC_TS = "1970-01-01T00:00:00+00:00"


class Backend(str, Enum):
    REMOTE = "remote"
    REPLAY = "replay"
    SIMULATED = "simulated"


@dataclass(frozen=True)
class PredictorSpec:
    model_id: str
    backend: Backend
    temperature: float = 1.0
    # remote
    endpoint: str | None = None
    api_key_env: str | None = None
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 1.0
    concurrency: int = 4
    rate_per_sec: float | None = None
    # replay
    replay_path: str | None = None
    # simulated
    accuracy: float = 0.9
    consistency: float = 0.0
    parse_failure_rate: float = 0.0

    def __post_init__(self):
        if not self.model_id:
            raise ConfigError("model_id must be nonempty")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        for name in ("accuracy", "consistency", "parse_failure_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0,1], got {value}")
        if self.backend is Backend.REMOTE and not (self.endpoint and self.api_key_env):
            raise ConfigError(f"remote predictor {self.model_id!r} needs endpoint and api_key_env")
        if self.backend is Backend.REPLAY and not self.replay_path:
            raise ConfigError(f"replay predictor {self.model_id!r} needs replay_path")


@dataclass(frozen=True)
class ChatRequest:
    key_id: str
    call_idx: int
    prompt: str
    seed: int
    kind: str = "predict"  # predict | fields | note | prefer
    context: Mapping = field(default_factory=dict)


class ChatBackend(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


@dataclass(frozen=True)
class PredictionResult:
    raw_text: str
    path: GuidelinePath | None


def load_prompt(name: str) -> str:
    return resources.files("guidebench").joinpath(f"assets/prompts/{name}.txt").read_text("utf-8")


def render_prompt(template: str, **values: str) -> str:
    # Plain replacement; templates may contain literal braces (JSON snippets).
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out


def render_graph_for_prompt(graph: GuidelineGraph, mode: str = "full") -> str:
    """Graph serialization for prompting: whole JSON or page-by-page blocks."""
    if mode == "full":
        return graph.canonical_json()
    if mode == "pages":
        blocks = []
        for page_id in sorted(graph.pages):
            payload = {page_id: graph.to_payload()["pages"][page_id]}
            import json

            blocks.append(f"### Page {page_id}\n{json.dumps(payload, sort_keys=True, indent=2)}")
        return "\n\n".join(blocks)
    raise ConfigError(f"unknown graph prompt mode {mode!r}")


class _RateLimiter:
    """Global minimum interval between request starts."""

    def __init__(self, rate_per_sec: float):
        self._interval = 1.0 / rate_per_sec
        self._lock = threading.Lock()
        self._next_at = 0.0

    def wait(self) -> None:
        with self._lock:
            now = time.monotonic()
            delay = self._next_at - now
            self._next_at = max(now, self._next_at) + self._interval
        if delay > 0:
            time.sleep(delay)


class RemoteChatBackend:
    """OpenAI-style chat-completions client with retries and bounded concurrency."""

    def __init__(self, spec: PredictorSpec, transport: httpx.BaseTransport | None = None):
        self.spec = spec
        api_key = os.environ.get(spec.api_key_env or "", "")
        if not api_key:
            raise ConfigError(
                f"missing API key: set the {spec.api_key_env!r} environment variable"
            )
        self._client = httpx.Client(
            base_url=spec.endpoint.rstrip("/"),
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=spec.timeout,
            transport=transport,
        )
        self._semaphore = threading.Semaphore(max(1, spec.concurrency))
        self._limiter = _RateLimiter(spec.rate_per_sec) if spec.rate_per_sec else None
        self._jitter = random.Random()

    def complete(self, request: ChatRequest) -> str:
        payload = {
            "model": self.spec.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": self.spec.temperature,
            "seed": request.seed % 2**31,
        }
        last_error: Exception | None = None
        for attempt in range(self.spec.retries):
            if attempt:
                delay = self.spec.backoff * 2 ** (attempt - 1)
                time.sleep(delay + self._jitter.uniform(0, delay / 4))
            try:
                with self._semaphore:
                    if self._limiter is not None:
                        self._limiter.wait()
                    response = self._client.post("/chat/completions", json=payload)
                response.raise_for_status()
                data = response.json()
                return data["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last_error = exc
        raise BackendError(
            f"{self.spec.model_id}: request failed after {self.spec.retries} attempts: {last_error}"
        )


class ReplayBackend:
    """Serves raw_text from a previously recorded transcript store."""

    def __init__(self, spec: PredictorSpec):
        self.spec = spec
        self._records: dict[tuple[str, str, int], str] = {}
        for rec in RolloutStore(spec.replay_path).read_records():
            self._records[(rec.model_id, rec.patient_id, rec.rollout_idx)] = rec.raw_text

    def complete(self, request: ChatRequest) -> str:
        key = (self.spec.model_id, request.key_id, request.call_idx)
        if key not in self._records:
            raise BackendError(
                f"replay cache {self.spec.replay_path} has no record for {key}"
            )
        return self._records[key]


class SimulatedChatBackend:
    """Deterministic stand-in model that reads notes by matching node labels.

    Per-case difficulty is an intrinsic property of the simulated model:
    a wobble u in [-0.5, 0.5) derived from (model_id, key_id) shifts the
    per-case hit rate to clamp(accuracy + consistency * u, 0, 1). A decoy
    pathway, also stable per (model_id, key_id), is emitted on misses.
    """

    def __init__(self, spec: PredictorSpec):
        self.spec = spec

    def _case_wobble(self, key_id: str) -> float:
        rng = random.Random(derive_seed(0, "sim-wobble", self.spec.model_id, key_id))
        return rng.uniform(-0.5, 0.5)

    def _case_decoy(self, graph: GuidelineGraph, truth: GuidelinePath, key_id: str) -> GuidelinePath:
        from .simulate import decoy_path

        rng = random.Random(derive_seed(0, "sim-decoy", self.spec.model_id, key_id))
        return decoy_path(graph, truth, rng)

    def _note_match_score(self, graph: GuidelineGraph, note: str, path: GuidelinePath) -> float:
        lowered = note.lower()
        hits = sum(1 for ref in path.nodes if ref in graph and graph.node(ref).label.lower() in lowered)
        return hits / len(path.nodes)

    # -- call dispatch ------------------------------------------------------
    def complete(self, request: ChatRequest) -> str:
        graph: GuidelineGraph = request.context["graph"]
        rng = random.Random(request.seed)
        if request.kind == "predict":
            return self._predict(graph, request, rng)
        if request.kind == "fields":
            return self._fill_fields(graph, request, rng)
        if request.kind == "note":
            return self._write_note(graph, request, rng)
        if request.kind == "prefer":
            return self._prefer(graph, request)
        raise BackendError(f"simulated backend cannot handle kind {request.kind!r}")

    def _predict(self, graph: GuidelineGraph, request: ChatRequest, rng: random.Random) -> str:
        from .synthetic import trace_labels

        if rng.random() < self.spec.parse_failure_rate:
            return "Unable to determine a pathway from the note."
        note = request.context["note"]
        truth = trace_labels(graph, note, rng=rng)
        assert truth is not None  # lenient tracing always completes
        hit_rate = _clamp01(self.spec.accuracy + self.spec.consistency * self._case_wobble(request.key_id))
        if rng.random() < hit_rate:
            answer = truth
            considered = self._case_decoy(graph, truth, request.key_id)
        else:
            answer = self._case_decoy(graph, truth, request.key_id)
            considered = truth
        lines = []
        if rng.random() < 0.5:
            lines.append(f"Considered but rejected: {considered.render()}")
        lines.append(f"Final path: {answer.render()}")
        return "\n".join(lines)

    def _fill_fields(self, graph: GuidelineGraph, request: ChatRequest, rng: random.Random) -> str:
        import json

        from .synthetic import encode_fields

        target: GuidelinePath = request.context["target_path"]
        emitted = target
        if rng.random() >= self.spec.accuracy:
            from .simulate import decoy_path

            emitted = decoy_path(graph, target, rng)
        return json.dumps(encode_fields(graph, emitted), sort_keys=True)

    def _write_note(self, graph: GuidelineGraph, request: ChatRequest, rng: random.Random) -> str:
        from .synthetic import render_note

        return render_note(
            graph,
            request.context["target_path"],
            fields=request.context.get("fields"),
            exemplars=request.context.get("exemplars", ()),
            rng=rng,
        )

    def _prefer(self, graph: GuidelineGraph, request: ChatRequest) -> str:
        note = request.context["note"]
        option_a: GuidelinePath = request.context["option_a"]
        option_b: GuidelinePath = request.context["option_b"]
        score_a = self._note_match_score(graph, note, option_a)
        score_b = self._note_match_score(graph, note, option_b)
        if score_a == score_b:
            # Position-blind tie break: prefer the shorter rendered form.
            return "A" if option_a.render() <= option_b.render() else "B"
        return "A" if score_a > score_b else "B"


def _clamp01(value: float) -> float:
    return min(1.0, max(0.0, value))


_BACKENDS: dict[PredictorSpec, ChatBackend] = {}
_BACKENDS_LOCK = threading.Lock()


def get_backend(spec: PredictorSpec) -> ChatBackend:
    with _BACKENDS_LOCK:
        backend = _BACKENDS.get(spec)
        if backend is None:
            if spec.backend is Backend.REMOTE:
                backend = RemoteChatBackend(spec)
            elif spec.backend is Backend.REPLAY:
                backend = ReplayBackend(spec)
            else:
                backend = SimulatedChatBackend(spec)
            _BACKENDS[spec] = backend
        return backend


def reset_backend_cache() -> None:
    with _BACKENDS_LOCK:
        _BACKENDS.clear()


def _timestamp(spec: PredictorSpec) -> str:
    if spec.backend is Backend.REMOTE:
        return _dt.datetime.now(_dt.timezone.utc).isoformat()
    return DETERMINISTIC_TS


def predict_path(
    spec: PredictorSpec,
    graph: GuidelineGraph,
    case: PatientCase,
    seed: int,
    prompt_template: str | None = None,
    call_idx: int = 0,
    graph_mode: str = "full",
) -> PredictionResult:
    """One model call for one patient; output parsed best-effort."""
    template = prompt_template or load_prompt("predict_path")
    prompt = render_prompt(
        template, graph=render_graph_for_prompt(graph, graph_mode), note=case.note_text
    )
    request = ChatRequest(
        key_id=case.patient_id,
        call_idx=call_idx,
        prompt=prompt,
        seed=seed,
        kind="predict",
        context={"graph": graph, "note": case.note_text},
    )
    raw = get_backend(spec).complete(request)
    return PredictionResult(raw_text=raw, path=extract_last_path(raw))


def sample_rollouts(
    spec: PredictorSpec,
    graph: GuidelineGraph,
    case: PatientCase,
    k: int,
    seed: int,
    store: RolloutStore | None = None,
    prompt_template: str | None = None,
    graph_mode: str = "full",
) -> RolloutSet:
    """k independent predictions with per-rollout seeds derived from (seed, index).

    Per-rollout transport failures become failure records; the set is still
    returned while at least one rollout succeeded.
    """
    if k < 1:
        raise ValueError("k must be >= 1")

    def one(index: int) -> tuple[int, int, str, GuidelinePath | None, str | None]:
        rollout_seed = derive_seed(seed, index)
        try:
            result = predict_path(
                spec,
                graph,
                case,
                seed=rollout_seed,
                prompt_template=prompt_template,
                call_idx=index,
                graph_mode=graph_mode,
            )
            return index, rollout_seed, result.raw_text, result.path, None
        except BackendError as exc:
            return index, rollout_seed, f"<error: {exc}>", None, str(exc)

    if spec.backend is Backend.REMOTE and spec.concurrency > 1:
        with ThreadPoolExecutor(max_workers=spec.concurrency) as pool:
            results = list(pool.map(one, range(k)))
    else:
        results = [one(i) for i in range(k)]
    results.sort(key=lambda item: item[0])

    errors = [err for *_, err in results if err is not None]
    if len(errors) == k:
        raise BackendError(
            f"{spec.model_id}: all {k} rollouts failed for patient {case.patient_id}: {errors[0]}"
        )

    ts = _timestamp(spec)
    records = [
        RolloutRecord(
            model_id=spec.model_id,
            patient_id=case.patient_id,
            rollout_idx=index,
            seed=rollout_seed,
            raw_text=raw,
            parsed_path=path.render() if path is not None else None,
            ts=ts,
        )
        for index, rollout_seed, raw, path, _ in results
    ]
    if store is not None:
        store.append(records)
    rollouts = tuple(
        Rollout(index=r.rollout_idx, raw_text=r.raw_text, parsed=extract_last_path(r.raw_text))
        for r in records
    )
    return RolloutSet(model_id=spec.model_id, patient_id=case.patient_id, rollouts=rollouts)
