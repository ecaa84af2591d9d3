"""Provider abstraction and concurrent fan-out.

One descriptor per configured model; ``generate_all`` issues the same
prompt to every provider in parallel and returns one result per provider
in input order. A failing provider yields a non-ok result instead of
failing the batch; only a batch with zero successes raises.

Adapters: a deterministic offline mock (first-class, the default for
tests and fixtures), a scripted mock for failure injection, record/replay
wrappers, and thin HTTP clients for openai-, gemini- and
openai-compatible chat endpoints. Credentials come from the environment
variable named in each descriptor's config; nothing is read from disk.
"""
from __future__ import annotations

import hashlib
import json
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Callable

import httpx

from .errors import ConfigError, DomainError, GatewayError

if TYPE_CHECKING:
    from .preprocess import ResidualScanner
    from .prompts import PromptBundle

BACKOFF_BASE_SECONDS = 1.0
BACKOFF_FACTOR = 2.0

OUTCOME_OK = "ok"
OUTCOME_PROVIDER_ERROR = "provider_error"
OUTCOME_TIMEOUT = "timeout"


class ProviderRequestError(Exception):
    """A single provider request failed (HTTP error, bad payload, missing
    credential)."""


class ProviderTimeout(ProviderRequestError):
    """A single provider request timed out."""


@dataclass(frozen=True)
class ProviderDescriptor:
    id: str
    display_name: str
    endpoint_config: dict = field(default_factory=dict)
    timeout: float = 30.0
    max_attempts: int = 3

    def __post_init__(self):
        if self.timeout <= 0:
            raise ConfigError("provider timeout must be positive")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be at least 1")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "endpoint_config": dict(self.endpoint_config),
            "timeout": self.timeout,
            "max_attempts": self.max_attempts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ProviderDescriptor:
        return cls(
            id=d["id"],
            display_name=d.get("display_name", d["id"]),
            endpoint_config=dict(d.get("endpoint_config", {})),
            timeout=float(d.get("timeout", 30.0)),
            max_attempts=int(d.get("max_attempts", 3)),
        )


@dataclass(frozen=True)
class GenerationResult:
    provider_id: str
    instance_id: str
    prompt_digest: str
    raw_text: str
    latency: float
    attempt: int
    outcome: str
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.outcome == OUTCOME_OK

    def to_dict(self) -> dict:
        return {
            "provider_id": self.provider_id,
            "instance_id": self.instance_id,
            "prompt_digest": self.prompt_digest,
            "raw_text": self.raw_text,
            "latency": self.latency,
            "attempt": self.attempt,
            "outcome": self.outcome,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GenerationResult:
        return cls(
            provider_id=d["provider_id"],
            instance_id=d["instance_id"],
            prompt_digest=d["prompt_digest"],
            raw_text=d["raw_text"],
            latency=float(d["latency"]),
            attempt=int(d["attempt"]),
            outcome=d["outcome"],
            error=d.get("error"),
        )


class ProviderCallError(GatewayError):
    """provider_call exhausted its attempts; carries the final result."""

    def __init__(self, result: GenerationResult):
        super().__init__(
            f"provider {result.provider_id} failed after {result.attempt} attempts: "
            f"{result.error}", [result])
        self.result = result


def prompt_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Rate limiting


class TokenBucket:
    """Blocking token bucket; serializes calls beyond the configured rate."""

    def __init__(self, capacity: float, per_second: float):
        self.capacity = capacity
        self.per_second = per_second
        self._tokens = capacity
        self._updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(
                    self.capacity, self._tokens + (now - self._updated) * self.per_second)
                self._updated = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.per_second
            time.sleep(wait)


_buckets: dict[str, TokenBucket] = {}
_buckets_lock = threading.Lock()


def _bucket_for(descriptor: ProviderDescriptor) -> TokenBucket | None:
    cfg = descriptor.endpoint_config.get("rate_limit")
    if not cfg:
        return None
    with _buckets_lock:
        bucket = _buckets.get(descriptor.id)
        if bucket is None:
            bucket = TokenBucket(float(cfg["capacity"]), float(cfg["per_second"]))
            _buckets[descriptor.id] = bucket
        return bucket


def reset_rate_limits() -> None:
    with _buckets_lock:
        _buckets.clear()


# ---------------------------------------------------------------------------
# Adapters


_MOCK_BANKS = {
    "en": {
        "strengths": [
            "The presentation opened with a clear statement of purpose that framed the whole talk.",
            "Your delivery kept a steady pace and the audience could follow every step of the argument.",
            "Eye contact was consistent and you used the stage space with confidence.",
            "The visual support was clean and reinforced the main ideas instead of repeating them.",
            "Transitions between sections felt natural and kept the narrative moving.",
            "You handled the questions at the end calmly and connected them back to your material.",
            "The examples were concrete and clearly tied to the assessment criteria.",
        ],
        "improvements": [
            "Some slides carried too much text and pulled attention away from what you were saying.",
            "The closing section felt rushed compared with the careful pacing of the opening.",
            "A few key terms were introduced without a definition the audience could hold on to.",
            "Your voice dropped at the end of longer sentences, which blurred several conclusions.",
            "The middle section would benefit from one explicit signpost before the data discussion.",
            "Timing ran long, which compressed the space left for discussion.",
        ],
        "actions": [
            "Rehearse the final two minutes separately until the closing lands at full strength.",
            "Reduce each dense slide to a single claim supported by one visual.",
            "Write one-line definitions for the key terms and deliver them before first use.",
            "Record a practice run and mark every place where the volume trails off.",
            "Add a short signpost sentence before each new section to guide the audience.",
            "Time each section in rehearsal and trim the middle block by a full minute.",
        ],
        "mention": "Pay particular attention to {items} in the next session.",
        "echo": "{p} noted points that match this assessment.",
    },
    "es": {
        "strengths": [
            "La presentación comenzó con un propósito claro que enmarcó toda la charla.",
            "Mantuviste un ritmo constante y el público pudo seguir cada paso del argumento.",
            "El contacto visual fue consistente y usaste el espacio con seguridad.",
            "El apoyo visual era limpio y reforzaba las ideas principales sin repetirlas.",
            "Las transiciones entre secciones resultaron naturales y mantuvieron el hilo.",
            "Gestionaste las preguntas finales con calma y las conectaste con tu material.",
            "Los ejemplos fueron concretos y estaban ligados a los criterios de evaluación.",
        ],
        "improvements": [
            "Algunas diapositivas tenían demasiado texto y restaban atención a tu discurso.",
            "El cierre resultó apresurado en comparación con el cuidado del inicio.",
            "Varios términos clave se introdujeron sin una definición clara para el público.",
            "La voz bajó al final de las frases largas y difuminó varias conclusiones.",
            "La sección central necesita una señal explícita antes de la discusión de datos.",
            "El tiempo se alargó y comprimió el espacio reservado para el debate.",
        ],
        "actions": [
            "Ensaya los dos minutos finales por separado hasta que el cierre suene firme.",
            "Reduce cada diapositiva densa a una sola idea apoyada en un único gráfico.",
            "Escribe definiciones de una línea para los términos clave y preséntalas al inicio.",
            "Graba un ensayo y marca cada punto donde el volumen se apaga.",
            "Añade una frase de transición breve antes de cada nueva sección.",
            "Cronometra cada bloque en el ensayo y recorta un minuto de la parte central.",
        ],
        "mention": "Presta especial atención a {items} en la próxima sesión.",
        "echo": "{p} señaló aspectos que coinciden con esta valoración.",
    },
}

_SCORE_LINE_RE = re.compile(r"^- (.+?): -?\d+(?:[.,]\d+)? \(n=\d+\)", re.MULTILINE)
_PLACEHOLDER_RE = re.compile(r"PERSON_\d+")


def _stable_seed(*parts: str) -> int:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class MockProvider:
    """Deterministic offline provider.

    Output depends only on (prompt, provider id, configured seed): three
    paragraphs built from per-language sentence banks, optionally weaving
    in rubric item titles and anonymized placeholders found in the prompt.
    Config keys: language, seed, target_words, latency_ms,
    echo_placeholders, fail_marker.
    """

    def __init__(self, descriptor: ProviderDescriptor):
        cfg = descriptor.endpoint_config
        self.provider_id = descriptor.id
        self.language = cfg.get("language", "en")
        if self.language not in _MOCK_BANKS:
            raise ConfigError(f"mock provider has no bank for language {self.language!r}")
        self.seed = int(cfg.get("seed", 0))
        self.target_words = int(cfg.get("target_words", 130))
        self.latency = float(cfg.get("latency_ms", 0)) / 1000.0
        self.echo_placeholders = bool(cfg.get("echo_placeholders", False))
        self.timeout = descriptor.timeout

    def complete(self, prompt: str) -> str:
        if self.latency:
            if self.latency > self.timeout:
                time.sleep(self.timeout)
                raise ProviderTimeout(
                    f"mock latency {self.latency}s exceeds timeout {self.timeout}s")
            time.sleep(self.latency)
        rng = random.Random(_stable_seed(prompt, self.provider_id, str(self.seed)))
        bank = _MOCK_BANKS[self.language]
        per_paragraph = max(1, self.target_words // 3)

        def build(section: str, extra: list[str]) -> str:
            pool = list(bank[section])
            rng.shuffle(pool)
            sentences = list(extra)
            words = sum(len(s.split()) for s in sentences)
            for sentence in pool:
                if words >= per_paragraph:
                    break
                sentences.append(sentence)
                words += len(sentence.split())
            return " ".join(sentences)

        strengths_extra = []
        if self.echo_placeholders:
            placeholders = sorted(set(_PLACEHOLDER_RE.findall(prompt)))[:2]
            strengths_extra = [bank["echo"].format(p=p) for p in placeholders]

        improvements_extra = []
        titles = [m.group(1) for m in _SCORE_LINE_RE.finditer(prompt)][:2]
        if titles:
            joiner = " y " if self.language == "es" else " and "
            improvements_extra = [bank["mention"].format(items=joiner.join(titles))]

        return "\n\n".join([
            build("strengths", strengths_extra),
            build("improvements", improvements_extra),
            build("actions", []),
        ])


class ScriptedProvider:
    """Plays back a per-call script; used to exercise retry and
    regeneration paths. Script entries: {"text": ...}, {"error": ...} or
    {"timeout": true}. The final entry repeats once exhausted."""

    def __init__(self, descriptor: ProviderDescriptor):
        script = descriptor.endpoint_config.get("script")
        if not script:
            raise ConfigError("scripted provider requires a non-empty script")
        self.script = list(script)
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        with self._lock:
            step = self.script[min(self.calls, len(self.script) - 1)]
            self.calls += 1
        if step.get("timeout"):
            raise ProviderTimeout("scripted timeout")
        if "error" in step:
            raise ProviderRequestError(step["error"])
        return step["text"]


class ReplayProvider:
    """Replays recorded responses keyed by prompt digest."""

    def __init__(self, descriptor: ProviderDescriptor):
        self.fixture_dir = Path(descriptor.endpoint_config["fixture_dir"])

    def _path(self, prompt: str) -> Path:
        return self.fixture_dir / f"{prompt_digest(prompt)[:32]}.json"

    def complete(self, prompt: str) -> str:
        path = self._path(prompt)
        if not path.exists():
            raise ProviderRequestError(f"no recorded response for prompt at {path}")
        return json.loads(path.read_text(encoding="utf-8"))["raw_text"]


class RecordingProvider:
    """Wraps another adapter and persists every response as a replay
    fixture."""

    def __init__(self, descriptor: ProviderDescriptor):
        cfg = descriptor.endpoint_config
        self.fixture_dir = Path(cfg["fixture_dir"])
        inner_desc = ProviderDescriptor(
            id=descriptor.id,
            display_name=descriptor.display_name,
            endpoint_config=dict(cfg["inner"]),
            timeout=descriptor.timeout,
            max_attempts=descriptor.max_attempts,
        )
        self.inner = build_provider(inner_desc)

    def complete(self, prompt: str) -> str:
        text = self.inner.complete(prompt)
        self.fixture_dir.mkdir(parents=True, exist_ok=True)
        path = self.fixture_dir / f"{prompt_digest(prompt)[:32]}.json"
        path.write_text(
            json.dumps({"prompt_digest": prompt_digest(prompt), "raw_text": text},
                       ensure_ascii=False, indent=2),
            encoding="utf-8")
        return text


class _HttpProviderBase:
    def __init__(self, descriptor: ProviderDescriptor, transport: httpx.BaseTransport | None = None):
        self.cfg = descriptor.endpoint_config
        self.timeout = descriptor.timeout
        self._transport = transport

    def _credential(self, default_env: str) -> str:
        env_name = self.cfg.get("api_key_env", default_env)
        key = os.environ.get(env_name)
        if not key:
            raise ProviderRequestError(f"credential variable {env_name} is not set")
        return key

    def _post(self, base_url: str, path: str, headers: dict, payload: dict) -> dict:
        try:
            with httpx.Client(base_url=base_url, timeout=self.timeout,
                              transport=self._transport) as client:
                resp = client.post(path, headers=headers, json=payload)
        except httpx.TimeoutException as exc:
            raise ProviderTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise ProviderRequestError(str(exc)) from exc
        if resp.status_code != 200:
            raise ProviderRequestError(f"HTTP {resp.status_code}: {resp.text[:300]}")
        return resp.json()


class OpenAIChatProvider(_HttpProviderBase):
    """OpenAI-style /chat/completions endpoint. Also serves any
    openai-compatible local server (adapter "openai_compat")."""

    DEFAULT_BASE = "https://api.openai.com/v1"

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.cfg["model"],
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.get("temperature", 0.7),
        }
        if "max_tokens" in self.cfg:
            payload["max_tokens"] = self.cfg["max_tokens"]
        data = self._post(
            self.cfg.get("base_url", self.DEFAULT_BASE),
            "/chat/completions",
            {"Authorization": f"Bearer {self._credential('OPENAI_API_KEY')}"},
            payload,
        )
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderRequestError(f"malformed completion payload: {exc}") from exc


class GeminiProvider(_HttpProviderBase):
    DEFAULT_BASE = "https://generativelanguage.googleapis.com"

    def complete(self, prompt: str) -> str:
        key = self._credential("GEMINI_API_KEY")
        model = self.cfg["model"]
        payload = {
            "contents": [{"parts": [{"text": prompt}]}],
            "generationConfig": {"temperature": self.cfg.get("temperature", 0.7)},
        }
        data = self._post(
            self.cfg.get("base_url", self.DEFAULT_BASE),
            f"/v1beta/models/{model}:generateContent?key={key}",
            {},
            payload,
        )
        try:
            return data["candidates"][0]["content"]["parts"][0]["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderRequestError(f"malformed generateContent payload: {exc}") from exc


_ADAPTERS: dict[str, Callable] = {
    "mock": MockProvider,
    "scripted": ScriptedProvider,
    "replay": ReplayProvider,
    "record": RecordingProvider,
    "openai": OpenAIChatProvider,
    "openai_compat": OpenAIChatProvider,
    "gemini": GeminiProvider,
}


def build_provider(descriptor: ProviderDescriptor, transport: httpx.BaseTransport | None = None):
    adapter = descriptor.endpoint_config.get("adapter", "mock")
    factory = _ADAPTERS.get(adapter)
    if factory is None:
        raise ConfigError(f"unknown provider adapter {adapter!r}")
    if issubclass(factory, _HttpProviderBase):
        return factory(descriptor, transport)
    return factory(descriptor)


# ---------------------------------------------------------------------------
# Calls and fan-out


def provider_call(
    descriptor: ProviderDescriptor,
    prompt_text: str,
    *,
    instance_id: str = "",
    provider=None,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> GenerationResult:
    """Single-provider request with retry.

    Up to max_attempts attempts, exponential backoff between them (base
    1s, factor 2, full jitter); the first successful attempt wins. Always
    returns a result; a non-ok outcome records the final error.
    """
    if provider is None:
        provider = build_provider(descriptor)
    rng = rng or random.Random()
    bucket = _bucket_for(descriptor)
    digest = prompt_digest(prompt_text)
    started = time.monotonic()
    outcome, error, text = OUTCOME_PROVIDER_ERROR, "not attempted", ""
    attempt = 0
    for attempt in range(1, descriptor.max_attempts + 1):
        if bucket is not None:
            bucket.acquire()
        try:
            text = provider.complete(prompt_text)
            if not text or not text.strip():
                raise ProviderRequestError("provider returned empty text")
            outcome, error = OUTCOME_OK, None
            break
        except ProviderTimeout as exc:
            outcome, error = OUTCOME_TIMEOUT, str(exc)
        except ProviderRequestError as exc:
            outcome, error = OUTCOME_PROVIDER_ERROR, str(exc)
        if attempt < descriptor.max_attempts:
            sleep(rng.uniform(0, BACKOFF_BASE_SECONDS * BACKOFF_FACTOR ** (attempt - 1)))
    return GenerationResult(
        provider_id=descriptor.id,
        instance_id=instance_id,
        prompt_digest=digest,
        raw_text=text if outcome == OUTCOME_OK else "",
        latency=time.monotonic() - started,
        attempt=attempt,
        outcome=outcome,
        error=error,
    )


def generate_all(
    bundle: "PromptBundle",
    providers: list[ProviderDescriptor],
    *,
    provider_instances: dict[str, object] | None = None,
    guard: "ResidualScanner | None" = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> list[GenerationResult]:
    """Fan the bundle out to every provider concurrently.

    Results come back in provider order; partial success is success. When
    a residual scanner is supplied it runs on the outbound prompt as a
    tripwire before any request is issued (wired in debug/test paths).
    """
    if not providers:
        raise DomainError("generate_all requires at least one provider")
    if guard is not None:
        guard.assert_clean(bundle.rendered_text, context="outbound prompt")

    instances = provider_instances or {}

    def call(descriptor: ProviderDescriptor) -> GenerationResult:
        return provider_call(
            descriptor,
            bundle.rendered_text,
            instance_id=bundle.instance_id,
            provider=instances.get(descriptor.id),
            sleep=sleep,
            rng=rng,
        )

    with ThreadPoolExecutor(max_workers=len(providers)) as pool:
        results = list(pool.map(call, providers))

    if all(r.outcome != OUTCOME_OK for r in results):
        raise GatewayError("no candidates produced", results)
    return results
