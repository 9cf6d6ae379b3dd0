"""Provider interfaces and implementations: LVLM, object detector, embedder.

Model execution is out of scope; providers are either thin HTTP clients or
deterministic stubs. The stubs' rules are documented here so every golden
file in the test suite can be re-derived by hand.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from . import prompts
from .errors import ProviderUnavailableError
from .ingest import DetectedObject, DetectionRecord
from .textindex import tokenize
from .types import FrameRecord

ENV_LVLM_URL = "TEMPORAG_LVLM_URL"
ENV_LVLM_KEY = "TEMPORAG_LVLM_KEY"
ENV_LVLM_MODEL = "TEMPORAG_LVLM_MODEL"
ENV_EMBED_URL = "TEMPORAG_EMBED_URL"
ENV_EMBED_TOKEN = "TEMPORAG_EMBED_TOKEN"
ENV_DETECT_URL = "TEMPORAG_DETECT_URL"

DEFAULT_TIMEOUT_S = 30.0


@dataclass(frozen=True)
class DecodeParams:
    """Decode settings requested from the LVLM; temperature-zero semantics."""

    temperature: float = 0.0
    max_tokens: int = 512


class LvlmProvider(Protocol):
    def complete(
        self, system_prompt: str, user_prompt: str, params: DecodeParams | None = None
    ) -> str: ...


class DetectorProvider(Protocol):
    def detect(self, keyframes: Sequence[FrameRecord]) -> list[list[DetectedObject]]: ...


# --- deterministic stub LVLM ---------------------------------------------------

# Question words and glue dropped when extracting content words.
STUB_STOPWORDS = frozenset(
    """a an the is are was were be been being do does did what which who whom
    whose where when why how of in on at to for with about this that these
    those it its and or not no can could would should will shall may might
    say says said show shows shown appear appears happen happens happening
    video clip there here his her their our your my""".split()
)

# Cue words that switch a channel on. "say"/"sign" style words point at
# on-screen text; channel ASR needs an explicitly auditory cue.
OCR_CUES = frozenset(
    """say says said sign signs text written write writes read reads caption
    captions subtitle subtitles screen title titles label labels word words
    letter letters number numbers display displayed""".split()
)
SPEECH_CUES = frozenset(
    """talk talks talked speak speaks spoke spoken mention mentions mentioned
    hear hears heard voice voices conversation narrator audio music song
    tell tells told discuss discusses discussed lyric lyrics""".split()
)


def _content_words(question: str) -> list[str]:
    seen = []
    for token in tokenize(question):
        if token not in STUB_STOPWORDS and token not in seen:
            seen.append(token)
    return seen


class StubLvlm:
    """Deterministic stand-in for the LVLM, keyed on the prompt's task marker.

    Rules:

    * decoupling: content words are the question's tokens minus
      ``STUB_STOPWORDS`` (order kept, deduplicated). The ocr/asr channels
      get the joined content words when the question contains a cue word
      from ``OCR_CUES`` / ``SPEECH_CUES``, else null; det always gets the
      content words (null when there are none).
    * augmentation: a one-sentence templated context naming the content
      words, then exactly two templated rephrasings.
    * answering: quotes the question plus the first evidence line of each
      evidence section and a short digest of the full prompt, so identical
      bundles yield identical answers.
    """

    def complete(
        self, system_prompt: str, user_prompt: str, params: DecodeParams | None = None
    ) -> str:
        first_line = user_prompt.split("\n", 1)[0]
        if first_line == prompts.DECOUPLE_MARKER:
            return self._decouple(prompts.extract_question(user_prompt))
        if first_line == prompts.AUGMENT_MARKER:
            return self._augment(prompts.extract_question(user_prompt))
        if first_line == prompts.ANSWER_MARKER:
            return self._answer(user_prompt)
        return "stub: unrecognized task"

    @staticmethod
    def _decouple(question: str) -> str:
        tokens = set(tokenize(question))
        content = " ".join(_content_words(question))
        return json.dumps(
            {
                "asr": content if content and tokens & SPEECH_CUES else None,
                "ocr": content if content and tokens & OCR_CUES else None,
                "det": content or None,
            }
        )

    @staticmethod
    def _augment(question: str) -> str:
        content = _content_words(question)
        topic = ", ".join(content) if content else "the video"
        stripped = question.strip().rstrip("?").strip()
        stripped = stripped[:1].lower() + stripped[1:]
        return (
            f"Background: the question concerns {topic}; relevant evidence may "
            "appear anywhere in the video, so both spoken and on-screen "
            "information should be checked.\n"
            f"1. In this video, {stripped}?\n"
            f"2. According to the video, {stripped}?"
        )

    @staticmethod
    def _answer(user_prompt: str) -> str:
        question = _first_content_line(user_prompt, "### QUESTION")
        asr = _first_content_line(user_prompt, "### ASR EVIDENCE")
        ocr = _first_content_line(user_prompt, "### OCR EVIDENCE")
        digest = hashlib.sha256(user_prompt.encode("utf-8")).hexdigest()[:12]
        return (
            f"Stub answer to: {question} | top asr: {asr} | top ocr: {ocr} "
            f"| prompt digest: {digest}"
        )


def _first_content_line(text: str, header: str) -> str:
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if line == header and i + 1 < len(lines):
            return lines[i + 1].strip()
    return "(none)"


# --- deterministic stub detector -------------------------------------------------

STUB_DETECTOR_VOCAB = ("person", "car", "dog", "sign", "table", "tree", "phone", "cup")


class StubDetector:
    """Emits a fixed pseudo-detection pattern from the frame index alone.

    Frame i carries ``i % 3`` objects; object j is labeled
    ``STUB_DETECTOR_VOCAB[(i + j) % 8]`` with confidence 0.9 - 0.2 * j and a
    box derived from (i, j). Stable across runs and platforms.
    """

    def detect(self, keyframes: Sequence[FrameRecord]) -> list[list[DetectedObject]]:
        out = []
        for frame in keyframes:
            i = frame.frame_index
            objects = []
            for j in range(i % 3):
                x1 = 0.1 + 0.05 * ((i + j) % 8)
                y1 = 0.1 + 0.05 * (j % 8)
                objects.append(
                    DetectedObject(
                        label=STUB_DETECTOR_VOCAB[(i + j) % len(STUB_DETECTOR_VOCAB)],
                        box=(x1, y1, x1 + 0.3, y1 + 0.4),
                        confidence=round(0.9 - 0.2 * j, 3),
                    )
                )
            out.append(objects)
        return out


class FixtureDetector:
    """Echoes detections loaded from a fixture file, keyed by frame index."""

    def __init__(self, records: Sequence[DetectionRecord]):
        self._by_frame = {r.frame_index: list(r.objects) for r in records}

    def detect(self, keyframes: Sequence[FrameRecord]) -> list[list[DetectedObject]]:
        return [self._by_frame.get(f.frame_index, []) for f in keyframes]


# --- HTTP clients -----------------------------------------------------------------


def _post_json(url: str, payload: dict, headers: dict[str, str], timeout: float) -> dict:
    import requests

    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.exceptions.Timeout as exc:
        raise ProviderUnavailableError(f"timeout calling {url}", retriable=True) from exc
    except requests.exceptions.RequestException as exc:
        raise ProviderUnavailableError(f"cannot reach {url}: {exc}", retriable=True) from exc
    if resp.status_code >= 500:
        raise ProviderUnavailableError(f"{url} returned {resp.status_code}", retriable=True)
    if resp.status_code >= 400:
        raise ProviderUnavailableError(f"{url} returned {resp.status_code}", retriable=False)
    try:
        return resp.json()
    except ValueError as exc:
        raise ProviderUnavailableError(f"{url} returned non-JSON body", retriable=False) from exc


class HttpLvlmClient:
    """Chat-completions-style client; base URL and key come from the environment."""

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = DEFAULT_TIMEOUT_S,
    ):
        self.base_url = (base_url or os.environ.get(ENV_LVLM_URL, "")).rstrip("/")
        if not self.base_url:
            raise ProviderUnavailableError(f"{ENV_LVLM_URL} not set", retriable=False)
        self.api_key = api_key or os.environ.get(ENV_LVLM_KEY, "")
        self.model = model or os.environ.get(ENV_LVLM_MODEL, "default")
        self.timeout = timeout

    def complete(
        self, system_prompt: str, user_prompt: str, params: DecodeParams | None = None
    ) -> str:
        params = params or DecodeParams()
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        body = _post_json(
            f"{self.base_url}/chat/completions",
            {
                "model": self.model,
                "messages": [
                    {"role": "system", "content": system_prompt},
                    {"role": "user", "content": user_prompt},
                ],
                "temperature": params.temperature,
                "max_tokens": params.max_tokens,
            },
            headers,
            self.timeout,
        )
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderUnavailableError(
                "malformed chat completion response", retriable=False
            ) from exc


class HttpEmbeddingClient:
    """POST {base_url}/embed with {"texts": [...]}; response {"vectors": [...]}.

    Vectors come back unnormalized; callers normalize before indexing.
    """

    def __init__(
        self,
        base_url: str | None = None,
        token: str | None = None,
        timeout: float = DEFAULT_TIMEOUT_S,
    ):
        self.base_url = (base_url or os.environ.get(ENV_EMBED_URL, "")).rstrip("/")
        if not self.base_url:
            raise ProviderUnavailableError(f"{ENV_EMBED_URL} not set", retriable=False)
        self.token = token or os.environ.get(ENV_EMBED_TOKEN, "")
        self.timeout = timeout

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            return []
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        body = _post_json(
            f"{self.base_url}/embed", {"texts": list(texts)}, headers, self.timeout
        )
        try:
            vectors = [np.asarray(v, dtype=np.float64) for v in body["vectors"]]
        except (KeyError, TypeError) as exc:
            raise ProviderUnavailableError("malformed embed response", retriable=False) from exc
        if len(vectors) != len(texts):
            raise ProviderUnavailableError(
                f"embed returned {len(vectors)} vectors for {len(texts)} texts",
                retriable=False,
            )
        return vectors


class HttpDetector:
    """POST {base_url}/detect with {"frame_ids": [...]}; per-frame object lists back."""

    def __init__(self, base_url: str | None = None, timeout: float = DEFAULT_TIMEOUT_S):
        self.base_url = (base_url or os.environ.get(ENV_DETECT_URL, "")).rstrip("/")
        if not self.base_url:
            raise ProviderUnavailableError(f"{ENV_DETECT_URL} not set", retriable=False)
        self.timeout = timeout

    def detect(self, keyframes: Sequence[FrameRecord]) -> list[list[DetectedObject]]:
        body = _post_json(
            f"{self.base_url}/detect",
            {"frame_ids": [f.frame_index for f in keyframes]},
            {},
            self.timeout,
        )
        try:
            raw = body["detections"]
            return [
                [
                    DetectedObject(
                        label=o["label"],
                        box=tuple(float(c) for c in o["box"]),
                        confidence=float(o["confidence"]),
                    )
                    for o in per_frame
                ]
                for per_frame in raw
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderUnavailableError("malformed detect response", retriable=False) from exc
