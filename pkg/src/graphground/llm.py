"""LLM-backed utterance parsing over a JSON-over-HTTP chat endpoint."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass
from importlib import resources
from string import Template

import httpx

from .errors import LlmMalformedResponse, LlmTokenUnmappable, LlmUnavailable
from .parsing import ParsedClues
from .vocabulary import CATEGORY, ConceptVocabulary, nearest_concept

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 3
BASE_DELAY = 1.0
MIN_SIMILARITY = 0.5


@dataclass(frozen=True)
class LlmClientConfig:
    endpoint: str
    api_key: str | None = None
    model: str | None = None
    timeout: float = 30.0

    @classmethod
    def from_env(cls, env=None) -> "LlmClientConfig":
        env = os.environ if env is None else env
        endpoint = env.get("R2G_LLM_ENDPOINT")
        if not endpoint:
            raise LlmUnavailable("R2G_LLM_ENDPOINT is not set")
        return cls(endpoint, env.get("R2G_LLM_API_KEY"), env.get("R2G_LLM_MODEL"))


class LlmClient:
    """Minimal chat-completions client; ``complete`` returns the message text."""

    def __init__(self, config: LlmClientConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._http = httpx.Client(timeout=config.timeout, transport=transport)

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        body = {"messages": [{"role": "user", "content": prompt}], "temperature": 0}
        if self.config.model:
            body["model"] = self.config.model
        try:
            resp = self._http.post(self.config.endpoint, json=body, headers=headers)
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise LlmUnavailable(str(exc)) from exc
        try:
            data = resp.json()
        except ValueError:
            return resp.text
        if isinstance(data, dict) and "choices" in data:
            try:
                return data["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError):
                raise LlmMalformedResponse(resp.text) from None
        return resp.text

    def close(self):
        self._http.close()


def default_prompt_template() -> str:
    return resources.files("graphground.data").joinpath("llm_prompt.txt").read_text(encoding="utf-8")


def render_prompt(utterance: str, vocab: ConceptVocabulary, template: str | None = None) -> str:
    lines = []
    for fam, toks in vocab.families.items():
        lines.append(f"{fam.removeprefix('attr:')}: {', '.join(toks)}")
    return Template(template or default_prompt_template()).substitute(
        utterance=utterance.replace('"', "'"), vocabulary="\n".join(lines)
    )


def _strip_fences(raw: str) -> str:
    text = raw.strip()
    if text.startswith("```"):
        text = text.split("\n", 1)[1] if "\n" in text else ""
        text = text.rsplit("```", 1)[0]
    return text.strip()


def decode_response(raw: str) -> dict:
    """Parse and shape-check the model's JSON answer."""
    try:
        doc = json.loads(_strip_fences(raw))
    except (json.JSONDecodeError, TypeError):
        raise LlmMalformedResponse(str(raw)) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("target"), dict):
        raise LlmMalformedResponse(str(raw))
    anchor = doc.get("anchor") or {}
    relation = doc.get("relation")
    if not isinstance(anchor, dict) or not (relation is None or isinstance(relation, str)):
        raise LlmMalformedResponse(str(raw))
    for side in (doc["target"], anchor):
        if not all(isinstance(k, str) and (v is None or isinstance(v, str)) for k, v in side.items()):
            raise LlmMalformedResponse(str(raw))
    return {"target": doc["target"], "relation": relation, "anchor": anchor}


def resolve_token(vocab: ConceptVocabulary, family: str, token: str, min_similarity: float = MIN_SIMILARITY):
    """Map a free token onto ``family``: exact or alias first, then the nearest
    concept by embedding. Returns ``(token, via_embedding)`` or None."""
    tok = token.strip().lower()
    canon = vocab.canonical(tok)
    fam_tokens = vocab.family_tokens(family)
    if canon in fam_tokens:
        return canon, False
    vec = vocab.phrase_vector(tok)
    if vec is None:
        return None
    concept, score = nearest_concept(vocab, vec, family)
    if score < min_similarity:
        return None
    return concept.token, True


def parse_llm(utterance: str, vocab: ConceptVocabulary, client, template: str | None = None,
              max_attempts: int = MAX_ATTEMPTS, base_delay: float = BASE_DELAY, sleep=time.sleep,
              min_similarity: float = MIN_SIMILARITY) -> ParsedClues:
    """Ask ``client`` (anything with ``complete(prompt) -> str``) to split the
    utterance into clues, retrying with exponential backoff."""
    prompt = render_prompt(utterance, vocab, template)
    doc = None
    for attempt in range(max_attempts):
        try:
            doc = decode_response(client.complete(prompt))
            break
        except (LlmUnavailable, LlmMalformedResponse) as exc:
            if attempt == max_attempts - 1:
                raise
            logger.warning("LLM attempt %d failed: %s", attempt + 1, exc)
            sleep(base_delay * 2 ** attempt)

    notes = []
    fams = [CATEGORY, *vocab.attribute_families]

    def side(props: dict, name: str) -> dict:
        out = {}
        for fam, tok in props.items():
            if tok is None:
                continue
            if fam not in fams:
                notes.append(f"{name}: unknown family {fam!r} dropped")
                continue
            hit = resolve_token(vocab, fam, tok, min_similarity)
            if hit is None:
                if name == "target" and fam == CATEGORY:
                    raise LlmTokenUnmappable(tok)
                notes.append(f"{name}.{fam}: {tok!r} not in vocabulary, dropped")
                continue
            if hit[1]:
                notes.append(f"{name}.{fam}: {tok!r} mapped to {hit[0]!r}")
            out[fam] = hit[0]
        return out

    target = side(doc["target"], "target")
    if CATEGORY not in target:
        raise LlmTokenUnmappable(str(doc["target"].get(CATEGORY)))
    anchor = side(doc["anchor"], "anchor")
    relation = None
    if doc["relation"]:
        hit = resolve_token(vocab, "relation", doc["relation"], min_similarity)
        if hit is None:
            notes.append(f"relation: {doc['relation']!r} not in vocabulary, dropped")
        else:
            if hit[1]:
                notes.append(f"relation: {doc['relation']!r} mapped to {hit[0]!r}")
            relation = hit[0]
    for n in notes:
        logger.warning(n)
    return ParsedClues(target, relation, anchor, warnings=notes)
