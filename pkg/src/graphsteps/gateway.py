"""Uniform access to completion generators and step scorers.

Backends implement two small duck-typed protocols:

* generator: ``complete(GenerationRequest) -> list[str]`` (exactly n texts)
* scorer:    ``score_steps(problem, steps) -> list[float]`` (one per step)

A chat-completions-style HTTP adapter talks to remote models; the mock
backends replay scripts or synthesize pools deterministically from a seed,
which is what the test suite and the mini-build pipeline run against.

Prompt convention for partial solutions: the problem text, then each prior
step separated by blank lines, ending with a blank line.  Passing a stop
sequence requests a single next step; no stop sequence requests a full
completion.
"""

from __future__ import annotations

import hashlib
import math
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import requests

from .evaluation import exact_match
from .tasks import TaskInstance, answer_to_text
from .trajectories import STEP_TOKEN, render_trace

API_KEY_ENV = "GRAPHSTEPS_API_KEY"
STEP_SEP = "\n\n"
DEFAULT_TEMPERATURE = 0.7


class BackendError(RuntimeError):
    """Wire failure that survived the retry budget."""


class BackendAuthError(BackendError):
    """Credentials rejected; retrying would not help."""


class BackendProtocolError(BackendError):
    """The backend answered with something other than the expected shape."""


class LengthLimitError(BackendError):
    """Request exceeded the backend's context budget; truncate and retry."""


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    n: int = 1
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int | None = None
    stop: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


def solution_prompt(problem: str, prefix_steps=()) -> str:
    """Canonical prompt for sampling a continuation after prefix_steps."""
    if not prefix_steps:
        return problem
    return problem + STEP_SEP + STEP_SEP.join(prefix_steps) + STEP_SEP


def split_solution_prompt(prompt: str, problem: str):
    """Recover prefix steps from a solution prompt built on `problem`."""
    rest = prompt[len(problem):]
    return [p for p in rest.split(STEP_SEP) if p.strip()]


def _stable_rng(*parts):
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


# ---------------------------------------------------------------------------
# mock backends

class ScriptedBackend:
    """Replays a fixed list of responses (or raises scripted exceptions).

    Each script entry is either a list of texts (one complete() result) or an
    Exception instance to raise.  Thread-safe; replay order is first-come.
    """

    def __init__(self, script):
        self._script = list(script)
        self._cursor = 0
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, req: GenerationRequest):
        with self._lock:
            self.calls += 1
            if self._cursor >= len(self._script):
                raise BackendProtocolError("script exhausted")
            entry = self._script[self._cursor]
            self._cursor += 1
        if isinstance(entry, Exception):
            raise entry
        if len(entry) != req.n:
            raise BackendProtocolError(
                f"scripted entry has {len(entry)} texts, request wants {req.n}"
            )
        return list(entry)


class FnBackend:
    """Adapts fn(request) -> list[str]; handy for custom scripted behavior."""

    def __init__(self, fn):
        self._fn = fn
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, req: GenerationRequest):
        with self._lock:
            self.calls += 1
        out = self._fn(req)
        if len(out) != req.n:
            raise BackendProtocolError("backend returned wrong completion count")
        return list(out)


class _GoldResolver:
    """Shared lookup from a prompt to its instance's gold steps."""

    def __init__(self, entries):
        # entries: iterable of (instance, gold_step_texts)
        self._by_prompt = {inst.prompt: (inst, list(steps)) for inst, steps in entries}

    def resolve(self, prompt):
        for problem, (inst, steps) in self._by_prompt.items():
            if prompt == problem or prompt.startswith(problem + STEP_SEP):
                prefix = split_solution_prompt(prompt, problem)
                return inst, steps, prefix
        raise BackendProtocolError("prompt does not match any known problem")

    def problems(self):
        return list(self._by_prompt)


class OracleGenerator:
    """Always continues along the gold solution (stepwise or to the end)."""

    def __init__(self, entries):
        self._gold = _GoldResolver(entries)
        self.calls = 0

    def complete(self, req: GenerationRequest):
        self.calls += 1
        inst, gold, prefix = self._gold.resolve(req.prompt)
        remaining = gold[len(prefix):]
        if not remaining:
            # already concluded; restate the final step
            remaining = gold[-1:]
        text = remaining[0] if req.stop else STEP_SEP.join(remaining)
        return [text] * req.n


class OracleScorer:
    """Scores a step 1.0 iff the steps so far match the gold trace prefix."""

    def __init__(self, entries):
        self._gold = _GoldResolver(entries)

    def score_steps(self, problem: str, steps):
        if not steps:
            raise ValueError("score_steps needs at least one step")
        _, gold, _ = self._gold.resolve(problem)
        scores = []
        on_track = True
        for i, step in enumerate(steps):
            on_track = on_track and i < len(gold) and step == gold[i]
            scores.append(1.0 if on_track else 0.0)
        return scores


class SyntheticPoolBackend:
    """Seeded generator producing mixed correct/incorrect solutions.

    Each sample is gold with probability p_correct, else the gold process
    with an error from a chosen step onward and a wrong final answer.  Pure
    function of (seed, prompt, sample index), so runs are reproducible.
    """

    def __init__(self, entries, p_correct=0.25, seed=0):
        self._gold = _GoldResolver(entries)
        self.p_correct = p_correct
        self.seed = seed
        self.calls = 0

    def complete(self, req: GenerationRequest):
        self.calls += 1
        inst, gold, prefix = self._gold.resolve(req.prompt)
        out = []
        for i in range(req.n):
            rng = _stable_rng(self.seed, req.prompt, i, bool(req.stop))
            out.append(self._sample(inst, gold, prefix, bool(req.stop), rng))
        return out

    def _sample(self, inst, gold, prefix, stepwise, rng):
        on_gold = prefix == gold[: len(prefix)]
        stay_correct = on_gold and rng.random() < self.p_correct
        if stepwise:
            pos = len(prefix)
            if stay_correct and pos < len(gold):
                return gold[pos]
            # off the gold path (or diverging now): either wander one more
            # step or conclude wrong; force a conclusion once past gold depth
            if pos < len(gold) - 1 and rng.random() < 0.5:
                return f"Suppose we also consider node {rng.randrange(inst.graph.node_count)} here."
            return self._wrong_conclusion(inst, rng)
        if stay_correct:
            return STEP_SEP.join(gold[len(prefix):])
        remaining = gold[len(prefix):]
        cut = rng.randrange(len(remaining)) if remaining else 0
        kept = remaining[:cut]
        return STEP_SEP.join(kept + [self._wrong_conclusion(inst, rng)])

    def _wrong_conclusion(self, inst, rng):
        wrong = self._wrong_answer(inst, rng)
        return f"So the final answer is \\boxed{{{wrong}}}."

    def _wrong_answer(self, inst, rng):
        gold = inst.gold
        for _ in range(16):
            if isinstance(gold, bool):
                cand = not gold
            elif isinstance(gold, float):
                cand = round(gold * rng.choice((0.5, 2.0, 3.0)) + rng.choice((0.0, 0.1)), 6)
            elif isinstance(gold, (list, tuple)):
                cand = list(gold)[:-1] if len(gold) > 1 else list(gold) + [rng.randrange(inst.graph.node_count)]
            else:
                cand = gold + rng.choice((-2, -1, 1, 2, 3))
            text = answer_to_text(cand)
            if not exact_match(text, gold, inst.kind).correct:
                return text
        return "unknown"


def oracle_entries(pairs):
    """Build (instance, gold step texts) entries from (instance, trace) pairs."""
    return [(inst, render_trace(trace, inst).texts) for inst, trace in pairs]


# ---------------------------------------------------------------------------
# HTTP adapters

class _HttpBase:
    def __init__(self, base_url, model, api_key=None, timeout=30.0, max_retries=3,
                 backoff=0.5, concurrency=8, post=None, sleep=time.sleep):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._post = post or requests.post
        self._sleep = sleep
        self._slots = threading.Semaphore(concurrency)

    def _headers(self):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _request(self, path, body):
        last_error = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                with self._slots:
                    resp = self._post(
                        f"{self.base_url}{path}", json=body,
                        headers=self._headers(), timeout=self.timeout,
                    )
            except requests.RequestException as exc:
                last_error = exc
                continue
            status = getattr(resp, "status_code", 200)
            if status in (401, 403):
                raise BackendAuthError(f"authentication failed ({status})")
            if status == 413:
                raise LengthLimitError("request exceeds the backend length limit")
            if status >= 500 or status == 429:
                last_error = BackendError(f"transient backend status {status}")
                continue
            if status >= 400:
                raise BackendProtocolError(f"backend rejected the request ({status})")
            try:
                return resp.json()
            except ValueError as exc:
                raise BackendProtocolError("backend returned non-JSON body") from exc
        raise BackendError(f"retries exhausted: {last_error}")


class HttpChatBackend(_HttpBase):
    """Chat-completions-compatible generator (model, messages, n, temperature)."""

    def complete(self, req: GenerationRequest):
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "n": req.n,
            "temperature": req.temperature,
        }
        if req.max_tokens is not None:
            body["max_tokens"] = req.max_tokens
        if req.stop:
            body["stop"] = list(req.stop)
        data = self._request("/chat/completions", body)
        try:
            texts = [c["message"]["content"] for c in data["choices"]]
        except (KeyError, TypeError) as exc:
            raise BackendProtocolError("malformed chat completion response") from exc
        if len(texts) != req.n:
            raise BackendProtocolError(
                f"backend returned {len(texts)} completions, expected {req.n}"
            )
        return texts


class HttpStepScorer(_HttpBase):
    """Step scorer over the wire.

    mode="logprob" reads the probability of the positive label token right
    after each step token (the scoring model's training-time convention);
    mode="scalar" posts the problem and steps to a /score endpoint that
    returns one number per step.  Both normalize into [0, 1].
    """

    POSITIVE_TOKEN = "+"

    def __init__(self, *args, mode="logprob", step_token=None, **kwargs):
        super().__init__(*args, **kwargs)
        if mode not in ("logprob", "scalar"):
            raise ValueError("mode must be 'logprob' or 'scalar'")
        self.mode = mode
        self.step_token = step_token or STEP_TOKEN

    def score_steps(self, problem: str, steps):
        if not steps:
            raise ValueError("score_steps needs at least one step")
        if self.mode == "scalar":
            data = self._request("/score", {
                "model": self.model, "problem": problem, "steps": list(steps),
            })
            scores = data.get("scores")
            if not isinstance(scores, list) or len(scores) != len(steps):
                raise BackendProtocolError("scalar scorer returned a bad score list")
            return [min(1.0, max(0.0, float(s))) for s in scores]
        scores = []
        text = problem
        for step in steps:
            text = text + "\n" + step + self.step_token
            scores.append(self._positive_probability(text))
        return scores

    def _positive_probability(self, text):
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": text}],
            "max_tokens": 1,
            "temperature": 0.0,
            "logprobs": True,
            "top_logprobs": 20,
        }
        data = self._request("/chat/completions", body)
        try:
            entries = data["choices"][0]["logprobs"]["content"][0]["top_logprobs"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendProtocolError("backend did not expose logprobs") from exc
        for entry in entries:
            if entry.get("token") == self.POSITIVE_TOKEN:
                return min(1.0, max(0.0, math.exp(entry["logprob"])))
        return 0.0


def complete_many(backend, requests_, max_workers=8):
    """Fan out complete() calls, preserving input order."""
    if max_workers <= 1 or len(requests_) <= 1:
        return [backend.complete(r) for r in requests_]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(backend.complete, requests_))
