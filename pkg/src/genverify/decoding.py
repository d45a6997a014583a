"""Toy autoregressive model and the decoding strategies whose determinism
the verification protocol relies on.

The model is a hash table: the logit of token ``t`` after a given context
is a counter-based hash of (table seed, position, trailing window, t)
mapped to [-5, 5], plus a per-token epsilon (t * 1e-9) that rules out
exact ties.  Scores never depend on anything but those inputs, so two
decoders with equal seeds replay identical logit sequences.

Decode-time jitter models hardware nondeterminism: uniform noise in
[-eps, +eps] added to the logits from a fresh unseeded stream, the same
additive, tiny perturbation non-associative floating-point accumulation
produces on real accelerators.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Hashable, Sequence

import numpy as np

from .consensus import QuorumRule
from .rng import Stream, derive_seed, fresh_seed, _mix64_block

_LOGIT_LO = -5.0
_LOGIT_HI = 5.0
_TIE_EPSILON = 1e-9
_TWO_NEG_53 = 2.0 ** -53


class Strategy(Enum):
    GREEDY = "greedy"
    BEAM = "beam"
    MULTINOMIAL = "multinomial"


@dataclass(frozen=True)
class ToyLM:
    vocab_size: int
    context_window: int = 4
    table_seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.context_window < 1:
            raise ValueError("context_window must be >= 1")


@dataclass(frozen=True)
class DecodeConfig:
    strategy: Strategy
    max_tokens: int
    beam_width: int = 1
    temperature: float = 1.0
    rng_seed: int = 0
    jitter: float = 0.0

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.beam_width < 1:
            raise ValueError("beam width must be >= 1")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be > 0")
        if self.jitter < 0.0:
            raise ValueError("jitter must be >= 0")


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]


@dataclass(frozen=True)
class SequenceDecision:
    accepted: bool
    mode_sequence: TokenSequence
    matched_count: int
    total: int
    rule: QuorumRule
    dissenting_ids: tuple[Hashable, ...]


def logits(model: ToyLM, context: Sequence[int]) -> np.ndarray:
    """Deterministic scores for every next token given a context.

    Pure in (table_seed, trailing window, position); decode-time jitter is
    never applied here.
    """
    window = tuple(int(t) for t in context[-model.context_window :])
    base = derive_seed(model.table_seed, len(context), *window)
    tokens = np.arange(model.vocab_size, dtype=np.uint64)
    mixed = _mix64_block(np.uint64(base) ^ _mix64_block(tokens))
    u = (mixed >> np.uint64(11)).astype(np.float64) * _TWO_NEG_53
    scores = _LOGIT_LO + (_LOGIT_HI - _LOGIT_LO) * u
    scores += np.arange(model.vocab_size, dtype=np.float64) * _TIE_EPSILON
    return scores


class _JitterSource:
    """Fresh unseeded noise per decode run; inert when amplitude is zero."""

    def __init__(self, amplitude: float):
        self.amplitude = amplitude
        self._stream = Stream(fresh_seed()) if amplitude > 0.0 else None

    def perturb(self, scores: np.ndarray) -> np.ndarray:
        if self._stream is None:
            return scores
        noise = self._stream.uniform_block(
            scores.size, -self.amplitude, self.amplitude
        )
        return scores + noise


def greedy_decode(
    model: ToyLM, prompt: Sequence[int], cfg: DecodeConfig
) -> TokenSequence:
    """Append the argmax token until max_tokens; smallest id wins exact ties."""
    if cfg.strategy is not Strategy.GREEDY:
        raise ValueError("config strategy must be greedy")
    jitter = _JitterSource(cfg.jitter)
    context = list(prompt)
    out = []
    for _ in range(cfg.max_tokens):
        scores = jitter.perturb(logits(model, context))
        token = int(np.argmax(scores))  # first max = smallest token id
        out.append(token)
        context.append(token)
    return TokenSequence(tuple(out))


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    m = scores.max()
    return scores - (m + np.log(np.exp(scores - m).sum()))


def beam_decode(
    model: ToyLM, prompt: Sequence[int], cfg: DecodeConfig
) -> TokenSequence:
    """Width-limited best-first search over cumulative log-softmax scores.

    Hypothesis ordering ties break lexicographically on the token
    sequence; width 1 reduces exactly to greedy decoding.
    """
    if cfg.strategy is not Strategy.BEAM:
        raise ValueError("config strategy must be beam")
    jitter = _JitterSource(cfg.jitter)
    prompt = tuple(int(t) for t in prompt)
    beams: list[tuple[float, tuple[int, ...]]] = [(0.0, ())]
    for _ in range(cfg.max_tokens):
        candidates = []
        for score, toks in beams:
            raw = jitter.perturb(logits(model, prompt + toks))
            ls = _log_softmax(raw)
            for t in range(model.vocab_size):
                candidates.append((score + ls[t], toks + (t,)))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        beams = candidates[: cfg.beam_width]
    return TokenSequence(beams[0][1])


def multinomial_decode(
    model: ToyLM, prompt: Sequence[int], cfg: DecodeConfig
) -> TokenSequence:
    """Sample each next token from softmax(logits / temperature).

    Fully determined by rng_seed; distinct seeds diverge.
    """
    if cfg.strategy is not Strategy.MULTINOMIAL:
        raise ValueError("config strategy must be multinomial")
    jitter = _JitterSource(cfg.jitter)
    stream = Stream(derive_seed("decode.multinomial", cfg.rng_seed))
    context = list(prompt)
    out = []
    for _ in range(cfg.max_tokens):
        scores = jitter.perturb(logits(model, context)) / cfg.temperature
        scores -= scores.max()
        probs = np.exp(scores)
        probs /= probs.sum()
        u = stream.uniform()
        token = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        token = min(token, model.vocab_size - 1)
        out.append(token)
        context.append(token)
    return TokenSequence(tuple(out))


def decode(model: ToyLM, prompt: Sequence[int], cfg: DecodeConfig) -> TokenSequence:
    """Dispatch on the configured strategy."""
    if cfg.strategy is Strategy.GREEDY:
        return greedy_decode(model, prompt, cfg)
    if cfg.strategy is Strategy.BEAM:
        return beam_decode(model, prompt, cfg)
    return multinomial_decode(model, prompt, cfg)


def sequence_consensus(
    reports: Sequence[tuple[Hashable, TokenSequence]],
    rule: QuorumRule = QuorumRule.SIMPLE_MAJORITY,
) -> SequenceDecision:
    """Exact-equality quorum over token sequences (tolerance is always 0).

    The mode is the most frequent sequence; ties break lexicographically
    on the token list.
    """
    if len(reports) == 0:
        raise ValueError("no reports")
    counts: dict[tuple[int, ...], int] = {}
    for _, seq in reports:
        counts[seq.tokens] = counts.get(seq.tokens, 0) + 1
    mode = min(counts, key=lambda toks: (-counts[toks], toks))
    matched = counts[mode]
    dissenting = tuple(vid for vid, seq in reports if seq.tokens != mode)
    return SequenceDecision(
        accepted=rule.satisfied(matched, len(reports)),
        mode_sequence=TokenSequence(mode),
        matched_count=matched,
        total=len(reports),
        rule=rule,
        dissenting_ids=dissenting,
    )


@dataclass(frozen=True)
class DeterminismRow:
    """One row of the decoding determinism report."""

    strategy: str
    max_tokens: int
    runs: int
    distinct_outputs: int

    @property
    def deterministic(self) -> bool:
        return self.distinct_outputs == 1


def determinism_experiment(
    model: ToyLM,
    prompt: Sequence[int],
    cfg: DecodeConfig,
    runs: int,
    label: str,
) -> DeterminismRow:
    """Repeat one decode configuration and count distinct outputs.

    Multinomial runs get one fresh rng_seed per run (seeds derived from
    cfg.rng_seed), mirroring independent sampling nodes; greedy and beam
    rely only on decode-time jitter for variation.
    """
    outputs = set()
    for r in range(runs):
        run_cfg = cfg
        if cfg.strategy is Strategy.MULTINOMIAL:
            run_cfg = DecodeConfig(
                strategy=cfg.strategy,
                max_tokens=cfg.max_tokens,
                beam_width=cfg.beam_width,
                temperature=cfg.temperature,
                rng_seed=derive_seed("decode.run", cfg.rng_seed, r),
                jitter=cfg.jitter,
            )
        outputs.add(decode(model, prompt, run_cfg).tokens)
    return DeterminismRow(
        strategy=label,
        max_tokens=cfg.max_tokens,
        runs=runs,
        distinct_outputs=len(outputs),
    )
