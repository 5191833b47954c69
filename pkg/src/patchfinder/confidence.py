"""Confidence scoring for greedily decoded token sequences.

The confidence of a patch's prediction is the mean natural-log probability of
the tokens the model actually chose (each one the argmax of its step's output
distribution). Values are in nats and are always <= 0. Log-probabilities
arriving from a backend are used as-is; there is no exp/log round trip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class EmptySequenceError(ValueError):
    """No tokens left to average after stop-token exclusion."""


@dataclass(frozen=True)
class TokenScore:
    """One decoded token with the log-probability the model assigned it."""

    token_id: int
    text: str
    logprob: float  # ln of the chosen token's probability; finite and <= 0

    def __post_init__(self) -> None:
        if not math.isfinite(self.logprob) or self.logprob > 0.0:
            raise ValueError(f"token logprob must be finite and <= 0, got {self.logprob}")

    @property
    def chosen_prob(self) -> float:
        return math.exp(self.logprob)

    @classmethod
    def from_prob(cls, token_id: int, text: str, prob: float) -> TokenScore:
        if not 0.0 < prob <= 1.0:
            raise ValueError(f"token probability must be in (0, 1], got {prob}")
        return cls(token_id=token_id, text=text, logprob=math.log(prob))


@dataclass(frozen=True)
class ScoredSequence:
    """Greedy decode result: content tokens, plus the stop token if the
    backend reported one separately. The decoded answer is the concatenation
    of the content token texts only."""

    tokens: tuple[TokenScore, ...]
    finish_reason: str = "stop"  # stop | length | error
    stop_token: TokenScore | None = None


@dataclass(frozen=True)
class PatchPrediction:
    """One patch's decoded answer and confidence, as recorded in a run trace.

    ``pc`` is None only when no confidence could be computed (empty generation
    or a failed backend call); such patches are always filtered.
    """

    patch_index: int
    answer_text: str
    pc: float | None
    filtered: bool = False
    filter_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "index": self.patch_index,
            "answer": self.answer_text,
            "pc": self.pc,
            "filtered": self.filtered,
            "reason": self.filter_reason,
        }


def patch_confidence(seq: ScoredSequence, include_stop_token: bool = False) -> float:
    """Mean ln-probability of the decoded sequence, in nats.

    The stop token is excluded by default: its probability reflects the
    model's decision to terminate, not confidence in the answer content.
    Raises EmptySequenceError when no tokens remain to average.
    """
    logprobs = [t.logprob for t in seq.tokens]
    if include_stop_token and seq.stop_token is not None:
        logprobs.append(seq.stop_token.logprob)
    if not logprobs:
        raise EmptySequenceError("cannot score a zero-length generation")
    return math.fsum(logprobs) / len(logprobs)


def decode_answer(seq: ScoredSequence) -> str:
    """Concatenated content-token texts, trimmed of surrounding whitespace."""
    return "".join(t.text for t in seq.tokens).strip()
