"""Whitespace tokenizer over the fixed vocabulary."""
from __future__ import annotations

from dataclasses import dataclass, field

from .vocab import MAX_TOKENS, PAD_ID, UNK_ID, WORD_TO_ID, WORDS


@dataclass
class InstructionRecord:
    text: str
    tokens: list[int] = field(default_factory=list)  # length MAX_TOKENS
    length: int = 0


def tokenize(text: str, max_tokens: int = MAX_TOKENS) -> InstructionRecord:
    """Lowercase whitespace split; OOV -> unk; truncate and right-pad."""
    words = text.lower().split()
    ids = [WORD_TO_ID.get(w, UNK_ID) for w in words][:max_tokens]
    length = len(ids)
    ids = ids + [PAD_ID] * (max_tokens - length)
    return InstructionRecord(text=text, tokens=ids, length=length)


def detokenize(tokens) -> str:
    return " ".join(WORDS[t] for t in tokens if t != PAD_ID)
