"""Word-level tokenizer over the caption vocabulary."""
from __future__ import annotations

import re

import numpy as np

from ..errors import UnknownToken

PAD, UNK = 0, 1
_RESERVED = ("<pad>", "<unk>")
_WORD_RE = re.compile(r"[a-z0-9']+")


def words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


class Tokenizer:
    """Maps caption text to integer ids over a fixed word vocabulary."""

    def __init__(self, vocab: list[str]):
        if list(vocab[:2]) != list(_RESERVED):
            vocab = list(_RESERVED) + [w for w in vocab if w not in _RESERVED]
        self.vocab = list(vocab)
        self.index = {w: i for i, w in enumerate(self.vocab)}

    @classmethod
    def from_texts(cls, texts: list[str], extra: list[str] = ()) -> "Tokenizer":
        seen = sorted({w for t in texts for w in words(t)} | set(extra))
        return cls(list(_RESERVED) + seen)

    @property
    def size(self) -> int:
        return len(self.vocab)

    def encode(self, text: str, max_tokens: int | None = None) -> np.ndarray:
        ids = [self.index.get(w, UNK) for w in words(text)]
        if max_tokens is not None:
            ids = ids[:max_tokens]
        if not ids:
            ids = [UNK]
        return np.asarray(ids, dtype=np.int64)

    def validate_ids(self, ids: np.ndarray) -> None:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.size):
            raise UnknownToken(f"token ids outside vocabulary of size {self.size}")
