"""Word-level tokenizer with a closed vocabulary.

Ids 0 and 1 are reserved for padding and unknown words; the vocabulary file
format is one word per line, line number = id.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ParseError, ShapeError

PAD_ID = 0
UNK_ID = 1
PAD_WORD = "<pad>"
UNK_WORD = "<unk>"
NUM_RESERVED = 2

MAX_TOKENS = 150  # default cap on report length


@dataclass
class TokenSequence:
    """Token ids with their positions and padding mask.

    Attributes:
        tokens: (V,) int64 ids.
        positions: (V,) int64, 0..V-1.
        pad_mask: (V,) bool, True at padded slots.
    """

    tokens: np.ndarray
    positions: np.ndarray
    pad_mask: np.ndarray

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def unpadded_length(self) -> int:
        return int((~self.pad_mask).sum())


def build_vocab(words: list[str]) -> dict[str, int]:
    """Map words to ids, reserving 0/1 for pad/unknown."""
    vocab = {PAD_WORD: PAD_ID, UNK_WORD: UNK_ID}
    for word in words:
        if word not in vocab:
            vocab[word] = len(vocab)
    return vocab


def save_vocab(vocab: dict[str, int], path: Path | str) -> None:
    words = sorted(vocab, key=vocab.get)
    if words[:NUM_RESERVED] != [PAD_WORD, UNK_WORD] or sorted(vocab.values()) != list(
        range(len(vocab))
    ):
        raise ConfigurationError("vocab ids must be contiguous with pad=0, unk=1")
    Path(path).write_text("\n".join(words) + "\n")


def load_vocab(path: Path | str) -> dict[str, int]:
    words = Path(path).read_text().splitlines()
    if len(words) < NUM_RESERVED or words[0] != PAD_WORD or words[1] != UNK_WORD:
        raise ParseError(f"{path}: first two vocab lines must be {PAD_WORD}/{UNK_WORD}")
    return {w: i for i, w in enumerate(words)}


def tokenize(report: str, vocab: dict[str, int], max_tokens: int = MAX_TOKENS) -> TokenSequence:
    """Lowercase, whitespace-split, truncate, and map through the vocabulary.

    Unknown words map to UNK_ID; the result carries no padding.
    """
    if not vocab or PAD_WORD not in vocab or UNK_WORD not in vocab:
        raise ConfigurationError("vocab must be non-empty and contain pad/unk entries")
    words = report.lower().split()[:max_tokens]
    ids = np.array([vocab.get(w, UNK_ID) for w in words], dtype=np.int64)
    return TokenSequence(
        tokens=ids,
        positions=np.arange(len(ids), dtype=np.int64),
        pad_mask=np.zeros(len(ids), dtype=bool),
    )


def pad_to(seq: TokenSequence, length: int) -> TokenSequence:
    """Right-pad with PAD_ID up to `length`; positions keep counting."""
    v = len(seq)
    if v > length:
        raise ShapeError(f"sequence length {v} exceeds pad target {length}")
    tokens = np.full(length, PAD_ID, dtype=np.int64)
    tokens[:v] = seq.tokens
    pad_mask = np.ones(length, dtype=bool)
    pad_mask[:v] = seq.pad_mask
    return TokenSequence(tokens, np.arange(length, dtype=np.int64), pad_mask)
