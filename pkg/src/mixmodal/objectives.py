"""Random-substitution masking and the masked-prediction losses.

A fixed fraction (default 15%) of unpadded tokens / down-level patches is
replaced by random vocabulary words / donor patches from the batch; the
losses score predictions at the masked positions only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch
from torch.nn import functional as F

from .errors import ConfigurationError
from .pyramid import PatchSequence
from .tokenization import NUM_RESERVED, TokenSequence

MASK_RATE = 0.15


@dataclass
class MaskPlan:
    """Which positions were corrupted, with what, and their ground truth."""

    positions: np.ndarray  # (M,) sorted indices into the sequence
    replacements: np.ndarray  # (M,) token ids or (M, B*B) patch vectors
    originals: np.ndarray  # same shape as replacements


def mask_count(rate: float, length: int) -> int:
    """round(rate * length), at least 1 and at most length."""
    if not 0 < rate < 1:
        raise ConfigurationError(f"mask rate must be in (0, 1), got {rate}")
    return min(length, max(1, round(rate * length)))


def mask_tokens(
    seq: TokenSequence, rate: float, rng: np.random.Generator, vocab_size: int
) -> tuple[TokenSequence, MaskPlan]:
    """Replace a sampled subset of unpadded tokens with random vocabulary words.

    Positions are drawn uniformly without replacement among unpadded slots;
    replacements are uniform over the non-reserved vocabulary.
    """
    candidates = np.flatnonzero(~seq.pad_mask)
    k = mask_count(rate, len(candidates))
    positions = np.sort(rng.choice(candidates, size=k, replace=False))
    replacements = rng.integers(NUM_RESERVED, vocab_size, size=k, dtype=np.int64)
    corrupted = seq.tokens.copy()
    originals = corrupted[positions].copy()
    corrupted[positions] = replacements
    plan = MaskPlan(positions, replacements, originals)
    return TokenSequence(corrupted, seq.positions.copy(), seq.pad_mask.copy()), plan


def mask_patches(
    seq: PatchSequence, rate: float, rng: np.random.Generator, donor_pool: np.ndarray
) -> tuple[PatchSequence, MaskPlan]:
    """Replace a sampled subset of down-level patches with donors from the batch.

    Only the down level is ever corrupted; callers keep mid/up intact.
    """
    if donor_pool.ndim != 2 or len(donor_pool) == 0:
        raise ConfigurationError("donor_pool must be a non-empty (N, B*B) array")
    u = len(seq.patches)
    k = mask_count(rate, u)
    positions = np.sort(rng.choice(u, size=k, replace=False))
    donor_idx = rng.integers(0, len(donor_pool), size=k)
    replacements = donor_pool[donor_idx].copy()
    corrupted = seq.patches.copy()
    originals = corrupted[positions].copy()
    corrupted[positions] = replacements
    plan = MaskPlan(positions, replacements, originals)
    return replace(seq, patches=corrupted), plan


def loss_txt(masked_logits: torch.Tensor, originals: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over masked token positions; 0 when nothing is masked."""
    if masked_logits.numel() == 0:
        return torch.zeros((), dtype=masked_logits.dtype, device=masked_logits.device)
    return F.cross_entropy(masked_logits, originals)


def loss_img(masked_pred: torch.Tensor, originals: torch.Tensor) -> torch.Tensor:
    """Mean absolute intensity difference over masked patches' pixels ([0,1] units)."""
    if masked_pred.numel() == 0:
        return torch.zeros((), dtype=masked_pred.dtype, device=masked_pred.device)
    return (masked_pred - originals).abs().mean()


def total_loss(l_txt, l_img, l_co, mode: str):
    """Unweighted sum of the loss components present in `mode`."""
    if mode == "uwox":
        return l_txt + l_img + l_co
    if mode == "unit":
        return l_txt + l_img
    if mode == "img_only":
        return l_img
    if mode == "txt_only":
        return l_txt
    raise ConfigurationError(f"unknown mode {mode!r}")
