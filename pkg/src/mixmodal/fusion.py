"""Image-text correlation: cross-fused (UNIT) and decoupled (UWOX) variants.

UNIT pushes both modalities through one shared SAM with queries taken from
the opposite modality, so it needs image and text together at every call.
UWOX runs the same shared SAM per modality as plain self-attention and
instead learns the correlation through a pair-matching head: the token/patch
cross-correlation matrix is average-pooled along each axis, concatenated,
and mapped to a single paired-vs-unpaired logit.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .attention import SamBlock
from .errors import ModeError, ValidationError


@dataclass
class FusedFeatures:
    """Fusion outputs, aligned with their own modality's sequence.

    f_txt has one row per text position, f_img one row per image patch
    (all pyramid levels concatenated in multi-scale mode).
    """

    f_txt: torch.Tensor | None  # (B, V, C)
    f_img: torch.Tensor | None  # (B, U, C)
    pair_logit: torch.Tensor | None = None


def unit_fuse(
    e_txt: torch.Tensor | None,
    e_img: torch.Tensor | None,
    sam_unit: SamBlock,
    text_pad_mask: torch.Tensor | None = None,
) -> FusedFeatures:
    """Cross-fuse the two encodings through one shared SAM, both directions.

    Each direction takes its queries from one modality and keys/values from
    the other, so every patch row attends over the tokens and every token row
    attends over the patches. Requires both modalities; image-only or
    text-only callers must use the decoupled (UWOX) path instead.
    """
    if e_txt is None or e_img is None:
        raise ModeError(
            "cross-fusion requires both image and text; use the decoupled mode "
            "(uwox/img_only/txt_only) for single-modality inputs"
        )
    f_img = sam_unit(e_img, e_txt, e_txt, key_pad_mask=text_pad_mask)
    f_txt = sam_unit(e_txt, e_img, e_img)
    return FusedFeatures(f_txt=f_txt, f_img=f_img)


def uwox_forward(
    encoding: torch.Tensor, sam_uwox: SamBlock, pad_mask: torch.Tensor | None = None
) -> torch.Tensor:
    """Self-attend one modality's encoding through the shared decoupled SAM."""
    return sam_uwox(encoding, encoding, encoding, key_pad_mask=pad_mask)


class PairMatchHead(nn.Module):
    """Linear map from the pooled cross-correlation features to one logit.

    The input width (max text length + total patch count) is frozen at
    construction, which pins the model to one text/image geometry.
    """

    def __init__(self, text_len: int, image_len: int):
        super().__init__()
        self.text_len = text_len
        self.image_len = image_len
        self.proj = nn.Linear(text_len + image_len, 1)

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.proj(pooled).squeeze(-1)


def pair_match(
    e_txt: torch.Tensor,
    e_img: torch.Tensor,
    head: PairMatchHead,
    text_pad_mask: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Pair-matching logit and probability for (text, image) encodings.

    CoMat = e_txt @ e_img^T is pooled along the image axis (one value per
    text row, padded rows zeroed) and along the text axis (one value per
    patch, padded rows excluded from the average); the concatenation feeds
    the linear head. Returns (logit, sigmoid(logit)), each shaped (B,).
    """
    squeeze = e_txt.dim() == 2
    if squeeze:
        e_txt, e_img = e_txt.unsqueeze(0), e_img.unsqueeze(0)
        if text_pad_mask is not None:
            text_pad_mask = text_pad_mask.unsqueeze(0)
    b, v, _ = e_txt.shape
    if text_pad_mask is None:
        text_pad_mask = torch.zeros(b, v, dtype=torch.bool, device=e_txt.device)
    keep = ~text_pad_mask
    counts = keep.sum(dim=1)
    if (counts == 0).any():
        raise ValidationError("pair matching needs at least one unpadded token")

    comat = e_txt @ e_img.transpose(1, 2)  # (B, V, U)
    cof_img = comat.mean(dim=2) * keep  # (B, V), zeros at pad rows
    cof_txt = (comat * keep.unsqueeze(-1)).sum(dim=1) / counts.unsqueeze(-1)  # (B, U)
    logit = head(torch.cat([cof_txt, cof_img], dim=-1))
    if squeeze:
        logit = logit.squeeze(0)
    return logit, torch.sigmoid(logit)


def pair_match_loss(pair_logit: torch.Tensor, i_pair: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy on the pair logit, computed in stable logit form."""
    target = i_pair.to(pair_logit.dtype)
    return F.binary_cross_entropy_with_logits(pair_logit, target)
