"""Multi-head self-attention module (SAM) and the shared encoder stack.

One SAM is scaled dot-product multi-head attention with a residual and
layer norm, followed by a position-wise feed-forward (4x expansion, GELU)
with its own residual and layer norm (post-norm ordering). Padded key
positions receive exactly zero attention weight.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .errors import ConfigurationError, ShapeError


class SamBlock(nn.Module):
    """Self-Attention Module: multi-head attention + feed-forward, post-norm.

    Callable with distinct query/key/value sequences, so the same block
    serves self-attention, cross-modal fusion, and the decoder cascade.
    """

    def __init__(self, hidden: int, heads: int, ff_mult: int = 4):
        super().__init__()
        if hidden % heads:
            raise ConfigurationError(f"hidden {hidden} not divisible by heads {heads}")
        self.hidden = hidden
        self.heads = heads
        self.head_dim = hidden // heads
        self.q_proj = nn.Linear(hidden, hidden)
        self.k_proj = nn.Linear(hidden, hidden)
        self.v_proj = nn.Linear(hidden, hidden)
        self.out_proj = nn.Linear(hidden, hidden)
        self.norm_attn = nn.LayerNorm(hidden)
        self.ff1 = nn.Linear(hidden, ff_mult * hidden)
        self.ff2 = nn.Linear(ff_mult * hidden, hidden)
        self.norm_ff = nn.LayerNorm(hidden)
        self.act = nn.GELU()

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        # (B, S, C) -> (B, h, S, C/h)
        b, s, _ = x.shape
        return x.view(b, s, self.heads, self.head_dim).transpose(1, 2)

    def forward(
        self,
        query: torch.Tensor,
        key: torch.Tensor,
        value: torch.Tensor,
        key_pad_mask: torch.Tensor | None = None,
        return_weights: bool = False,
    ):
        """Apply the block.

        Args:
            query: (B, S_q, C); the residual path follows the queries.
            key, value: (B, S_k, C) with matching S_k.
            key_pad_mask: (B, S_k) bool, True at padded keys.
            return_weights: also return (B, h, S_q, S_k) attention weights.
        """
        squeeze = query.dim() == 2
        if squeeze:
            query, key, value = (t.unsqueeze(0) for t in (query, key, value))
            if key_pad_mask is not None:
                key_pad_mask = key_pad_mask.unsqueeze(0)
        if key.shape[1] != value.shape[1]:
            raise ShapeError("key and value row counts differ")
        if key_pad_mask is not None and key_pad_mask.shape != key.shape[:2]:
            raise ShapeError(
                f"key_pad_mask shape {tuple(key_pad_mask.shape)} does not match "
                f"key rows {tuple(key.shape[:2])}"
            )

        q = self._split(self.q_proj(query))
        k = self._split(self.k_proj(key))
        v = self._split(self.v_proj(value))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        if key_pad_mask is not None:
            scores = scores.masked_fill(key_pad_mask[:, None, None, :], float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        ctx = weights @ v  # (B, h, S_q, C/h)
        ctx = ctx.transpose(1, 2).reshape(query.shape)
        x = self.norm_attn(query + self.out_proj(ctx))
        x = self.norm_ff(x + self.ff2(self.act(self.ff1(x))))
        if squeeze:
            x = x.squeeze(0)
            weights = weights.squeeze(0)
        return (x, weights) if return_weights else x


def sam_forward(query, key, value, block: SamBlock, key_pad_mask=None, return_weights=False):
    """Functional alias for one SAM application."""
    return block(query, key, value, key_pad_mask=key_pad_mask, return_weights=return_weights)


class EncoderStack(nn.Module):
    """N_e SAM blocks composed as self-attention; shared across modalities.

    Both the text and image paths run through the same instance, so one
    parameter update moves both modalities.
    """

    def __init__(self, n_layers: int, hidden: int, heads: int):
        super().__init__()
        self.blocks = nn.ModuleList(SamBlock(hidden, heads) for _ in range(n_layers))

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor | None = None) -> torch.Tensor:
        for block in self.blocks:
            x = block(x, x, x, key_pad_mask=pad_mask)
        return x


def encode(x: torch.Tensor, stack: EncoderStack, pad_mask=None) -> torch.Tensor:
    """Functional alias for running the encoder stack."""
    return stack(x, pad_mask=pad_mask)
