"""Token and patch embeddings: content and positional terms, each layer-normed.

Both modalities use the same two-term structure
    x_hat = Norm(W_x * x + b_x) + Norm(W_p * p + b_p)
with a learned linear positional map: the scalar token index for text, and
the patch box [x_start, y_start, x_end, y_end] (plus (x_scale, y_scale) in
multi-scale mode) for images.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .errors import ValidationError
from .pyramid import PatchSequence


class TextEmbedder(nn.Module):
    """Embed token ids and positions into the shared hidden size."""

    def __init__(self, vocab_size: int, hidden: int):
        super().__init__()
        self.vocab_size = vocab_size
        self.token_map = nn.Embedding(vocab_size, hidden)
        self.token_bias = nn.Parameter(torch.zeros(hidden))
        self.token_norm = nn.LayerNorm(hidden)
        self.pos_map = nn.Linear(1, hidden)
        self.pos_norm = nn.LayerNorm(hidden)

    def forward(self, tokens: torch.Tensor, positions: torch.Tensor) -> torch.Tensor:
        """tokens (..., V) int64, positions (..., V) -> embeddings (..., V, C)."""
        dtype = self.token_bias.dtype
        content = self.token_norm(self.token_map(tokens) + self.token_bias)
        pos = self.pos_norm(self.pos_map(positions.to(dtype).unsqueeze(-1)))
        return content + pos


class PatchEmbedder(nn.Module):
    """Embed flattened patches and their box (+ scale) positions."""

    def __init__(self, patch_dim: int, hidden: int, multiscale: bool = True):
        super().__init__()
        self.patch_dim = patch_dim
        self.pos_dim = 6 if multiscale else 4
        self.patch_map = nn.Linear(patch_dim, hidden)
        self.patch_norm = nn.LayerNorm(hidden)
        self.pos_map = nn.Linear(self.pos_dim, hidden)
        self.pos_norm = nn.LayerNorm(hidden)

    def forward(self, patches: torch.Tensor, positions: torch.Tensor) -> torch.Tensor:
        """patches (..., U, B*B), positions (..., U, pos_dim) -> (..., U, C)."""
        content = self.patch_norm(self.patch_map(patches))
        pos = self.pos_norm(self.pos_map(positions))
        return content + pos


def patch_positions(seq: PatchSequence, multiscale: bool = True) -> np.ndarray:
    """Positional input vectors for one patch sequence; validates the boxes."""
    boxes = seq.boxes
    if (boxes < 0).any() or (boxes > 1).any():
        raise ValidationError("patch boxes must lie in [0, 1]")
    if (boxes[:, 0] >= boxes[:, 2]).any() or (boxes[:, 1] >= boxes[:, 3]).any():
        raise ValidationError("patch boxes must have positive extent")
    if multiscale:
        return np.concatenate([boxes, seq.scales], axis=1)
    return boxes.copy()
