"""Top-down multi-scale decoder cascade and the patch prediction head.

The cascade pushes the coarsest fused features down through one shared SAM:

    d_up   = SAM_d(f_up,  f_up,  f_up)
    d_mid  = SAM_d(d_up,  f_mid, f_mid)
    d_down = SAM_d(d_mid, f_down, f_down)

Written this way, the query row count stays at the up level all the way
down, while patch prediction needs one output row per down-level patch. A
final cross-attention through the same shared SAM, with f_down as queries
over d_down, restores the down-level row count before the MLP head.
"""

from __future__ import annotations

import torch
from torch import nn

from .attention import SamBlock


def decode_cascade(
    f_up: torch.Tensor, f_mid: torch.Tensor, f_down: torch.Tensor, sam_d: SamBlock
) -> torch.Tensor:
    """Literal three-step top-down cascade; rows follow the up level."""
    d_up = sam_d(f_up, f_up, f_up)
    d_mid = sam_d(d_up, f_mid, f_mid)
    return sam_d(d_mid, f_down, f_down)


class PatchPredictor(nn.Module):
    """2-layer MLP mapping decoder rows to patch intensity vectors in [0, 1]."""

    def __init__(self, hidden: int, patch_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(hidden, hidden)
        self.fc2 = nn.Linear(hidden, patch_dim)
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.fc2(self.act(self.fc1(x))))


class MultiScaleDecoder(nn.Module):
    """Cascade + row-count refinement + patch MLP.

    One SamBlock instance is shared by all cascade applications and the
    refinement step, so a single parameter update moves every stage.
    """

    def __init__(self, hidden: int, heads: int, patch_dim: int):
        super().__init__()
        self.sam_d = SamBlock(hidden, heads)
        self.predictor = PatchPredictor(hidden, patch_dim)

    def forward(
        self, f_up: torch.Tensor, f_mid: torch.Tensor, f_down: torch.Tensor
    ) -> torch.Tensor:
        """(B, U_up/U_mid/U_down, C) fused levels -> (B, U_down, B*B) predictions."""
        d_down = decode_cascade(f_up, f_mid, f_down, self.sam_d)
        refined = self.sam_d(f_down, d_down, d_down)
        return self.predictor(refined)


class SingleScaleDecoder(nn.Module):
    """Baseline decoder: the down-level fused features feed the MLP directly."""

    def __init__(self, hidden: int, patch_dim: int):
        super().__init__()
        self.predictor = PatchPredictor(hidden, patch_dim)

    def forward(self, f_down: torch.Tensor) -> torch.Tensor:
        return self.predictor(f_down)
