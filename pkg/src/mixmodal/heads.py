"""Fine-tuning heads: multi-label classification and 64-bit hashing retrieval.

Both heads consume the arithmetic mean of the fused sequence over unpadded
rows. Hash codes are tanh-squashed continuous vectors binarized by sign
(ties go to +1); retrieval ranks a gallery by Hamming distance with id
tie-breaking. The hashing objective is a pairwise Cauchy cross-entropy with
a quantization term pulling continuous codes toward +/-1.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ConfigurationError, ParseError, ValidationError

CODE_BITS = 64


def masked_mean_pool(features: torch.Tensor, pad_mask: torch.Tensor | None) -> torch.Tensor:
    """Average (B, S, C) features over unpadded rows -> (B, C)."""
    if pad_mask is None:
        return features.mean(dim=1)
    keep = (~pad_mask).to(features.dtype)
    counts = keep.sum(dim=1)
    if (counts == 0).any():
        raise ValidationError("pooling needs at least one unpadded row")
    return (features * keep.unsqueeze(-1)).sum(dim=1) / counts.unsqueeze(-1)


class ClassifierHead(nn.Module):
    """Fully-connected map from the pooled feature to K class logits."""

    def __init__(self, hidden: int, num_classes: int):
        super().__init__()
        self.proj = nn.Linear(hidden, num_classes)

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.proj(pooled)


class HashHead(nn.Module):
    """Fully-connected map from the pooled feature to `bits` continuous codes."""

    def __init__(self, hidden: int, bits: int = CODE_BITS):
        super().__init__()
        self.bits = bits
        self.proj = nn.Linear(hidden, bits)

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.proj(pooled))


def classify(
    features: torch.Tensor, head: ClassifierHead, pad_mask: torch.Tensor | None = None
) -> torch.Tensor:
    """Per-class probabilities from fused features: pool -> linear -> sigmoid."""
    squeeze = features.dim() == 2
    if squeeze:
        features = features.unsqueeze(0)
        pad_mask = pad_mask.unsqueeze(0) if pad_mask is not None else None
    probs = torch.sigmoid(head(masked_mean_pool(features, pad_mask)))
    return probs.squeeze(0) if squeeze else probs


@dataclass(frozen=True, order=True)
class HashCode:
    """A fixed-width binary code; bit i of `value` is code component i."""

    value: int
    bits: int = CODE_BITS

    @classmethod
    def from_signs(cls, continuous: np.ndarray) -> "HashCode":
        # tie rule: exactly-zero components binarize to 1
        value = 0
        for i, c in enumerate(continuous):
            if c >= 0:
                value |= 1 << i
        return cls(value, len(continuous))

    def to_hex(self) -> str:
        return f"{self.value:0{self.bits // 4}x}"

    @classmethod
    def from_hex(cls, text: str, bits: int = CODE_BITS) -> "HashCode":
        return cls(int(text, 16), bits)

    def hamming(self, other: "HashCode") -> int:
        return (self.value ^ other.value).bit_count()


def hash_encode(
    features: torch.Tensor, head: HashHead, pad_mask: torch.Tensor | None = None
) -> tuple[torch.Tensor, list[HashCode]]:
    """Continuous codes in (-1, 1) plus their sign binarization."""
    squeeze = features.dim() == 2
    if squeeze:
        features = features.unsqueeze(0)
        pad_mask = pad_mask.unsqueeze(0) if pad_mask is not None else None
    continuous = head(masked_mean_pool(features, pad_mask))
    codes = [HashCode.from_signs(row) for row in continuous.detach().cpu().numpy()]
    if squeeze:
        return continuous.squeeze(0), codes
    return continuous, codes


def _cauchy_distance(a: torch.Tensor, b: torch.Tensor, bits: int) -> torch.Tensor:
    """Cosine distance between code vectors scaled to [0, bits]."""
    eps = 1e-12
    na = a / a.norm(dim=-1, keepdim=True).clamp_min(eps)
    nb = b / b.norm(dim=-1, keepdim=True).clamp_min(eps)
    return (bits / 2) * (1 - (na * nb).sum(dim=-1))


def cauchy_hash_loss(
    continuous: torch.Tensor,
    similarity: torch.Tensor,
    gamma: float = 32.0,
    quant_weight: float = 0.1,
) -> torch.Tensor:
    """Pairwise Cauchy cross-entropy over a batch of continuous codes.

    Args:
        continuous: (B, bits) codes in (-1, 1).
        similarity: (B, B) with s_ij = 1 iff records i, j share the exact
            label set.
        gamma: Cauchy scale; similarity probability is gamma / (gamma + d).
        quant_weight: weight of the quantization term ln(1 + d(c, sign(c)) / gamma).
    """
    if gamma <= 0:
        raise ConfigurationError(f"gamma must be positive, got {gamma}")
    b, bits = continuous.shape
    if b < 2:
        raise ConfigurationError("cauchy_hash_loss needs a batch of at least 2 codes")
    iu, ju = torch.triu_indices(b, b, offset=1)
    d = _cauchy_distance(continuous[iu], continuous[ju], bits).clamp_min(1e-6)
    p = gamma / (gamma + d)
    s = similarity[iu, ju].to(continuous.dtype)
    pair_terms = -(s * torch.log(p) + (1 - s) * torch.log1p(-p.clamp(max=1 - 1e-9)))
    sign_target = torch.where(continuous >= 0, 1.0, -1.0).to(continuous.dtype).detach()
    quant_d = _cauchy_distance(continuous, sign_target, bits)
    quant = torch.log1p(quant_d / gamma).mean()
    return pair_terms.mean() + quant_weight * quant


def exact_label_similarity(labels: np.ndarray) -> np.ndarray:
    """(N, N) 0/1 matrix: s_ij = 1 iff rows i and j are identical multi-hots."""
    labels = np.asarray(labels)
    return (labels[:, None, :] == labels[None, :, :]).all(axis=2).astype(np.float64)


def retrieve(query: HashCode, gallery: list[tuple[str, HashCode]]) -> list[str]:
    """Gallery ids sorted by ascending Hamming distance, ties broken by id."""
    if not gallery:
        raise ValidationError("retrieval needs a non-empty gallery")
    return [gid for gid, _ in sorted(gallery, key=lambda e: (query.hamming(e[1]), e[0]))]


# ---------------------------------------------------------------------------
# gallery index file: "<id> <16-hex code> <multi-hot>" per line
# ---------------------------------------------------------------------------

@dataclass
class GalleryEntry:
    id: str
    code: HashCode
    labels: np.ndarray


def save_gallery(entries: list[GalleryEntry], path: Path | str) -> None:
    with Path(path).open("w") as fh:
        for e in entries:
            bits = "".join(str(int(v)) for v in e.labels)
            fh.write(f"{e.id} {e.code.to_hex()} {bits}\n")


def load_gallery(path: Path | str) -> list[GalleryEntry]:
    entries = []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected 'id code labels'")
            rec_id, hex_code, bits = parts
            if any(c not in "01" for c in bits):
                raise ParseError(f"{path}:{lineno}: labels must be 0/1")
            entries.append(
                GalleryEntry(
                    rec_id,
                    HashCode.from_hex(hex_code),
                    np.array([int(c) for c in bits], dtype=np.uint8),
                )
            )
    return entries
