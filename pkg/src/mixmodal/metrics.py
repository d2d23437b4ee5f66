"""Evaluation primitives: ROC AUC, retrieval P@K, and image quality.

AUC uses the rank (Mann-Whitney) estimator with midrank tie handling. P@K
counts exact label-set matches. Image quality reports MSE on the [0, 255]
scale, PSNR in dB (capped at 100 for near-zero MSE), and SSIM with the
canonical 11x11 Gaussian window (sigma 1.5, k1=0.01, k2=0.03, range 255).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ShapeError, ValidationError

PSNR_CAP_DB = 100.0
RETRIEVAL_KS = (1, 5, 10, 50)


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned their group average."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def auc(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """Rank-based ROC AUC; ties credit 0.5. None when one class is absent."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ShapeError("scores and labels must have equal length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _midranks(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def macro_auc(per_class: Mapping[str, float | None]) -> float | None:
    """Average the defined per-class AUCs; None if every class is undefined."""
    defined = [v for v in per_class.values() if v is not None]
    return float(np.mean(defined)) if defined else None


def precision_at_k(
    ranked_ids: list[str],
    query_labels: np.ndarray,
    gallery_labels: Mapping[str, np.ndarray],
    k: int,
) -> float:
    """Fraction of the top-K retrieved items whose label set exactly matches."""
    if k < 1:
        raise ValidationError("K must be >= 1")
    if not ranked_ids:
        raise ValidationError("ranked id list is empty")
    top = ranked_ids[: min(k, len(ranked_ids))]
    hits = sum(1 for rid in top if np.array_equal(gallery_labels[rid], query_labels))
    return hits / len(top)


# ---------------------------------------------------------------------------
# image quality
# ---------------------------------------------------------------------------

def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2
    x = np.arange(size) - half
    w = np.exp(-(x**2) / (2 * sigma**2))
    return w / w.sum()


def ssim(reference: np.ndarray, candidate: np.ndarray, dynamic_range: float = 255.0) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5)."""
    ref = np.asarray(reference, dtype=np.float64)
    cand = np.asarray(candidate, dtype=np.float64)
    if ref.shape != cand.shape:
        raise ShapeError("images must have equal dimensions")
    window = _gaussian_window()
    margin = (len(window) - 1) // 2

    def smooth(img):
        out = correlate1d(img, window, axis=0, mode="constant")
        out = correlate1d(out, window, axis=1, mode="constant")
        return out[margin:-margin, margin:-margin]  # interior: full window support

    mu_r, mu_c = smooth(ref), smooth(cand)
    var_r = smooth(ref * ref) - mu_r**2
    var_c = smooth(cand * cand) - mu_c**2
    cov = smooth(ref * cand) - mu_r * mu_c
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    ssim_map = ((2 * mu_r * mu_c + c1) * (2 * cov + c2)) / (
        (mu_r**2 + mu_c**2 + c1) * (var_r + var_c + c2)
    )
    return float(ssim_map.mean())


@dataclass
class ImageQuality:
    mse: float
    psnr: float
    ssim: float


def image_quality(reference: np.ndarray, candidate: np.ndarray) -> ImageQuality:
    """MSE / PSNR / SSIM between two rasters on the [0, 255] intensity scale."""
    ref = np.asarray(reference, dtype=np.float64)
    cand = np.asarray(candidate, dtype=np.float64)
    if ref.shape != cand.shape:
        raise ShapeError("images must have equal dimensions")
    mse = float(((ref - cand) ** 2).mean())
    psnr = PSNR_CAP_DB if mse < 1e-12 else float(10 * np.log10(255.0**2 / mse))
    return ImageQuality(mse=mse, psnr=min(psnr, PSNR_CAP_DB), ssim=ssim(ref, cand))


# ---------------------------------------------------------------------------
# metric report serialization
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    """Evaluation results for one run, serialized with stable field ordering."""

    task: str
    auc_per_class: dict[str, float | None] | None = None
    macro_auc: float | None = None
    precision_at_k: dict[int, float] | None = None
    per_image: list[dict] | None = None
    avg_mse: float | None = None
    avg_psnr: float | None = None
    avg_ssim: float | None = None
    pair_accuracy: float | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = asdict(self)
        if payload["precision_at_k"] is not None:
            payload["precision_at_k"] = {str(k): v for k, v in payload["precision_at_k"].items()}
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        payload = json.loads(text)
        if payload.get("precision_at_k") is not None:
            payload["precision_at_k"] = {
                int(k): v for k, v in payload["precision_at_k"].items()
            }
        return cls(**payload)

    def save(self, path: Path | str) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: Path | str) -> "MetricReport":
        return cls.from_json(Path(path).read_text())
