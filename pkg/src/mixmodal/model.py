"""Full model assembly for all four training modes.

Mode determines which submodules exist:
  unit      - both embedders, shared encoder, one cross-fusion SAM
  uwox      - both embedders, shared encoder, one decoupled SAM, pair head
  img_only  - image half of the decoupled path (no text structures at all)
  txt_only  - text half of the decoupled path

The encoder stack is a single instance shared by both modalities; in
multi-scale mode each pyramid level is encoded independently and the level
encodings are concatenated (up, mid, down) before fusion.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .attention import EncoderStack, SamBlock
from .config import TrainConfig
from .decoder import MultiScaleDecoder, PatchPredictor, SingleScaleDecoder
from .embeddings import PatchEmbedder, TextEmbedder, patch_positions
from .errors import ConfigurationError, ModeError, ValidationError
from .fusion import FusedFeatures, PairMatchHead, pair_match, unit_fuse, uwox_forward
from .heads import ClassifierHead, HashHead
from .pyramid import LEVELS, build_pyramid, build_single_scale, pyramid_patch_counts, reassemble


class WordPredictor(nn.Module):
    """2-layer MLP mapping fused text rows to vocabulary logits."""

    def __init__(self, hidden: int, vocab_size: int):
        super().__init__()
        self.fc1 = nn.Linear(hidden, hidden)
        self.fc2 = nn.Linear(hidden, vocab_size)
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class MixModel(nn.Module):
    """Shared-encoder image/text model with mode-dependent fusion and decoders."""

    def __init__(self, cfg: TrainConfig, vocab_size: int | None = None):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.mode = cfg.mode
        self.has_text = cfg.mode in ("unit", "uwox", "txt_only")
        self.has_image = cfg.mode in ("unit", "uwox", "img_only")
        hidden, heads = cfg.hidden, cfg.heads
        patch_dim = cfg.block_size * cfg.block_size

        self.encoder = EncoderStack(cfg.n_layers, hidden, heads)

        if self.has_text:
            if vocab_size is None:
                raise ConfigurationError("text modes require a vocabulary size")
            self.vocab_size = vocab_size
            self.text_embed = TextEmbedder(vocab_size, hidden)
            self.word_head = WordPredictor(hidden, vocab_size)

        if self.has_image:
            counts = self._level_counts()
            self.level_counts = counts
            self.num_patches = sum(counts.values())
            self.patch_embed = PatchEmbedder(patch_dim, hidden, multiscale=cfg.multiscale)
            if cfg.multiscale:
                self.decoder = MultiScaleDecoder(hidden, heads, patch_dim)
            else:
                self.decoder = SingleScaleDecoder(hidden, patch_dim)
            for level, pos in self._level_positions().items():
                self.register_buffer(
                    f"pos_{level}", torch.from_numpy(pos).float(), persistent=False
                )

        if cfg.mode == "unit":
            self.sam_unit = SamBlock(hidden, heads)
        else:
            self.sam_uwox = SamBlock(hidden, heads)
        if cfg.mode == "uwox":
            self.pair_head = PairMatchHead(cfg.v_max, self.num_patches)

        # fine-tuning heads, attached on demand
        self.cls_head: ClassifierHead | None = None
        self.hash_head: HashHead | None = None

    # -- geometry ----------------------------------------------------------

    def _level_counts(self) -> dict[str, int]:
        hw = (self.cfg.image_size, self.cfg.image_size)
        if not self.cfg.multiscale:
            down, _, _ = pyramid_patch_counts(hw, self.cfg.block_size)
            return {"down": down}
        down, mid, up = pyramid_patch_counts(hw, self.cfg.block_size)
        return {"up": up, "mid": mid, "down": down}

    def _level_positions(self) -> dict[str, np.ndarray]:
        image = np.zeros((self.cfg.image_size, self.cfg.image_size), dtype=np.uint8)
        if self.cfg.multiscale:
            pyr = build_pyramid(image, self.cfg.block_size)
            return {lv: patch_positions(pyr[lv], multiscale=True) for lv in LEVELS}
        seq = build_single_scale(image, self.cfg.block_size)
        return {"down": patch_positions(seq, multiscale=False)}

    def level_order(self) -> tuple[str, ...]:
        return LEVELS if self.cfg.multiscale else ("down",)

    # -- checkpoint plumbing -------------------------------------------------

    def attach_cls_head(self, num_classes: int) -> None:
        self.cls_head = ClassifierHead(self.cfg.hidden, num_classes)

    def attach_hash_head(self) -> None:
        self.hash_head = HashHead(self.cfg.hidden, self.cfg.code_bits)

    def param_blocks(self) -> dict[str, np.ndarray]:
        return {
            name: p.detach().cpu().numpy().copy() for name, p in self.named_parameters()
        }

    def load_param_blocks(self, blocks: dict[str, np.ndarray], allow_missing: bool = False):
        """Copy named blocks into matching parameters; extra blocks are ignored."""
        own = dict(self.named_parameters())
        for name, param in own.items():
            if name not in blocks:
                if allow_missing:
                    continue
                raise ValidationError(f"checkpoint missing parameter block {name!r}")
            arr = blocks[name]
            if tuple(arr.shape) != tuple(param.shape):
                raise ValidationError(
                    f"parameter block {name!r} has shape {tuple(arr.shape)}, "
                    f"model expects {tuple(param.shape)}"
                )
            with torch.no_grad():
                param.copy_(torch.from_numpy(np.ascontiguousarray(arr)))

    # -- forward pieces ------------------------------------------------------

    def encode_text(self, tokens, positions, pad_mask):
        """Token ids -> shared-encoder output E_txt (B, V, C)."""
        if not self.has_text:
            raise ModeError(f"mode {self.mode!r} has no text path")
        x = self.text_embed(tokens, positions)
        return self.encoder(x, pad_mask=pad_mask)

    def encode_image(self, levels: dict[str, torch.Tensor]) -> torch.Tensor:
        """Per-level patch tensors -> concatenated encoder output E_img (B, U, C).

        Levels are encoded independently by the shared stack and concatenated
        in (up, mid, down) order.
        """
        if not self.has_image:
            raise ModeError(f"mode {self.mode!r} has no image path")
        encoded = []
        for level in self.level_order():
            patches = levels[level]
            pos = getattr(self, f"pos_{level}").to(patches.dtype)
            pos = pos.unsqueeze(0).expand(patches.shape[0], -1, -1)
            encoded.append(self.encoder(self.patch_embed(patches, pos)))
        return torch.cat(encoded, dim=1)

    def split_levels(self, e_img: torch.Tensor) -> dict[str, torch.Tensor]:
        sizes = [self.level_counts[lv] for lv in self.level_order()]
        parts = torch.split(e_img, sizes, dim=1)
        return dict(zip(self.level_order(), parts))

    def fuse(
        self,
        e_txt: torch.Tensor | None = None,
        e_img: torch.Tensor | None = None,
        text_pad_mask: torch.Tensor | None = None,
    ) -> FusedFeatures:
        """Run the mode's fusion step on whichever encodings are present."""
        if self.mode == "unit":
            return unit_fuse(e_txt, e_img, self.sam_unit, text_pad_mask)
        f_txt = (
            uwox_forward(e_txt, self.sam_uwox, pad_mask=text_pad_mask)
            if e_txt is not None
            else None
        )
        f_img = uwox_forward(e_img, self.sam_uwox) if e_img is not None else None
        return FusedFeatures(f_txt=f_txt, f_img=f_img)

    def decode_image(self, f_img: torch.Tensor) -> torch.Tensor:
        """Fused image rows -> per-down-patch intensity predictions (B, U_down, B*B)."""
        if self.cfg.multiscale:
            f = self.split_levels(f_img)
            return self.decoder(f["up"], f["mid"], f["down"])
        return self.decoder(f_img)

    def pair_logit(self, e_txt, e_img, text_pad_mask):
        if self.mode != "uwox":
            raise ModeError("pair matching belongs to the uwox mode")
        return pair_match(e_txt, e_img, self.pair_head, text_pad_mask)

    # -- image-only convenience (used by regeneration and image fine-tuning) --

    def forward_image(self, levels: dict[str, torch.Tensor]) -> torch.Tensor:
        """Image patches -> fused image feature F_img, touching no text module."""
        if self.mode == "unit":
            raise ModeError("unit mode requires both modalities; cannot run image-only")
        return self.fuse(e_img=self.encode_image(levels)).f_img

    def predict_image(self, levels: dict[str, torch.Tensor]) -> torch.Tensor:
        return self.decode_image(self.forward_image(levels))

    @torch.no_grad()
    def regenerate(
        self, image: np.ndarray, mask_rate: float | None = None, rng=None
    ) -> np.ndarray:
        """Reconstruct every down-level patch of one image via grouped masking.

        Patches are partitioned into ceil(1/rate) round-robin groups; each
        pass corrupts one group (donors drawn from the image's own patches)
        and the reconstruction keeps each patch's prediction from the pass
        where it was masked, so the output is fully model-generated.
        """
        if not self.has_image:
            raise ModeError(f"mode {self.mode!r} cannot regenerate images")
        rate = self.cfg.mask_rate if mask_rate is None else mask_rate
        rng = np.random.default_rng(self.cfg.seed) if rng is None else rng
        h, w = image.shape
        if h != self.cfg.image_size or w != self.cfg.image_size:
            raise ConfigurationError(
                f"image {h}x{w} does not match model geometry {self.cfg.image_size}"
            )
        if self.cfg.multiscale:
            pyr = build_pyramid(image, self.cfg.block_size)
            base = {lv: pyr[lv].patches.astype(np.float32) for lv in LEVELS}
            down_seq = pyr["down"]
        else:
            down_seq = build_single_scale(image, self.cfg.block_size)
            base = {"down": down_seq.patches.astype(np.float32)}
        u_down = len(down_seq.patches)
        n_groups = math.ceil(1 / rate)
        donor_pool = base["down"]
        predicted = np.zeros_like(base["down"])
        dtype = next(self.parameters()).dtype
        for g in range(n_groups):
            group = np.arange(u_down)[np.arange(u_down) % n_groups == g]
            corrupted = base["down"].copy()
            corrupted[group] = donor_pool[rng.integers(0, u_down, size=len(group))]
            levels = {
                lv: torch.from_numpy(arr[None] if lv != "down" else corrupted[None]).to(dtype)
                for lv, arr in base.items()
            }
            preds = self.predict_image(levels)[0].cpu().numpy()
            predicted[group] = preds[group]
        raster = reassemble(
            predicted.astype(np.float64), down_seq.grid, self.cfg.block_size
        )
        return np.clip(np.rint(raster * 255.0), 0, 255).astype(np.uint8)
