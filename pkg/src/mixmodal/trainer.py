"""Training loops (pretrain / finetune), evaluation, and the scenario suite.

One trainer owns the model parameters and applies updates serially; every
stochastic draw (batch sampling, masking, donor choice) goes through a
single numpy Generator that is checkpointed alongside the parameters, so a
save -> load -> resume run reproduces an uninterrupted one step for step.
Pretraining reads images, reports, and the paired flag only - never labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch
from torch.nn import functional as F

from .checkpoint import Checkpoint, capture_rng, restore_rng, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .corpus import ScenarioConfig, StudyRecord, TrainingTuple, assemble_scenario
from .errors import ConfigurationError, ValidationError
from .fusion import pair_match_loss
from .heads import (
    GalleryEntry,
    HashCode,
    cauchy_hash_loss,
    exact_label_similarity,
    masked_mean_pool,
    retrieve,
    save_gallery,
)
from .metrics import RETRIEVAL_KS, MetricReport, auc, image_quality, macro_auc, precision_at_k
from .model import MixModel
from .objectives import loss_img, loss_txt, mask_patches, mask_tokens, total_loss
from .pyramid import build_pyramid, build_single_scale
from .tokenization import TokenSequence, pad_to, tokenize

LOSS_COLUMNS = ("step", "l_txt", "l_img", "l_co", "total")


# ---------------------------------------------------------------------------
# dataset encoding
# ---------------------------------------------------------------------------

@dataclass
class EncodedData:
    """Tuples or records pre-encoded into fixed arrays for fast batching."""

    ids: list[str]
    tokens: np.ndarray | None  # (N, V) int64
    text_pad: np.ndarray | None  # (N, V) bool
    levels: dict[str, np.ndarray] | None  # level -> (N, U_s, B*B) float32
    i_pair: np.ndarray | None  # (N,) float32
    labels: np.ndarray | None  # (N, K) float32
    images: list[np.ndarray] | None  # original uint8 rasters (regeneration)

    def __len__(self) -> int:
        return len(self.ids)


def _encode_images(images: list[np.ndarray], cfg: TrainConfig) -> dict[str, np.ndarray]:
    levels: dict[str, list[np.ndarray]] = {}
    for img in images:
        if cfg.multiscale:
            pyr = build_pyramid(img, cfg.block_size)
            parts = {lv: pyr[lv].patches for lv in pyr}
        else:
            parts = {"down": build_single_scale(img, cfg.block_size).patches}
        for lv, arr in parts.items():
            levels.setdefault(lv, []).append(arr.astype(np.float32))
    return {lv: np.stack(arrs) for lv, arrs in levels.items()}


def _encode_reports(reports: list[str], vocab: dict[str, int], cfg: TrainConfig):
    tokens = np.zeros((len(reports), cfg.v_max), dtype=np.int64)
    pad = np.ones((len(reports), cfg.v_max), dtype=bool)
    for i, report in enumerate(reports):
        seq = pad_to(tokenize(report, vocab, max_tokens=cfg.v_max), cfg.v_max)
        tokens[i] = seq.tokens
        pad[i] = seq.pad_mask
    return tokens, pad


def encode_tuples(
    tuples: list[TrainingTuple], vocab: dict[str, int] | None, cfg: TrainConfig
) -> EncodedData:
    """Encode pre-training tuples; labels are structurally absent here."""
    needs_text = cfg.mode in ("unit", "uwox", "txt_only")
    needs_image = cfg.mode in ("unit", "uwox", "img_only")
    tokens = pad = levels = None
    if needs_text:
        tokens, pad = _encode_reports([t.report for t in tuples], vocab, cfg)
    if needs_image:
        levels = _encode_images([t.image for t in tuples], cfg)
    return EncodedData(
        ids=[t.image_id for t in tuples],
        tokens=tokens,
        text_pad=pad,
        levels=levels,
        i_pair=np.array([t.i_pair for t in tuples], dtype=np.float32),
        labels=None,
        images=None,
    )


def encode_records(
    records: list[StudyRecord],
    vocab: dict[str, int] | None,
    cfg: TrainConfig,
    with_text: bool | None = None,
    keep_images: bool = False,
) -> EncodedData:
    """Encode labeled records for fine-tuning and evaluation."""
    needs_text = cfg.mode in ("unit", "uwox", "txt_only") if with_text is None else with_text
    needs_image = cfg.mode in ("unit", "uwox", "img_only")
    tokens = pad = levels = None
    if needs_text:
        tokens, pad = _encode_reports([r.report for r in records], vocab, cfg)
    if needs_image:
        levels = _encode_images([r.image for r in records], cfg)
    return EncodedData(
        ids=[r.id for r in records],
        tokens=tokens,
        text_pad=pad,
        levels=levels,
        i_pair=None,
        labels=np.stack([r.labels for r in records]).astype(np.float32),
        images=[r.image for r in records] if keep_images else None,
    )


# ---------------------------------------------------------------------------
# checkpoint plumbing
# ---------------------------------------------------------------------------

def make_checkpoint(
    model: MixModel,
    optimizer: torch.optim.Adam | None,
    cfg: TrainConfig,
    step: int,
    rng: np.random.Generator,
    meta: dict | None = None,
) -> Checkpoint:
    params = model.param_blocks()
    meta = dict(meta or {})
    if optimizer is not None:
        adam_steps = {}
        for name, p in model.named_parameters():
            state = optimizer.state.get(p)
            if not state:
                continue
            params[f"opt.exp_avg.{name}"] = state["exp_avg"].detach().numpy().copy()
            params[f"opt.exp_avg_sq.{name}"] = state["exp_avg_sq"].detach().numpy().copy()
            adam_steps[name] = float(state["step"])
        meta["adam_steps"] = adam_steps
    return Checkpoint(
        config=cfg, params=params, step=step, rng=capture_rng(rng), meta=meta
    )


def restore_optimizer(model: MixModel, optimizer: torch.optim.Adam, ckpt: Checkpoint):
    adam_steps = ckpt.meta.get("adam_steps", {})
    for name, p in model.named_parameters():
        key = f"opt.exp_avg.{name}"
        if key not in ckpt.params:
            continue
        optimizer.state[p] = {
            "step": torch.tensor(adam_steps[name]),
            "exp_avg": torch.from_numpy(ckpt.params[key].copy()),
            "exp_avg_sq": torch.from_numpy(ckpt.params[f"opt.exp_avg_sq.{name}"].copy()),
        }


def model_from_checkpoint(ckpt: Checkpoint, mode: str | None = None) -> MixModel:
    """Rebuild a model (optionally in a narrower mode) from checkpoint blocks."""
    cfg = ckpt.config if mode is None else ckpt.config.with_overrides(mode=mode)
    vocab_size = None
    if "text_embed.token_map.weight" in ckpt.params:
        vocab_size = ckpt.params["text_embed.token_map.weight"].shape[0]
    model = MixModel(cfg, vocab_size=vocab_size)
    if "cls_head.proj.weight" in ckpt.params:
        model.attach_cls_head(ckpt.params["cls_head.proj.weight"].shape[0])
    if "hash_head.proj.weight" in ckpt.params:
        model.attach_hash_head()
    model.load_param_blocks(ckpt.params, allow_missing=True)
    model.eval()
    return model


def write_loss_curve(rows: list[dict], path: Path | str) -> None:
    with Path(path).open("w") as fh:
        fh.write(",".join(LOSS_COLUMNS) + "\n")
        for row in rows:
            cells = [str(row["step"])]
            for col in LOSS_COLUMNS[1:]:
                cells.append(repr(row[col]) if col in row else "")
            fh.write(",".join(cells) + "\n")


def _resolve_steps(cfg: TrainConfig, n: int) -> int:
    if cfg.steps is not None:
        return cfg.steps
    return cfg.epochs * math.ceil(n / cfg.batch_size)


# ---------------------------------------------------------------------------
# pre-training
# ---------------------------------------------------------------------------

def _mask_text_batch(data, idx, cfg, rng, vocab_size):
    corrupt = data.tokens[idx].copy()
    rows, cols, originals = [], [], []
    for r, i in enumerate(idx):
        seq = TokenSequence(
            data.tokens[i],
            np.arange(cfg.v_max, dtype=np.int64),
            data.text_pad[i],
        )
        masked_seq, plan = mask_tokens(seq, cfg.mask_rate, rng, vocab_size)
        corrupt[r] = masked_seq.tokens
        rows.extend([r] * len(plan.positions))
        cols.extend(plan.positions.tolist())
        originals.extend(plan.originals.tolist())
    return corrupt, np.array(rows), np.array(cols), np.array(originals, dtype=np.int64)


@dataclass
class _PatchView:
    # minimal stand-in carrying only what mask_patches reads
    patches: np.ndarray


def _mask_patch_batch(data, idx, cfg, rng):
    down = data.levels["down"][idx]
    donor_pool = down.reshape(-1, down.shape[-1])
    corrupt = down.copy()
    rows, cols, originals = [], [], []
    for r in range(len(idx)):
        masked_seq, plan = mask_patches(_PatchView(down[r]), cfg.mask_rate, rng, donor_pool)
        corrupt[r] = masked_seq.patches
        rows.extend([r] * len(plan.positions))
        cols.extend(plan.positions.tolist())
        originals.append(plan.originals)
    return corrupt, np.array(rows), np.array(cols), np.concatenate(originals, axis=0)


def _pretrain_losses(model: MixModel, data: EncodedData, idx, cfg, rng, vocab_size):
    """One training step's forward pass; returns the mode's loss components."""
    losses: dict[str, torch.Tensor] = {}
    e_txt = f_txt = None
    e_img = f_img = None
    text_pad_t = None

    if model.has_text:
        corrupt, t_rows, t_cols, t_orig = _mask_text_batch(data, idx, cfg, rng, vocab_size)
        tokens_t = torch.from_numpy(corrupt)
        positions_t = torch.arange(cfg.v_max).expand(len(idx), -1)
        text_pad_t = torch.from_numpy(data.text_pad[idx])
        e_txt = model.encode_text(tokens_t, positions_t, text_pad_t)

    if model.has_image:
        corrupt_down, i_rows, i_cols, i_orig = _mask_patch_batch(data, idx, cfg, rng)
        levels_t = {
            lv: torch.from_numpy(arr[idx] if lv != "down" else corrupt_down)
            for lv, arr in data.levels.items()
        }
        e_img = model.encode_image(levels_t)

    fused = model.fuse(e_txt=e_txt, e_img=e_img, text_pad_mask=text_pad_t)
    f_txt, f_img = fused.f_txt, fused.f_img

    if model.has_text:
        logits = model.word_head(f_txt)
        losses["l_txt"] = loss_txt(logits[t_rows, t_cols], torch.from_numpy(t_orig))
    if model.has_image:
        preds = model.decode_image(f_img)
        losses["l_img"] = loss_img(
            preds[i_rows, i_cols], torch.from_numpy(i_orig).to(preds.dtype)
        )
    if cfg.mode == "uwox":
        logit, _ = model.pair_logit(e_txt, e_img, text_pad_t)
        losses["l_co"] = pair_match_loss(logit, torch.from_numpy(data.i_pair[idx]))

    losses["total"] = total_loss(
        losses.get("l_txt"), losses.get("l_img"), losses.get("l_co"), cfg.mode
    )
    return losses


def pretrain(
    cfg: TrainConfig,
    pretrain_set: list[TrainingTuple],
    vocab: dict[str, int] | None = None,
    out_dir: Path | str | None = None,
    resume_from: Checkpoint | None = None,
) -> Checkpoint:
    """Self-supervised pre-training; labels are never read on this path.

    Each step samples a batch, corrupts 15% of tokens and down-level patches
    by random substitution, and minimizes the mode's loss sum with Adam
    (betas 0.9/0.999, eps 1e-8). Returns (and optionally writes) a
    checkpoint that also carries the optimizer moments and RNG states.
    """
    if not pretrain_set:
        raise ConfigurationError(
            "pretraining needs a non-empty tuple set (baseline1 has none: "
            "train the application head directly instead)"
        )
    needs_text = cfg.mode in ("unit", "uwox", "txt_only")
    if needs_text and vocab is None:
        raise ConfigurationError("text modes need a vocabulary")
    vocab_size = len(vocab) if vocab is not None else None

    torch.manual_seed(cfg.seed)
    model = MixModel(cfg, vocab_size=vocab_size)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8
    )
    rng = np.random.default_rng(cfg.seed)
    start_step = 0
    if resume_from is not None:
        model.load_param_blocks(resume_from.params, allow_missing=True)
        restore_optimizer(model, optimizer, resume_from)
        rng = restore_rng(resume_from.rng)
        start_step = resume_from.step

    data = encode_tuples(pretrain_set, vocab, cfg)
    steps = _resolve_steps(cfg, len(data))
    # the curve carries over on resume so a resumed run's checkpoint matches
    # an uninterrupted run byte for byte
    curve = list(resume_from.meta.get("loss_curve", [])) if resume_from else []
    model.train()
    for step in range(start_step, steps):
        idx = rng.integers(0, len(data), size=min(cfg.batch_size, len(data)))
        losses = _pretrain_losses(model, data, idx, cfg, rng, vocab_size)
        optimizer.zero_grad()
        losses["total"].backward()
        optimizer.step()
        row = {"step": step}
        row.update({k: float(v.detach()) for k, v in losses.items()})
        curve.append(row)

    ckpt = make_checkpoint(
        model, optimizer, cfg, steps, rng,
        meta={"phase": "pretrain", "loss_curve": curve},
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(ckpt, out / "checkpoint.mxmk")
        write_loss_curve(curve, out / "loss_curve.csv")
    return ckpt


# ---------------------------------------------------------------------------
# fine-tuning
# ---------------------------------------------------------------------------

def _pooled_features(model: MixModel, data: EncodedData, idx, side: str) -> torch.Tensor:
    """(B, C) pooled fused features for the requested query side."""
    e_txt = text_pad_t = None
    e_img = None
    if side in ("txt", "img+txt") or model.mode == "unit":
        if data.tokens is None:
            raise ConfigurationError(f"side {side!r} needs text inputs")
        tokens_t = torch.from_numpy(data.tokens[idx])
        positions_t = torch.arange(data.tokens.shape[1]).expand(len(idx), -1)
        text_pad_t = torch.from_numpy(data.text_pad[idx])
        e_txt = model.encode_text(tokens_t, positions_t, text_pad_t)
    if side in ("img", "img+txt") or model.mode == "unit":
        if data.levels is None:
            raise ConfigurationError(f"side {side!r} needs image inputs")
        levels_t = {lv: torch.from_numpy(arr[idx]) for lv, arr in data.levels.items()}
        e_img = model.encode_image(levels_t)
    fused = model.fuse(e_txt=e_txt, e_img=e_img, text_pad_mask=text_pad_t)
    pooled = []
    if side in ("img", "img+txt"):
        pooled.append(masked_mean_pool(fused.f_img, None))  # patch rows carry no padding
    if side in ("txt", "img+txt"):
        pooled.append(masked_mean_pool(fused.f_txt, text_pad_t))
    return torch.stack(pooled).mean(dim=0)


def finetune(
    checkpoint: Checkpoint | None,
    task: str,
    finetune_set: list[StudyRecord],
    cfg: TrainConfig,
    vocab: dict[str, int] | None = None,
    out_dir: Path | str | None = None,
) -> Checkpoint:
    """Attach a fresh task head and fine-tune the whole network on labels.

    checkpoint=None trains from random initialization (the no-pretraining
    baseline). Classification minimizes per-class BCE on the configured
    feature side; hashing minimizes the Cauchy pairwise loss on the
    configured query side.
    """
    if task not in ("cls", "hash"):
        raise ConfigurationError(f"unknown finetune task {task!r}")
    if not finetune_set:
        raise ConfigurationError("finetune set is empty")

    torch.manual_seed(cfg.seed + 1)
    needs_text = cfg.mode in ("unit", "uwox", "txt_only")
    vocab_size = len(vocab) if (vocab is not None and needs_text) else None
    model = MixModel(cfg, vocab_size=vocab_size)
    if checkpoint is not None:
        model.load_param_blocks(checkpoint.params, allow_missing=True)

    side = cfg.cls_feature if task == "cls" else cfg.hash_query
    if model.mode == "img_only" and side != "img":
        raise ConfigurationError("img_only models only support the 'img' side")
    if model.mode == "txt_only" and side != "txt":
        raise ConfigurationError("txt_only models only support the 'txt' side")

    data = encode_records(finetune_set, vocab, cfg, keep_images=False)
    if task == "cls":
        model.attach_cls_head(data.labels.shape[1])
    else:
        model.attach_hash_head()

    optimizer = torch.optim.Adam(
        model.parameters(), lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8
    )
    rng = np.random.default_rng(cfg.seed + 1)
    steps = _resolve_steps(cfg, len(data))
    model.train()
    curve = []
    for step in range(steps):
        size = min(cfg.batch_size, len(data))
        if task == "hash":
            size = max(2, size)  # pairwise loss needs at least one pair
        idx = rng.integers(0, len(data), size=size)
        pooled = _pooled_features(model, data, idx, side)
        labels_t = torch.from_numpy(data.labels[idx])
        if task == "cls":
            logits = model.cls_head(pooled)
            loss = F.binary_cross_entropy_with_logits(logits, labels_t)
        else:
            continuous = model.hash_head(pooled)
            sim = torch.from_numpy(exact_label_similarity(data.labels[idx]))
            loss = cauchy_hash_loss(
                continuous, sim, gamma=cfg.cauchy_gamma, quant_weight=cfg.quant_weight
            )
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        curve.append({"step": step, "total": float(loss.detach())})

    ckpt = make_checkpoint(
        model, optimizer, cfg, steps, rng, meta={"phase": "finetune", "task": task}
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(ckpt, out / f"checkpoint_{task}.mxmk")
        write_loss_curve(curve, out / f"loss_curve_{task}.csv")
    return ckpt


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _batched(n: int, size: int = 32):
    for start in range(0, n, size):
        yield np.arange(start, min(start + size, n))


def _class_names(k: int) -> list[str]:
    from .corpus import SHAPE_NAMES

    return [SHAPE_NAMES[i] if i < len(SHAPE_NAMES) else f"class{i}" for i in range(k)]


def evaluate(
    ckpt: Checkpoint,
    task: str,
    eval_set: list[StudyRecord] | list[TrainingTuple],
    vocab: dict[str, int] | None = None,
    out_dir: Path | str | None = None,
) -> MetricReport:
    """Run the matching head/metric pipeline and produce a MetricReport."""
    if task not in ("cls", "retrieval", "regen", "pairmatch"):
        raise ConfigurationError(f"unknown evaluation task {task!r}")
    model = model_from_checkpoint(ckpt)
    cfg = model.cfg

    if task == "cls":
        if model.cls_head is None:
            raise ConfigurationError("checkpoint has no classification head")
        report = _evaluate_cls(model, eval_set, vocab, cfg)
    elif task == "retrieval":
        if model.hash_head is None:
            raise ConfigurationError("checkpoint has no hash head")
        report = _evaluate_retrieval(model, eval_set, vocab, cfg, out_dir)
    elif task == "regen":
        report = _evaluate_regen(model, eval_set, cfg)
    else:
        report = _evaluate_pairmatch(model, eval_set, vocab, cfg)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.save(out / f"metrics_{task}.json")
    return report


@torch.no_grad()
def _cls_scores(model, data, side) -> np.ndarray:
    rows = []
    for idx in _batched(len(data)):
        pooled = _pooled_features(model, data, idx, side)
        rows.append(torch.sigmoid(model.cls_head(pooled)).numpy())
    return np.concatenate(rows, axis=0)


def _evaluate_cls(model, records, vocab, cfg) -> MetricReport:
    data = encode_records(records, vocab, cfg)
    scores = _cls_scores(model, data, cfg.cls_feature)
    names = _class_names(data.labels.shape[1])
    per_class = {
        name: auc(scores[:, i], data.labels[:, i].astype(int))
        for i, name in enumerate(names)
    }
    return MetricReport(
        task="cls",
        auc_per_class=per_class,
        macro_auc=macro_auc(per_class),
        extras={"feature": cfg.cls_feature, "n": len(records)},
    )


@torch.no_grad()
def _evaluate_retrieval(model, records, vocab, cfg, out_dir) -> MetricReport:
    data = encode_records(records, vocab, cfg)
    codes = []
    for idx in _batched(len(data)):
        pooled = _pooled_features(model, data, idx, cfg.hash_query)
        continuous = model.hash_head(pooled)
        codes.extend(HashCode.from_signs(row) for row in continuous.numpy())
    entries = [
        GalleryEntry(data.ids[i], codes[i], data.labels[i].astype(np.uint8))
        for i in range(len(data))
    ]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_gallery(entries, out / "gallery.txt")

    gallery_labels = {e.id: e.labels for e in entries}
    p_at_k = {k: [] for k in RETRIEVAL_KS}
    chance_hits = []
    intra, inter = [], []
    for i, query in enumerate(entries):
        others = [e for j, e in enumerate(entries) if j != i]
        ranked = retrieve(query.code, [(e.id, e.code) for e in others])
        for k in RETRIEVAL_KS:
            p_at_k[k].append(precision_at_k(ranked, query.labels, gallery_labels, k))
        same = [np.array_equal(e.labels, query.labels) for e in others]
        chance_hits.append(np.mean(same))
        for is_same, other in zip(same, others):
            (intra if is_same else inter).append(query.code.hamming(other.code))
    return MetricReport(
        task="retrieval",
        precision_at_k={k: float(np.mean(v)) for k, v in p_at_k.items()},
        extras={
            "query": cfg.hash_query,
            "n": len(records),
            "chance_p1": float(np.mean(chance_hits)),
            "mean_intra_hamming": float(np.mean(intra)) if intra else None,
            "mean_inter_hamming": float(np.mean(inter)) if inter else None,
        },
    )


def _evaluate_regen(model, records, cfg) -> MetricReport:
    per_image = []
    rng = np.random.default_rng(cfg.seed)
    for rec in records:
        recon = model.regenerate(rec.image, rng=rng)
        q = image_quality(rec.image, recon)
        per_image.append({"id": rec.id, "mse": q.mse, "psnr": q.psnr, "ssim": q.ssim})
    return MetricReport(
        task="regen",
        per_image=per_image,
        avg_mse=float(np.mean([r["mse"] for r in per_image])),
        avg_psnr=float(np.mean([r["psnr"] for r in per_image])),
        avg_ssim=float(np.mean([r["ssim"] for r in per_image])),
        extras={"n": len(records), "mask_rate": cfg.mask_rate},
    )


@torch.no_grad()
def _evaluate_pairmatch(model, tuples, vocab, cfg) -> MetricReport:
    data = encode_tuples(tuples, vocab, cfg)
    probs = []
    for idx in _batched(len(data)):
        tokens_t = torch.from_numpy(data.tokens[idx])
        positions_t = torch.arange(cfg.v_max).expand(len(idx), -1)
        pad_t = torch.from_numpy(data.text_pad[idx])
        e_txt = model.encode_text(tokens_t, positions_t, pad_t)
        levels_t = {lv: torch.from_numpy(arr[idx]) for lv, arr in data.levels.items()}
        e_img = model.encode_image(levels_t)
        _, prob = model.pair_logit(e_txt, e_img, pad_t)
        probs.append(prob.numpy())
    probs = np.concatenate(probs)
    truth = data.i_pair.astype(int)
    accuracy = float(((probs > 0.5).astype(int) == truth).mean())
    return MetricReport(
        task="pairmatch",
        pair_accuracy=accuracy,
        extras={
            "n": len(tuples),
            "mean_prob_paired": float(probs[truth == 1].mean()) if (truth == 1).any() else None,
            "mean_prob_unpaired": float(probs[truth == 0].mean()) if (truth == 0).any() else None,
        },
    )


# ---------------------------------------------------------------------------
# scenario suite
# ---------------------------------------------------------------------------

def run_scenario_suite(
    base_cfg: TrainConfig,
    scenarios: list[str],
    fractions: list[float],
    corpus_a: list[StudyRecord],
    corpus_b: list[StudyRecord] | None,
    eval_records: list[StudyRecord],
    vocab: dict[str, int],
    out_dir: Path | str | None = None,
) -> dict:
    """Pretrain -> finetune -> evaluate per (scenario, fraction) cell.

    All cells at one fraction share the same paired subset (the scenario
    seed is common), and every cell is scored on the same evaluation split.
    """
    cells = []
    for fraction in fractions:
        if not 0 < fraction <= 1:
            raise ConfigurationError("paired fractions must be in (0, 1]")
        for scenario in scenarios:
            scen = ScenarioConfig(
                scenario=scenario,
                paired_fraction=fraction,
                seed=base_cfg.scenario.seed,
                institutes=["A", "B"] if scenario == "mixup2" else ["A"],
            )
            cfg = replace(base_cfg, scenario=scen)
            pretrain_set, finetune_set = assemble_scenario(corpus_a, corpus_b, scen)
            ckpt = None
            if scenario != "baseline1":
                ckpt = pretrain(cfg, pretrain_set, vocab)
            tuned = finetune(ckpt, "cls", finetune_set, cfg, vocab)
            report = evaluate(tuned, "cls", eval_records, vocab)
            cells.append(
                {
                    "scenario": scenario,
                    "paired_fraction": fraction,
                    "macro_auc": report.macro_auc,
                    "finetune_ids": [r.id for r in finetune_set],
                    "pretrain_size": len(pretrain_set),
                }
            )
    table = {
        "scenarios": list(scenarios),
        "fractions": [float(f) for f in fractions],
        "cells": cells,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_suite_table(table, out / "scenario_suite.json")
    return table


def save_suite_table(table: dict, path: Path | str) -> None:
    import json

    Path(path).write_text(json.dumps(table, sort_keys=True, indent=2) + "\n")


def load_suite_table(path: Path | str) -> dict:
    import json

    return json.loads(Path(path).read_text())


__all__ = [
    "EncodedData",
    "encode_tuples",
    "encode_records",
    "pretrain",
    "finetune",
    "evaluate",
    "run_scenario_suite",
    "save_suite_table",
    "load_suite_table",
    "make_checkpoint",
    "model_from_checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "write_loss_curve",
]
