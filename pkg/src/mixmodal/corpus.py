"""Synthetic image-report corpus, data-mixing scenarios, and manifest I/O.

A study record bundles one grayscale image with a short template-grammar
report naming the shapes visible in the image and their quadrants. Records
from institute "B" carry a shifted background intensity distribution so the
two synthetic sites have a visible domain gap. The four scenario assemblers
turn corpora into pre-training tuples (with paired/unpaired ground truth)
and a fine-tuning subset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import ConfigurationError, ParseError, ValidationError

Scenario = Literal["baseline1", "baseline2", "mixup1", "mixup2"]
SCENARIOS = ("baseline1", "baseline2", "mixup1", "mixup2")

# Shape roster; the first `num_classes` entries are the label classes.
SHAPE_NAMES = ("circle", "square", "cross", "bar", "triangle", "ring", "diamond", "dot")

# Closed report grammar: "scan shows <shape> in <upper|lower> <left|right> area ..."
# or "scan shows no findings". Every word the generator can emit is listed here.
GRAMMAR_WORDS = (
    "scan", "shows", "no", "findings", "in", "upper", "lower", "left", "right", "area",
) + SHAPE_NAMES

BACKGROUND_MEAN = {"A": 64.0, "B": 140.0}
BACKGROUND_STD = 12.0


def report_vocabulary() -> list[str]:
    """All words the synthetic report grammar can produce (pad/unk excluded)."""
    return list(GRAMMAR_WORDS)


@dataclass
class StudyRecord:
    """One (image, report, labels) study.

    Attributes:
        id: unique record identifier.
        image: (H, W) uint8 grayscale raster.
        report: whitespace-separated word sequence; "" when has_report is False.
        labels: (K,) multi-hot class-presence vector with entries in {0, 1}.
        institute: "A" or "B".
        has_report: whether the report field is meaningful.
    """

    id: str
    image: np.ndarray
    report: str
    labels: np.ndarray
    institute: str
    has_report: bool = True


@dataclass
class ScenarioConfig:
    """Which mixing scenario to assemble and with what paired fraction."""

    scenario: Scenario = "mixup1"
    paired_fraction: float = 1.0
    seed: int = 0
    institutes: list[str] = field(default_factory=lambda: ["A"])


@dataclass
class TrainingTuple:
    """One pre-training input: an image coupled with a (possibly mismatched) report.

    i_pair is 1 iff image and report come from the same study record.
    """

    image: np.ndarray
    report: str
    i_pair: int
    image_id: str
    report_id: str
    institute: str


def validate_record(record: StudyRecord, block_size: int | None = None) -> None:
    """Check the StudyRecord invariants; raises ValidationError naming the record."""
    img = record.image
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValidationError(f"record {record.id}: image must be a 2-D uint8 raster")
    if not np.isin(record.labels, (0, 1)).all():
        raise ValidationError(f"record {record.id}: labels must be 0/1")
    if record.institute not in ("A", "B"):
        raise ValidationError(f"record {record.id}: unknown institute {record.institute!r}")
    if block_size is not None:
        div = 4 * block_size
        h, w = img.shape
        if h % div or w % div:
            raise ValidationError(
                f"record {record.id}: image {h}x{w} not divisible by 4*B={div}"
            )


# ---------------------------------------------------------------------------
# shape rendering
# ---------------------------------------------------------------------------

def _shape_mask(name: str, size: int, cy: int, cx: int, r: int) -> np.ndarray:
    yy, xx = np.ogrid[:size, :size]
    dy, dx = yy - cy, xx - cx
    d2 = dy * dy + dx * dx
    if name == "circle":
        return d2 <= r * r
    if name == "square":
        return (np.abs(dy) <= r) & (np.abs(dx) <= r)
    if name == "cross":
        arm = max(1, r // 3)
        return ((np.abs(dy) <= arm) & (np.abs(dx) <= r)) | (
            (np.abs(dx) <= arm) & (np.abs(dy) <= r)
        )
    if name == "bar":
        return (np.abs(dy) <= max(1, r // 3)) & (np.abs(dx) <= r)
    if name == "triangle":
        return (dy >= -r) & (dy <= r) & (np.abs(dx) <= (dy + r) / 2)
    if name == "ring":
        inner = max(1, r - max(1, r // 2))
        return (d2 <= r * r) & (d2 >= inner * inner)
    if name == "diamond":
        return np.abs(dy) + np.abs(dx) <= r
    if name == "dot":
        rr = max(1, r // 2)
        return d2 <= rr * rr
    raise ConfigurationError(f"unknown shape {name!r}")


_QUADRANTS = (("upper", "left"), ("upper", "right"), ("lower", "left"), ("lower", "right"))


def _render_record(
    rec_id: str,
    rng: np.random.Generator,
    image_size: int,
    num_classes: int,
    institute: str,
    with_report: bool,
) -> StudyRecord:
    half = image_size // 2
    bg = rng.normal(BACKGROUND_MEAN[institute], BACKGROUND_STD, (image_size, image_size))
    image = np.clip(bg, 0, 255)

    present = rng.random(num_classes) < 0.5
    phrases: list[str] = []
    for cls in range(num_classes):
        if not present[cls]:
            continue
        quad = int(rng.integers(0, 4))
        vert, horiz = _QUADRANTS[quad]
        r = int(rng.integers(max(2, image_size // 16), max(3, image_size // 8) + 1))
        # keep the shape inside its quadrant so the report's quadrant words are truthful
        y0 = 0 if vert == "upper" else half
        x0 = 0 if horiz == "left" else half
        cy = int(rng.integers(y0 + r, y0 + half - r)) if half > 2 * r else y0 + half // 2
        cx = int(rng.integers(x0 + r, x0 + half - r)) if half > 2 * r else x0 + half // 2
        intensity = float(rng.integers(170, 256))
        mask = _shape_mask(SHAPE_NAMES[cls], image_size, cy, cx, r)
        image = np.where(mask, intensity, image)
        phrases.append(f"{SHAPE_NAMES[cls]} in {vert} {horiz} area")

    report = "scan shows " + (" ".join(phrases) if phrases else "no findings")
    return StudyRecord(
        id=rec_id,
        image=image.astype(np.uint8),
        report=report if with_report else "",
        labels=present.astype(np.uint8),
        institute=institute,
        has_report=with_report,
    )


def generate_corpus(
    n: int,
    image_size: int,
    num_classes: int,
    seed: int,
    institute: str = "A",
    with_reports: bool = True,
) -> list[StudyRecord]:
    """Generate `n` synthetic study records, deterministically from `seed`.

    Each record is rendered from its own child RNG stream (keyed by index), so
    generation may be partitioned across workers by record index; the output
    is order-stable by id either way.
    """
    if n < 1:
        raise ConfigurationError("corpus size must be >= 1")
    if image_size < 16 or image_size % 4:
        raise ConfigurationError(
            f"image_size {image_size} invalid: must be >= 16 and divisible by 4"
        )
    if not 1 <= num_classes <= len(SHAPE_NAMES):
        raise ConfigurationError(f"num_classes must be in [1, {len(SHAPE_NAMES)}]")
    if institute not in BACKGROUND_MEAN:
        raise ConfigurationError(f"unknown institute {institute!r}")

    streams = np.random.SeedSequence(seed).spawn(n)
    prefix = institute.lower()
    return [
        _render_record(
            f"{prefix}{i:05d}",
            np.random.default_rng(streams[i]),
            image_size,
            num_classes,
            institute,
            with_reports,
        )
        for i in range(n)
    ]


# ---------------------------------------------------------------------------
# scenario assembly
# ---------------------------------------------------------------------------

def _paired_tuple(rec: StudyRecord) -> TrainingTuple:
    return TrainingTuple(rec.image, rec.report, 1, rec.id, rec.id, rec.institute)


def assemble_scenario(
    corpus_a: list[StudyRecord],
    corpus_b: list[StudyRecord] | None,
    cfg: ScenarioConfig,
) -> tuple[list[TrainingTuple], list[StudyRecord]]:
    """Split a corpus into (pretrain_set, finetune_set) for one scenario.

    The paired subset depends only on (|corpus_a|, cfg.seed, paired_fraction),
    so scenarios compared at the same fraction and seed share their paired and
    annotated data. Unpaired coupling draws report donors uniformly with
    replacement, never pairing an image with its own report.
    """
    if cfg.scenario not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {cfg.scenario!r}")
    n = len(corpus_a)
    if n < 2:
        raise ConfigurationError("corpus_a must hold at least 2 records")
    if not 0 < cfg.paired_fraction <= 1:
        raise ConfigurationError("paired_fraction must be in (0, 1]")
    if cfg.paired_fraction * n < 1:
        raise ConfigurationError("paired_fraction * |corpus_a| must be >= 1")

    subset_rng, couple_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(2)
    )
    k = round(cfg.paired_fraction * n)
    paired_idx = sorted(subset_rng.permutation(n)[:k].tolist())
    paired = [corpus_a[i] for i in paired_idx]
    missing = [r.id for r in paired if not r.has_report]
    if missing:
        raise ConfigurationError(f"paired records lack reports: {missing[:5]}")
    finetune_set = list(paired)

    if cfg.scenario == "baseline1":
        return [], finetune_set
    if cfg.scenario == "baseline2":
        return [_paired_tuple(r) for r in paired], finetune_set

    donors = [r for r in corpus_a if r.has_report]
    if len(donors) < 2:
        raise ConfigurationError("unpaired coupling needs at least 2 report donors")
    pretrain = [_paired_tuple(r) for r in paired]

    if cfg.scenario == "mixup1":
        paired_set = set(paired_idx)
        rest = [corpus_a[i] for i in range(n) if i not in paired_set]
        for rec in rest:
            donor = rec
            while donor.id == rec.id:
                donor = donors[int(couple_rng.integers(0, len(donors)))]
            pretrain.append(
                TrainingTuple(rec.image, donor.report, 0, rec.id, donor.id, rec.institute)
            )
        return pretrain, finetune_set

    # mixup2: every corpus_b image coupled with a random corpus_a report
    if not corpus_b:
        raise ConfigurationError("mixup2 requires a non-empty corpus_b")
    if not any(r.institute == "B" for r in corpus_b):
        raise ConfigurationError("mixup2 requires at least one institute-B record")
    for rec in corpus_b:
        donor = donors[int(couple_rng.integers(0, len(donors)))]
        pretrain.append(
            TrainingTuple(rec.image, donor.report, 0, rec.id, donor.id, rec.institute)
        )
    return pretrain, finetune_set


# ---------------------------------------------------------------------------
# raster + manifest I/O
# ---------------------------------------------------------------------------

def write_pgm(path: Path | str, image: np.ndarray) -> None:
    """Write a uint8 image as binary PGM (P5, maxval 255)."""
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValidationError("write_pgm expects a 2-D uint8 array")
    h, w = image.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + image.tobytes())


def read_pgm(path: Path | str) -> np.ndarray:
    """Read a binary PGM (P5) file into a (H, W) uint8 array."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise ParseError(f"{path}: not a binary PGM (P5) file")
    # header tokens: magic, width, height, maxval; '#' starts a comment line
    tokens: list[bytes] = []
    i = 2
    while len(tokens) < 3:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise ParseError(f"{path}: truncated PGM header")
        tokens.append(data[i:j])
        i = j
    i += 1  # single whitespace byte after maxval
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ParseError(f"{path}: bad PGM header") from exc
    if maxval != 255:
        raise ParseError(f"{path}: PGM maxval must be 255, got {maxval}")
    raw = data[i : i + w * h]
    if len(raw) != w * h:
        raise ParseError(f"{path}: PGM payload truncated")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w).copy()


def save_corpus(records: list[StudyRecord], out_dir: Path | str) -> Path:
    """Write images as PGM files plus a JSON-lines manifest; returns the manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.jsonl"
    with manifest.open("w") as fh:
        for rec in records:
            rel = f"images/{rec.id}.pgm"
            write_pgm(out / rel, rec.image)
            row = {
                "id": rec.id,
                "image_path": rel,
                "report": rec.report if rec.has_report else None,
                "labels": [int(v) for v in rec.labels],
                "institute": rec.institute,
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return manifest


def load_manifest(path: Path | str, block_size: int | None = None) -> list[StudyRecord]:
    """Load records from a JSON-lines manifest.

    Missing/null report fields yield has_report=False. Malformed lines raise
    ParseError with the line number; images whose size violates the pyramid
    constraint for `block_size` raise ValidationError naming the record id.
    """
    path = Path(path)
    base = path.parent
    records = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                rec_id = row["id"]
                image_path = row["image_path"]
                labels = np.asarray(row["labels"], dtype=np.uint8)
                institute = row["institute"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: malformed manifest line: {exc}") from exc
            report = row.get("report")
            rec = StudyRecord(
                id=rec_id,
                image=read_pgm(base / image_path),
                report=report or "",
                labels=labels,
                institute=institute,
                has_report=report is not None,
            )
            validate_record(rec, block_size=block_size)
            records.append(rec)
    return records
