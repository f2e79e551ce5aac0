"""Datasets and class-incremental task streams.

Two data sources are supported: the CIFAR-100 binary format and seeded
synthetic Gaussian blobs (optionally with planted outliers).  A dataset
is partitioned into a sequence of tasks either with disjoint class sets
or in "fuzzy" mode, where a fixed percentage of each task's examples
comes from classes that define other tasks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError

CIFAR_RECORD_BYTES = 3074
CIFAR_PIXELS = 3072
CIFAR_NUM_CLASSES = 100


@dataclass
class LabeledExample:
    features: np.ndarray
    label: int


@dataclass
class Dataset:
    train: list[LabeledExample]
    test: list[LabeledExample]
    num_classes: int
    dim: int
    # coarse labels are kept only for CIFAR so records can be reserialized
    train_coarse: np.ndarray | None = None
    test_coarse: np.ndarray | None = None


@dataclass(frozen=True)
class StreamSpec:
    mode: str  # "disjoint" or "fuzzy"
    classes_per_task: int
    fuzz_percent: int = 0
    seed: int = 0
    class_order: tuple[int, ...] | None = None

    def validate(self, num_classes: int) -> None:
        if self.mode not in ("disjoint", "fuzzy"):
            raise ConfigurationError(f"unknown stream mode {self.mode!r}")
        if self.classes_per_task < 1:
            raise ConfigurationError("classes_per_task must be >= 1")
        if self.mode == "disjoint" and self.fuzz_percent != 0:
            raise ConfigurationError("disjoint mode requires fuzz_percent == 0")
        if not 0 <= self.fuzz_percent <= 100:
            raise ConfigurationError("fuzz_percent must be in [0, 100]")
        if num_classes % self.classes_per_task != 0:
            raise ConfigurationError(
                f"{num_classes} classes not divisible by "
                f"classes_per_task={self.classes_per_task}"
            )
        if self.class_order is not None and sorted(self.class_order) != list(
            range(num_classes)
        ):
            raise ConfigurationError("class_order must be a permutation of all classes")


@dataclass
class TaskBatch:
    task_index: int
    major_classes: set[int]
    examples: list[LabeledExample]
    example_indices: list[int]  # positions into Dataset.train
    warnings: list[str] = field(default_factory=list)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


# ---------------------------------------------------------------------------
# CIFAR-100 binary format


def parse_cifar_record(record: bytes) -> tuple[int, int, np.ndarray]:
    """Split one 3074-byte record into (coarse, fine, pixel bytes)."""
    if len(record) != CIFAR_RECORD_BYTES:
        raise DataError(f"record must be {CIFAR_RECORD_BYTES} bytes, got {len(record)}")
    coarse, fine = record[0], record[1]
    pixels = np.frombuffer(record, dtype=np.uint8, count=CIFAR_PIXELS, offset=2)
    return coarse, fine, pixels


def pack_cifar_record(coarse: int, fine: int, pixels: np.ndarray) -> bytes:
    """Inverse of parse_cifar_record; byte-exact round trip."""
    pix = np.asarray(pixels, dtype=np.uint8)
    if pix.size != CIFAR_PIXELS:
        raise DataError(f"expected {CIFAR_PIXELS} pixel bytes, got {pix.size}")
    return bytes([coarse & 0xFF, fine & 0xFF]) + pix.tobytes()


def example_to_cifar_record(example: LabeledExample, coarse: int) -> bytes:
    """Reserialize an example loaded by load_cifar100 back into record bytes."""
    pixels = np.rint(np.asarray(example.features, dtype=np.float64) * 255.0)
    return pack_cifar_record(coarse, example.label, pixels.astype(np.uint8))


def load_cifar100(path: str, split: str = "train") -> Dataset:
    """Load a CIFAR-100 binary file (train.bin / test.bin layout).

    Each record is [coarse][fine][1024 R][1024 G][1024 B]; pixel bytes
    are scaled to [0, 1] floats and the fine label is used as the class.
    """
    if split not in ("train", "test"):
        raise ConfigurationError(f"split must be 'train' or 'test', got {split!r}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
        raise DataError(
            f"{path}: size {len(raw)} is not a positive multiple of {CIFAR_RECORD_BYTES}"
        )
    n = len(raw) // CIFAR_RECORD_BYTES
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(n, CIFAR_RECORD_BYTES)
    coarse = arr[:, 0].astype(np.int64)
    fine = arr[:, 1].astype(np.int64)
    if np.any(fine >= CIFAR_NUM_CLASSES):
        bad = int(np.argmax(fine >= CIFAR_NUM_CLASSES))
        raise DataError(f"{path}: record {bad} has fine label {fine[bad]} >= 100")
    pixels = arr[:, 2:].astype(np.float32) / 255.0
    examples = [LabeledExample(pixels[i], int(fine[i])) for i in range(n)]
    ds = Dataset(
        train=examples if split == "train" else [],
        test=examples if split == "test" else [],
        num_classes=CIFAR_NUM_CLASSES,
        dim=CIFAR_PIXELS,
    )
    if split == "train":
        ds.train_coarse = coarse
    else:
        ds.test_coarse = coarse
    return ds


# ---------------------------------------------------------------------------
# Synthetic blobs


def make_blobs(
    num_classes: int,
    per_class: int,
    dim: int = 2,
    spread: float = 1.0,
    outlier_fraction: float = 0.0,
    seed: int = 0,
    center_box: float | None = None,
    outlier_reach: tuple[float, float] = (10.0, 20.0),
) -> Dataset:
    """Seeded Gaussian clusters, one per class, with optional planted outliers.

    Outliers are displaced by outlier_reach (in units of spread, lower bound
    at least 10) from their class center but keep the class label.  Each
    class is split 80/20 into train/test.
    """
    if num_classes < 2:
        raise ConfigurationError("num_classes must be >= 2")
    if per_class < 2:
        raise ConfigurationError("per_class must be >= 2")
    if not 0.0 <= outlier_fraction < 0.5:
        raise ConfigurationError("outlier_fraction must be in [0, 0.5)")
    if outlier_reach[0] < 10.0 or outlier_reach[1] < outlier_reach[0]:
        raise ConfigurationError("outlier_reach must be an increasing range >= 10")
    rng = np.random.default_rng(seed)
    if center_box is None:
        # keep cluster density roughly constant as the class count grows
        center_box = 10.0 * spread * num_classes ** (1.0 / dim)
    centers = rng.uniform(0.0, center_box, size=(num_classes, dim))

    train: list[LabeledExample] = []
    test: list[LabeledExample] = []
    n_out = _round_half_up(outlier_fraction * per_class)
    for c in range(num_classes):
        pts = centers[c] + rng.normal(0.0, spread, size=(per_class, dim))
        if n_out > 0:
            which = rng.choice(per_class, size=n_out, replace=False)
            direction = rng.normal(size=(n_out, dim))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            radius = rng.uniform(*outlier_reach, size=(n_out, 1)) * spread
            pts[which] = centers[c] + direction * radius
        order = rng.permutation(per_class)
        n_train = int(per_class * 0.8)
        for i in order[:n_train]:
            train.append(LabeledExample(pts[i].copy(), c))
        for i in order[n_train:]:
            test.append(LabeledExample(pts[i].copy(), c))
    return Dataset(train=train, test=test, num_classes=num_classes, dim=dim)


# ---------------------------------------------------------------------------
# Task streams


def _class_order(spec: StreamSpec, num_classes: int) -> list[int]:
    if spec.class_order is not None:
        return list(spec.class_order)
    rng = np.random.default_rng([spec.seed, 0x5EED])
    return [int(c) for c in rng.permutation(num_classes)]


def _indices_by_class(ds: Dataset) -> dict[int, list[int]]:
    by_class: dict[int, list[int]] = {}
    for i, ex in enumerate(ds.train):
        by_class.setdefault(ex.label, []).append(i)
    return by_class


def make_disjoint_stream(ds: Dataset, spec: StreamSpec) -> list[TaskBatch]:
    """Partition training data into tasks with pairwise-disjoint class sets."""
    if spec.mode != "disjoint":
        raise ConfigurationError("make_disjoint_stream requires mode='disjoint'")
    spec.validate(ds.num_classes)
    order = _class_order(spec, ds.num_classes)
    by_class = _indices_by_class(ds)
    q = spec.classes_per_task
    tasks = []
    for t in range(ds.num_classes // q):
        majors = set(order[t * q : (t + 1) * q])
        idx = [i for c in sorted(majors) for i in by_class.get(c, [])]
        rng = np.random.default_rng([spec.seed, 0x7A5C, t])
        idx = [idx[j] for j in rng.permutation(len(idx))]
        tasks.append(
            TaskBatch(
                task_index=t,
                major_classes=majors,
                examples=[ds.train[i] for i in idx],
                example_indices=idx,
            )
        )
    return tasks


def make_fuzzy_stream(ds: Dataset, spec: StreamSpec) -> list[TaskBatch]:
    """Build a fuzzy stream: each task mixes majors with Z% minor examples.

    Task size equals the task's full major-class pool size; round(Z% of it)
    of the slots are filled with examples donated by other classes, and the
    same share of the task's own pool is donated onward.  Every training
    example lands in exactly one task unless a donor pool runs dry, in which
    case the shortfall is drawn with replacement and a warning is recorded.
    """
    if spec.mode != "fuzzy":
        raise ConfigurationError("make_fuzzy_stream requires mode='fuzzy'")
    if not 0 < spec.fuzz_percent < 100:
        raise ConfigurationError("fuzzy mode requires 0 < fuzz_percent < 100")
    spec.validate(ds.num_classes)
    order = _class_order(spec, ds.num_classes)
    by_class = _indices_by_class(ds)
    q = spec.classes_per_task
    z = spec.fuzz_percent / 100.0
    num_tasks = ds.num_classes // q

    major_sets = [set(order[t * q : (t + 1) * q]) for t in range(num_tasks)]
    majors: list[list[int]] = []
    minor_counts: list[int] = []
    donor_pool: set[int] = set()
    # reserve each task's major portion first so later tasks keep full pools
    for t in range(num_tasks):
        pool = [i for c in sorted(major_sets[t]) for i in by_class.get(c, [])]
        task_size = len(pool)
        n_minor = _round_half_up(z * task_size)
        n_major = task_size - n_minor
        rng = np.random.default_rng([spec.seed, 0xFA22, t])
        picked = rng.permutation(len(pool))
        majors.append([pool[j] for j in picked[:n_major]])
        donor_pool.update(pool[j] for j in picked[n_major:])
        minor_counts.append(n_minor)

    labels = np.array([ex.label for ex in ds.train])
    tasks = []
    for t in range(num_tasks):
        warnings: list[str] = []
        rng = np.random.default_rng([spec.seed, 0x31B0, t])
        eligible = sorted(i for i in donor_pool if labels[i] not in major_sets[t])
        need = minor_counts[t]
        if len(eligible) >= need:
            take = rng.choice(len(eligible), size=need, replace=False)
            minors = [eligible[j] for j in take]
        else:
            minors = list(eligible)
            fallback = [i for i in range(len(ds.train)) if labels[i] not in major_sets[t]]
            extra = rng.choice(len(fallback), size=need - len(eligible), replace=True)
            minors += [fallback[j] for j in extra]
            warnings.append(
                f"task {t}: minor pool exhausted, sampled "
                f"{need - len(eligible)} examples with replacement"
            )
        donor_pool.difference_update(minors)
        idx = majors[t] + minors
        idx = [idx[j] for j in rng.permutation(len(idx))]
        tasks.append(
            TaskBatch(
                task_index=t,
                major_classes=major_sets[t],
                examples=[ds.train[i] for i in idx],
                example_indices=idx,
                warnings=warnings,
            )
        )
    return tasks


def make_stream(ds: Dataset, spec: StreamSpec) -> list[TaskBatch]:
    if spec.mode == "disjoint":
        return make_disjoint_stream(ds, spec)
    return make_fuzzy_stream(ds, spec)


def stream_manifest(tasks: list[TaskBatch]) -> str:
    """JSON manifest of a stream: task index, major classes, example indices."""
    return json.dumps(
        [
            {
                "task_index": t.task_index,
                "major_classes": sorted(t.major_classes),
                "example_indices": t.example_indices,
            }
            for t in tasks
        ]
    )


def features_matrix(examples: list[LabeledExample]) -> np.ndarray:
    return np.stack([np.asarray(ex.features, dtype=np.float64) for ex in examples])
