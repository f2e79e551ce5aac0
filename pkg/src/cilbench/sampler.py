"""Exemplar selection and the bounded rehearsal memory.

The core sampler is a farthest-point (greedy k-center) traversal with a
density filter: a candidate is only accepted if it has at least n other
points within distance r, which keeps isolated outliers out of the
exemplar set.  When no remaining candidate passes the filter, r grows by
delta_r; after max_adapt radius bumps, n is relaxed by 1 and r resets.
With n=0 the filter is vacuous and the output is exactly the greedy
2-approximation to k-center seeded at the point closest to the mean.

verify_selection replays the same schedule with an independent
exhaustive scan and shares no code with diverse_sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .data import LabeledExample
from .errors import ConfigurationError, DataError


@dataclass(frozen=True)
class SamplerParams:
    m: int
    n: int = 0
    r0: float = 0.5
    delta_r: float = 0.1
    max_adapt: int = 1000

    def validate(self) -> None:
        if self.m < 1:
            raise ConfigurationError("m must be >= 1")
        if self.n < 0:
            raise ConfigurationError("n must be >= 0")
        if self.r0 <= 0 or self.delta_r <= 0:
            raise ConfigurationError("r0 and delta_r must be positive")
        if self.max_adapt < 1:
            raise ConfigurationError("max_adapt must be >= 1")


def _points(E) -> np.ndarray:
    pts = np.asarray(getattr(E, "points", E), dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 1:
        raise ConfigurationError("empty point set")
    if not np.all(np.isfinite(pts)):
        raise DataError("non-finite values in embedding")
    return pts


def neighbor_count(E, i: int, r: float) -> int:
    """Number of other points within Euclidean distance r of point i."""
    pts = _points(E)
    if not 0 <= i < pts.shape[0]:
        raise ConfigurationError(f"index {i} out of range")
    if r <= 0:
        raise ConfigurationError("r must be positive")
    dist = np.linalg.norm(pts - pts[i], axis=1)
    return int(np.sum(dist <= r)) - 1


def _seed_index(pts: np.ndarray) -> int:
    """Row closest to the arithmetic mean; ties break to the lowest index."""
    dist = np.linalg.norm(pts - pts.mean(axis=0), axis=1)
    return int(np.argmin(dist))


def diverse_sample(E, p: SamplerParams) -> list[int]:
    """Outlier-filtered farthest-point selection of min(m, N) indices."""
    p.validate()
    pts = _points(E)
    n_pts = pts.shape[0]
    m = min(p.m, n_pts)

    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    selected = [_seed_index(pts)]
    d_sel = dist[selected[0]].copy()

    n_req, radius = p.n, p.r0
    bumps = 0
    counts = np.sum(dist <= radius, axis=1) - 1
    while len(selected) < m:
        remaining = np.setdiff1d(np.arange(n_pts), selected, assume_unique=False)
        # decreasing d_sel, ties toward the lowest index
        order = remaining[np.lexsort((remaining, -d_sel[remaining]))]
        qualifying = order[counts[order] >= n_req]
        if qualifying.size == 0:
            if bumps < p.max_adapt:
                radius += p.delta_r
                bumps += 1
            else:
                n_req -= 1
                radius = p.r0
                bumps = 0
            counts = np.sum(dist <= radius, axis=1) - 1
            continue
        pick = int(qualifying[0])
        selected.append(pick)
        d_sel = np.minimum(d_sel, dist[pick])
    return selected


def gonzalez_sample(E, m: int) -> list[int]:
    """Greedy farthest-point k-center selection, seeded closest to the mean."""
    if m < 1:
        raise ConfigurationError("m must be >= 1")
    pts = _points(E)
    n_pts = pts.shape[0]
    selected = [_seed_index(pts)]
    d_sel = np.linalg.norm(pts - pts[selected[0]], axis=1)
    while len(selected) < min(m, n_pts):
        d_masked = d_sel.copy()
        d_masked[selected] = -np.inf
        pick = int(np.argmax(d_masked))
        selected.append(pick)
        d_sel = np.minimum(d_sel, np.linalg.norm(pts - pts[pick], axis=1))
    return selected


def random_sample(N: int, m: int, seed: int) -> list[int]:
    """Uniform selection without replacement, deterministic given seed."""
    if not 1 <= m <= N:
        raise ConfigurationError(f"need 1 <= m <= N, got m={m} N={N}")
    rng = np.random.default_rng(seed)
    return [int(i) for i in rng.choice(N, size=m, replace=False)]


def covering_radius(E, selection: list[int]) -> float:
    pts = _points(E)
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    return float(dist[:, selection].min(axis=1).max())


@dataclass
class VerifyResult:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def verify_selection(E, p: SamplerParams, selection: list[int]) -> VerifyResult:
    """Independent oracle for diverse_sample: exhaustive pure-Python replay.

    Checks that the first pick is mean-closest and that each later pick
    maximizes the distance-to-selected among points passing the neighbor
    filter under the radius/n schedule in force at that step.
    """
    if not selection:
        return VerifyResult(False, "empty selection")
    pts = np.asarray(getattr(E, "points", E), dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n_pts = pts.shape[0]
    if len(set(selection)) != len(selection):
        return VerifyResult(False, "duplicate indices in selection")
    if any(not 0 <= i < n_pts for i in selection):
        return VerifyResult(False, "index out of range")

    dist = cdist(pts, pts)
    d_mean = cdist(pts, pts.mean(axis=0, keepdims=True))[:, 0]
    if d_mean[selection[0]] > d_mean.min() + 1e-12:
        return VerifyResult(False, f"first pick {selection[0]} is not mean-closest")

    count_cache: dict[float, np.ndarray] = {}

    def counts_at(radius: float) -> np.ndarray:
        if radius not in count_cache:
            count_cache[radius] = (dist <= radius).sum(axis=1) - 1
        return count_cache[radius]

    chosen = [selection[0]]
    in_chosen = np.zeros(n_pts, dtype=bool)
    in_chosen[selection[0]] = True
    d_p = dist[selection[0]].copy()
    n_req, radius, bumps = p.n, p.r0, 0
    for step, pick in enumerate(selection[1:], start=1):
        while True:
            ok = ~in_chosen & (counts_at(radius) >= n_req)
            if ok.any():
                break
            if bumps < p.max_adapt:
                radius += p.delta_r
                bumps += 1
            else:
                n_req -= 1
                radius = p.r0
                bumps = 0
        if not ok[pick]:
            return VerifyResult(False, f"step {step}: pick {pick} fails neighbor filter")
        if d_p[pick] < d_p[ok].max() - 1e-12:
            return VerifyResult(
                False, f"step {step}: pick {pick} not farthest among qualifying points"
            )
        chosen.append(pick)
        in_chosen[pick] = True
        d_p = np.minimum(d_p, dist[pick])
    return VerifyResult(True)


# ---------------------------------------------------------------------------
# Representative memory


def allocate_quota(M: int, classes_seen: int) -> list[int]:
    """Split budget M across classes: floor share plus one extra for the
    earliest-seen classes."""
    if classes_seen < 1:
        raise ConfigurationError("classes_seen must be >= 1")
    if M < classes_seen:
        raise ConfigurationError(f"budget M={M} below class count {classes_seen}")
    base, rem = divmod(M, classes_seen)
    return [base + (1 if i < rem else 0) for i in range(classes_seen)]


@dataclass
class ExemplarStore:
    budget: int
    per_class: dict[int, list[LabeledExample]] = field(default_factory=dict)
    train_indices: dict[int, list[int]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def total(self) -> int:
        return sum(len(v) for v in self.per_class.values())

    def set_class(
        self,
        cls: int,
        exemplars: list[LabeledExample],
        indices: list[int] | None = None,
    ) -> None:
        for ex in exemplars:
            if ex.label != cls:
                raise ConfigurationError(f"label {ex.label} stored under class {cls}")
        self.per_class[cls] = list(exemplars)
        self.train_indices[cls] = list(indices) if indices is not None else []
        if self.total() > self.budget:
            raise ConfigurationError("exemplar store exceeded its budget")

    def shrink_class(self, cls: int, new_quota: int) -> None:
        """Keep the first new_quota exemplars.  Selection order makes every
        prefix a diverse selection in itself, so truncation is safe."""
        if new_quota < 1:
            raise ConfigurationError("new_quota must be >= 1")
        if cls not in self.per_class:
            self.warnings.append(f"shrink of absent class {cls} ignored")
            return
        self.per_class[cls] = self.per_class[cls][:new_quota]
        self.train_indices[cls] = self.train_indices[cls][:new_quota]

    def all_examples(self) -> list[LabeledExample]:
        return [ex for c in sorted(self.per_class) for ex in self.per_class[c]]

    def to_json(self) -> str:
        return json.dumps(
            {
                "budget": self.budget,
                "classes": [
                    {
                        "class": c,
                        "indices_into_train": self.train_indices.get(c, []),
                        "selection_order": list(range(len(self.per_class[c]))),
                    }
                    for c in sorted(self.per_class)
                ],
            }
        )
