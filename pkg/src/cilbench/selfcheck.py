"""Built-in property and oracle battery behind the `verify` CLI command.

A fast subset of the test suite that needs no pytest: sampler equivalence
and oracle round-trips on random instances, plus gradient spot checks.
"""

from __future__ import annotations

import copy

import numpy as np

from . import learner, sampler
from .learner import LossConfig


def _random_instance(rng) -> np.ndarray:
    n = int(rng.integers(4, 60))
    return rng.normal(0.0, 2.0, size=(n, 2))


def check_filter_off_equivalence(seed: int = 0, trials: int = 50) -> bool:
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        pts = _random_instance(rng)
        m = int(rng.integers(1, min(10, len(pts)) + 1))
        params = sampler.SamplerParams(m=m, n=0)
        if sampler.diverse_sample(pts, params) != sampler.gonzalez_sample(pts, m):
            return False
    return True


def check_oracle_roundtrip(seed: int = 1, trials: int = 100) -> bool:
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        pts = _random_instance(rng)
        m = int(rng.integers(1, min(12, len(pts)) + 1))
        n = int(rng.integers(0, 4))
        params = sampler.SamplerParams(m=m, n=n, r0=float(rng.uniform(0.05, 1.0)))
        picked = sampler.diverse_sample(pts, params)
        if not sampler.verify_selection(pts, params, picked):
            return False
    return True


def check_gradients(seed: int = 2, trials: int = 5, tol: float = 1e-4) -> bool:
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        ell, q = int(rng.integers(2, 4)), int(rng.integers(1, 3))
        model = learner.init_mlp(3, (6,), ell + q, seed=trial)
        teacher = learner.snapshot_teacher(learner.init_mlp(3, (6,), ell, seed=trial + 99))
        X = rng.normal(size=(4, 3))
        y = rng.integers(0, ell + q, size=4)
        lcfg = LossConfig(temperature=2.0, beta=0.5)
        _, grads = learner.batch_loss_and_grads(model, X, y, teacher, lcfg)
        for k in range(len(model.weights)):
            W = model.weights[k]
            idx = (int(rng.integers(W.shape[0])), int(rng.integers(W.shape[1])))
            eps = 1e-6
            plus = _perturbed_loss(model, k, idx, eps, X, y, teacher, lcfg)
            minus = _perturbed_loss(model, k, idx, -eps, X, y, teacher, lcfg)
            fd = (plus - minus) / (2 * eps)
            an = grads[k][0][idx]
            if abs(fd - an) > tol * max(1.0, abs(fd)):
                return False
    return True


def _perturbed_loss(model, k, idx, eps, X, y, teacher, lcfg) -> float:
    m2 = copy.deepcopy(model)
    m2.weights[k][idx] += eps
    loss, _ = learner.batch_loss_and_grads(m2, X, y, teacher, lcfg)
    return loss


def run_selfcheck(seed: int = 0) -> list[tuple[str, bool]]:
    return [
        ("filter_off_equivalence", check_filter_off_equivalence(seed)),
        ("oracle_roundtrip", check_oracle_roundtrip(seed + 1)),
        ("gradient_finite_difference", check_gradients(seed + 2)),
    ]
