"""Randomized finite-difference checks for every hand-written gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convnet import backward, forward, init_params
from .losses import (CircleLossConfig, CorrespondenceSets, _pairwise, circle_loss, circle_theta,
                     cross_entropy_scores, focal_loss, grad_check)

CHECKS = ("circle", "circle_full", "focal", "cross_entropy", "scorer")


def toy_circle_instance(rng, n_anchors: int = 5, n_points: int = 7, f: int = 4, size: int = 4):
    """Random pixel map, point features and a positive matrix with mixed rows/columns."""
    pixels = np.column_stack([rng.integers(0, size, n_anchors), rng.integers(0, size, n_anchors)])
    pos = rng.random((n_anchors, n_points)) < 0.3
    pos[np.arange(n_anchors), np.arange(n_anchors) % n_points] = True
    sets = CorrespondenceSets(pixels, np.arange(n_points), pos)
    f2d = rng.normal(0.0, 0.5, (size, size, f))
    f3d = rng.normal(0.0, 0.5, (n_points, f))
    return f2d, f3d, sets


def _split(x, f2d_shape):
    n = int(np.prod(f2d_shape))
    return x[:n].reshape(f2d_shape), x[n:].reshape(-1, f2d_shape[-1])


def check_circle(rng, config: CircleLossConfig = CircleLossConfig(), full: bool = False) -> float:
    """Gradient w.r.t. both feature sets.

    The default detaches the adaptive weights, so its finite differences hold
    them at their base-point values; ``full`` differentiates through them.
    """
    f2d, f3d, sets = toy_circle_instance(rng)
    x0 = np.concatenate([f2d.ravel(), f3d.ravel()])
    theta = None
    if not full:
        X = f2d[sets.pixels[:, 1], sets.pixels[:, 0]]
        theta = circle_theta(_pairwise(X, f3d[sets.points])[0], config)

    def fn(x):
        a, b = _split(x, f2d.shape)
        r = circle_loss(a, b, sets, config, detach_theta=not full, theta=theta)
        return r.value, np.concatenate([r.grad_2d.ravel(), r.grad_3d.ravel()])

    return grad_check(fn, x0)


def check_focal(rng, n: int = 12) -> float:
    labels = (rng.random(n) < 0.5).astype(float)
    p0 = rng.uniform(0.05, 0.95, n)
    return grad_check(lambda p: focal_loss(p, labels), p0)


def check_cross_entropy(rng, n: int = 27) -> float:
    target = int(rng.integers(n))
    return grad_check(lambda s: cross_entropy_scores(s, target), rng.normal(0.0, 2.0, n))


def check_scorer(rng, feature_dim: int = 2, size: int = 4, widths=(4, 3)) -> float:
    """Cross-entropy over a few units, differentiated w.r.t. every scorer parameter."""
    params = init_params(feature_dim, widths, seed=int(rng.integers(2**31)))
    units = rng.normal(0.0, 1.0, (3, size, size, 2 * feature_dim + 2))
    target = int(rng.integers(len(units)))
    shapes = [a.shape for a in params.arrays()]
    sizes = [int(np.prod(s)) for s in shapes]

    def unpack(x):
        out, k = [], 0
        for s, n in zip(shapes, sizes):
            out.append(x[k:k + n].reshape(s))
            k += n
        return params.with_arrays(out)

    def fn(x):
        p = unpack(x)
        scores, tapes = zip(*(forward(p, u, keep=True) for u in units))
        value, ds = cross_entropy_scores(np.array(scores), target)
        grads = [np.zeros(s) for s in shapes]
        for tape, d in zip(tapes, ds):
            for g, gi in zip(grads, backward(p, tape, d)):
                g += gi.reshape(g.shape)
        return value, np.concatenate([g.ravel() for g in grads])

    # the head bias shifts every score equally, so its exact derivative is 0
    return grad_check(fn, np.concatenate([a.ravel() for a in params.arrays()]), rounding_slack=True)


_RUNNERS = {
    "circle": lambda rng: check_circle(rng),
    "circle_full": lambda rng: check_circle(rng, full=True),
    "focal": check_focal,
    "cross_entropy": check_cross_entropy,
    "scorer": check_scorer,
}


@dataclass
class GradCheckReport:
    errors: dict          # check name -> list of max relative errors, one per random point
    tolerance: float

    @property
    def worst(self) -> dict:
        return {k: max(v) for k, v in self.errors.items()}

    @property
    def passed(self) -> bool:
        return all(w < self.tolerance for w in self.worst.values())

    def to_dict(self) -> dict:
        return {"tolerance": self.tolerance, "passed": self.passed, "worst": self.worst,
                "errors": self.errors}


def run_grad_checks(points: int = 20, seed: int = 0, checks=CHECKS,
                    tolerance: float = 1e-4) -> GradCheckReport:
    unknown = set(checks) - set(CHECKS)
    if unknown:
        raise ValueError(f"unknown gradient checks: {sorted(unknown)}")
    if points < 1:
        raise ValueError("points must be >= 1")
    errors = {}
    for i, name in enumerate(checks):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        errors[name] = [float(_RUNNERS[name](rng)) for _ in range(points)]
    return GradCheckReport(errors, tolerance)
