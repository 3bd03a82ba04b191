"""Seeded random measure pairs for property suites and benchmarks.

Coordinates are multiples of 1/4 and masses multiples of 1/64, so every
instance is exactly representable in binary floating point and the exact
re-validation of certificates sees the same data as the float solvers.
"""
from __future__ import annotations

import numpy as np

from .measures import DiscreteMeasure

MODES = ("spread", "spread-extra", "spread-scaled", "perturbed", "independent")


def _point(rng, d, radius=8):
    return rng.integers(-radius, radius + 1, size=d) / 4.0


def _mass(rng):
    return rng.integers(1, 17) / 16.0


def _spread(rng, d, n_mu):
    mu_pts, mu_ms, nu_pts, nu_ms = [], [], [], []
    for _ in range(n_mu):
        x, a = _point(rng, d), _mass(rng)
        mu_pts.append(x), mu_ms.append(a)
        if rng.random() < 0.25:
            nu_pts.append(x), nu_ms.append(a)
            continue
        step = _point(rng, d, radius=4)
        nu_pts += [x + step, x - step]
        nu_ms += [a / 2, a / 2]
    return mu_pts, mu_ms, nu_pts, nu_ms


def random_pair(seed, d=None, mode=None, max_atoms=6):
    """Return ``(mu, nu, mode)`` drawn from a seeded generator.

    ``spread`` builds nu from mu by symmetric mean-preserving splits (a cx
    pair); ``spread-extra`` adds an atom to nu and ``spread-scaled`` halves mu
    (cxp pairs with unequal mass); ``perturbed`` moves one atom of a spread
    pair; ``independent`` draws both measures independently.
    """
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4)) if d is None else d
    mode = MODES[int(rng.integers(len(MODES)))] if mode is None else mode
    n_mu = int(rng.integers(1, max_atoms // 2 + 1))
    if mode == "independent":
        n_nu = int(rng.integers(1, max_atoms + 1))
        mu_pts = [_point(rng, d) for _ in range(int(rng.integers(1, max_atoms + 1)))]
        mu_ms = [_mass(rng) for _ in mu_pts]
        nu_pts = [_point(rng, d) for _ in range(n_nu)]
        nu_ms = [_mass(rng) for _ in nu_pts]
    else:
        budget = max_atoms - 1 if mode == "spread-extra" else max_atoms
        mu_pts, mu_ms, nu_pts, nu_ms = _spread(rng, d, min(n_mu, budget // 2))
        if mode == "spread-extra":
            nu_pts.append(_point(rng, d)), nu_ms.append(_mass(rng))
        elif mode == "spread-scaled":
            mu_ms = [a / 2 for a in mu_ms]
        elif mode == "perturbed":
            k = int(rng.integers(len(nu_pts)))
            nu_pts[k] = nu_pts[k] + _point(rng, d, radius=2)
    return DiscreteMeasure(d, mu_pts, mu_ms), DiscreteMeasure(d, nu_pts, nu_ms), mode


def to_orthant(mu, nu):
    """Translate both measures by the same vector into the nonnegative orthant."""
    lo = np.minimum(mu.points.min(axis=0, initial=0.0), nu.points.min(axis=0, initial=0.0))
    shift = -np.minimum(lo, 0.0)
    return mu.translated(shift), nu.translated(shift)
