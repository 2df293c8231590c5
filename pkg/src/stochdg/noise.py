"""Seeded Brownian increments, truncation and fine/coarse coupling.

Every path draws from its own Philox stream keyed by ``(seed, path)``; inside a
stream increments are laid out channel-major, step-minor.  A path's numbers
therefore never depend on which worker produced it or in which order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TruncationPolicy:
    """Clamp standard-normal draws to ``[-A_h, A_h]`` with ``A_h = sqrt(2k|ln h|)``."""

    enabled: bool = False
    k: int = 2

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be non-negative")

    def bound(self, h: float) -> float:
        if h >= 1.0:
            return math.inf
        return math.sqrt(2.0 * self.k * abs(math.log(h)))


def path_generator(seed: int, path: int = 0) -> np.random.Generator:
    """Counter-based generator for one path of one study."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(path)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class BrownianLattice:
    seed: int
    noise_count: int
    fine_step: float
    n_fine: int
    increments: np.ndarray
    path: int = 0

    @property
    def horizon(self) -> float:
        return self.fine_step * self.n_fine


def generate_lattice(seed: int, m: int, h_fine: float, n_fine: int, path: int = 0) -> BrownianLattice:
    """Draw ``m x n_fine`` i.i.d. ``N(0, h_fine)`` increments for one path."""
    if not h_fine > 0:
        raise ValueError("h_fine must be positive")
    if n_fine < 1:
        raise ValueError("n_fine must be at least 1")
    rng = path_generator(seed, path)
    inc = rng.standard_normal((m, n_fine)) * math.sqrt(h_fine)
    inc.setflags(write=False)
    return BrownianLattice(seed, m, h_fine, n_fine, inc, path)


def generate_increments(seed: int, m: int, h_fine: float, n_fine: int, paths) -> np.ndarray:
    """Stack the lattices of several paths into an array ``(len(paths), m, n_fine)``."""
    paths = list(paths)
    out = np.empty((len(paths), m, n_fine))
    root = math.sqrt(h_fine)
    for i, p in enumerate(paths):
        out[i] = path_generator(seed, p).standard_normal((m, n_fine))
    out *= root
    return out


def coarsen(lattice, factor: int) -> np.ndarray:
    """Block sums of ``factor`` consecutive fine increments along the last axis."""
    inc = lattice.increments if isinstance(lattice, BrownianLattice) else np.asarray(lattice)
    factor = int(factor)
    n = inc.shape[-1]
    if factor < 1 or n % factor:
        raise ValueError(f"factor {factor} does not divide {n} fine steps")
    if factor == 1:
        return np.array(inc, copy=True)
    return inc.reshape(inc.shape[:-1] + (n // factor, factor)).sum(axis=-1)


def truncate_increment(w, h: float, policy: TruncationPolicy):
    """Clamp ``w / sqrt(h)`` to ``[-A_h, A_h]`` and scale back.

    Values inside the clamp are returned bit-for-bit unchanged.
    """
    if not policy.enabled or h >= 1.0:
        return w
    cap = math.sqrt(h) * policy.bound(h)
    w = np.asarray(w, dtype=float)
    out = np.where(np.abs(w) <= cap, w, np.copysign(cap, w))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class MomentReport:
    n: int
    h: float
    mean: float
    mean_stderr: float
    third_moment: float
    third_stderr: float
    second_moment: float
    gap_mean_square: float

    @property
    def second_ratio(self) -> float:
        """Empirical second moment divided by ``h``."""
        return self.second_moment / self.h

    @property
    def gap_ratio(self) -> float:
        """Mean-square truncation gap divided by ``h**3``."""
        return self.gap_mean_square / self.h**3


def moment_report(raw, h: float, k: int = 2) -> MomentReport:
    """Empirical moments of truncated increments built from raw draws ``raw``.

    ``raw`` are untruncated ``N(0, h)`` samples; the truncation gap needs both.
    """
    raw = np.asarray(raw, dtype=float).ravel()
    if raw.size < 10_000:
        raise ValueError("moment_report needs at least 1e4 samples")
    trunc = truncate_increment(raw, h, TruncationPolicy(True, k))
    n = raw.size
    cube = trunc**3
    return MomentReport(
        n=n,
        h=h,
        mean=float(trunc.mean()),
        mean_stderr=float(trunc.std() / math.sqrt(n)),
        third_moment=float(cube.mean()),
        third_stderr=float(cube.std() / math.sqrt(n)),
        second_moment=float(np.mean(trunc**2)),
        gap_mean_square=float(np.mean((trunc - raw) ** 2)),
    )
