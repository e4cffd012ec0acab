"""Pointwise algebra of spacelike gradients.

A gradient g in the open unit disk describes a spacelike graph element in
Minkowski 3-space.  This module collects the scalar identities used
everywhere else: the area density w = sqrt(1 - |g|^2), the flux vector
g/w, the upward unit normal, and the coercivity inequality

    (g - g') . (g/w - g'/w') >= c(eps) |g/w - g'/w'|^2

valid whenever |g|, |g'| <= 1 - eps, with the closed-form constant
c(eps) = (eps (2 - eps))^(3/2).  All functions broadcast over leading axes;
gradients are arrays of shape (..., 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LIGHTLIKE_GUARD = 1e-14

MINKOWSKI_SIGNS = np.array([1.0, 1.0, -1.0])


class SpacelikeError(ValueError):
    """A gradient is lightlike or timelike (|g| >= 1 - guard)."""

    def __init__(self, norm: float):
        self.norm = float(norm)
        super().__init__(f"gradient norm {self.norm!r} is not safely spacelike")


def _as_gradients(g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != 2:
        raise ValueError("gradients must have shape (..., 2)")
    norms = np.linalg.norm(g, axis=-1)
    if np.any(norms >= 1.0 - LIGHTLIKE_GUARD):
        raise SpacelikeError(norms.max())
    return g


def area_density(g) -> np.ndarray:
    """w = sqrt(1 - |g|^2), the Lorentzian area integrand."""
    g = _as_gradients(g)
    return np.sqrt(1.0 - np.sum(g * g, axis=-1))


def flux_coeffs(g) -> np.ndarray:
    """Coefficients (p, q) of the conserved-flux form (g_x/w) dy - (g_y/w) dx.

    The form is closed exactly when the graph of the underlying function is
    a maximal surface, which is what makes it integrable to a conjugate
    potential.
    """
    g = _as_gradients(g)
    w = np.sqrt(1.0 - np.sum(g * g, axis=-1))
    return np.stack([-g[..., 1] / w, g[..., 0] / w], axis=-1)


def normalized_gradient(g) -> np.ndarray:
    """x = g / w; |x| can be arbitrarily large but stays finite while spacelike."""
    g = _as_gradients(g)
    w = np.sqrt(1.0 - np.sum(g * g, axis=-1))
    return g / w[..., None]


def unit_normal(g) -> np.ndarray:
    """Upward unit normal n = (-g, 1)/w with <n, n> = -1 in the Minkowski metric."""
    g = _as_gradients(g)
    w = np.sqrt(1.0 - np.sum(g * g, axis=-1))
    return np.stack([-g[..., 0] / w, -g[..., 1] / w, 1.0 / w], axis=-1)


def minkowski_inner(u, v) -> np.ndarray:
    """Signature (+, +, -) inner product on (..., 3) arrays."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.sum(u * v * MINKOWSKI_SIGNS, axis=-1)


def flux_monotonicity(g, g2) -> np.ndarray:
    """Pairing (g - g') . (g/w - g'/w'), the left side of the coercivity bound."""
    g = _as_gradients(g)
    g2 = _as_gradients(g2)
    return np.sum((g - g2) * (normalized_gradient(g) - normalized_gradient(g2)), axis=-1)


def flux_gap_sq(g, g2) -> np.ndarray:
    """|g/w - g'/w'|^2, the squared Euclidean gap of the normalized gradients."""
    d = normalized_gradient(g) - normalized_gradient(g2)
    return np.sum(d * d, axis=-1)


def normal_gap_sq(g, g2) -> np.ndarray:
    """Minkowski gap |n' - n|^2 = |g/w - g'/w'|^2 - (1/w - 1/w')^2.

    Positive for distinct spacelike normals even though the metric is
    indefinite, because both normals lie on the unit timelike hyperboloid.
    """
    g = _as_gradients(g)
    g2 = _as_gradients(g2)
    w = np.sqrt(1.0 - np.sum(g * g, axis=-1))
    w2 = np.sqrt(1.0 - np.sum(g2 * g2, axis=-1))
    return flux_gap_sq(g, g2) - (1.0 / w - 1.0 / w2) ** 2


@dataclass(frozen=True)
class SpacelikePoint:
    """Algebraic data of one spacelike gradient.

    Fields: gradient g, area density w, unit normal n (3-vector), and the
    normalized gradient x = g/w.  Construction validates <n, n> = -1 and
    1/w = sqrt(1 + |x|^2) to 1e-12.
    """

    g: np.ndarray
    w: float
    n: np.ndarray
    x: np.ndarray

    @classmethod
    def from_gradient(cls, g) -> "SpacelikePoint":
        g = _as_gradients(np.asarray(g, dtype=float).reshape(2))
        w = float(np.sqrt(1.0 - g @ g))
        n = np.array([-g[0] / w, -g[1] / w, 1.0 / w])
        x = g / w
        if abs(minkowski_inner(n, n) + 1.0) > 1e-12:
            raise AssertionError("normal is not unit timelike")
        if abs(1.0 / w - np.sqrt(1.0 + x @ x)) > 1e-12 * (1.0 / w):
            raise AssertionError("w and x are inconsistent")
        return cls(g=g, w=w, n=n, x=x)


@dataclass(frozen=True)
class CoercivityConstants:
    """Closed-form constants of the coercivity inequality at margin eps.

    c1: min of (w + w')/2 over the admissible gradients, sqrt(eps (2-eps)).
    c2: min of the Minkowski-to-Euclidean gap ratio, eps (2-eps).
    c:  product c1 * c2 = (eps (2-eps))^(3/2), the certified constant.
    r_max: largest normalized gradient |g/w|, (1-eps)/sqrt(eps (2-eps)).
    """

    eps: float
    c1: float
    c2: float
    c: float
    r_max: float


def coercivity_constants(eps: float) -> CoercivityConstants:
    """Constants for gradients with |g|, |g'| <= 1 - eps, for eps in (0, 1]."""
    if not (0.0 < eps <= 1.0):
        raise ValueError("eps must lie in (0, 1]")
    s = eps * (2.0 - eps)
    c1 = float(np.sqrt(s))
    c2 = float(s)
    return CoercivityConstants(
        eps=float(eps),
        c1=c1,
        c2=c2,
        c=float(s ** 1.5),
        r_max=float((1.0 - eps) / np.sqrt(s)),
    )


@dataclass(frozen=True)
class CoercivityReport:
    """Result of randomized certification of the coercivity bound."""

    eps: float
    c: float
    n_samples: int
    seed: int
    min_ratio: float
    violations: int

    def record_items(self):
        return [
            ("eps", self.eps),
            ("C", self.c),
            ("n_samples", self.n_samples),
            ("seed", self.seed),
            ("min_ratio", self.min_ratio),
            ("violations", self.violations),
        ]


RATIO_FLOOR = 1e-20  # pairs with smaller squared gap are skipped as 0/0


def sample_coercivity(eps: float, n_samples: int, seed: int) -> CoercivityReport:
    """Sample gradient pairs and check the coercivity ratio against c(eps).

    Pairs are drawn uniformly from the disk of radius 1 - eps by rejection
    from the bounding square, with a seeded generator so reruns are byte
    identical.  Pairs whose squared gap falls below 1e-20 are skipped.

    Returns the report with the smallest observed ratio and the number of
    violations (ratio < c(eps)); the inequality predicts zero.
    """
    consts = coercivity_constants(eps)
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    radius = 1.0 - eps
    g = _sample_disk(rng, radius, n_samples)
    g2 = _sample_disk(rng, radius, n_samples)
    if radius > 0:
        lhs = flux_monotonicity(g, g2)
        rhs = flux_gap_sq(g, g2)
    else:
        lhs = np.zeros(n_samples)
        rhs = np.zeros(n_samples)
    valid = rhs >= RATIO_FLOOR
    if not np.any(valid):
        return CoercivityReport(eps=float(eps), c=consts.c, n_samples=n_samples,
                                seed=seed, min_ratio=float("inf"), violations=0)
    ratio = lhs[valid] / rhs[valid]
    return CoercivityReport(
        eps=float(eps),
        c=consts.c,
        n_samples=n_samples,
        seed=seed,
        min_ratio=float(ratio.min()),
        violations=int(np.count_nonzero(ratio < consts.c)),
    )


def _sample_disk(rng, radius: float, n: int) -> np.ndarray:
    """Uniform points in the closed disk via rejection from the square."""
    if radius == 0.0:
        return np.zeros((n, 2))
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        batch = max(1024, int(1.35 * (n - filled)))
        pts = rng.uniform(-radius, radius, size=(batch, 2))
        keep = pts[np.sum(pts * pts, axis=1) <= radius * radius]
        take = min(len(keep), n - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out
