"""Kernel weights and localization sampling.

A kernel assigns a similarity weight ``H(x, x') = h^{-d} K((x - x') / h)`` to
a pair of points, where ``K`` is a symmetric density.  Two families are
provided: the Gaussian kernel and the box kernel (uniform on the ball of
radius ``sqrt(2) * h``).  The same object also knows how to *sample* from the
density ``H(x, .)``, which is the randomization step that makes localized
conformal p-values finite-sample valid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GAUSSIAN = "gaussian"
BOX = "box"

_FAMILIES = (GAUSSIAN, BOX)


def _ball_volume(d: int) -> float:
    """Volume of the unit d-ball."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family with a fixed bandwidth and dimension.

    Parameters
    ----------
    family : str
        ``"gaussian"`` or ``"box"``.
    bandwidth : float
        Bandwidth ``h > 0``.
    dim : int
        Dimension ``d >= 1`` of the points the kernel acts on (the weighting
        coordinates, not necessarily the full covariate vector).
    """

    family: str
    bandwidth: float
    dim: int

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ValueError(f"bandwidth must be a positive real, got {self.bandwidth}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    # -- weights ---------------------------------------------------------

    def self_weight(self) -> float:
        """``H(x, x)``, the maximal weight of the family."""
        h, d = self.bandwidth, self.dim
        if self.family == GAUSSIAN:
            return (2 * math.pi * h * h) ** (-d / 2)
        return 1.0 / (_ball_volume(d) * (math.sqrt(2.0) * h) ** d)

    def weight(self, x, xp) -> float:
        """Kernel weight ``H(x, xp)`` for a single pair of points."""
        x = np.asarray(x, dtype=float)
        xp = np.asarray(xp, dtype=float)
        if x.shape != (self.dim,) or xp.shape != (self.dim,):
            raise ValueError(
                f"expected two length-{self.dim} vectors, got shapes {x.shape} and {xp.shape}"
            )
        sq = float(np.dot(x - xp, x - xp))
        return self._weight_from_sqdist(np.array([sq]))[0]

    def _weight_from_sqdist(self, sq: np.ndarray) -> np.ndarray:
        h, d = self.bandwidth, self.dim
        if self.family == GAUSSIAN:
            return (2 * math.pi * h * h) ** (-d / 2) * np.exp(-sq / (2 * h * h))
        inside = sq <= 2.0 * h * h
        return inside / (_ball_volume(d) * (math.sqrt(2.0) * h) ** d)

    def weights_to_point(self, xs: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Weights ``H(xs[i], x)`` of many rows against one point."""
        xs = np.asarray(xs, dtype=float)
        x = np.asarray(x, dtype=float)
        diff = xs - x[None, :]
        return self._weight_from_sqdist(np.einsum("ij,ij->i", diff, diff))

    def cross_weights(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Weight matrix ``H(a[i], b[j])`` of shape ``(len(a), len(b))``."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        sq = (
            np.einsum("ij,ij->i", a, a)[:, None]
            + np.einsum("ij,ij->i", b, b)[None, :]
            - 2.0 * a @ b.T
        )
        np.maximum(sq, 0.0, out=sq)
        return self._weight_from_sqdist(sq)

    def pair_weights(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Row-wise weights ``H(a[i], b[i])`` for two aligned stacks of points."""
        diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        return self._weight_from_sqdist(np.einsum("ij,ij->i", diff, diff))

    # -- sampling --------------------------------------------------------

    def sample(self, x, rng: np.random.Generator) -> np.ndarray:
        """Draw one point from the density ``H(x, .)``.

        Gaussian: ``x + h * z`` with ``z`` standard normal (consumes ``dim``
        normals).  Box: uniform on the ball of radius ``sqrt(2) * h`` around
        ``x`` via a normalized Gaussian direction and a radius with density
        proportional to ``r^(d-1)`` (consumes ``dim`` normals and 1 uniform).
        """
        x = np.asarray(x, dtype=float)
        return self.sample_many(x[None, :], rng)[0]

    def sample_many(self, xs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Vectorized :meth:`sample`; one draw per row of ``xs``.

        Draw order: all normals first (C order, shape ``(m, dim)``), then for
        the box family one uniform per row.
        """
        xs = np.asarray(xs, dtype=float)
        m = xs.shape[0]
        z = rng.standard_normal((m, self.dim))
        if self.family == GAUSSIAN:
            return xs + self.bandwidth * z
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        u = rng.uniform(size=(m, 1))
        radius = math.sqrt(2.0) * self.bandwidth * u ** (1.0 / self.dim)
        return xs + radius * (z / norms)


def kernel_weight(spec: KernelSpec, x, xp) -> float:
    """Kernel weight ``H(x, xp)``; symmetric in its point arguments."""
    return spec.weight(x, xp)


def sample_localization_point(spec: KernelSpec, x, rng: np.random.Generator) -> np.ndarray:
    """Sample a localization point from the density ``H(x, .)``."""
    return spec.sample(x, rng)


def default_bandwidth(n: int, d_w: int) -> float:
    """Bandwidth rule ``(n / 2)^(-1 / (d_w + 2))``.

    ``n`` is the size of the labeled sample before the train/calibration
    split and ``d_w`` the number of weighting coordinates.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if d_w < 1:
        raise ValueError(f"need d_w >= 1, got {d_w}")
    return float((n / 2.0) ** (-1.0 / (d_w + 2)))
