"""Binned quadrature data shared by imaging, MLE and bootstrap."""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["QuadratureDataset", "uniform_angles"]


def uniform_angles(n, start=0.0):
    """``n`` equally spaced phase angles covering ``[start, start + 2 pi)``."""
    return start + 2.0 * np.pi * np.arange(n) / n


@dataclass(frozen=True)
class QuadratureDataset:
    """Records ``(theta_j, u_j, f_j)`` of binned quadrature measurements.

    Weights are real-valued (averaged camera counts are fine); they need not
    be normalized.
    """

    theta: np.ndarray
    u: np.ndarray
    weight: np.ndarray
    bin_width: float = field(default=float("nan"))
    clamped: bool = False

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).ravel()
        u = np.asarray(self.u, dtype=float).ravel()
        w = np.asarray(self.weight, dtype=float).ravel()
        if not (theta.size == u.size == w.size):
            raise ValueError("theta, u and weight must have equal lengths")
        if theta.size == 0:
            raise ValueError("dataset is empty")
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(u)) and np.all(np.isfinite(w))):
            raise ValueError("dataset contains non-finite values")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if w.sum() <= 0:
            raise ValueError("weights sum to zero")
        theta = np.mod(theta, 2.0 * np.pi)
        bw = self.bin_width
        if not np.isfinite(bw):
            bw = _infer_bin_width(u)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bin_width", float(bw))

    def __len__(self):
        return self.theta.size

    @property
    def angles(self):
        return np.unique(self.theta)

    @property
    def frequencies(self):
        return self.weight / self.weight.sum()

    def canonical(self):
        """Copy sorted by ``(theta, u)`` so sums run in a fixed order."""
        order = np.lexsort((self.u, self.theta))
        return QuadratureDataset(self.theta[order], self.u[order], self.weight[order], self.bin_width, self.clamped)

    def rotated(self, delta):
        return QuadratureDataset(self.theta + delta, self.u, self.weight, self.bin_width, self.clamped)

    def slice(self, theta, atol=1e-9):
        """``(u, weight)`` of all records at one angle."""
        sel = np.abs(np.angle(np.exp(1j * (self.theta - theta)))) < atol
        order = np.argsort(self.u[sel])
        return self.u[sel][order], self.weight[sel][order]

    @classmethod
    def from_distributions(cls, thetas, u_grid, weights, clamped=False):
        """Build from a ``(n_angles, n_bins)`` weight table on a shared ``u`` grid."""
        thetas = np.asarray(thetas, dtype=float)
        u_grid = np.asarray(u_grid, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (thetas.size, u_grid.size):
            raise ValueError(f"weights shape {weights.shape} != ({thetas.size}, {u_grid.size})")
        th = np.repeat(thetas, u_grid.size)
        uu = np.tile(u_grid, thetas.size)
        return cls(th, uu, weights.ravel(), _infer_bin_width(u_grid), clamped)

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        bw = parts[0].bin_width
        return cls(
            np.concatenate([p.theta for p in parts]),
            np.concatenate([p.u for p in parts]),
            np.concatenate([p.weight for p in parts]),
            bw,
            any(p.clamped for p in parts),
        )


def _infer_bin_width(u):
    vals = np.unique(np.asarray(u, dtype=float))
    if vals.size < 2:
        return float("nan")
    return float(np.median(np.diff(vals)))
