"""
Inverse-variance fusion of per-subband estimates.

For independent unbiased estimates with variances s_k, the affine
combination sum_k beta_k * zeta_k with sum(beta) = 1 has variance
sum_k beta_k**2 * s_k, minimized by beta_k = (1/s_k) / sum_i (1/s_i), with
minimum (sum_i 1/s_i)**-1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidParameterError
from .sensing import SubbandEstimate


@dataclass(frozen=True)
class FusedEstimate:
    range: float
    velocity: float
    weights_range: np.ndarray
    weights_velocity: np.ndarray
    fused_var_range: float
    fused_var_velocity: float
    contributing: tuple[int, ...]


def optimal_weights(variances) -> np.ndarray:
    """Minimum-variance affine combining weights for independent estimates."""
    var = np.asarray(variances, dtype=float)
    if var.ndim != 1 or var.size == 0:
        raise InvalidParameterError("need a nonempty 1-D variance vector")
    if not np.all(var > 0):
        raise InvalidParameterError("all variances must be positive")
    # normalize first so that huge/small variances do not overflow 1/var
    precision = var.min() / var
    return precision / precision.sum()


def combined_variance(variances) -> float:
    var = np.asarray(variances, dtype=float)
    return float(1.0 / np.sum(1.0 / var))


def combine(estimates, weights) -> float:
    est = np.asarray(estimates, dtype=float)
    w = np.asarray(weights, dtype=float)
    if est.shape != w.shape or est.ndim != 1:
        raise InvalidParameterError(f"length mismatch: {est.shape} estimates vs {w.shape} weights")
    if abs(w.sum() - 1.0) > 1e-9:
        raise InvalidParameterError(f"weights must sum to 1, got {w.sum()!r}")
    return float(w @ est)


def _associate(anchor: Sequence[SubbandEstimate], other: Sequence[SubbandEstimate]) -> list[int]:
    """For each anchor target, the index of its match in ``other`` (greedy nearest neighbour)."""
    cost = np.empty((len(anchor), len(other)))
    for p, a in enumerate(anchor):
        for q, b in enumerate(other):
            cost[p, q] = ((a.range_est - b.range_est) ** 2 / (a.var_range + b.var_range)
                          + (a.velocity_est - b.velocity_est) ** 2 / (a.var_velocity + b.var_velocity))
    match = [-1] * len(anchor)
    for _ in range(len(anchor)):
        p, q = divmod(int(np.argmin(cost)), cost.shape[1])
        match[p] = q
        cost[p, :] = np.inf
        cost[:, q] = np.inf
    return match


def fuse_subband_estimates(per_subband: Mapping[int, Sequence[SubbandEstimate]] | Sequence[Sequence[SubbandEstimate]],
                           num_targets: int) -> list[FusedEstimate]:
    """Associate targets across subbands and fuse range and velocity separately.

    Parameters
    ----------
    per_subband : mapping or sequence
        Estimates of each contributing subband (``num_targets`` per subband),
        keyed by subband index or given as lists carrying ``subband_index``.
    num_targets : int
        Targets per subband.
    """
    if isinstance(per_subband, Mapping):
        groups = [list(per_subband[k]) for k in sorted(per_subband)]
    else:
        groups = sorted((list(g) for g in per_subband if len(g)), key=lambda g: g[0].subband_index)
    groups = [g for g in groups if g]
    if not groups:
        raise InvalidParameterError("no contributing subbands to fuse")
    for g in groups:
        if len(g) != num_targets:
            raise InvalidParameterError(
                f"subband {g[0].subband_index} reports {len(g)} estimates, expected {num_targets}"
            )
    anchor = groups[0]
    aligned = [anchor] + [[g[q] for q in _associate(anchor, g)] for g in groups[1:]]
    contributing = tuple(g[0].subband_index for g in groups)

    fused = []
    for p in range(num_targets):
        ests = [g[p] for g in aligned]
        var_r = np.array([e.var_range for e in ests])
        var_v = np.array([e.var_velocity for e in ests])
        w_r = optimal_weights(var_r)
        w_v = optimal_weights(var_v)
        fused.append(FusedEstimate(
            range=combine([e.range_est for e in ests], w_r),
            velocity=combine([e.velocity_est for e in ests], w_v),
            weights_range=w_r,
            weights_velocity=w_v,
            fused_var_range=combined_variance(var_r),
            fused_var_velocity=combined_variance(var_v),
            contributing=contributing,
        ))
    return fused
