"""Per-phase spectral efficiencies for two-phase uplink joint transmission.

Phase 1 is the serving UE multicasting to its collaborators; the multicast
rate is limited by the weakest collaborator. Phase 2 is the joint transmission
of the serving UE plus collaborators to the BS, either coherently (one SVD
precoder over the stacked channel) or non-coherently (two clusters, each
sending its own stream group without precoding).

Every rate here is in bits/s/Hz. The per-link SNR factor P*G/(N_t*sigma^2)
comes from :attr:`LinkBudget.snr_scale` and is folded into the channel as
``sqrt(snr_scale) * H`` before any eigen-decomposition.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .mimo import (
    PowerAllocation,
    Precoder,
    UnusableChannelError,
    capacity_from_allocation,
    gram_eigenvalues,
    logdet_capacity,
    logdet_capacity_many,
    waterfill,
    waterfill_capacity_many,
)
from .rf_env import LinkBudget, NormalizeOver, PowerMode, normalize_power


class PrecoderKind(str, enum.Enum):
    IDENTITY = "identity"
    MAXMIN = "maxmin"


class Scheme(str, enum.Enum):
    CJT = "CJT"
    NCJT = "NCJT"


@dataclass(frozen=True)
class Phase1Report:
    per_ue_rates: np.ndarray
    min_rate: float
    median_rate: float
    max_rate: float
    precoder_kind: PrecoderKind
    converged: bool = True
    iterations: int = 0
    objective_history: tuple[float, ...] = ()

    @classmethod
    def from_rates(cls, rates, kind: PrecoderKind, **extra) -> "Phase1Report":
        rates = np.asarray(rates, dtype=float)
        return cls(
            per_ue_rates=rates,
            min_rate=float(rates.min()),
            median_rate=float(np.median(rates)),
            max_rate=float(rates.max()),
            precoder_kind=kind,
            **extra,
        )


@dataclass(frozen=True)
class Phase2Report:
    scheme: Scheme
    rate: float
    num_streams: int
    power_allocation: PowerAllocation | None = None
    cluster_split: tuple[int, int] | None = None


@dataclass(frozen=True)
class MaxMinSolverConfig:
    """Projected-subgradient settings for the common max-min multicast precoder."""

    max_iter: int = 500
    step: float = 0.5
    tol: float = 1e-6
    patience: int = 50


def _scaled(budgets: Sequence[LinkBudget], channels: Sequence[np.ndarray]) -> np.ndarray:
    if len(budgets) != len(channels):
        raise ValueError(f"{len(budgets)} budgets for {len(channels)} channels")
    if len(channels) == 0:
        raise ValueError("at least one link is required")
    shapes = {np.shape(h) for h in channels}
    if len(shapes) != 1 or len(next(iter(shapes))) != 2:
        raise ValueError(f"channels must share one 2-D shape, got {sorted(shapes)}")
    h = np.stack([np.asarray(c, dtype=complex) for c in channels])
    s = np.array([b.snr_scale for b in budgets], dtype=float)
    return np.sqrt(s)[:, None, None] * h


def _rates_for_covariance(a: np.ndarray, q: np.ndarray) -> np.ndarray:
    """log2 det(I + A_i Q A_i^H) for each scaled channel A_i."""
    n_r = a.shape[-2]
    m = np.eye(n_r) + a @ q @ np.swapaxes(a.conj(), -1, -2)
    sign, logdet = np.linalg.slogdet(m)
    return logdet / np.log(2.0)


def phase1_rate_identity(budgets: Sequence[LinkBudget], channels: Sequence[np.ndarray]) -> Phase1Report:
    """Multicast rates with the CSI-free identity precoder.

    Args:
        budgets: Serving-UE to collaborator link budget, one per collaborator.
        channels: Matching N_r^UE x N_t^UE small-scale channels.
    """
    if len(channels) == 0:
        raise ValueError("phase 1 needs at least one collaborator")
    a = _scaled(budgets, channels)
    rates = logdet_capacity_many(a)
    return Phase1Report.from_rates(rates, PrecoderKind.IDENTITY)


def _project_psd_trace(q: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto {Q Hermitian PSD, tr Q <= budget}."""
    q = 0.5 * (q + q.conj().T)
    w, v = np.linalg.eigh(q)
    w = np.clip(w, 0.0, None)
    if w.sum() > budget:
        # project the spectrum onto the simplex of radius `budget`
        u = np.sort(w)[::-1]
        css = np.cumsum(u) - budget
        idx = np.arange(1, u.size + 1)
        rho = np.nonzero(u - css / idx > 0)[0][-1]
        theta = css[rho] / (rho + 1)
        w = np.clip(w - theta, 0.0, None)
    return (v * w) @ v.conj().T


def phase1_maxmin_precoder(
    budgets: Sequence[LinkBudget],
    channels: Sequence[np.ndarray],
    solver_cfg: MaxMinSolverConfig | None = None,
) -> tuple[Precoder, Phase1Report]:
    """Common full-rank precoder maximizing the minimum collaborator rate.

    The problem is solved over the transmit covariance Q = F F^H with
    tr Q <= N_t, where every rate is concave and so is their minimum.
    Each step follows the normalized gradient of the currently weakest
    UE's rate, then projects back onto the feasible set. The iterate
    starts at Q = I (the identity precoder) and the best iterate is kept,
    so the result never falls below the identity-precoder min rate.
    ``report.converged`` is False when ``max_iter`` ran out first.
    """
    cfg = solver_cfg or MaxMinSolverConfig()
    a = _scaled(budgets, channels)
    n_t = a.shape[-1]
    budget = float(n_t)
    a_h = np.swapaxes(a.conj(), -1, -2)
    eye_r = np.eye(a.shape[-2])

    q = np.eye(n_t, dtype=complex)
    rates = _rates_for_covariance(a, q)
    best_q, best_obj, best_rates = q, float(rates.min()), rates
    history = [best_obj]
    last_gain_at = 0
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        i = int(np.argmin(rates))
        m_inv = np.linalg.inv(eye_r + a[i] @ q @ a_h[i])
        grad = a_h[i] @ m_inv @ a[i] / np.log(2.0)
        grad = 0.5 * (grad + grad.conj().T)
        norm = np.linalg.norm(grad)
        if norm == 0:
            converged = True
            break
        q = _project_psd_trace(q + (cfg.step / math.sqrt(it)) * grad / norm, budget)
        rates = _rates_for_covariance(a, q)
        obj = float(rates.min())
        if obj > best_obj:
            if obj - history[last_gain_at] >= cfg.tol:
                last_gain_at = it
            best_q, best_obj, best_rates = q, obj, rates
        history.append(best_obj)
        if it - last_gain_at >= cfg.patience:
            converged = True
            break

    w, v = np.linalg.eigh(best_q)
    f = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    # guard against round-off pushing ||F||_F^2 a hair over the budget
    excess = np.sum(np.abs(f) ** 2) / budget
    if excess > 1.0:
        f = f / math.sqrt(excess)
    report = Phase1Report.from_rates(
        best_rates,
        PrecoderKind.MAXMIN,
        converged=converged,
        iterations=it,
        objective_history=tuple(history),
    )
    return Precoder(entries=f, power_budget=budget), report


def _cjt_from_scaled(a: np.ndarray) -> Phase2Report:
    u, n_r, n_t = a.shape
    composite = np.concatenate(list(a), axis=1)  # N_r x U*N_t
    lam = gram_eigenvalues(composite)
    total = float(u * n_t)
    n_streams = min(u * n_t, n_r)
    try:
        alloc = waterfill(lam, total)
    except UnusableChannelError:
        even = np.full(lam.size, total / lam.size)
        return Phase2Report(Scheme.CJT, 0.0, n_streams, PowerAllocation(even, total, 0.0))
    return Phase2Report(Scheme.CJT, capacity_from_allocation(lam, alloc), n_streams, alloc)


def phase2_cjt(budgets: Sequence[LinkBudget], channels: Sequence[np.ndarray], U: int | None = None) -> Phase2Report:
    """Coherent joint transmission over the horizontally stacked channel.

    The composite [sqrt(s_1) H_1 ... sqrt(s_U) H_U] is decomposed and the
    total power U*N_t is water-filled over its eigenmodes.
    """
    if U is not None and U != len(channels):
        raise ValueError(f"U={U} but {len(channels)} channels supplied")
    return _cjt_from_scaled(_scaled(budgets, channels))


def ncjt_split(U: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Equal two-cluster split by index: first ceil(U/2) UEs (serving UE first) in cluster 1."""
    n1 = (U + 1) // 2
    return tuple(range(n1)), tuple(range(n1, U))


def phase2_ncjt(
    budgets: Sequence[LinkBudget],
    channels: Sequence[np.ndarray],
    cluster_assignment: tuple[Sequence[int], Sequence[int]] | None = None,
) -> Phase2Report:
    """Non-coherent two-cluster joint transmission without precoding.

    Each cluster's channels are summed into one N_r x N_t block and the
    two blocks are concatenated; the rate is log2 det(I + H H^H) on that
    matrix. ``cluster_assignment`` defaults to :func:`ncjt_split`.
    """
    if len(channels) == 0:
        raise ValueError("NCJT needs at least one transmitting UE")
    a = _scaled(budgets, channels)
    u, n_r, n_t = a.shape
    if n_r < 2 * n_t:
        raise ValueError(f"NCJT needs N_r >= 2*N_t, got N_r={n_r}, N_t={n_t}")
    g1, g2 = ncjt_split(u) if cluster_assignment is None else cluster_assignment
    g1, g2 = tuple(int(i) for i in g1), tuple(int(i) for i in g2)
    if sorted(g1 + g2) != list(range(u)):
        raise ValueError(f"cluster assignment {g1}/{g2} is not a partition of {u} UEs")
    if u > 1 and (not g1 or not g2):
        raise ValueError("both clusters must be non-empty when U > 1")
    blocks = [a[list(g)].sum(axis=0) for g in (g1, g2) if g]
    h_ncjt = np.concatenate(blocks, axis=1)
    return Phase2Report(
        Scheme.NCJT,
        logdet_capacity(h_ncjt),
        h_ncjt.shape[1],
        cluster_split=(len(g1), len(g2)),
    )


def baseline_rate(budget: LinkBudget, channel: np.ndarray) -> float:
    """Direct serving-UE to BS rate: single-user SVD precoding with water-filling."""
    return phase2_cjt([budget], [channel], 1).rate


@lru_cache(maxsize=64)
def subset_masks(n: int) -> np.ndarray:
    """All 2**n inclusion masks ordered by subset size, then lexicographically."""
    from itertools import combinations

    masks = np.zeros((2**n, n), dtype=bool)
    row = 0
    for k in range(n + 1):
        for combo in combinations(range(n), k):
            masks[row, list(combo)] = True
            row += 1
    masks.setflags(write=False)
    return masks


class _SubsetEvaluator:
    """Phase-2 rate of {serving UE} plus a collaborator subset.

    Budgets are given at the full per-UE power. Under normalized power the
    per-UE power is the configured power divided by the M-DAA size (serving
    UE plus every candidate), whichever non-empty subset transmits; with
    ``normalize_over="selected"`` it is divided by the transmitting count. Call with a subset of
    collaborator indices, or use :meth:`rates` on a boolean mask array.
    """

    def __init__(
        self,
        serving_budget: LinkBudget,
        serving_channel: np.ndarray,
        collaborator_budgets: Sequence[LinkBudget],
        collaborator_channels: Sequence[np.ndarray],
        power_mode: PowerMode | str = PowerMode.FULL,
        per_ue_power_dbm: float = 23.0,
        normalize_over: NormalizeOver | str = NormalizeOver.MDAA,
    ):
        self.a = _scaled([serving_budget, *collaborator_budgets], [serving_channel, *collaborator_channels])
        self.n = len(collaborator_budgets)
        self.power_mode = PowerMode(power_mode)
        self.normalize_over = NormalizeOver(normalize_over)
        counts = np.arange(1, self.n + 2)
        if self.normalize_over is NormalizeOver.MDAA:
            # the empty subset is direct transmission, never split
            counts = np.where(counts == 1, 1, self.n + 1)
        self._power_factor = np.array(
            [10 ** ((normalize_power(per_ue_power_dbm, int(c), self.power_mode) - per_ue_power_dbm) / 10) for c in counts]
        )
        self._cache: dict[tuple[int, ...], float] = {}

    def power_factor(self, num_ues):
        return self._power_factor[np.asarray(num_ues) - 1]

    def _check(self, subset: Sequence[int]) -> tuple[int, ...]:
        key = tuple(sorted(int(i) for i in subset))
        if len(set(key)) != len(key) or any(i < 0 or i >= self.n for i in key):
            raise IndexError(f"subset {key} out of range for {self.n} collaborators")
        return key

    def __call__(self, subset: Sequence[int]) -> float:
        key = self._check(subset)
        if key not in self._cache:
            mask = np.zeros((1, self.n), dtype=bool)
            mask[0, list(key)] = True
            self._cache[key] = float(self.rates(mask)[0])
        return self._cache[key]

    def rates(self, masks: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class CjtSubsetEvaluator(_SubsetEvaluator):
    """Vectorized CJT rate over many subsets: the composite Gram matrix is additive in UEs."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._grams = self.a @ np.swapaxes(self.a.conj(), -1, -2)  # (n+1, N_r, N_r)
        self.n_t = self.a.shape[-1]

    def rates(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        counts = 1 + masks.sum(axis=1)
        n_r = self._grams.shape[-1]
        flat = self._grams.reshape(self.n + 1, -1)
        gram = flat[0] + masks.astype(float) @ flat[1:]
        gram = gram.reshape(-1, n_r, n_r) * self.power_factor(counts)[:, None, None]
        lam = np.clip(np.linalg.eigvalsh(gram), 0.0, None)
        return waterfill_capacity_many(lam, counts * self.n_t)


class NcjtSubsetEvaluator(_SubsetEvaluator):
    """Vectorized NCJT rate over many subsets with the equal index-order cluster split.

    The empty subset means no joint transmission at all, so it is scored as
    the direct-link baseline (SVD precoding with water-filling), not as
    open-loop NCJT of the serving UE alone.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.direct_rate = _cjt_from_scaled(self.a[:1]).rate

    def rates(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        s = masks.shape[0]
        tx = np.concatenate([np.ones((s, 1), dtype=bool), masks], axis=1)
        counts = tx.sum(axis=1)
        rank = np.cumsum(tx, axis=1)
        in_g1 = tx & (rank <= ((counts + 1) // 2)[:, None])
        in_g2 = tx & ~in_g1
        scale = np.sqrt(self.power_factor(counts))[:, None, None]
        flat = self.a.reshape(self.n + 1, -1)
        n_r, n_t = self.a.shape[-2:]
        h1 = (in_g1.astype(float) @ flat).reshape(s, n_r, n_t)
        h2 = (in_g2.astype(float) @ flat).reshape(s, n_r, n_t)
        if n_r < 2 * n_t:
            raise ValueError(f"NCJT needs N_r >= 2*N_t, got N_r={n_r}, N_t={n_t}")
        h = np.concatenate([h1, h2], axis=2) * scale
        return np.where(masks.any(axis=1), logdet_capacity_many(h), self.direct_rate)


__all__ = [
    "CjtSubsetEvaluator",
    "MaxMinSolverConfig",
    "NcjtSubsetEvaluator",
    "Phase1Report",
    "Phase2Report",
    "PrecoderKind",
    "Scheme",
    "baseline_rate",
    "ncjt_split",
    "phase1_maxmin_precoder",
    "phase1_rate_identity",
    "phase2_cjt",
    "phase2_ncjt",
    "subset_masks",
]
