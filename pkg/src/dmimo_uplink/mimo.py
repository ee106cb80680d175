"""Complex MIMO kernel: Rayleigh channels, log-det capacity, SVD and water-filling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# eigenvalues below this fraction of the largest are treated as zero
DEGENERATE_RTOL = 1e-12


class UnusableChannelError(ValueError):
    """Raised when every eigenmode of a channel has zero gain."""


@dataclass(frozen=True)
class Precoder:
    entries: np.ndarray
    power_budget: float

    def __post_init__(self) -> None:
        if self.frobenius_power > self.power_budget + 1e-9:
            raise ValueError(
                f"precoder power {self.frobenius_power:.6g} exceeds budget {self.power_budget:.6g}"
            )

    @property
    def frobenius_power(self) -> float:
        return float(np.sum(np.abs(self.entries) ** 2))

    @property
    def covariance(self) -> np.ndarray:
        return self.entries @ self.entries.conj().T


@dataclass(frozen=True)
class PowerAllocation:
    per_stream: np.ndarray
    total: float
    water_level: float


def draw_channel(n_rx: int, n_tx: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0, 1) matrix of shape (n_rx, n_tx)."""
    if n_rx < 1 or n_tx < 1:
        raise ValueError(f"channel dimensions must be >= 1, got ({n_rx}, {n_tx})")
    return draw_channels((), n_rx, n_tx, rng)


def draw_channels(batch: tuple[int, ...] | int, n_rx: int, n_tx: int, rng: np.random.Generator) -> np.ndarray:
    """Stack of i.i.d. CN(0, 1) matrices with shape ``batch + (n_rx, n_tx)``."""
    if isinstance(batch, int):
        batch = (batch,)
    shape = tuple(batch) + (n_rx, n_tx)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def _gram(m: np.ndarray) -> np.ndarray:
    """Smaller of M M^H and M^H M; both share the nonzero spectrum."""
    if m.shape[-2] <= m.shape[-1]:
        return m @ np.swapaxes(m.conj(), -1, -2)
    return np.swapaxes(m.conj(), -1, -2) @ m


def gram_eigenvalues(m: np.ndarray) -> np.ndarray:
    """Eigenvalues of M^H M (nonzero part), descending, clipped at zero. Works on stacks."""
    lam = np.linalg.eigvalsh(_gram(m))[..., ::-1]
    return np.clip(lam, 0.0, None)


def logdet_capacity(m: np.ndarray, snr_scale: float = 1.0) -> float:
    """log2 det(I + snr_scale * M M^H) in bits/s/Hz via the eigenvalues of M^H M."""
    m = np.asarray(m)
    if snr_scale < 0:
        raise ValueError(f"snr_scale must be >= 0, got {snr_scale}")
    if not np.all(np.isfinite(m)):
        raise ValueError("channel matrix has non-finite entries")
    if m.ndim == 1:
        m = m[:, None]
    lam = gram_eigenvalues(m)
    return float(np.sum(np.log2(1.0 + snr_scale * lam)))


def logdet_capacity_many(m: np.ndarray) -> np.ndarray:
    """Vectorized log2 det(I + M M^H) over leading batch axes (SNR already folded into M)."""
    lam = gram_eigenvalues(m)
    return np.sum(np.log2(1.0 + lam), axis=-1)


def svd_decompose(h: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full SVD ``H = U diag(s) V^H`` with singular values non-increasing.

    Returns ``(U, s, V)``; note V, not V^H.
    """
    h = np.asarray(h)
    if not np.all(np.isfinite(h)):
        raise ValueError("channel matrix has non-finite entries")
    u, s, vh = np.linalg.svd(h, full_matrices=False)
    return u, s, vh.conj().T


def _waterfill_rows(gains: np.ndarray, total_power: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sorted-elimination water-filling along the last axis.

    ``gains`` are effective stream gains (noise scale times eigenvalue).
    Returns per-stream powers in the input order and the water level.
    """
    g = np.asarray(gains, dtype=float)
    total_power = np.asarray(total_power, dtype=float)
    order = np.argsort(-g, axis=-1, kind="stable")
    g_sorted = np.take_along_axis(g, order, axis=-1)
    gmax = g_sorted[..., :1]
    usable = g_sorted > DEGENERATE_RTOL * gmax
    with np.errstate(divide="ignore"):
        inv = np.where(usable, 1.0 / np.where(usable, g_sorted, 1.0), np.inf)
    k = np.arange(1, g.shape[-1] + 1)
    # water level if the first k streams are active
    mu = (total_power[..., None] + np.cumsum(np.where(usable, inv, 0.0), axis=-1)) / k
    valid = usable & (mu > inv)
    # active set size: last k where the candidate level covers stream k; the valid set is a prefix
    n_active = np.sum(valid, axis=-1)
    n_active = np.maximum(n_active, 1)
    level = np.take_along_axis(mu, (n_active - 1)[..., None], axis=-1)[..., 0]
    p_sorted = np.where(k <= n_active[..., None], np.maximum(level[..., None] - inv, 0.0), 0.0)
    p = np.empty_like(p_sorted)
    np.put_along_axis(p, order, p_sorted, axis=-1)
    return p, level


def waterfill(eigenvalues, total_power: float, noise_scale: float = 1.0) -> PowerAllocation:
    """Capacity-maximizing power split over parallel channels.

    Maximizes sum log2(1 + noise_scale*lambda_i*p_i) with sum p_i = total_power.
    Eigenvalues below ``DEGENERATE_RTOL`` of the largest get no power.
    """
    lam = np.asarray(eigenvalues, dtype=float).ravel()
    if total_power <= 0:
        raise ValueError(f"total_power must be > 0, got {total_power}")
    if lam.size == 0 or np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("eigenvalues must be finite and non-negative")
    gains = noise_scale * lam
    if not np.any(gains > 0):
        raise UnusableChannelError("all eigenvalues are zero; channel carries no stream")
    p, level = _waterfill_rows(gains, np.asarray(total_power, dtype=float))
    return PowerAllocation(per_stream=p, total=float(total_power), water_level=float(level))


def waterfill_capacity_many(gains: np.ndarray, total_power) -> np.ndarray:
    """Water-filled capacity sum log2(1 + g_i p_i) for each row of ``gains``.

    Rows with all-zero gains give zero capacity instead of raising.
    """
    gains = np.asarray(gains, dtype=float)
    total = np.broadcast_to(np.asarray(total_power, dtype=float), gains.shape[:-1])
    p, _ = _waterfill_rows(gains, total)
    p = np.where(np.isfinite(p), p, 0.0)
    return np.sum(np.log2(1.0 + gains * p), axis=-1)


def capacity_from_allocation(eigenvalues, allocation: PowerAllocation, noise_scale: float = 1.0) -> float:
    lam = np.asarray(eigenvalues, dtype=float).ravel()
    return float(np.sum(np.log2(1.0 + noise_scale * lam * allocation.per_stream)))


def svd_waterfill_capacity(m: np.ndarray, total_power: float) -> tuple[float, PowerAllocation]:
    """Closed-loop capacity of M (SNR folded in) with SVD precoding and water-filling."""
    lam = gram_eigenvalues(np.asarray(m))
    alloc = waterfill(lam, total_power)
    return capacity_from_allocation(lam, alloc), alloc
