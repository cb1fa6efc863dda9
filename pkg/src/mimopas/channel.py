"""Block-fading Kronecker-correlated Rayleigh MIMO channel with complex AWGN.

Fading draws are H = R_rx^(1/2) W R_tx^(1/2) with W i.i.d. circularly
symmetric unit-variance complex Gaussian; the correlation matrices follow
the exponential profile R_ij = beta^(((i-j)/(N-1))^2). Noise is added per
receive antenna with variance sigma2 per complex entry.

SNR convention for sweeps: with unit-energy symbols on every transmit
layer, SNR(dB) = -10*log10(sigma2 * M_t).
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ChannelInstance",
    "CorrelationConfig",
    "correlation_matrix",
    "draw_channel",
    "transmit",
    "snr_to_sigma2",
    "sigma2_to_snr",
]


def correlation_matrix(n, beta):
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"correlation beta must be in [0, 1), got {beta}")
    if n < 1:
        raise ValueError(f"matrix size must be >= 1, got {n}")
    if n == 1 or beta == 0.0:
        return np.eye(n)
    idx = np.arange(n, dtype=np.float64)
    expo = ((idx[:, None] - idx[None, :]) / (n - 1)) ** 2
    return beta ** expo


def _psd_sqrt(r):
    # symmetric eigendecomposition; clip the tiny negative eigenvalues
    # that roundoff can produce
    w, v = np.linalg.eigh(r)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


@dataclass(frozen=True)
class CorrelationConfig:
    """Antenna correlation for both link ends; beta=0 means uncorrelated."""

    beta_tx: float = 0.0
    beta_rx: float = 0.0

    def sqrt_pair(self, m_t, m_r):
        """(R_rx^(1/2), R_tx^(1/2)); None stands for identity."""
        left = None if self.beta_rx == 0.0 else _psd_sqrt(correlation_matrix(m_r, self.beta_rx))
        right = None if self.beta_tx == 0.0 else _psd_sqrt(correlation_matrix(m_t, self.beta_tx))
        return left, right


@dataclass(frozen=True)
class ChannelInstance:
    h: np.ndarray
    sigma2: float
    m_t: int
    m_r: int


def draw_channel(rng, m_t, m_r, corr=None):
    w = (rng.standard_normal((m_r, m_t)) + 1j * rng.standard_normal((m_r, m_t)))
    w *= np.sqrt(0.5)
    if corr is None:
        return w
    left, right = corr.sqrt_pair(m_t, m_r)
    if left is not None:
        w = left @ w
    if right is not None:
        w = w @ right
    return w


def transmit(rng, h, s, sigma2):
    h = np.asarray(h)
    s = np.asarray(s)
    if h.ndim != 2 or s.shape != (h.shape[1],):
        raise ValueError(f"shape mismatch: H is {h.shape}, s is {s.shape}")
    if sigma2 < 0:
        raise ValueError(f"noise variance must be >= 0, got {sigma2}")
    m_r = h.shape[0]
    noise = (rng.standard_normal(m_r) + 1j * rng.standard_normal(m_r))
    noise *= np.sqrt(sigma2 / 2.0)
    return h @ s + noise


def snr_to_sigma2(snr_db, m_t):
    return 10.0 ** (-snr_db / 10.0) / m_t


def sigma2_to_snr(sigma2, m_t):
    return -10.0 * np.log10(sigma2 * m_t)
