"""Gray-labeled PAM/QAM alphabets and Maxwell-Boltzmann amplitude shaping.

A 2^(2M)-QAM symbol is two independent Gray-labeled 2^M-PAM symbols, one
per quadrature. Bit 0 of an M-bit PAM label is the sign, the remaining
M-1 bits select the amplitude through a binary-reflected Gray code, so
negating a point flips exactly the sign bit.

Shaping puts a Maxwell-Boltzmann distribution on the amplitudes
{1, 3, ..., 2^M - 1}; signs stay uniform. The constellation is rescaled
to unit mean symbol energy, which couples the scale factor (and the
effective prior weight used by the detectors) to the shaping parameter.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PamAlphabet",
    "MbDistribution",
    "ShapedConstellation",
    "gray_encode",
    "gray_decode",
    "build_pam",
    "mb_distribution",
    "nu_for_rate",
    "scale_factor",
    "shaped_constellation",
    "uniform_constellation",
]

MAX_PAM_BITS = 6


def gray_encode(n):
    """Binary-reflected Gray code of n (int or ndarray)."""
    return n ^ (n >> 1)


def gray_decode(g):
    """Inverse of gray_encode for values below 2**32 (int or ndarray)."""
    g = np.asarray(g).copy()
    for shift in (1, 2, 4, 8, 16):
        g ^= g >> shift
    return g if g.ndim else int(g)


@dataclass(frozen=True)
class PamAlphabet:
    """Unscaled 2^bits-PAM alphabet with Gray labels.

    points holds the odd integers -(2^bits-1), ..., 2^bits-1 ascending.
    labels[i] is the bit label of points[i], most significant bit first;
    label bit 0 is the sign (0 for positive points). point_by_label maps
    a label, read as a big-endian integer, back to its PAM value.
    """

    bits: int
    points: np.ndarray
    labels: np.ndarray
    point_by_label: np.ndarray
    amp_labels: np.ndarray  # (2^(bits-1), bits-1) Gray label of each amplitude index

    @property
    def amplitudes(self):
        return np.arange(1, 2 ** self.bits, 2, dtype=np.int64)

    def amp_index_from_bits(self, bits2d):
        """Amplitude indices from rows of amplitude label bits."""
        b = np.asarray(bits2d, dtype=np.int64)
        if self.bits == 1:
            return np.zeros(len(b), dtype=np.int64)
        weights = 1 << np.arange(self.bits - 2, -1, -1, dtype=np.int64)
        return gray_decode(b @ weights)


def build_pam(bits):
    if not 1 <= bits <= MAX_PAM_BITS:
        raise ValueError(f"bits per PAM symbol must be in 1..{MAX_PAM_BITS}, got {bits}")
    n = 2 ** bits
    points = np.arange(-(n - 1), n, 2, dtype=np.int64)
    labels = np.empty((n, bits), dtype=np.uint8)
    point_by_label = np.empty(n, dtype=np.int64)
    n_amp = n // 2
    amp_labels = np.empty((n_amp, max(bits - 1, 0)), dtype=np.uint8)
    for idx in range(n_amp):
        g = gray_encode(idx)
        amp_labels[idx] = [(g >> (bits - 2 - j)) & 1 for j in range(bits - 1)]
    for i, x in enumerate(points):
        sign = 0 if x > 0 else 1
        amp_idx = (abs(int(x)) - 1) // 2
        labels[i, 0] = sign
        labels[i, 1:] = amp_labels[amp_idx]
        lab_int = (sign << (bits - 1)) | gray_encode(amp_idx)
        point_by_label[lab_int] = x
    return PamAlphabet(bits=bits, points=points, labels=labels,
                       point_by_label=point_by_label, amp_labels=amp_labels)


@dataclass(frozen=True)
class MbDistribution:
    """Maxwell-Boltzmann distribution over PAM amplitudes.

    probs[i] is the probability of amplitude 2i+1 and equals
    z * exp(-nu * (2i+1)^2).
    """

    nu: float
    probs: np.ndarray
    z: float

    def entropy_bits(self):
        p = self.probs[self.probs > 0]
        return float(-(p * np.log2(p)).sum())

    def mean_square(self):
        amps = np.arange(1, 2 * len(self.probs), 2, dtype=np.float64)
        return float(self.probs @ amps ** 2)


def mb_distribution(nu, bits):
    if nu < 0:
        raise ValueError(f"shaping parameter must be >= 0, got {nu}")
    if not 1 <= bits <= MAX_PAM_BITS:
        raise ValueError(f"bits per PAM symbol must be in 1..{MAX_PAM_BITS}, got {bits}")
    amps = np.arange(1, 2 ** bits, 2, dtype=np.float64)
    w = np.exp(-nu * amps ** 2)
    z = 1.0 / w.sum()
    return MbDistribution(nu=float(nu), probs=z * w, z=float(z))


def nu_for_rate(target_bits, bits, tol=1e-6):
    """Shaping parameter whose amplitude entropy is target_bits.

    Bisection on [0, 10]; the entropy is bits-1 at nu=0 and decreases
    monotonically, so any target in the reachable range has a unique
    answer.
    """
    if bits < 2:
        raise ValueError("rate matching needs at least one amplitude bit")
    lo, hi = 0.0, 10.0
    if not mb_distribution(hi, bits).entropy_bits() <= target_bits <= bits - 1:
        raise ValueError(f"target {target_bits} bits not reachable for {bits}-bit PAM")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mb_distribution(mid, bits).entropy_bits() > target_bits:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    nu = 0.5 * (lo + hi)
    if abs(mb_distribution(nu, bits).entropy_bits() - target_bits) > tol:
        raise ValueError("bisection failed to reach the target entropy")
    return nu


def scale_factor(dist, bits):
    """Scale delta giving the QAM built from this PAM unit mean energy.

    E|s|^2 = 2 * delta^2 * E[a^2] = 1.
    """
    if len(dist.probs) != 2 ** (bits - 1):
        raise ValueError("distribution does not match the alphabet size")
    return 1.0 / np.sqrt(2.0 * dist.mean_square())


class ShapedConstellation:
    """Complex QAM alphabet with per-point priors, indexed by label.

    The 2M-bit symbol label packs the in-phase PAM label in the high M
    bits and the quadrature label in the low M bits; bit positions are
    counted from the most significant bit, so bits 0..M-1 address the
    in-phase component. Instances are treated as immutable and may be
    shared between detectors.
    """

    def __init__(self, pam, dist):
        if len(dist.probs) != 2 ** (pam.bits - 1):
            raise ValueError("distribution does not match the PAM alphabet")
        self.pam = pam
        self.dist = dist
        self.delta = scale_factor(dist, pam.bits)
        self.nu_scaled = dist.nu / self.delta ** 2
        m = pam.bits
        self.bits_per_symbol = 2 * m
        n = 2 ** m
        pam_scaled = pam.point_by_label * self.delta
        lab = np.arange(n * n, dtype=np.int64)
        self.points = pam_scaled[lab >> m] + 1j * pam_scaled[lab & (n - 1)]
        # Per-label probability: amplitude prob split evenly over both signs.
        pam_probs = dist.probs[(np.abs(pam.point_by_label) - 1) // 2] / 2.0
        self.point_probs = pam_probs[lab >> m] * pam_probs[lab & (n - 1)]
        self.bit_sets = []
        for b in range(2 * m):
            vals = (lab >> (2 * m - 1 - b)) & 1
            self.bit_sets.append((np.nonzero(vals == 0)[0].astype(np.int64),
                                  np.nonzero(vals == 1)[0].astype(np.int64)))

    @property
    def size(self):
        return len(self.points)

    def mean_energy(self):
        return float(self.point_probs @ np.abs(self.points) ** 2)

    def label_bit(self, label, b):
        return (label >> (self.bits_per_symbol - 1 - b)) & 1

    def labels_from_bits(self, bits2d):
        """Pack rows of 2M bits (MSB first) into label integers."""
        b = np.asarray(bits2d, dtype=np.int64)
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1, dtype=np.int64)
        return b @ weights

    def bits_from_labels(self, labels):
        lab = np.asarray(labels, dtype=np.int64)[:, None]
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1, dtype=np.int64)
        return ((lab >> shifts) & 1).astype(np.uint8)


def shaped_constellation(bits, nu):
    return ShapedConstellation(build_pam(bits), mb_distribution(nu, bits))


def uniform_constellation(bits):
    return shaped_constellation(bits, 0.0)
