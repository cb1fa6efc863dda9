"""Fixed-composition distribution matching and shaped frame assembly.

The matcher maps k_in uniform bits to a sequence of n_out amplitudes with
a fixed composition (count per amplitude). It is the exact lexicographic
unranking of the constant-composition multiset: the input bits, read as a
big-endian integer, select the sequence with that rank. k_in is
floor(log2) of the multinomial coefficient, so every input is reachable
and the map is injective; dematching is ranking plus a range check.

Frame assembly places the matched amplitude bits on the systematic input
of a code, copies parity bits onto signs, and fills leftover sign
positions with unshaped data bits.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CcdmSpec",
    "PasFramePlan",
    "build_composition",
    "ccdm_match",
    "ccdm_dematch",
    "plan_frame",
    "pas_encode",
    "pas_decode",
    "frame_bit_positions",
]


@dataclass(frozen=True)
class CcdmSpec:
    """Constant-composition matcher parameters.

    counts[i] sequences of amplitude 2i+1 appear in every output block of
    n_out amplitudes; k_in input bits index the sequences in lexicographic
    order (lower amplitude sorts first).
    """

    n_out: int
    counts: tuple
    k_in: int

    @property
    def amplitudes(self):
        return tuple(range(1, 2 * len(self.counts), 2))


def _multinomial(n, counts):
    total = math.factorial(n)
    for c in counts:
        total //= math.factorial(c)
    return total


def build_composition(dist, n_out):
    """Largest-remainder rounding of n_out * probs into a CcdmSpec.

    Ties in the remainders are broken toward the larger amplitude.
    """
    if n_out < 1:
        raise ValueError(f"block length must be positive, got {n_out}")
    target = n_out * dist.probs
    base = np.floor(target).astype(np.int64)
    remainder = target - base
    deficit = n_out - int(base.sum())
    order = sorted(range(len(base)), key=lambda i: (-remainder[i], -i))
    for i in order[:deficit]:
        base[i] += 1
    counts = tuple(int(c) for c in base)
    k_in = _multinomial(n_out, counts).bit_length() - 1
    return CcdmSpec(n_out=n_out, counts=counts, k_in=k_in)


def _bits_to_int(bits):
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def _int_to_bits(value, width):
    out = np.empty(width, dtype=np.uint8)
    for i in range(width - 1, -1, -1):
        out[i] = value & 1
        value >>= 1
    return out


def ccdm_match(spec, data_bits):
    """Map k_in data bits to the amplitude sequence with that rank."""
    if len(data_bits) != spec.k_in:
        raise ValueError(f"expected {spec.k_in} data bits, got {len(data_bits)}")
    rank = _bits_to_int(data_bits)
    counts = list(spec.counts)
    amps = spec.amplitudes
    n = spec.n_out
    total = _multinomial(n, counts)
    out = np.empty(n, dtype=np.int64)
    for pos in range(n):
        for i, c in enumerate(counts):
            if c == 0:
                continue
            # sequences starting with amplitude i given the remaining counts
            head = total * c // n
            if rank < head:
                out[pos] = amps[i]
                counts[i] -= 1
                total = head
                n -= 1
                break
            rank -= head
    return out


def ccdm_dematch(spec, amplitudes):
    """Rank an amplitude sequence back to its k_in data bits.

    Raises ValueError if the sequence does not have the required
    composition or ranks at or above 2^k_in (a sequence the matcher
    never emits).
    """
    if len(amplitudes) != spec.n_out:
        raise ValueError(f"expected {spec.n_out} amplitudes, got {len(amplitudes)}")
    amps = spec.amplitudes
    index = {a: i for i, a in enumerate(amps)}
    counts = list(spec.counts)
    seen = [0] * len(counts)
    for a in amplitudes:
        i = index.get(int(a))
        if i is None:
            raise ValueError(f"amplitude {a} is not in the alphabet")
        seen[i] += 1
    if seen != counts:
        raise ValueError(f"composition mismatch: got {seen}, expected {list(counts)}")
    n = spec.n_out
    total = _multinomial(n, counts)
    rank = 0
    for a in amplitudes:
        i = index[int(a)]
        for j in range(i):
            if counts[j]:
                rank += total * counts[j] // n
        total = total * counts[i] // n
        counts[i] -= 1
        n -= 1
    if rank >> spec.k_in:
        raise ValueError("sequence ranks outside the matcher input range")
    return _int_to_bits(rank, spec.k_in)


@dataclass(frozen=True)
class PasFramePlan:
    """Bit budget of one shaped frame over an (n, k) systematic code.

    A frame carries n/(2*bits) QAM symbols, i.e. n_amp = n/bits PAM
    symbols per quadrature pair. Each PAM symbol contributes bits-1
    amplitude bits (all systematic) and one sign bit. The n - k parity
    bits land on the first n - k signs; the remaining signs carry
    unshaped data bits, which are also systematic.
    """

    n: int
    k: int
    bits: int
    n_sym: int
    n_amp: int
    n_amp_bits: int
    n_parity_signs: int
    n_unshaped_signs: int
    ccdm: CcdmSpec

    @property
    def data_bits(self):
        """Uniform data bits consumed per frame (matcher input + unshaped signs)."""
        return self.ccdm.k_in + self.n_unshaped_signs


def plan_frame(n, k, bits, dist):
    if bits < 2:
        raise ValueError("shaped frames need at least one amplitude bit per symbol")
    if n % (2 * bits) != 0:
        raise ValueError(f"codeword length {n} is not a multiple of {2 * bits}")
    if not 0 < k < n:
        raise ValueError(f"invalid code dimensions ({n}, {k})")
    n_amp = n // bits
    n_amp_bits = n_amp * (bits - 1)
    n_parity = n - k
    if n_parity > n_amp:
        raise ValueError(
            f"code rate {k}/{n} is below {(bits - 1)}/{bits}; "
            "parity bits would not fit on the sign positions")
    spec = build_composition(dist, n_amp)
    return PasFramePlan(n=n, k=k, bits=bits, n_sym=n // (2 * bits), n_amp=n_amp,
                        n_amp_bits=n_amp_bits, n_parity_signs=n_parity,
                        n_unshaped_signs=n_amp - n_parity, ccdm=spec)


def frame_bit_positions(plan):
    """Codeword position of each transmitted bit, (n_sym, 2*bits) int array.

    Row s column b gives the codeword index of bit b of QAM symbol s
    (MSB first: bits 0..bits-1 label the in-phase PAM, the rest the
    quadrature). Amplitude bits sit at the front of the systematic part
    in PAM-symbol order; sign of PAM symbol t is parity bit t while
    t < n_parity_signs, afterwards an unshaped systematic bit.

    This single map fixes the bit ordering contract between the encoder,
    the decoder and the detector output.
    """
    m = plan.bits
    pos = np.empty((plan.n_sym, 2 * m), dtype=np.int64)
    for t in range(plan.n_amp):
        s, quad = divmod(t, 2)
        col = quad * m
        if t < plan.n_parity_signs:
            pos[s, col] = plan.k + t
        else:
            pos[s, col] = plan.n_amp_bits + (t - plan.n_parity_signs)
        for ell in range(1, m):
            pos[s, col + ell] = t * (m - 1) + (ell - 1)
    return pos


def _check_consistent(plan, code, const):
    if (code.n, code.k) != (plan.n, plan.k):
        raise ValueError(f"code is ({code.n}, {code.k}), plan wants ({plan.n}, {plan.k})")
    if const.pam.bits != plan.bits:
        raise ValueError(f"constellation has {const.pam.bits} bits per PAM, plan wants {plan.bits}")


def pas_encode(plan, code, const, data_bits):
    """Encode one frame of uniform data bits into unit-energy QAM symbols."""
    _check_consistent(plan, code, const)
    data_bits = np.asarray(data_bits, dtype=np.uint8)
    if len(data_bits) != plan.data_bits:
        raise ValueError(f"expected {plan.data_bits} data bits, got {len(data_bits)}")
    amps = ccdm_match(plan.ccdm, data_bits[:plan.ccdm.k_in])
    amp_idx = (amps - 1) // 2
    amp_bits = const.pam.amp_labels[amp_idx]
    systematic = np.concatenate([amp_bits.ravel(), data_bits[plan.ccdm.k_in:]])
    codeword = code.encode(systematic)
    signs = np.empty(plan.n_amp, dtype=np.uint8)
    signs[:plan.n_parity_signs] = codeword[plan.k:]
    signs[plan.n_parity_signs:] = data_bits[plan.ccdm.k_in:]
    pam = (1 - 2 * signs.astype(np.int64)) * amps
    scaled = pam * const.delta
    return scaled[0::2] + 1j * scaled[1::2]


def pas_decode(plan, code, const, llrs):
    """Recover the frame data from codeword-ordered channel LLRs.

    Returns (data_bits, ok); ok is False when the code decoder does not
    converge or the recovered amplitudes cannot be dematched, in which
    case the matcher part of the data is zero-filled.
    """
    _check_consistent(plan, code, const)
    if len(llrs) != plan.n:
        raise ValueError(f"expected {plan.n} LLRs, got {len(llrs)}")
    hard, _, converged = code.decode_minsum(llrs)
    amp_bits = hard[:plan.n_amp_bits].reshape(plan.n_amp, plan.bits - 1)
    amp_idx = const.pam.amp_index_from_bits(amp_bits)
    amps = 2 * amp_idx + 1
    data = np.zeros(plan.data_bits, dtype=np.uint8)
    data[plan.ccdm.k_in:] = hard[plan.n_amp_bits:plan.k]
    ok = bool(converged)
    try:
        data[:plan.ccdm.k_in] = ccdm_dematch(plan.ccdm, amps)
    except ValueError:
        ok = False
    return data, ok
