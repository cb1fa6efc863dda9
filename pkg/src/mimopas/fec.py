"""Binary LDPC codes: alist loading, systematic encoding, min-sum decoding.

The parity-check matrix comes from an alist file. Encoding brings H to
reduced row echelon form over GF(2) with pivots chosen from the right, so
the n - k pivot columns carry parity and the remaining k columns carry
data. Codewords are transmitted data-first: bit i < k is systematic bit
i, bit k + j is the parity bit of pivot row j. All decoder interfaces use
this transmit order.

LLR convention throughout: positive means bit 0 is more likely.

Decoding is layered (row-serial) normalized min-sum: each check row
updates its extrinsic messages and the posteriors immediately, so one
iteration sweeps every row once. Early exit on a zero syndrome.
"""

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

__all__ = ["ParityCheckCode", "load_alist", "load_code", "encode", "decode_minsum",
           "DEFAULT_ITERATIONS", "DEFAULT_ALPHA"]

DEFAULT_ITERATIONS = 25
DEFAULT_ALPHA = 0.75


@dataclass(frozen=True)
class ParityCheckCode:
    """An (n, k) binary code in transmit order (data bits then parity).

    row_ptr/row_cols hold the check adjacency in CSR form against
    transmit bit positions. parity_of[j] @ data (mod 2) is parity bit j.
    """

    n: int
    k: int
    row_ptr: np.ndarray
    row_cols: np.ndarray
    parity_of: np.ndarray
    name: str = field(default="", compare=False)

    @property
    def n_checks(self):
        return len(self.row_ptr) - 1

    def encode(self, data_bits):
        data = np.asarray(data_bits, dtype=np.uint8)
        if data.shape != (self.k,):
            raise ValueError(f"expected {self.k} data bits, got {data.shape}")
        parity = (self.parity_of.astype(np.int64) @ data.astype(np.int64)) & 1
        return np.concatenate([data, parity.astype(np.uint8)])

    def syndrome(self, bits):
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.shape != (self.n,):
            raise ValueError(f"expected {self.n} bits, got {bits.shape}")
        sums = np.add.reduceat(bits[self.row_cols].astype(np.int64), self.row_ptr[:-1])
        return (sums & 1).astype(np.uint8)

    def decode_minsum(self, llrs, max_iters=DEFAULT_ITERATIONS, alpha=DEFAULT_ALPHA):
        """Decode channel LLRs, returning (hard_bits, iterations_used, converged)."""
        llrs = np.ascontiguousarray(llrs, dtype=np.float64)
        if llrs.shape != (self.n,):
            raise ValueError(f"expected {self.n} LLRs, got {llrs.shape}")
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"normalization alpha must be in (0, 1], got {alpha}")
        posterior, iterations, converged = _minsum_layered(
            self.row_ptr, self.row_cols, llrs, int(max_iters), float(alpha))
        hard = (posterior < 0).astype(np.uint8)
        return hard, int(iterations), bool(converged)


@njit(cache=True)
def _minsum_layered(row_ptr, row_cols, llrs, max_iterations, scale):
    n_checks = row_ptr.size - 1
    n_edges = row_cols.size
    msg = np.zeros(n_edges)
    post = llrs.copy()
    t = np.empty(n_edges)
    iterations = 0
    for _ in range(max_iterations):
        iterations += 1
        for r in range(n_checks):
            lo, hi = row_ptr[r], row_ptr[r + 1]
            min1 = np.inf
            min2 = np.inf
            arg1 = lo
            neg = 0
            for e in range(lo, hi):
                v = post[row_cols[e]] - msg[e]
                t[e] = v
                if v < 0.0:
                    neg += 1
                    v = -v
                if v < min1:
                    min2 = min1
                    min1 = v
                    arg1 = e
                elif v < min2:
                    min2 = v
            for e in range(lo, hi):
                mag = min2 if e == arg1 else min1
                s = -1.0 if (t[e] < 0.0) != (neg % 2 == 1) else 1.0
                new = scale * s * mag
                msg[e] = new
                post[row_cols[e]] = t[e] + new
        ok = True
        for r in range(n_checks):
            parity = 0
            for e in range(row_ptr[r], row_ptr[r + 1]):
                if post[row_cols[e]] < 0.0:
                    parity ^= 1
            if parity:
                ok = False
                break
        if ok:
            return post, iterations, True
    return post, iterations, False


def _parse_alist(text):
    tokens = text.split()
    it = iter(tokens)

    def take(count):
        return [int(next(it)) for _ in range(count)]

    try:
        n, m = take(2)
        max_col, max_row = take(2)
        col_deg = take(n)
        row_deg = take(m)
        h = np.zeros((m, n), dtype=np.uint8)
        for col in range(n):
            entries = take(max_col)
            live = [e for e in entries if e != 0]
            if len(live) != col_deg[col]:
                raise ValueError(f"column {col} lists {len(live)} rows, degree says {col_deg[col]}")
            for e in live:
                h[e - 1, col] = 1
        for row in range(m):
            entries = take(max_row)
            live = sorted(e - 1 for e in entries if e != 0)
            if live != sorted(np.nonzero(h[row])[0].tolist()):
                raise ValueError(f"row {row} adjacency disagrees with the column lists")
    except StopIteration:
        raise ValueError("truncated alist data") from None
    return h


def _systematic_form(h):
    """RREF with pivots scanned right to left.

    Returns (pivot_cols in row order, data_cols ascending, reduced matrix).
    """
    r = h.copy()
    m, n = r.shape
    pivot_cols = []
    row = 0
    for col in range(n - 1, -1, -1):
        if row == m:
            break
        hits = np.nonzero(r[row:, col])[0]
        if hits.size == 0:
            continue
        pivot = row + hits[0]
        if pivot != row:
            r[[row, pivot]] = r[[pivot, row]]
        others = np.nonzero(r[:, col])[0]
        for o in others:
            if o != row:
                r[o] ^= r[row]
        pivot_cols.append(col)
        row += 1
    if row < m:
        raise ValueError(f"parity-check matrix is rank-deficient: rank {row} of {m} rows")
    data_cols = sorted(set(range(n)) - set(pivot_cols))
    return pivot_cols, data_cols, r


def load_alist(source, name=""):
    """Build a ParityCheckCode from alist text, a path, or a Path."""
    if isinstance(source, Path):
        text = source.read_text()
        name = name or source.stem
    elif "\n" not in source and source.endswith(".alist"):
        text = Path(source).read_text()
        name = name or Path(source).stem
    else:
        text = source
    h = _parse_alist(text)
    m, n = h.shape
    pivot_cols, data_cols, rref = _systematic_form(h)
    k = n - m
    # transmit position of each original column
    order = np.array(data_cols + pivot_cols, dtype=np.int64)
    inverse = np.empty(n, dtype=np.int64)
    inverse[order] = np.arange(n)
    parity_of = rref[np.arange(m)][:, data_cols].astype(np.uint8)
    cols = []
    ptr = [0]
    for rowi in range(m):
        adj = np.sort(inverse[np.nonzero(h[rowi])[0]])
        cols.append(adj)
        ptr.append(ptr[-1] + len(adj))
    return ParityCheckCode(n=n, k=k,
                           row_ptr=np.array(ptr, dtype=np.int64),
                           row_cols=np.concatenate(cols).astype(np.int64),
                           parity_of=parity_of, name=name)


def encode(code, data_bits):
    return code.encode(data_bits)


def decode_minsum(code, llrs, max_iters=DEFAULT_ITERATIONS, alpha=DEFAULT_ALPHA):
    return code.decode_minsum(llrs, max_iters=max_iters, alpha=alpha)


def load_code(spec):
    """Load a bundled code by name or any alist file by path."""
    path = Path(spec)
    if path.suffix == ".alist" and path.exists():
        return load_alist(path)
    bundled = importlib.resources.files("mimopas").joinpath(f"codes/{spec}.alist")
    if bundled.is_file():
        return load_alist(bundled.read_text(), name=str(spec))
    raise ValueError(f"unknown code {spec!r}: not a bundled name and not an alist file")
