"""Soft-output MIMO detection with shaping-aware tree search.

The sphere decoder minimizes ||y_tilde - R s||^2 / sigma2 plus a per-layer
prior penalty nu_scaled_i * ||s_i||^2, the max-log metric for shaped
inputs. Max-log LLRs come from a repeated tree search: one run finds the
minimum-metric vector s_ml, then for every layer j and bit b one run finds
the best counter-hypothesis with bit b of layer j forced to the complement
of its value in s_ml. Counter runs rearrange the detection order so layer
j sits at the tree root, restrict the root to the complementary bit set,
and start from radius d(s_ml) + clip, which caps |LLR| at the clip value
without affecting smaller LLRs.

LLR convention: positive means bit 0 is more likely.

Everything here treats one vector use at a time; precomputed factorizations
are immutable and may be shared across concurrent uses.
"""

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

__all__ = [
    "QrFactorization",
    "SearchContext",
    "DetectionOutput",
    "sorted_qr",
    "sd_ml",
    "sd_soft_rts",
    "bruteforce_maxlog",
    "mmse_soft",
    "RtsDetector",
]

BRUTEFORCE_LIMIT = 2 ** 20


@dataclass(frozen=True)
class QrFactorization:
    """Sorted QR factors of a channel matrix: H[:, perm] = Q R.

    R has a positive real diagonal. y_tilde and sigma2 are attached per
    observation; factor-only instances have them as None.
    """

    q: np.ndarray
    r: np.ndarray
    perm: np.ndarray
    y_tilde: np.ndarray = None
    sigma2: float = None

    def attach(self, y, sigma2):
        """Bind an observation, returning a new factorization object."""
        if sigma2 <= 0:
            raise ValueError(f"noise variance must be positive, got {sigma2}")
        y = np.asarray(y, dtype=np.complex128)
        if y.shape != (self.q.shape[0],):
            raise ValueError(f"observation shape {y.shape} does not match Q {self.q.shape}")
        return replace(self, y_tilde=self.q.conj().T @ y, sigma2=float(sigma2))


@dataclass
class SearchContext:
    """Mutable per-search state: radius, clip, and the node counter."""

    clip: float = np.inf
    radius: float = np.inf
    node_count: int = 0


@dataclass(frozen=True)
class DetectionOutput:
    """Per-use detector result.

    llrs is flat over layers in original order; layer_slices[j] selects
    layer j's bits (MSB first, in-phase PAM label then quadrature).
    """

    llrs: np.ndarray
    s_ml: np.ndarray
    s_ml_labels: np.ndarray
    nodes_visited: int
    layer_slices: tuple
    ml_metric: float

    def llr(self, layer, bit):
        return self.llrs[self.layer_slices[layer].start + bit]


def sorted_qr(h):
    """QR of H with columns sorted so stronger layers sit nearer the root.

    The tree root is the last elimination index, so columns are permuted by
    ascending norm: the largest-norm column is eliminated last and detected
    first.
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 2 or h.shape[0] < h.shape[1]:
        raise ValueError(f"need M_r >= M_t, got shape {h.shape}")
    norms = np.linalg.norm(h, axis=0)
    perm = np.argsort(norms, kind="stable")
    return _qr_with_perm(h, perm)


def _qr_with_perm(h, perm):
    q, r = np.linalg.qr(h[:, perm], mode="reduced")
    diag = np.diagonal(r).copy()
    scale = np.linalg.norm(h)
    for i, d in enumerate(diag):
        if abs(d) <= 1e-12 * max(scale, 1e-300):
            raise ValueError(f"rank deficiency detected at layer {int(perm[i])}")
    phase = diag / np.abs(diag)
    r = phase.conj()[:, None] * r
    q = q * phase[None, :]
    np.fill_diagonal(r, np.abs(diag))
    return QrFactorization(q=q, r=r, perm=np.asarray(perm, dtype=np.int64))


@njit(cache=True)
def _tree_search(rs, ys, pts, npts, nu, root_cands, r_init):
    """Depth-first search for the minimum prior-augmented distance.

    rs, ys: the triangular system prescaled by 1/sigma. Level L-1 is the
    tree root, level 0 the leaves. pts[i, :npts[i]] are the candidate
    points of level i and nu[i] its prior weight. The root is restricted
    to the candidate indices in root_cands. Children are visited in
    ascending branch-metric order, so the first leaf is the babai point
    and the radius only shrinks. A node is expanded only while its partial
    distance is within the radius; every expansion increments the node
    count.

    Returns (best_metric, best_path_indices, nodes). best_metric is inf if
    the initial radius excluded every leaf.
    """
    levels = rs.shape[0]
    width = pts.shape[1]
    order = np.empty((levels, width), dtype=np.int64)
    emet = np.empty((levels, width), dtype=np.float64)
    nord = np.empty(levels, dtype=np.int64)
    ptr = np.empty(levels, dtype=np.int64)
    dabove = np.empty(levels, dtype=np.float64)
    spath = np.empty(levels, dtype=np.complex128)
    pathidx = np.empty(levels, dtype=np.int64)
    best_path = np.full(levels, -1, dtype=np.int64)
    tmp = np.empty(width, dtype=np.float64)
    best = np.inf
    radius = r_init
    nodes = 0

    level = levels - 1
    n_root = root_cands.size
    for t in range(n_root):
        p = pts[level, root_cands[t]]
        dz = ys[level] - rs[level, level] * p
        tmp[t] = (dz.real * dz.real + dz.imag * dz.imag
                  + nu[level] * (p.real * p.real + p.imag * p.imag))
    root_order = np.argsort(tmp[:n_root])
    for t in range(n_root):
        order[level, t] = root_cands[root_order[t]]
        emet[level, t] = tmp[root_order[t]]
    nord[level] = n_root
    ptr[level] = 0
    dabove[level] = 0.0

    while True:
        if ptr[level] < nord[level]:
            i = ptr[level]
            d = dabove[level] + emet[level, i]
            if d > radius:
                # children are metric-sorted: the rest of this level is out too
                ptr[level] = nord[level]
                continue
            k = order[level, i]
            ptr[level] += 1
            nodes += 1
            spath[level] = pts[level, k]
            pathidx[level] = k
            if level == 0:
                if d < best:
                    best = d
                    radius = d
                    for q in range(levels):
                        best_path[q] = pathidx[q]
            else:
                level -= 1
                dabove[level] = d
                rhs = ys[level]
                for j in range(level + 1, levels):
                    rhs = rhs - rs[level, j] * spath[j]
                n_here = npts[level]
                for t in range(n_here):
                    p = pts[level, t]
                    dz = rhs - rs[level, level] * p
                    tmp[t] = (dz.real * dz.real + dz.imag * dz.imag
                              + nu[level] * (p.real * p.real + p.imag * p.imag))
                child_order = np.argsort(tmp[:n_here])
                for t in range(n_here):
                    order[level, t] = child_order[t]
                    emet[level, t] = tmp[child_order[t]]
                nord[level] = n_here
                ptr[level] = 0
        else:
            if level == levels - 1:
                break
            level += 1
    return best, best_path, nodes


def _as_layer_lists(consts, nus, n_layers):
    try:
        consts = list(consts)
    except TypeError:
        consts = [consts] * n_layers
    if len(consts) == 1 and n_layers > 1:
        consts = consts * n_layers
    if len(consts) != n_layers:
        raise ValueError(f"expected {n_layers} per-layer constellations, got {len(consts)}")
    if nus is None:
        nu = np.array([c.nu_scaled for c in consts], dtype=np.float64)
    else:
        nu = np.asarray(nus, dtype=np.float64)
        if nu.shape != (n_layers,):
            raise ValueError(f"expected {n_layers} prior weights, got shape {nu.shape}")
    return consts, nu


def _detection_arrays(consts, nu, perm):
    n_layers = len(consts)
    width = max(c.size for c in consts)
    pts = np.zeros((n_layers, width), dtype=np.complex128)
    npts = np.empty(n_layers, dtype=np.int64)
    nu_det = np.empty(n_layers, dtype=np.float64)
    for level, layer in enumerate(perm):
        c = consts[layer]
        pts[level, :c.size] = c.points
        npts[level] = c.size
        nu_det[level] = nu[layer]
    return pts, npts, nu_det


class RtsDetector:
    """Repeated-tree-search soft detector bound to one channel realization.

    Precomputes the sorted ML factorization plus one factorization per
    layer (that layer moved to the root) so the 2M*M_t counter searches of
    every vector use reuse them.
    """

    def __init__(self, h, sigma2, consts, nus=None):
        h = np.asarray(h, dtype=np.complex128)
        if sigma2 <= 0:
            raise ValueError(f"noise variance must be positive, got {sigma2}")
        self.m_r, self.m_t = h.shape
        self.consts, self.nu = _as_layer_lists(consts, nus, self.m_t)
        self.sigma = float(np.sqrt(sigma2))
        self.sigma2 = float(sigma2)
        norms = np.linalg.norm(h, axis=0)
        by_norm = np.argsort(norms, kind="stable")
        self._runs = []
        ml_qr = _qr_with_perm(h, by_norm)
        self._runs.append(self._prep(ml_qr))
        for j in range(self.m_t):
            others = np.array([l for l in by_norm if l != j], dtype=np.int64)
            perm = np.concatenate([others, [j]])
            self._runs.append(self._prep(_qr_with_perm(h, perm)))
        offsets = np.cumsum([0] + [c.bits_per_symbol for c in self.consts])
        self.layer_slices = tuple(slice(int(offsets[j]), int(offsets[j + 1]))
                                  for j in range(self.m_t))
        self.n_llrs = int(offsets[-1])

    def _prep(self, qr):
        pts, npts, nu_det = _detection_arrays(self.consts, self.nu, qr.perm)
        rs = np.ascontiguousarray(qr.r / self.sigma)
        full_root = np.arange(npts[-1], dtype=np.int64)
        return qr, rs, pts, npts, nu_det, full_root

    def detect(self, y, clip=np.inf):
        y = np.asarray(y, dtype=np.complex128)
        if y.shape != (self.m_r,):
            raise ValueError(f"observation shape {y.shape}, expected ({self.m_r},)")
        ctx = SearchContext(clip=float(clip))
        qr, rs, pts, npts, nu_det, full_root = self._runs[0]
        ys = (qr.q.conj().T @ y) / self.sigma
        d_ml, path, nodes = _tree_search(rs, ys, pts, npts, nu_det, full_root, np.inf)
        ctx.node_count += int(nodes)
        ctx.radius = d_ml
        labels = np.empty(self.m_t, dtype=np.int64)
        for level, layer in enumerate(qr.perm):
            labels[layer] = path[level]
        llrs = np.empty(self.n_llrs, dtype=np.float64)
        r_counter = d_ml + clip
        for j in range(self.m_t):
            const = self.consts[j]
            qr_j, rs_j, pts_j, npts_j, nu_j, _ = self._runs[1 + j]
            ys_j = (qr_j.q.conj().T @ y) / self.sigma
            base = self.layer_slices[j].start
            for b in range(const.bits_per_symbol):
                ml_bit = const.label_bit(int(labels[j]), b)
                counter_root = const.bit_sets[b][1 - ml_bit]
                d_bar, _, nodes = _tree_search(
                    rs_j, ys_j, pts_j, npts_j, nu_j, counter_root, r_counter)
                ctx.node_count += int(nodes)
                magnitude = min(d_bar - d_ml, clip)
                llrs[base + b] = magnitude if ml_bit == 0 else -magnitude
        points = np.array([self.consts[j].points[labels[j]] for j in range(self.m_t)])
        return DetectionOutput(llrs=llrs, s_ml=points, s_ml_labels=labels,
                               nodes_visited=ctx.node_count,
                               layer_slices=self.layer_slices, ml_metric=float(d_ml))


def sd_ml(qr, consts, nus=None):
    """Minimum prior-augmented metric vector on an attached factorization.

    Returns (s_ml in original layer order, metric, nodes).
    """
    if qr.y_tilde is None or qr.sigma2 is None:
        raise ValueError("factorization has no observation; call attach(y, sigma2) first")
    n_layers = qr.r.shape[0]
    consts, nu = _as_layer_lists(consts, nus, n_layers)
    pts, npts, nu_det = _detection_arrays(consts, nu, qr.perm)
    sigma = np.sqrt(qr.sigma2)
    rs = np.ascontiguousarray(qr.r / sigma)
    ys = qr.y_tilde / sigma
    full_root = np.arange(npts[-1], dtype=np.int64)
    metric, path, nodes = _tree_search(rs, ys, pts, npts, nu_det, full_root, np.inf)
    s_ml = np.empty(n_layers, dtype=np.complex128)
    for level, layer in enumerate(qr.perm):
        s_ml[layer] = pts[level, path[level]]
    return s_ml, float(metric), int(nodes)


def sd_soft_rts(y, h, sigma2, consts, nus=None, clip=np.inf):
    """One-shot repeated tree search; see RtsDetector for reuse across uses."""
    return RtsDetector(h, sigma2, consts, nus).detect(y, clip=clip)


def bruteforce_maxlog(y, h, sigma2, consts, nus=None):
    """Max-log LLRs by full enumeration of the transmit alphabet.

    Deliberately avoids the QR route so it can serve as an independent
    oracle for the tree search.
    """
    h = np.asarray(h, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    if sigma2 <= 0:
        raise ValueError(f"noise variance must be positive, got {sigma2}")
    m_r, m_t = h.shape
    consts, nu = _as_layer_lists(consts, nus, m_t)
    sizes = [c.size for c in consts]
    total = int(np.prod(sizes))
    if total > BRUTEFORCE_LIMIT:
        raise ValueError(f"{total} candidates exceed the enumeration limit {BRUTEFORCE_LIMIT}")
    grid = np.indices(sizes).reshape(m_t, total).T
    s = np.empty((total, m_t), dtype=np.complex128)
    prior = np.zeros(total, dtype=np.float64)
    for j in range(m_t):
        s[:, j] = consts[j].points[grid[:, j]]
        prior += nu[j] * np.abs(s[:, j]) ** 2
    resid = y[None, :] - s @ h.T
    metrics = (np.abs(resid) ** 2).sum(axis=1) / sigma2 + prior
    winner = int(np.argmin(metrics))
    offsets = np.cumsum([0] + [c.bits_per_symbol for c in consts])
    layer_slices = tuple(slice(int(offsets[j]), int(offsets[j + 1])) for j in range(m_t))
    llrs = np.empty(int(offsets[-1]), dtype=np.float64)
    for j, c in enumerate(consts):
        width = c.bits_per_symbol
        for b in range(width):
            bit = (grid[:, j] >> (width - 1 - b)) & 1
            m0 = metrics[bit == 0].min()
            m1 = metrics[bit == 1].min()
            llrs[layer_slices[j].start + b] = m1 - m0
    return DetectionOutput(llrs=llrs, s_ml=s[winner].copy(),
                           s_ml_labels=grid[winner].astype(np.int64),
                           nodes_visited=total, layer_slices=layer_slices,
                           ml_metric=float(metrics[winner]))


def _scalar_maxlog(z, noise_var, const, nu):
    """Max-log LLRs of one symbol in AWGN with effective variance noise_var."""
    metrics = np.abs(z - const.points) ** 2 / noise_var + nu * np.abs(const.points) ** 2
    llrs = np.empty(const.bits_per_symbol, dtype=np.float64)
    for b in range(const.bits_per_symbol):
        zero, one = const.bit_sets[b]
        llrs[b] = metrics[one].min() - metrics[zero].min()
    return llrs, int(np.argmin(metrics))


def mmse_soft(y, h, sigma2, consts, use_priors=True):
    """Linear MMSE detection with per-layer scalar max-log demapping.

    The equalized layer is modeled as Gaussian with effective gain mu_j and
    noise (1 - mu_j)/mu_j; symbol priors enter the scalar metric unless
    use_priors is False.
    """
    h = np.asarray(h, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    if sigma2 <= 0:
        raise ValueError(f"noise variance must be positive, got {sigma2}")
    m_r, m_t = h.shape
    if y.shape != (m_r,):
        raise ValueError(f"observation shape {y.shape}, expected ({m_r},)")
    consts, nu = _as_layer_lists(consts, None, m_t)
    gram = h.conj().T @ h + sigma2 * np.eye(m_t)
    try:
        w = np.linalg.solve(gram, h.conj().T)
    except np.linalg.LinAlgError:
        raise ValueError("regularized Gram matrix is singular") from None
    z = w @ y
    gain = np.real(np.diagonal(w @ h))
    gain = np.clip(gain, 1e-12, 1.0 - 1e-12)
    offsets = np.cumsum([0] + [c.bits_per_symbol for c in consts])
    layer_slices = tuple(slice(int(offsets[j]), int(offsets[j + 1])) for j in range(m_t))
    llrs = np.empty(int(offsets[-1]), dtype=np.float64)
    labels = np.empty(m_t, dtype=np.int64)
    points = np.empty(m_t, dtype=np.complex128)
    for j, c in enumerate(consts):
        z_eq = z[j] / gain[j]
        noise_eff = (1.0 - gain[j]) / gain[j]
        layer_nu = nu[j] if use_priors else 0.0
        layer_llrs, label = _scalar_maxlog(z_eq, noise_eff, c, layer_nu)
        llrs[layer_slices[j]] = layer_llrs
        labels[j] = label
        points[j] = c.points[label]
    return DetectionOutput(llrs=llrs, s_ml=points, s_ml_labels=labels,
                           nodes_visited=0, layer_slices=layer_slices,
                           ml_metric=float("nan"))
