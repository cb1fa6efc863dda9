"""Generate the bundled parity-check matrices (alist files).

Builds the (7,4) Hamming code plus two progressive-edge-growth LDPC codes
with variable degree 3: a rate-2/3 (1200, 800) code and a rate-0.88
(1200, 1056) code. PEG adds one edge at a time, connecting each variable
to a minimum-degree check among those farthest from it in the current
graph, which keeps short cycles out. Output goes to src/mimopas/codes/.

Run from the repository root:  python scripts/gen_codes.py
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from mimopas.fec import _systematic_form, load_alist  # noqa: E402

OUT_DIR = Path(__file__).resolve().parents[1] / "src" / "mimopas" / "codes"

HAMMING_74 = np.array([
    [1, 0, 1, 0, 1, 0, 1],
    [0, 1, 1, 0, 0, 1, 1],
    [0, 0, 0, 1, 1, 1, 1],
], dtype=np.uint8)


def peg_construct(n_vars, n_checks, var_degree, seed):
    rng = np.random.default_rng(seed)
    var_adj = [[] for _ in range(n_vars)]
    check_vars = [[] for _ in range(n_checks)]
    check_deg = np.zeros(n_checks, dtype=np.int64)
    everything = frozenset(range(n_checks))
    for v in range(n_vars):
        for _ in range(var_degree):
            if not var_adj[v]:
                candidates = everything
            else:
                candidates = _far_checks(v, var_adj, check_vars, n_checks)
                if not candidates:
                    candidates = everything - set(var_adj[v])
            cand = np.fromiter(candidates, dtype=np.int64)
            cand.sort()
            degs = check_deg[cand]
            best = cand[degs == degs.min()]
            c = int(best[rng.integers(best.size)])
            var_adj[v].append(c)
            check_vars[c].append(v)
            check_deg[c] += 1
    return var_adj


def _far_checks(v, var_adj, check_vars, n_checks):
    """Checks outside the largest BFS neighborhood of v that still has a complement."""
    reached = set(var_adj[v])
    vars_seen = {v}
    while True:
        new_vars = set()
        for c in reached:
            for u in check_vars[c]:
                if u not in vars_seen:
                    new_vars.add(u)
        vars_seen.update(new_vars)
        new_reached = set(reached)
        for u in new_vars:
            new_reached.update(var_adj[u])
        if len(new_reached) == n_checks or len(new_reached) == len(reached):
            return set(range(n_checks)) - reached
        reached = new_reached


def adjacency_to_matrix(var_adj, n_checks):
    h = np.zeros((n_checks, len(var_adj)), dtype=np.uint8)
    for v, checks in enumerate(var_adj):
        for c in checks:
            h[c, v] = 1
    return h


def write_alist(h, path):
    m, n = h.shape
    col_lists = [np.nonzero(h[:, v])[0] + 1 for v in range(n)]
    row_lists = [np.nonzero(h[c, :])[0] + 1 for c in range(m)]
    max_col = max(len(c) for c in col_lists)
    max_row = max(len(r) for r in row_lists)
    lines = [f"{n} {m}", f"{max_col} {max_row}"]
    lines.append(" ".join(str(len(c)) for c in col_lists))
    lines.append(" ".join(str(len(r)) for r in row_lists))
    for entries in col_lists:
        padded = list(entries) + [0] * (max_col - len(entries))
        lines.append(" ".join(str(e) for e in padded))
    for entries in row_lists:
        padded = list(entries) + [0] * (max_row - len(entries))
        lines.append(" ".join(str(e) for e in padded))
    path.write_text("\n".join(lines) + "\n")


def build_peg_code(n_vars, n_checks, var_degree, seed, path):
    for attempt in range(20):
        var_adj = peg_construct(n_vars, n_checks, var_degree, seed + attempt)
        h = adjacency_to_matrix(var_adj, n_checks)
        try:
            _systematic_form(h)
        except ValueError:
            print(f"  seed {seed + attempt}: rank-deficient, retrying", file=sys.stderr)
            continue
        write_alist(h, path)
        code = load_alist(path)
        assert code.n == n_vars and code.k == n_vars - n_checks
        print(f"wrote {path} ({code.n}, {code.k})")
        return
    raise RuntimeError(f"no full-rank PEG graph found for ({n_vars}, {n_checks})")


def main():
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    hamming_path = OUT_DIR / "hamming_7_4.alist"
    write_alist(HAMMING_74, hamming_path)
    code = load_alist(hamming_path)
    assert (code.n, code.k) == (7, 4)
    print(f"wrote {hamming_path} (7, 4)")
    build_peg_code(1200, 400, 3, seed=7, path=OUT_DIR / "peg_1200_800.alist")
    build_peg_code(1200, 144, 3, seed=11, path=OUT_DIR / "peg_1200_1056.alist")


if __name__ == "__main__":
    main()
