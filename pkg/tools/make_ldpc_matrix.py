"""Generate the shipped rate-1/2 n=648 quasi-cyclic parity-check matrix.

Base graph: 12x24 with lifting factor Z=27.  The parity half is the usual
dual-diagonal accumulator structure; the systematic half has column weight 3
with circulant shifts drawn deterministically and re-drawn until the lifted
graph is 4-cycle-free and H has full rank.

Run from the repo root:  python tools/make_ldpc_matrix.py
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from openisac.fec import LdpcCode, dump_alist  # noqa: E402

Z = 27
MB, NB = 12, 24


def expand(base):
    h = np.zeros((MB * Z, NB * Z), dtype=np.uint8)
    eye = np.eye(Z, dtype=np.uint8)
    for i in range(MB):
        for j in range(NB):
            s = base[i][j]
            if s >= 0:
                h[i * Z:(i + 1) * Z, j * Z:(j + 1) * Z] = np.roll(eye, -s, axis=1)
    return h


def has_short_cycle(base):
    # 4-cycle in the lifted graph iff the shift differences of a 2x2
    # all-nonzero submatrix cancel mod Z
    for j1 in range(NB):
        for j2 in range(j1 + 1, NB):
            rows = [i for i in range(MB) if base[i][j1] >= 0 and base[i][j2] >= 0]
            for a in range(len(rows)):
                for b in range(a + 1, len(rows)):
                    i1, i2 = rows[a], rows[b]
                    d = (base[i1][j1] - base[i1][j2] + base[i2][j2] - base[i2][j1]) % Z
                    if d == 0:
                        return True
    return False


def build(seed):
    rng = np.random.default_rng(seed)
    base = [[-1] * NB for _ in range(MB)]
    # dual-diagonal parity half (columns 12..23)
    base[0][12] = 1
    base[MB // 2][12] = 0
    base[MB - 1][12] = 1
    for j in range(1, MB):
        base[j - 1][12 + j] = 0
        base[j][12 + j] = 0
    # systematic half: column weight 3 and row weight 3 (three superimposed
    # permutations), so lifted row weights stay uniform at 5-6
    while True:
        perms = [rng.permutation(MB) for _ in range(3)]
        cols = [{perms[0][j], perms[1][j], perms[2][j]} for j in range(12)]
        if all(len(c) == 3 for c in cols):
            break
    for j in range(12):
        for i in cols[j]:
            base[i][j] = int(rng.integers(0, Z))
    return base


def main():
    seed = 0
    while True:
        base = build(seed)
        if has_short_cycle(base):
            seed += 1
            continue
        h = expand(base)
        try:
            code = LdpcCode(h)
        except Exception:
            seed += 1
            continue
        print(f"seed {seed}: n={code.n} k={code.k}, "
              f"row weights {sorted(set(h.sum(axis=1).tolist()))}, "
              f"col weights {sorted(set(h.sum(axis=0).tolist()))}")
        out = Path(__file__).resolve().parents[1] / "src/openisac/data/ldpc_n648_r12.alist"
        out.write_text(dump_alist(h))
        print(f"wrote {out}")
        return


if __name__ == "__main__":
    main()
