"""Bracket closures for k+1 random codimension-k rotation structures.

Each structure fixes a random k-dimensional subspace of R^m and rotates its
complement, generating a copy of so(m-k).  For every (m, k) the script
reports the closure dimension of all k+1 algebras, the largest closure over
k-element subsets, and the dimension of the common fixed space.  Whether
such configurations force a codimension-1 structure is an open question;
this only tabulates what the closures look like, and asserts nothing.

    python3 scripts/codim_k_closure.py --max-dim 7 --trials 20 --seed 0
"""

import argparse
import itertools
from collections import Counter

import numpy as np

from affrev.symmetry import embedded_so_generators, lie_bracket_closure


def random_fixed_space(rng, m, k):
    q, _ = np.linalg.qr(rng.standard_normal((m, k)))
    return q


def shared_line_fixed_space(rng, m, k):
    # every fixed space contains e_m, so the closure must fix that line
    e = np.zeros((m, 1))
    e[-1] = 1.0
    rest = rng.standard_normal((m, k - 1))
    rest[-1] = 0.0
    q, _ = np.linalg.qr(np.hstack((e, rest)))
    return q


def trial(rng, m, k, sampler):
    gens = [embedded_so_generators(sampler(rng, m, k)) for _ in range(k + 1)]
    total = lie_bracket_closure([g for gs in gens for g in gs])
    best_subset = max(lie_bracket_closure([g for i in sub for g in gens[i]]).dim
                      for sub in itertools.combinations(range(k + 1), k))
    return total.dim, best_subset, total.fixed_space().shape[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-dim", type=int, default=7)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    print(f"{'m':>2} {'k':>2} {'config':<12} {'dim so(m)':>9} {'dim so(m-1)':>11}  outcomes (total, best k-subset, fixed dim) x count")
    for m in range(4, args.max_dim + 1):
        for k in range(2, m - 1):
            for name, sampler in (("generic", random_fixed_space), ("shared-line", shared_line_fixed_space)):
                counts = Counter(trial(rng, m, k, sampler) for _ in range(args.trials))
                desc = ", ".join(f"{key} x{n}" for key, n in sorted(counts.items()))
                print(f"{m:>2} {k:>2} {name:<12} {m * (m - 1) // 2:>9} {(m - 1) * (m - 2) // 2:>11}  {desc}")


if __name__ == "__main__":
    main()
