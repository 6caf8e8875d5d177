"""How close is the regularized distance to the exact optimum?

Builds a few small random mass-field pairs, solves each with the exact
transportation simplex and with Sinkhorn scaling at shrinking eps, and prints
the gap. The regularized value approaches the exact optimum as eps -> 0; at
eps = 1e-3 the gap is already a few parts in a thousand.

Run:  python3 demos/sinkhorn_vs_exact.py
"""
import numpy as np

from otvelo import (
    GridGeometry, KernelSpec, MassField, build_cost, exact_wasserstein,
    sinkhorn, wasserstein_value,
)


def random_field(geometry, rng):
    weights = rng.uniform(0.1, 1.0, geometry.n)
    return MassField(geometry, weights / weights.sum(),
                     np.ones(geometry.n, dtype=bool), 1e-10)


def run():
    g = GridGeometry(4, 4, 250.0)
    cost = build_cost(g)
    rng = np.random.default_rng(20260814)

    print("exact optimum vs W_eps on random 4x4 pairs")
    print(f"{'pair':>4} {'W_exact':>12} " +
          " ".join(f"{'gap@' + str(e):>12}" for e in (0.1, 0.01, 0.001)))
    for trial in range(5):
        p = random_field(g, rng)
        q = random_field(g, rng)
        exact = exact_wasserstein(p, q, cost)
        gaps = []
        for eps in (1e-1, 1e-2, 1e-3):
            pair = sinkhorn(p, q, KernelSpec(eps, "dense"), tol=1e-6,
                            max_iter=20000)
            gaps.append(exact.value - wasserstein_value(p, q, pair))
        print(f"{trial:>4} {exact.value:>12.6f} " +
              " ".join(f"{gap:>12.2e}" for gap in gaps))

    # A nearly pure two-pixel swap drives the plain iteration out of float
    # range at small eps; the log-domain mode handles it and recovers the
    # expected cost of moving all mass one (normalized) pixel: 0.5^2 = 0.25.
    g2 = GridGeometry(2, 1, 250.0)
    p = MassField(g2, np.array([1 - 1e-9, 1e-9]), np.ones(2, bool), 1e-10)
    q = MassField(g2, np.array([1e-9, 1 - 1e-9]), np.ones(2, bool), 1e-10)
    pair = sinkhorn(p, q, KernelSpec(1e-4, "dense"), tol=1e-10,
                    max_iter=100000, log_domain=True)
    w = wasserstein_value(p, q, pair)
    print(f"\ntwo-pixel swap, eps=1e-4, log-domain: W = {w:.6f} "
          f"(pure-swap cost 0.25), {pair.iterations} iterations")


if __name__ == "__main__":
    run()
