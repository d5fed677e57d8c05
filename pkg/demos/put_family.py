"""Basket, max-of-two and min-of-two puts against a Monte Carlo estimate.

The three puts share strike and spot, so their prices must be ordered
max-put <= basket put <= min-put. The Monte Carlo estimate simulates the
same model directly (independent compound Poisson jumps per asset).

    python demos/put_family.py
"""
import math

import numpy as np

from levyfem.harness import PUT_PARAMS, SPOT, RunConfig, price
from levyfem.payoff import PayoffKind


def monte_carlo(p, n_paths=400_000, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_paths, 2))
    w1 = z[:, 0]
    w2 = p.rho * z[:, 0] + math.sqrt(1 - p.rho**2) * z[:, 1]
    finals = []
    for ax, w in ((1, w1), (2, w2)):
        lam, nu, gam = p.axis(ax)
        sig = p.sigma[ax - 1]
        comp = lam * (math.exp(nu + gam * gam / 2) - 1)
        n = rng.poisson(lam * p.T, n_paths)
        jumps = nu * n + gam * np.sqrt(n) * rng.standard_normal(n_paths)
        drift = (p.r - sig * sig / 2 - comp) * p.T
        finals.append(SPOT[ax - 1] * np.exp(drift + sig * math.sqrt(p.T) * w + jumps))
    S1, S2 = finals
    disc = math.exp(-p.r * p.T)
    out = {}
    for name, pay in (("basket_put", p.K - p.w[0] * S1 - p.w[1] * S2),
                      ("max_of_two_put", p.K - np.maximum(S1, S2)),
                      ("min_of_two_put", p.K - np.minimum(S1, S2))):
        v = disc * np.maximum(pay, 0.0)
        out[name] = (v.mean(), v.std() / math.sqrt(n_paths))
    return out


p = PUT_PARAMS.replace(T=0.9)
n = 129
h = 2 * 4.5 * math.sqrt(2) / (n - 1)
mc = monte_carlo(p)
print(f"{'payoff':>16} {'FEM':>8} {'MC':>8} {'MC s.e.':>8}")
for kind in (PayoffKind.MAX_OF_TWO_PUT, PayoffKind.BASKET_PUT, PayoffKind.MIN_OF_TWO_PUT):
    fem = price(RunConfig(params=p, kind=kind, n_per_side=n, delta=0.25 * h))["price"]
    m, se = mc[kind.value]
    print(f"{kind.value:>16} {fem:>8.3f} {m:>8.3f} {se:>8.3f}")
