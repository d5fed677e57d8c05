"""Price the (S1 + S2)^2 claim with the FEM engine and compare with its closed form.

Shows the three time steppers on a sequence of meshes. The error at the
money shrinks about threefold per mesh halving at these sizes.

    python demos/polynomial_option.py
"""
from levyfem.analytic import bs_polynomial_price, elm_polynomial_price
from levyfem.fem import build_mesh
from levyfem.harness import POLY_PARAMS, SPOT
from levyfem.payoff import PayoffKind, PayoffSpec
from levyfem.timestepper import Scheme, SchemeConfig, run

p = POLY_PARAMS.replace(sigma=(0.2, 0.2), rho=0.3, T=0.5)
spec = PayoffSpec(PayoffKind.POLYNOMIAL, 1.0, p)
exact = float(elm_polynomial_price(p, 0.0, *SPOT))
print(f"closed form with jumps {exact:.3f}, without jumps {float(bs_polynomial_price(p, 0.0, *SPOT)):.3f}")

print(f"{'n':>5} {'scheme':>22} {'price':>12} {'rel err':>10} {'seconds':>8}")
for n in (33, 65, 129):
    space = build_mesh(4.5, n)
    for scheme in Scheme:
        surf = run(space, spec, SchemeConfig.for_horizon(p.T, 0.01, scheme))
        v = float(surf.price(*SPOT))
        print(f"{n:>5} {scheme.value:>22} {v:>12.3f} {abs(v - exact) / exact:>10.2e} {surf.meta['elapsed_s']:>8.2f}")
