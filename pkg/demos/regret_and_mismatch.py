"""
Regret, capacity and the cost of mismatch
=========================================

Three small checks on finite instances:

* the capacity of the index-to-output channel equals the minimax divergence;
* a Bayes filter built for the wrong mixture pays exactly the divergence
  between output laws (Monte Carlo vs quadrature);
* few sources can have regret much below the minimax value.
"""
import numpy as np

from minimax_filtering.distributions import normalize
from minimax_filtering.info_metrics import (kl_rows, minimax_mixture, regret_capacity_oracle,
                                            strong_regret_check, weights_on_sources)
from minimax_filtering.simulation import (POISSON, NATURAL_POISSON, dc_mixture_filter, kl_output_oracle,
                                          regret_report, simulate_poisson)

rng = np.random.default_rng(0)
W = rng.dirichlet(np.ones(5), size=4)
r = regret_capacity_oracle(W)
print(f"capacity {r.capacity:.8f}  minimax {r.minimax:.8f}  gap {r.gap:.1e}")

# mismatch: Poisson DC sources scored by a filter that assumes a two-point mixture
mix = normalize([0.5, 0.5], [0.5, 2.0])
T = 10.0
sources = {f"x={x}": (lambda i, x=x: simulate_poisson(x, T, 0.01, 5, i)) for x in (0.5, 1.0, 2.0)}
kl = {("mix", s): kl_output_oracle(float(s[2:]), mix, POISSON, T) for s in sources}
rep = regret_report({"mix": dc_mixture_filter(mix, POISSON)}, sources, NATURAL_POISSON, 2000, kl=kl)
print(rep.to_table(), end="")

# strong regret on a near-identity channel
K = 16
W = np.full((K, K), 0.01 / (K - 1))
np.fill_diagonal(W, 0.99)
w, C = minimax_mixture(W)
wv = weights_on_sources(w, K)
q = 0.5 * W[0] + 0.5 * W[1]  # a filter that bets on two sources
for eps in (0.3, 0.6, 0.9):
    s = strong_regret_check(kl_rows(W, q), wv, C, eps)
    print(f"eps={eps}: mass with regret <= (1-eps)C is {s.bad_mass:.3f}, bound {s.bound:.3f}")
