"""
Estimating a constant Poisson intensity
=======================================

X is an unknown constant in [0.5, 2] and N_t counts arrivals. The minimax
filter is the posterior mean under the capacity-achieving prior; it is
compared with clipped maximum likelihood and the uniform-prior filter, both
at each fixed X (worst case) and with X drawn uniformly.
"""
from pathlib import Path

from minimax_filtering.experiments import ExperimentConfig, run_fig2, write_outputs

cfg = ExperimentConfig.defaults("fig2", trials=100)
res = run_fig2(cfg)
print("prior:")
print(res.prior.to_text(), end="")
print()
print(res.table(), end="")

arts = write_outputs(res, Path(__file__).with_name("output"))
for kind, p in arts.items():
    print(f"wrote {kind}: {p}")
