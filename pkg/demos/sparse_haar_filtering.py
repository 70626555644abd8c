"""
Filtering a sparse signal in a Haar basis
=========================================

A 2-sparse coefficient vector in a 7-function Haar basis on [0, 10] is
observed through white Gaussian noise. Four causal estimates are compared
on one path, then the average loss over a few dozen paths.
"""
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from minimax_filtering.capacity import ChannelModel, ConstraintSet, solve_capacity
from minimax_filtering.experiments import ExperimentConfig, run_fig1
from minimax_filtering.gaussian_filter import (CoefficientPrior, GramPathFilters, PiecewiseMinimaxFilter,
                                               haar_basis, sufficient_stats_path)
from minimax_filtering.simulation import simulate_basis_signal

out = Path(__file__).with_name("output")
out.mkdir(exist_ok=True)

n, k, T = 7, 2, 10.0
P = 10 ** 0.4
prior = solve_capacity(ChannelModel.awgn(), ConstraintSet(avg_power=P, duty_cycle=k / n)).prior
coord = prior.pruned(5)  # 5^7 joint atoms keeps the enumeration small
basis = haar_basis(n, T)

# one path
a = np.zeros(n)
a[[1, 4]] = [3.0, -4.0]
path = simulate_basis_signal(a, basis, 0.01, seed=1)
ys = sufficient_stats_path(path, basis)
g = GramPathFilters(basis, path.grid)
est = {
    "minimax": PiecewiseMinimaxFilter(basis, CoefficientPrior.iid(coord, n))(path),
    "ml-hard": g.ml(ys, hard_k=k),
    "linear": g.linear(ys, P),
    "genie": g.genie(ys, [1, 4], P),
}

fig, ax = plt.subplots(figsize=(7, 4))
ax.plot(path.grid, path.x, "k", lw=2, label="X_t")
for name, xhat in est.items():
    ax.plot(path.grid, xhat, lw=1, label=name)
ax.legend(ncol=3, fontsize=8)
ax.set_xlabel("t")
fig.tight_layout()
fig.savefig(out / "sparse_haar_path.svg")

# averages over 30 random signals
res = run_fig1(ExperimentConfig.defaults("fig1", trials=30), prior=prior, prior_info={"source": "demo"})
print(res.table(), end="")
print("wrote", out / "sparse_haar_path.svg")
