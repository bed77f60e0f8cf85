"""
Pre-committed and naive investors
=================================

A pre-committed plan fixed at time 0 ends at one of two wealth levels.
A naive investor re-solves that plan at every instant and takes ever larger
positions as the horizon approaches; the median of their wealth slides
toward the floor.
"""

# %%
import numpy as np

from quantfolio import MarketModel, PreCommitted, kelly_curve
from quantfolio.quantile import naive_running_median
from quantfolio.simulator import SimConfig, simulate
from quantfolio.strategies import PreCommittedState, naive_delta

market = MarketModel.constant(1.0, 0.08, 0.2)
kelly = kelly_curve(market)
state = PreCommittedState.build(60.0, 100.0, kelly)
print(f"k* = {state.k_star:.6f}, cap = {state.cap:.6f}")

# %%
batch = simulate(PreCommitted(60.0, 100.0), market, kelly, 0.0, 100.0, SimConfig(200_000, seed=5))
vals, counts = np.unique(np.round(batch.terminal(), 6), return_counts=True)
for v, c in zip(vals, counts):
    print(f"terminal wealth {v:10.4f}  share {c / batch.num_paths:.4f}")

# %%
# The naive multiplier exceeds one and blows up near the horizon.
for t in (0.0, 0.5, 0.9, 0.99, 0.9999):
    print(f"t = {t:<7} Delta = {naive_delta(kelly.variance(t)):9.3f}")

# %%
# Median of naive wealth at intermediate dates. The approach to the floor
# is slow: it is only logarithmic in the remaining time.
for tau in (0.5, 0.9, 0.99, 0.9999, 1 - 1e-8):
    print(f"tau = {tau:<12} median {naive_running_median(60.0, 0.0, 100.0, tau, market, kelly):9.4f}")
