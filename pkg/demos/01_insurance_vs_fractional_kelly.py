"""
Portfolio insurance against fractional Kelly
============================================

One risky asset with drift 8% and volatility 20% over a year. The Kelly
proportion is b / sigma^2 = 2, so the remaining Kelly variance at time 0 is
|sigma v*|^2 T = 0.16.
"""

# %%
import numpy as np

from quantfolio import Equilibrium, FractionalKelly, MarketModel, kelly_curve
from quantfolio.quantile import crossover_a, median_equilibrium, median_fractional_kelly
from quantfolio.simulator import SimConfig, empirical_quantile, quantile_stderr, simulate

market = MarketModel.constant(1.0, 0.08, 0.2)
kelly = kelly_curve(market)
V0 = kelly.variance(0.0)
print("v* =", kelly.v_star(0.0), " V(0) =", V0)

# %%
# Medians from the closed forms, checked against a simulated batch.
xi, x0 = 60.0, 100.0
for strat, closed in [
    (Equilibrium(xi), median_equilibrium(xi, 0, x0, V0)),
    (FractionalKelly(0.5), median_fractional_kelly(0.5, 0, x0, V0)),
]:
    batch = simulate(strat, market, kelly, 0.0, x0, SimConfig(400_000, seed=1))
    mc = empirical_quantile(batch, 0, 0.5)
    se = quantile_stderr(batch.terminal(), 0.5)
    print(f"{type(strat).__name__:16s} closed {closed:9.4f}  MC {mc:9.4f} +/- {se:.4f}")

# %%
# Half Kelly has the higher median only while wealth is below a * xi.
a = crossover_a(0.5, V0)
print(f"crossover ratio a = {a:.6f}, wealth level {a * xi:.3f}")
for x in np.linspace(80, 400, 9):
    eq = median_equilibrium(xi, 0, x, V0)
    fk = median_fractional_kelly(0.5, 0, x, V0)
    print(f"x = {x:6.1f}   insurance {eq:8.3f}   half Kelly {fk:8.3f}   {'half Kelly' if fk > eq else 'insurance'}")
