"""
What happens when the investor deviates for a short while
=========================================================

Hold some other dollar amount for eps years, then go back to the rule.
For the insurance rule at the median every such deviation lowers the
median of terminal wealth, to first order by ``rate * eps``.
"""

# %%
from quantfolio import Equilibrium, MarketModel, allocation, kelly_curve
from quantfolio.quantile import deviation_rate
from quantfolio.simulator import SimConfig, boundary_deviation_test, extrapolate_rate, perturbation_test

market = MarketModel.constant(1.0, 0.08, 0.2)
kelly = kelly_curve(market)
rule = Equilibrium(60.0)
hat = allocation(rule, kelly, 0.0, 100.0)
print("own holding at (0, 100):", hat)

# %%
# Closed-form rates for multiples of the own holding: zero only at k = 1.
for k in (0.0, 0.5, 1.0, 2.0, 4.0):
    r = deviation_rate(rule, 0.5, 0.0, 100.0, k * hat, kelly)
    print(f"k = {k:3.1f}   rate {r.value:9.4f}")

# %%
# Simulated under common random numbers. The finite-eps ratio approaches the
# rate only slowly, so fit a line in eps and read off the intercept.
res = perturbation_test(rule, 0.5, 0.0, 100.0, 2 * hat, [0.04, 0.02, 0.01], SimConfig(400_000, seed=3), kelly)
for r in res:
    print(f"eps {r.eps:5.3f}  diff {r.diff:8.4f} +/- {r.stderr:.4f}  diff/eps {r.rate_estimate:7.3f}")
fit = extrapolate_rate(res)
print(f"extrapolated rate {fit.rate:.3f} +/- {fit.stderr:.3f}")

# %%
# Sitting exactly on the floor the rule holds nothing and the median stays
# at the floor. Taking a little risk for a moment lifts it.
b = boundary_deviation_test(60.0, 0.5, 0.01, SimConfig(400_000, seed=4), kelly)
print(f"median - floor after deviating: {b.diff:.4f}  (z = {b.z_score:.1f})")
