"""
Risky shares across a synthetic cohort
======================================

Households insure a fraction beta of their initial wealth and put the rest
in a risky fund. Richer households (after good returns) end up with a larger
risky share, and the effect grows with age. The default run uses 200
replications; pass the full 2000 to the ``household`` CLI command for the
complete table.
"""

# %%
from quantfolio.household import HouseholdConfig, replicate_table

out = replicate_table(HouseholdConfig(replications=200))
print(out.to_csv())

# %%
mean, std = out.cell(0.4, 0.0065, 10)
print(f"beta 40%, varpi 0.65%, ages 36-45: {mean:.2f} ({std:.2f})")
