"""Quantile-based portfolio selection in a deterministic-coefficient market.

Kelly proportions under cone constraints, closed-form quantiles of the
insurance, fractional-Kelly, pre-committed and naive strategies, Monte Carlo
perturbation checks of equilibrium, and the household share regression.
"""

__version__ = "0.1.0"

from .errors import QuantfolioError
from .household import HouseholdConfig, replicate_table, simulate_cohort
from .kelly import KellyCurve, fitness_identity_check, kelly_curve, solve_qp
from .market import ConeConstraint, MarketModel, PiecewiseCurve, discount_normalize, validate
from .quantile import (
    MultiTimeObjective,
    crossover_a,
    deviation_rate,
    median_equilibrium,
    median_fractional_kelly,
    multi_time_objective,
    naive_running_median,
    quantile,
)
from .simulator import SimConfig, empirical_quantile, perturbation_test, simulate
from .strategies import (
    Equilibrium,
    FractionalKelly,
    GeneralAffine,
    Naive,
    PreCommitted,
    ScaledInsurance,
    ZeroInvestment,
    allocation,
)
