"""Risk parity portfolios for assets with jumps.

Two-regime Gaussian mixture returns, expected-shortfall risk budgeting,
jump detection and rolling backtests.
"""
from ._backend import BACKEND
from .backtest import (
    BacktestConfig,
    BacktestResult,
    JumpParams,
    compute_returns,
    descriptive_stats,
    expected_drawdown,
    run_backtest,
)
from .budgeting import (
    ExistenceReport,
    RbSolution,
    RiskBudget,
    alpha_minus,
    check_existence,
    max_sharpe_regime1,
    min_es,
    min_variance,
    solve_erc,
    solve_rb,
)
from .errors import (
    ExistenceError,
    ModelError,
    RegimeCollapseError,
    SingularCovarianceError,
    SkewParityError,
    SolverError,
    UndefinedSkewness,
)
from .estimation import (
    ConstraintSet,
    EmConfig,
    FitResult,
    constrained_ml_fit,
    em_fit,
    gaussian_fit,
    log_likelihood,
)
from .jumps import (
    FilteredSeries,
    JumpRule1D,
    JumpRuleND,
    filtering_estimate,
    posterior_jump_prob,
    quadratic_rule_nd,
    threshold_points_1d,
)
from .mixture import (
    MixtureModel,
    PortfolioDistribution,
    mixture_moments,
    portfolio_distribution,
    portfolio_skewness,
    simulate_returns,
    to_period,
)
from .panel import ReturnPanel
from .risk import (
    RiskDecomposition,
    RiskMeasure,
    es_gradient,
    expected_shortfall,
    risk_contributions,
    value_at_risk,
)

__version__ = "0.1.0"
