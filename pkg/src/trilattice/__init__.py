"""Market-complete trinomial lattice toolkit.

Calibrates natural-world step parameters from historical returns, prices
European claims with closed-form risk-neutral branch probabilities, and
inverts market option quotes into implied parameter surfaces.
"""

from .calibrate import (
    NaturalParams,
    ReturnSeries,
    Thresholds,
    build_step_factors,
    compute_UD,
    cvar_thresholds,
    estimate_moments,
    estimate_probabilities,
    estimate_thresholds,
)
from .errors import TrilatticeError
from .implied import (
    ImpliedParam,
    ImpliedPoint,
    Quote,
    QuoteSet,
    SurfaceGrid,
    build_surfaces,
    complement_pu,
    invert_extreme,
    invert_point,
    model_price,
    smooth_surface,
)
from .lattice import (
    Convention,
    LatticeSpec,
    OptionKind,
    OptionSpec,
    PortfolioWeights,
    RiskNeutralProbs,
    StepFactors,
    deflator_identities,
    gamma_exponent,
    price_european,
    risk_neutral_probs,
    solve_replication,
)
from .marketdata import (
    PriceHistory,
    load_chain,
    load_prices,
    read_surface,
    to_returns,
    write_surface,
)

__version__ = "0.1.0"
