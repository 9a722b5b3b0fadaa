"""Bayesian estimation and posterior-predictive Monte Carlo pricing of
quanto options under correlated geometric Brownian motions."""

from .model import (
    Drift,
    MarketConfig,
    PriceSeries,
    ReturnPanel,
    SpotState,
    Theta,
    log_returns,
    payoff,
    physical_logpdf,
    risk_neutral_logpdf,
    simulate_return_pair,
)
from .inference import (
    Chain,
    MleEstimate,
    NiwHyperparams,
    PosteriorKernel,
    ProposalSpec,
    conjugate_sample,
    default_proposals,
    log_joint_posterior,
    mle_estimate,
    mwg_sample,
    propose,
    proposal_logpdf,
)
from .diagnostics import ChainSummary, geweke_cd, hpdi, nse, summarize
from .pricing import (
    PricingRequest,
    PricingResult,
    SequentialSettings,
    bs_call,
    closed_form_v3,
    implied_vol,
    predictive_samples,
    price_predictive,
    relative_pricing_error,
)
from .data_io import (
    OptionQuote,
    QuantoQuote,
    align_series,
    construct_quanto,
    filter_options,
    load_option_chain,
    load_price_series,
    moneyness_bucket,
)

__version__ = "0.1.0"
