"""Bilateral bargaining over an information good that buyers can resell."""
__version__ = "0.1.0"

from .model import ConfigError, DomainError, MarketConfig
from .policies import (Item, PolicyError, UnsupportedConfig, custom_policy_from_table,
                       designated_first_buyer_policy, immediate_agreement_policy,
                       prepay_policy)
from .core import NumericalError, Solution, solve_market, symmetric_solve
from .tokens import TokenSolution, solve_token_market
from .verify import (find_delta_threshold, verify_equilibrium, verify_solution,
                     verify_token_equilibrium)
