"""Nash-bargaining consistency checks for solved policies."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .core import Solution, solve_market
from .model import (DomainError, MarketConfig, all_pairs, bit, enumerate_states,
                    opportunities)
from .policies import Item, TokenPolicy
from .tokens import TokenSolution, feasible_trades, solve_token_market, successor, token_states

DEFAULT_EPS = 1e-9


@dataclass(frozen=True)
class Verdict:
    seller: int
    buyer: int
    state: int
    agree_surplus: float
    disagree_surplus: float
    required: str
    actual: str
    passed: bool
    boundary: bool
    tokens: int | None = None
    item: str | None = None
    alternatives: dict | None = None

    @property
    def margin(self) -> float:
        return self.agree_surplus - self.disagree_surplus

    def label(self) -> str:
        where = f"{self.state:#x}" if self.tokens is None else f"{self.state:#x},{self.tokens:#x}"
        item = f" {self.item}" if self.item else ""
        return f"{self.seller}->{self.buyer}{item} @ {where}"


@dataclass
class EquilibriumReport:
    verdicts: list
    epsilon: float
    discount: float
    policy: str = ""
    overall: bool = field(init=False)

    def __post_init__(self):
        self.overall = all(v.passed for v in self.verdicts)

    @property
    def failures(self) -> list:
        return [v for v in self.verdicts if not v.passed]

    def to_dict(self) -> dict:
        rows = []
        for v in self.verdicts:
            row = asdict(v)
            row["margin"] = v.margin
            row["state"] = f"{v.state:#x}"
            if v.tokens is not None:
                row["tokens"] = f"{v.tokens:#x}"
            rows.append(row)
        return {"policy": self.policy, "discount": self.discount, "epsilon": self.epsilon,
                "overall": self.overall, "verdicts": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self) -> str:
        lines = [f"{'opportunity':<28}{'agree':>12}{'disagree':>12}{'margin':>12}  "
                 f"{'actual':<9}{'required':<9}verdict"]
        for v in self.verdicts:
            verdict = "pass" if v.passed else "FAIL"
            if v.boundary:
                verdict += " (boundary)"
            lines.append(f"{v.label():<28}{v.agree_surplus:>12.6f}{v.disagree_surplus:>12.6f}"
                         f"{v.margin:>12.3e}  {v.actual:<9}{v.required:<9}{verdict}")
        lines.append(f"overall: {'pass' if self.overall else 'FAIL'} "
                     f"(delta={self.discount:.6g}, eps={self.epsilon:g})")
        return "\n".join(lines)


def _decision(flag: bool) -> str:
    return "trade" if flag else "no-trade"


def check_opportunity(solution: Solution, seller: int, buyer: int, state: int,
                      epsilon: float | None = None) -> Verdict:
    """Compare joint surplus with and without trade for one opportunity.

    Trade passes when agreement is within ``epsilon`` of disagreement or
    better; no-trade passes when agreement is not ``epsilon`` above it.
    """
    cfg = solution.config
    eps = DEFAULT_EPS * cfg.value if epsilon is None else epsilon
    if not cfg.is_state(state) or not state >> seller & 1 or state >> buyer & 1:
        raise DomainError(f"({seller}, {buyer}, {state:#x}) is not a trade opportunity")
    d = cfg.discount
    after = solution.values[state | bit(buyer)]
    now = solution.values[state]
    agree = d * after[seller] + cfg.value + d * after[buyer]
    disagree = d * now[seller] + d * now[buyer]
    actual = solution.policy.decide(seller, buyer, state)
    passed = agree >= disagree - eps if actual else agree < disagree + eps
    return Verdict(seller, buyer, state, float(agree), float(disagree),
                   _decision(agree >= disagree), _decision(actual), bool(passed),
                   bool(abs(agree - disagree) <= eps))


def verify_solution(solution: Solution, epsilon: float | None = None) -> EquilibriumReport:
    cfg = solution.config
    eps = DEFAULT_EPS * cfg.value if epsilon is None else epsilon
    verdicts = [check_opportunity(solution, *o, epsilon=eps)
                for s in enumerate_states(cfg) for o in opportunities(cfg, s)]
    return EquilibriumReport(verdicts, eps, cfg.discount, solution.policy.describe())


def verify_equilibrium(config: MarketConfig, policy, epsilon: float | None = None) -> EquilibriumReport:
    return verify_solution(solve_market(config, policy), epsilon)


def token_joint_surpluses(solution: TokenSolution, a: int, b: int, state: int, tokens: int):
    """Joint surplus of the pair under no trade and each feasible typed trade."""
    cfg = solution.config
    d = cfg.discount
    here = solution.ensure(state, tokens)
    out = {None: d * (here[a] + here[b])}
    for t in feasible_trades(solution.policy, a, b, state, tokens):
        nxt = successor(t, state, tokens)
        after = solution.ensure(*nxt)
        out[t] = (cfg.value if t[2] == Item.INFO else 0.0) + d * (after[a] + after[b])
    return out


def verify_token_solution(solution: TokenSolution, epsilon: float | None = None,
                          states=None) -> EquilibriumReport:
    """Check every meeting in every token state (or ``states``).

    The chosen trade type must attain the best joint surplus within epsilon
    and weakly beat no trade; choosing no trade passes only if no trade type
    beats it by epsilon.
    """
    cfg = solution.config
    policy = solution.policy
    eps = DEFAULT_EPS * cfg.value if epsilon is None else epsilon
    if states is None:
        states = token_states(cfg, policy.n_tokens)
    verdicts = []
    for state, tokens in states:
        for a, b in all_pairs(cfg):
            options = token_joint_surpluses(solution, a, b, state, tokens)
            if len(options) == 1:
                continue
            chosen = [t for t in options if t is not None and policy.decide(*t, state, tokens)]
            choice = chosen[0] if chosen else None
            trades = {t: s for t, s in options.items() if t is not None}
            best_trade = max(trades, key=lambda t: (trades[t], -t[2]))
            none = options[None]
            best = max(options.values())
            if choice is None:
                agree = trades[best_trade]
                passed = agree < none + eps
                boundary = abs(agree - none) <= eps
                ref = best_trade
            else:
                agree = options[choice]
                passed = agree >= best - eps
                rival = max(s for t, s in options.items() if t != choice)
                boundary = abs(agree - rival) <= eps
                ref = choice
            seller, buyer, item = ref
            verdicts.append(Verdict(
                seller, buyer, state, float(agree), float(none),
                _decision(agree >= none), _decision(choice is not None), bool(passed),
                bool(boundary), tokens, Item(item).name.lower(),
                {_trade_name(t): float(s) for t, s in options.items()}))
    return EquilibriumReport(verdicts, eps, cfg.discount, policy.describe())


def _trade_name(t) -> str:
    if t is None:
        return "none"
    i, j, k = t
    return f"{i}->{j}:{Item(k).name.lower()}"


def verify_token_equilibrium(config: MarketConfig, policy: TokenPolicy,
                             epsilon: float | None = None) -> EquilibriumReport:
    return verify_token_solution(solve_token_market(config, policy), epsilon)


@dataclass
class ThresholdResult:
    grid: list
    passes: list
    threshold: float | None
    frontier: tuple | None
    monotone: bool
    failing: dict
    rate: float = 1.0

    @property
    def found(self) -> bool:
        return self.threshold is not None

    @property
    def period_bar(self) -> float | None:
        """Period length matching the smallest discount of the passing upper run."""
        if self.frontier is None:
            return None
        return -math.log(self.frontier[1]) / self.rate


def find_delta_threshold(config: MarketConfig, policy_factory, grid,
                         epsilon: float | None = None) -> ThresholdResult:
    """Scan discount factors and report where verification switches to passing.

    ``policy_factory(config)`` builds the policy for each grid point (token
    policies are verified on the token market). ``threshold`` is the largest
    passing grid value; ``frontier`` is ``(last failing, first passing)``
    below the top of the grid, or None if no switch occurs.
    """
    grid = [float(x) for x in grid]
    if any(not 0 < x < 1 for x in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing inside (0, 1)")
    passes = []
    failing = {}
    for d in grid:
        cfg = MarketConfig(config.n_buyers, config.n_sellers, config.value, config.weight,
                           config.rate, -math.log(d) / config.rate)
        policy = policy_factory(cfg)
        if isinstance(policy, TokenPolicy):
            report = verify_token_equilibrium(cfg, policy, epsilon)
        else:
            report = verify_equilibrium(cfg, policy, epsilon)
        passes.append(report.overall)
        if not report.overall:
            failing[d] = [v.label() for v in report.failures]
    passing = [d for d, ok in zip(grid, passes) if ok]
    threshold = max(passing) if passing else None
    monotone = all(not a or b for a, b in zip(passes, passes[1:]))
    frontier = None
    for k in range(len(grid) - 1, 0, -1):
        if passes[k] and not passes[k - 1]:
            frontier = (grid[k - 1], grid[k])
            break
    return ThresholdResult(grid, passes, threshold, frontier, monotone, failing, config.rate)
