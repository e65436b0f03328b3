"""Frequent-offer limits: period sweeps with extrapolation, plus the
continuous-time closed forms for one seller and two buyers.

The closed forms assume symmetric bargaining, a unit value of information,
Poisson meetings at intensity ``lam`` per link and discount rate ``rate``.
They are a separate model from the discrete solver; only their limits as
``lam / rate`` grows are comparable with the solver's limits as the period
shrinks.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

from .core import NumericalError, solve_market
from .model import MarketConfig, bit
from .policies import Item, TokenPolicy
from .tokens import SELLER, solve_token_market


@dataclass(frozen=True)
class AnalyticParams:
    lam: float
    rate: float = 1.0
    weight: float = 0.5

    def __post_init__(self):
        if not (self.lam > 0 and self.rate > 0):
            raise ValueError("lam and rate must be positive")
        if self.weight != 0.5:
            raise ValueError("closed forms are only defined for symmetric bargaining (w = 1/2)")

    @property
    def gamma(self) -> float:
        return gamma(self)

    @property
    def meet_discount(self) -> float:
        """Expected discount until a given single link next meets: lam / (r + lam)."""
        return self.lam / (self.rate + self.lam)


def gamma(params: AnalyticParams) -> float:
    """Discounted weight that a fixed one of two links is the next to meet."""
    return params.lam / (params.rate + 2.0 * params.lam)


def no_resale_price(params: AnalyticParams) -> float:
    # p (1 - a) = (1 - p)(1 - a)
    a = params.meet_discount
    return (1.0 - a) / (2.0 * (1.0 - a))


def duopoly_price(params: AnalyticParams, check: bool = True) -> float:
    """Price once one buyer is informed and two agents can sell."""
    g = gamma(params)
    p = (1.0 - 2.0 * g) / (2.0 - 3.0 * g)
    if check:
        res = abs(duopoly_residual(p, params))
        if res > 1e-12:
            raise NumericalError(f"duopoly price residual {res:.3e}")
    return p


def duopoly_residual(p: float, params: AnalyticParams) -> float:
    g = gamma(params)
    return p * (1.0 - g) - (1.0 - p) * (1.0 - 2.0 * g)


def first_buyer_gain(p: float, params: AnalyticParams) -> float:
    """First buyer's gain from buying at ``p`` under immediate agreement."""
    g = gamma(params)
    p2 = duopoly_price(params)
    now = 1.0 - p + g * p2
    return now - g * now - 2.0 * g * g * (1.0 - p2)


def optimal_first_sale_price(params: AnalyticParams) -> float:
    # (p + g p2)(1 - a) = (1 - p + g p2)(1 - a)
    g = gamma(params)
    p2 = duopoly_price(params)
    c = 1.0 - params.meet_discount
    return ((1.0 + g * p2) * c - g * p2 * c) / (2.0 * c)


def no_trade_inequality_sides(params: AnalyticParams) -> tuple[float, float]:
    """(no-trade joint surplus, trade joint surplus) for seller and second buyer."""
    g = gamma(params)
    p2 = duopoly_price(params)
    ps = optimal_first_sale_price(params)
    a = params.meet_discount
    lhs = a * (ps + g * p2) + a * (2.0 * g * (1.0 - p2))
    rhs = 1.0 + 2.0 * g * p2
    return lhs, rhs


def token_price_example(params: AnalyticParams) -> float:
    """Token price with one token and two buyers; linear in the price."""
    g = gamma(params)
    p2 = duopoly_price(params)
    ps = optimal_first_sale_price(params)
    a = params.meet_discount
    b = params.rate / (params.rate + params.lam)
    # b (x + a ps + g p2) = (1 - g)(-x + a 2 g (1 - p2)) - g a (1 - ps + g p2)
    coef = b + (1.0 - g)
    if coef <= 0:
        raise NumericalError("degenerate token price equation")
    const = (1.0 - g) * a * 2.0 * g * (1.0 - p2) - g * a * (1.0 - ps + g * p2) \
        - b * (a * ps + g * p2)
    return const / coef


def analytic_summary(params: AnalyticParams) -> dict:
    lhs, rhs = no_trade_inequality_sides(params)
    return {
        "lambda": params.lam,
        "rate": params.rate,
        "gamma": gamma(params),
        "no_resale_price": no_resale_price(params),
        "duopoly_price": duopoly_price(params),
        "optimal_first_sale_price": optimal_first_sale_price(params),
        "no_trade_lhs": lhs,
        "no_trade_rhs": rhs,
        "token_price": token_price_example(params),
    }


# -- sweeps ---------------------------------------------------------------------

def default_schedule(start: float = 0.5, steps: int = 15) -> list[float]:
    return [start * 2.0 ** -k for k in range(steps)]


def extrapolate_to_zero(xs, ys) -> float:
    """Value at x = 0 of the polynomial through the given points (Neville)."""
    xs = list(xs)
    p = list(ys)
    n = len(xs)
    for level in range(1, n):
        for i in range(n - level):
            j = i + level
            p[i] = (xs[j] * p[i] - xs[i] * p[i + 1]) / (xs[j] - xs[i])
    return p[0]


@dataclass
class SweepResult:
    schedule: list
    series: dict
    limits: dict = field(default_factory=dict)
    converged: dict = field(default_factory=dict)
    value_scale: float = 1.0

    def __post_init__(self):
        for name, ys in self.series.items():
            if len(ys) >= 3:
                self.limits[name] = extrapolate_to_zero(self.schedule[-3:], ys[-3:])
            else:
                self.limits[name] = ys[-1] if ys else math.nan
            if len(ys) >= 4:
                prev = extrapolate_to_zero(self.schedule[-4:-1], ys[-4:-1])
                self.converged[name] = (math.isfinite(self.limits[name])
                                        and abs(self.limits[name] - prev) < 1e-4 * self.value_scale)
            else:
                self.converged[name] = False

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["delta", "quantity", "value"])
        for name, ys in self.series.items():
            for d, y in zip(self.schedule, ys):
                writer.writerow([repr(d), name, repr(y)])
        return buf.getvalue()

    def to_gnuplot(self) -> str:
        names = list(self.series)
        lines = ["# delta " + " ".join(names)]
        for k, d in enumerate(self.schedule):
            lines.append(" ".join([repr(d)] + [repr(self.series[n][k]) for n in names]))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"schedule": self.schedule,
                "quantities": {n: {"limit": self.limits[n], "converged": self.converged[n],
                                   "last": self.series[n][-1]} for n in self.series}}

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def price_tracker(seller: int, buyer: int, state: int):
    return lambda sol: sol.price(seller, buyer, state)


def value_tracker(agent: int, state: int):
    return lambda sol: sol.value(agent, state)


def token_price_tracker(seller, buyer, item, state, tokens):
    return lambda sol: sol.price(seller, buyer, item, state, tokens)


def token_value_tracker(agent, state, tokens):
    return lambda sol: sol.value(agent, state, tokens)


def delta_sweep(config: MarketConfig, policy_factory, tracked: dict, schedule=None) -> SweepResult:
    """Re-solve at each period length and record the tracked quantities.

    ``policy_factory(config)`` returns a trading or token policy; ``tracked``
    maps names to callables on the resulting solution.
    """
    schedule = default_schedule() if schedule is None else [float(x) for x in schedule]
    if any(b >= a for a, b in zip(schedule, schedule[1:])) or any(x <= 0 for x in schedule):
        raise ValueError("schedule must be positive and strictly decreasing")
    series = {name: [] for name in tracked}
    for period in schedule:
        cfg = config.with_period(period)
        policy = policy_factory(cfg)
        try:
            if isinstance(policy, TokenPolicy):
                sol = solve_token_market(cfg, policy)
            else:
                sol = solve_market(cfg, policy)
        except NumericalError as exc:
            raise NumericalError(f"{exc} at period {period!r}") from exc
        for name, fn in tracked.items():
            series[name].append(float(fn(sol)))
    return SweepResult(schedule, series, value_scale=config.value)


def default_trackers(config: MarketConfig, policy) -> dict:
    """Headline quantities for the canonical policies."""
    s0 = config.seller_mask
    last = config.n_agents - 1
    if isinstance(policy, TokenPolicy):
        s = bit(SELLER)
        tokens_full = sum(bit(j) for j in list(config.buyers)[:policy.n_tokens])
        out = {"seller_value": token_value_tracker(SELLER, s, 0)}
        if policy.n_tokens > 0:
            out["token_price"] = token_price_tracker(SELLER, last, Item.TOKEN, s, 0)
        out["first_info_price"] = token_price_tracker(SELLER, last, Item.INFO, s, tokens_full)
        if config.n_buyers >= 2:
            after = s | bit(last)
            out["second_info_price"] = token_price_tracker(
                SELLER, config.n_sellers, Item.INFO, after, tokens_full)
        return out
    out = {"seller_value": value_tracker(0, s0)}
    if policy.kind == "first-buyer":
        b = policy.first_buyer
        out["first_sale_price"] = price_tracker(0, b, s0)
        other = next(j for j in config.buyers if j != b)
        out["second_sale_price"] = price_tracker(0, other, s0 | bit(b))
    elif policy.kind == "immediate":
        out["first_sale_price"] = price_tracker(0, last, s0)
        if config.n_buyers >= 2:
            out["second_sale_price"] = price_tracker(0, config.n_sellers, s0 | bit(last))
    return out
