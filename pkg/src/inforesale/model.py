"""Market configuration, agents, information states and link combinatorics.

Agents are integer indices. Sellers occupy ``[0, n_sellers)`` and buyers the
rest. A set of informed agents is an ``int`` bit mask; every valid state
contains all sellers.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import NamedTuple


class ConfigError(ValueError):
    """Invalid market configuration."""


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


CONFIG_KEYS = ("n_buyers", "n_sellers", "value", "weight", "rate", "period", "discount")


@dataclass(frozen=True)
class MarketConfig:
    """Agent counts, value of information, bargaining weight and timing.

    ``rate`` and ``period`` are the canonical timing inputs; the per-period
    discount factor is derived as ``exp(-rate * period)``. An infinite period
    gives the myopic case ``discount == 0``.
    """

    n_buyers: int
    n_sellers: int = 1
    value: float = 1.0
    weight: float = 0.5
    rate: float = 1.0
    period: float = 0.1
    discount: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_buyers) != self.n_buyers or self.n_buyers < 1:
            raise ConfigError(f"n_buyers must be a positive integer, got {self.n_buyers!r}")
        if int(self.n_sellers) != self.n_sellers or self.n_sellers < 1:
            raise ConfigError(f"n_sellers must be a positive integer, got {self.n_sellers!r}")
        if self.n_buyers + self.n_sellers < 3:
            raise ConfigError("need at least 3 agents in total")
        if not self.value > 0 or math.isinf(self.value):
            raise ConfigError(f"value must be positive and finite, got {self.value!r}")
        if not 0.5 <= self.weight < 1.0:
            raise ConfigError(f"weight must lie in [1/2, 1), got {self.weight!r}")
        if not self.rate > 0 or math.isinf(self.rate):
            raise ConfigError(f"rate must be positive and finite, got {self.rate!r}")
        if not self.period > 0:
            raise ConfigError(f"period must be positive, got {self.period!r}")
        delta = math.exp(-self.rate * self.period)
        if not delta < 1.0:
            raise ConfigError("discount factor rounds to 1; period too small")
        object.__setattr__(self, "discount", delta)

    @classmethod
    def with_discount(cls, discount: float, **kwargs) -> "MarketConfig":
        """Build a config from a per-period discount factor (rate fixed at 1)."""
        if not 0.0 <= discount < 1.0:
            raise ConfigError(f"discount must lie in [0, 1), got {discount!r}")
        period = math.inf if discount == 0.0 else -math.log(discount)
        return cls(rate=1.0, period=period, **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "MarketConfig":
        unknown = set(data) - set(CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "discount" in data:
            if "period" in data or "rate" in data:
                raise ConfigError("give either discount or (rate, period), not both")
            return cls.with_discount(float(data.pop("discount")), **data)
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "MarketConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "n_buyers": self.n_buyers,
            "n_sellers": self.n_sellers,
            "value": self.value,
            "weight": self.weight,
            "rate": self.rate,
            "period": self.period,
        }

    def with_period(self, period: float) -> "MarketConfig":
        return MarketConfig(self.n_buyers, self.n_sellers, self.value, self.weight,
                            self.rate, period)

    @property
    def n_agents(self) -> int:
        return self.n_buyers + self.n_sellers

    @property
    def n_pairs(self) -> int:
        n = self.n_agents
        return n * (n - 1) // 2

    @property
    def rho(self) -> float:
        return pair_recognition_probability(self)

    @property
    def sellers(self) -> range:
        return range(self.n_sellers)

    @property
    def buyers(self) -> range:
        return range(self.n_sellers, self.n_agents)

    @property
    def seller_mask(self) -> int:
        return (1 << self.n_sellers) - 1

    @property
    def full_mask(self) -> int:
        return (1 << self.n_agents) - 1

    def is_seller(self, agent: int) -> bool:
        return 0 <= agent < self.n_sellers

    def is_buyer(self, agent: int) -> bool:
        return self.n_sellers <= agent < self.n_agents

    def role(self, agent: int) -> str:
        if not 0 <= agent < self.n_agents:
            raise DomainError(f"agent {agent} out of range [0, {self.n_agents})")
        return "seller" if agent < self.n_sellers else "buyer"

    def is_state(self, state: int) -> bool:
        return (state & self.seller_mask) == self.seller_mask and state & ~self.full_mask == 0


class TradeOpportunity(NamedTuple):
    seller: int
    buyer: int
    state: int


@dataclass(frozen=True)
class LinkSets:
    active: tuple[tuple[int, int], ...]
    inactive: tuple[tuple[int, int], ...]
    buyers_of: dict
    sellers_of: dict

    @property
    def n_active(self) -> int:
        return len(self.active)

    @property
    def n_inactive(self) -> int:
        return len(self.inactive)


def bit(agent: int) -> int:
    return 1 << agent


def members(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def state_of(config: MarketConfig, informed) -> int:
    """Bit mask for an iterable of informed agents; sellers are always added."""
    mask = config.seller_mask
    for agent in informed:
        config.role(agent)
        mask |= bit(agent)
    return mask


def pair_recognition_probability(config: MarketConfig) -> float:
    n = config.n_agents
    return 2.0 / (n * (n - 1))


def redundant_link_count(m: int, n: int, n_sellers: int = 1) -> int:
    """Number of informed-informed plus uninformed-uninformed pairs."""
    if not n_sellers <= m <= n:
        raise DomainError(f"m={m} outside [{n_sellers}, {n}]")
    return (m * (m - 1) + (n - m) * (n - m - 1)) // 2


def enumerate_states(config: MarketConfig) -> list[int]:
    """All valid states, largest informed set first, ties by mask value."""
    base = config.seller_mask
    buyer_bits = [bit(b) for b in config.buyers]
    states = []
    for sub in range(1 << config.n_buyers):
        mask = base
        for k, b in enumerate(buyer_bits):
            if sub >> k & 1:
                mask |= b
        states.append(mask)
    states.sort(key=lambda s: (-popcount(s), s))
    return states


def all_pairs(config: MarketConfig) -> list[tuple[int, int]]:
    return list(combinations(range(config.n_agents), 2))


def opportunities(config: MarketConfig, state: int) -> list[TradeOpportunity]:
    """Every (informed, uninformed) pair in ``state``, informed agent first."""
    informed = members(state)
    uninformed = members(config.full_mask & ~state)
    return [TradeOpportunity(i, j, state) for i in informed for j in uninformed]


def link_sets(config: MarketConfig, policy, state: int) -> LinkSets:
    active = tuple((o.seller, o.buyer) for o in opportunities(config, state)
                   if policy.decide(*o))
    active_set = {frozenset(link) for link in active}
    inactive = tuple(p for p in all_pairs(config) if frozenset(p) not in active_set)
    buyers_of: dict = {}
    sellers_of: dict = {}
    for i, j in active:
        buyers_of.setdefault(i, []).append(j)
        sellers_of.setdefault(j, []).append(i)
    return LinkSets(active, inactive, buyers_of, sellers_of)
