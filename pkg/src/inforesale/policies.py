"""Trading policies: who trades with whom in each state.

An information-only policy answers ``decide(seller, buyer, state)`` for
opportunities where the seller is informed and the buyer is not. A token
policy answers ``decide(seller, buyer, item, state, tokens)`` over typed
trades; ``TOKEN`` items are worthless, ``INFO`` is the information good.
"""
from __future__ import annotations

import json
from enum import IntEnum
from pathlib import Path

from .model import (ConfigError, DomainError, MarketConfig, bit, enumerate_states,
                    opportunities, popcount)


class Item(IntEnum):
    TOKEN = 1
    INFO = 2


class PolicyError(ValueError):
    """Policy construction or table validation failure."""


class UnsupportedConfig(ConfigError):
    """Policy constructor does not apply to this configuration."""


def parse_decision(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    if raw in (0, 1):
        return bool(raw)
    if isinstance(raw, str) and raw.lower() in ("trade", "no-trade", "no_trade", "notrade"):
        return raw.lower() == "trade"
    raise PolicyError(f"cannot interpret decision {raw!r}")


class TradingPolicy:
    """Deterministic trade decision over information-only opportunities."""

    kind = "custom"

    def __init__(self, config: MarketConfig):
        self.config = config

    def _check(self, seller: int, buyer: int, state: int):
        cfg = self.config
        if not cfg.is_state(state):
            raise DomainError(f"invalid state {state:#x}")
        if not (state >> seller) & 1 or (state >> buyer) & 1:
            raise DomainError(
                f"({seller}, {buyer}, {state:#x}) is not a trade opportunity")

    def decide(self, seller: int, buyer: int, state: int) -> bool:
        self._check(seller, buyer, state)
        return self._decide(seller, buyer, state)

    def _decide(self, seller, buyer, state) -> bool:
        raise NotImplementedError

    def describe(self) -> str:
        return self.kind

    def __repr__(self):
        return f"{type(self).__name__}({self.describe()})"


class ImmediateAgreement(TradingPolicy):
    kind = "immediate"

    def _decide(self, seller, buyer, state):
        return True


class DesignatedFirstBuyer(TradingPolicy):
    """Sell first only to ``first_buyer``; immediate agreement afterwards."""

    kind = "first-buyer"

    def __init__(self, config: MarketConfig, first_buyer: int):
        if config.n_sellers != 1:
            raise UnsupportedConfig("designated-first-buyer needs exactly one seller")
        if not config.is_buyer(first_buyer):
            raise UnsupportedConfig(f"agent {first_buyer} is not a buyer")
        super().__init__(config)
        self.first_buyer = first_buyer

    def _decide(self, seller, buyer, state):
        if state == self.config.seller_mask:
            return buyer == self.first_buyer
        return True

    def describe(self):
        return f"first-buyer:{self.first_buyer}"


class TablePolicy(TradingPolicy):
    """Explicit decision table over (seller, buyer, state), with optional default."""

    def __init__(self, config: MarketConfig, table: dict, default: bool | None = None):
        super().__init__(config)
        self.table = dict(table)
        self.default = default
        if default is None:
            missing = [o for s in enumerate_states(config) for o in opportunities(config, s)
                       if (o.seller, o.buyer, o.state) not in self.table]
            if missing:
                shown = ", ".join(f"({i},{j},{m:#x})" for i, j, m in missing[:10])
                raise PolicyError(f"{len(missing)} opportunities missing from table "
                                  f"and no default: {shown}")

    def _decide(self, seller, buyer, state):
        return self.table.get((seller, buyer, state), self.default)


def immediate_agreement_policy(config: MarketConfig) -> ImmediateAgreement:
    return ImmediateAgreement(config)


def designated_first_buyer_policy(config: MarketConfig, buyer: int) -> DesignatedFirstBuyer:
    return DesignatedFirstBuyer(config, buyer)


def custom_policy_from_table(config: MarketConfig, table, default=None) -> TablePolicy:
    """``table`` maps (seller, buyer, state_mask) to a decision."""
    parsed = {tuple(int(x) for x in key): parse_decision(d) for key, d in dict(table).items()}
    if default is not None:
        default = parse_decision(default)
    return TablePolicy(config, parsed, default)


# -- token-extended model ----------------------------------------------------

class TokenPolicy:
    """Deterministic decision over typed trades in token states (M, K)."""

    kind = "custom"

    def __init__(self, config: MarketConfig, n_tokens: int | None = None):
        if config.n_sellers != 1:
            raise UnsupportedConfig("the token market needs exactly one seller")
        self.config = config
        self.n_tokens = config.n_buyers - 1 if n_tokens is None else n_tokens
        if not 0 <= self.n_tokens <= config.n_buyers:
            raise UnsupportedConfig(f"token count {self.n_tokens} out of range")

    def feasible(self, seller: int, buyer: int, item: Item, state: int, tokens: int) -> bool:
        """Whether the typed trade is physically possible in (state, tokens)."""
        cfg = self.config
        if seller == buyer or not (0 <= seller < cfg.n_agents and 0 <= buyer < cfg.n_agents):
            return False
        if item == Item.INFO:
            return bool(state >> seller & 1) and not state >> buyer & 1
        if not cfg.is_buyer(buyer):
            return False
        if seller == 0:
            return popcount(tokens) < self.n_tokens
        return bool(tokens >> seller & 1) and not tokens >> buyer & 1

    def decide(self, seller: int, buyer: int, item: Item, state: int, tokens: int) -> bool:
        cfg = self.config
        if not cfg.is_state(state) or tokens & ~cfg.full_mask or tokens & cfg.seller_mask:
            raise DomainError(f"invalid token state ({state:#x}, {tokens:#x})")
        if not self.feasible(seller, buyer, Item(item), state, tokens):
            raise DomainError(f"infeasible trade {seller}->{buyer} item {int(item)} "
                              f"in ({state:#x}, {tokens:#x})")
        return self._decide(seller, buyer, Item(item), state, tokens)

    def _decide(self, seller, buyer, item, state, tokens) -> bool:
        raise NotImplementedError

    def describe(self) -> str:
        return self.kind

    def __repr__(self):
        return f"{type(self).__name__}({self.describe()})"


class Prepay(TokenPolicy):
    """Sell tokens to distinct buyers, then information to the one without a token."""

    kind = "prepay"

    def _decide(self, seller, buyer, item, state, tokens):
        s = 0
        if state != bit(s):
            # immediate agreement on information, no token trades
            return item == Item.INFO
        if seller != s or tokens >> buyer & 1:
            return False
        if popcount(tokens) < self.n_tokens:
            return item == Item.TOKEN
        return item == Item.INFO


class TokenTablePolicy(TokenPolicy):
    def __init__(self, config, table: dict, default: bool | None = None, n_tokens=None):
        super().__init__(config, n_tokens)
        self.table = dict(table)
        self.default = default

    def _decide(self, seller, buyer, item, state, tokens):
        key = (seller, buyer, int(item), state, tokens)
        if key in self.table:
            return self.table[key]
        if self.default is None:
            raise PolicyError(f"no table entry for {key} and no default")
        return self.default


def prepay_policy(config: MarketConfig) -> Prepay:
    return Prepay(config)


def custom_token_policy_from_table(config, table, default=None, n_tokens=None) -> TokenTablePolicy:
    """``table`` maps (seller, buyer, item, state_mask, token_mask) to a decision."""
    parsed = {tuple(int(x) for x in key): parse_decision(d) for key, d in dict(table).items()}
    if default is not None:
        default = parse_decision(default)
    return TokenTablePolicy(config, parsed, default, n_tokens)


def load_policy_table(config: MarketConfig, path):
    """Load a JSON decision table; entries carrying ``item`` make a token policy.

    Accepts either a list of entries or ``{"default": ..., "entries": [...]}``.
    """
    raw = json.loads(Path(path).read_text())
    default = None
    n_tokens = None
    if isinstance(raw, dict):
        default = raw.get("default")
        n_tokens = raw.get("n_tokens")
        entries = raw.get("entries", [])
    else:
        entries = raw
    table = {}
    typed = False
    for e in entries:
        try:
            if "item" in e or "token_mask" in e:
                typed = True
                key = (e["seller"], e["buyer"], e.get("item", int(Item.INFO)),
                       _mask(e["state_mask"]), _mask(e.get("token_mask", 0)))
            else:
                key = (e["seller"], e["buyer"], _mask(e["state_mask"]))
            table[key] = e["decision"]
        except (KeyError, TypeError) as exc:
            raise PolicyError(f"bad table entry {e!r}") from exc
    if typed:
        if any(len(k) == 3 for k in table):
            raise PolicyError("table mixes typed and untyped entries")
        return custom_token_policy_from_table(config, table, default, n_tokens)
    return custom_policy_from_table(config, table, default)


def _mask(raw) -> int:
    if isinstance(raw, str):
        return int(raw, 0)
    return int(raw)


def parse_policy_spec(config: MarketConfig, spec: str):
    """``immediate`` | ``first-buyer:<index>`` | ``prepay`` | ``table:<path>``."""
    if spec == "immediate":
        return immediate_agreement_policy(config)
    if spec == "prepay":
        return prepay_policy(config)
    if spec.startswith("first-buyer:"):
        try:
            b = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise PolicyError(f"bad buyer index in {spec!r}") from exc
        return designated_first_buyer_policy(config, b)
    if spec.startswith("table:"):
        return load_policy_table(config, spec.split(":", 1)[1])
    raise PolicyError(f"unknown policy spec {spec!r}")
