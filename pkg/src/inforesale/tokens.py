"""Token-extended market: states (M, K) with K the buyers holding a token.

States are materialized lazily. For the prepay policy every state with more
than the seller informed behaves as the information-only immediate-agreement
market, so those values are taken from that solution instead of re-solved.
"""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .core import (PriceSystem, InactiveLinkError, effective_recognition,
                   solve_market, solve_state_prices)
from .model import MarketConfig, all_pairs, bit, popcount
from .policies import Item, PolicyError, TokenPolicy, immediate_agreement_policy

SELLER = 0


class BundledTradeError(PolicyError, NotImplementedError):
    """A pair would trade more than one item at once; bundle pricing is not defined."""


def successor(trade, state: int, tokens: int):
    """State after ``trade = (seller, buyer, item)`` executes."""
    i, j, k = trade
    if k == Item.INFO:
        return state | bit(j), tokens
    if i == SELLER and not tokens >> j & 1:
        return state, tokens | bit(j)
    return state, tokens


def feasible_trades(policy: TokenPolicy, a: int, b: int, state: int, tokens: int) -> list:
    out = []
    for i, j in ((a, b), (b, a)):
        for k in (Item.TOKEN, Item.INFO):
            if policy.feasible(i, j, k, state, tokens):
                out.append((i, j, k))
    return out


def token_price_system(config: MarketConfig, tokens: int, values) -> PriceSystem:
    """Token prices from the seller to every buyer without a token, with M = {s}.

    ``values`` maps token states ``(M, K)`` to agent-indexed arrays; every
    state with one more token sold must be present.
    """
    state = bit(SELLER)
    open_buyers = [j for j in config.buyers if not tokens >> j & 1]
    if len(open_buyers) <= 1:
        raise ValueError("token market is shut once a single buyer lacks a token")
    d, w = config.discount, config.weight
    k = len(open_buyers)
    rh = effective_recognition(config.rho, d, config.n_pairs - k, k)
    try:
        after = [values[(state, tokens | bit(j))] for j in open_buyers]
    except KeyError as exc:
        raise RuntimeError(f"successor {exc.args[0]} not solved yet") from exc
    total = np.sum(after, axis=0)
    kappa = np.empty(k)
    for u, j in enumerate(open_buyers):
        others_j = total[j] - after[u][j]
        others_s = total[SELLER] - after[u][SELLER]
        kappa[u] = (w * ((1 - d * rh) * d * after[u][j] - d * rh * d * others_j)
                    - (1 - w) * ((1 - d * rh) * d * after[u][SELLER] - d * rh * d * others_s))
    phi = (1 - w) * (np.ones((k, k)) - np.eye(k))
    psi = np.eye(k) - (d * rh / (1 - d * rh)) * phi
    links = [(SELLER, j) for j in open_buyers]
    return PriceSystem((state, tokens), links, phi, psi, kappa, rh, d)


def generic_price_system(config: MarketConfig, state: int, tokens: int, trades, values):
    """Price system for arbitrary single-item trades in one token state.

    Trades that leave the state unchanged carry no joint gain, so their
    Nash price is ``w * v_item``; they still count toward staying put.
    """
    d, w, v = config.discount, config.weight, config.value
    here = (state, tokens)
    moving = [t for t in trades if successor(t, state, tokens) != here]
    stay = config.n_pairs - len(moving)
    rh = config.rho / (1.0 - d * config.rho * stay)
    n = config.n_agents
    k = len(trades)
    sign = np.zeros((n, k))
    gain = np.zeros(n)
    for u, (i, j, item) in enumerate(trades):
        sign[i, u] += 1.0
        sign[j, u] -= 1.0
        if item == Item.INFO:
            gain[j] += v
        nxt = successor((i, j, item), state, tokens)
        if nxt != here:
            gain += d * values[nxt]
    a = np.zeros((k, k))
    b = np.zeros(k)
    for u, (i, j, item) in enumerate(trades):
        vk = v if item == Item.INFO else 0.0
        nxt = successor((i, j, item), state, tokens)
        if nxt == here:
            a[u, u] = 1.0 - d * rh
            b[u] = (1.0 - d * rh) * w * vk
            continue
        after = values[nxt]
        a[u] = d * rh * (w * sign[j] - (1 - w) * sign[i])
        a[u, u] += 1.0
        b[u] = (w * (vk + d * after[j]) - (1 - w) * d * after[i]
                + d * rh * ((1 - w) * gain[i] - w * gain[j]))
    psi = a / (1.0 - d * rh)
    phi = (np.eye(k) - psi) * (1.0 - d * rh) / (d * rh) if d * rh > 0 else np.zeros((k, k))
    links = [(i, j, int(item)) for i, j, item in trades]
    return PriceSystem(here, links, phi, psi, b, rh, d)


class TokenSolution:
    """Prices and values over token states, solved on demand and cached."""

    def __init__(self, config: MarketConfig, policy: TokenPolicy, info_solution=None):
        self.config = config
        self.policy = policy
        self.info_solution = info_solution
        self.prices: dict = {}
        self.values: dict = {}
        self.trades: dict = {}
        self.systems: dict = {}

    # -- solving -------------------------------------------------------------

    def _active_trades(self, state, tokens):
        out = []
        for a, b in all_pairs(self.config):
            chosen = [t for t in feasible_trades(self.policy, a, b, state, tokens)
                      if self.policy.decide(*t, state, tokens)]
            if len(chosen) > 1:
                raise BundledTradeError(
                    f"policy trades {chosen} on pair ({a},{b}) in ({state:#x},{tokens:#x})")
            out.extend(chosen)
        return out

    def ensure(self, state: int, tokens: int) -> np.ndarray:
        key = (state, tokens)
        if key in self.values:
            return self.values[key]
        # depth-first over successors; every real transition adds an agent to M or K
        pending = [key]
        while pending:
            cur = pending[-1]
            if cur in self.values:
                pending.pop()
                continue
            if cur not in self.trades:
                self.trades[cur] = self._active_trades(*cur)
            if self.info_solution is not None and cur[0] != bit(SELLER):
                self._solve_state(*cur)
                pending.pop()
                continue
            missing = [nxt for t in self.trades[cur]
                       if (nxt := successor(t, *cur)) != cur and nxt not in self.values]
            if missing:
                pending.extend(missing)
                continue
            self._solve_state(*cur)
            pending.pop()
        return self.values[key]

    def _solve_state(self, state, tokens):
        cfg = self.config
        key = (state, tokens)
        trades = self.trades[key]
        if self.info_solution is not None and state != bit(SELLER):
            self.values[key] = self.info_solution.values[state]
            for i, j, k in trades:
                self.prices[(i, j, int(k), state, tokens)] = self.info_solution.price(i, j, state)
            return
        if not trades:
            self.values[key] = np.zeros(cfg.n_agents)
            return
        open_buyers = [j for j in cfg.buyers if not tokens >> j & 1]
        prepay_step = (state == bit(SELLER) and len(open_buyers) > 1
                       and sorted(trades) == [(SELLER, j, Item.TOKEN) for j in open_buyers])
        if prepay_step:
            system = token_price_system(cfg, tokens, self.values)
            prices = solve_state_prices(system)
        else:
            system = generic_price_system(cfg, state, tokens, trades, self.values)
            prices = solve_state_prices(system, check=False)
        self.systems[key] = system
        order = [(i, j, Item.TOKEN) for i, j in system.links] if prepay_step else trades
        for (i, j, k), p in zip(order, prices):
            self.prices[(i, j, int(k), state, tokens)] = float(p)
        self.values[key] = self._values(state, tokens)

    def _values(self, state, tokens):
        cfg = self.config
        d, v = cfg.discount, cfg.value
        here = (state, tokens)
        flow = np.zeros(cfg.n_agents)
        cont = np.zeros(cfg.n_agents)
        moving = 0
        for i, j, k in self.trades[here]:
            p = self.prices[(i, j, int(k), state, tokens)]
            flow[i] += p
            flow[j] += (v if k == Item.INFO else 0.0) - p
            nxt = successor((i, j, k), state, tokens)
            if nxt != here:
                cont += self.values[nxt]
                moving += 1
        stay = cfg.n_pairs - moving
        return cfg.rho * (flow + d * cont) / (1.0 - d * cfg.rho * stay)

    # -- queries -------------------------------------------------------------

    def value(self, agent: int, state: int, tokens: int) -> float:
        return float(self.ensure(state, tokens)[agent])

    def price(self, seller: int, buyer: int, item, state: int, tokens: int) -> float:
        self.ensure(state, tokens)
        try:
            return self.prices[(seller, buyer, int(item), state, tokens)]
        except KeyError:
            raise InactiveLinkError(
                f"no trade {seller}->{buyer} item {int(item)} in ({state:#x},{tokens:#x})"
            ) from None

    def start_state(self):
        return (bit(SELLER), 0)

    def active_trade(self, a: int, b: int, state):
        info, tokens = state
        self.ensure(info, tokens)
        for i, j, k in self.trades[state]:
            if (i, j) in ((a, b), (b, a)):
                p = self.prices[(i, j, int(k), info, tokens)]
                return i, j, int(k), p, successor((i, j, k), info, tokens)
        return None

    def is_absorbing(self, state) -> bool:
        self.ensure(*state)
        return not any(successor(t, *state) != state for t in self.trades[state])

    def reachable(self, start=None) -> list:
        start = start or self.start_state()
        seen = [start]
        found = {start}
        for cur in seen:
            self.ensure(*cur)
            for t in self.trades[cur]:
                nxt = successor(t, *cur)
                if nxt not in found:
                    found.add(nxt)
                    seen.append(nxt)
        return seen

    # -- on-path aggregates (M = {s}) ----------------------------------------

    def _canonical_tokens(self, count: int) -> int:
        mask = 0
        for j in list(self.config.buyers)[:count]:
            mask |= bit(j)
        return mask

    def aggregates(self) -> dict:
        """Seller value, holder / non-holder buyer values and price by tokens sold."""
        cfg = self.config
        s = bit(SELLER)
        last = cfg.n_agents - 1
        out = {"seller_value": {}, "holder_value": {}, "nonholder_value": {}, "price": {}}
        for count in range(self.policy.n_tokens + 1):
            tokens = self._canonical_tokens(count)
            vals = self.ensure(s, tokens)
            out["seller_value"][count] = float(vals[SELLER])
            out["holder_value"][count] = float(vals[cfg.n_sellers]) if count else math.nan
            out["nonholder_value"][count] = float(vals[last])
            item = Item.TOKEN if count < self.policy.n_tokens else Item.INFO
            key = (SELLER, last, int(item), s, tokens)
            out["price"][count] = self.prices.get(key, math.nan)
        return out

    # -- export --------------------------------------------------------------

    def to_dict(self) -> dict:
        states = {}
        for key in sorted(self.values, key=lambda k: (popcount(k[0]) + popcount(k[1]), k)):
            info, tokens = key
            states[f"{info:#x},{tokens:#x}"] = {
                "prices": {f"{i}->{j}:{Item(k).name.lower()}": self.prices[(i, j, int(k), info, tokens)]
                           for i, j, k in self.trades.get(key, ())},
                "values": {str(a): float(x) for a, x in enumerate(self.values[key])},
            }
        return {"config": self.config.to_dict(), "policy": self.policy.describe(),
                "n_tokens": self.policy.n_tokens, "states": states}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["state", "item", "seller", "buyer", "price"])
        for key in sorted(self.values, key=lambda k: (popcount(k[0]) + popcount(k[1]), k)):
            info, tokens = key
            for i, j, k in self.trades.get(key, ()):
                writer.writerow([f"{info:#x},{tokens:#x}", Item(k).name.lower(), i, j,
                                 repr(self.prices[(i, j, int(k), info, tokens)])])
        return buf.getvalue()


def solve_token_market(config: MarketConfig, policy: TokenPolicy) -> TokenSolution:
    """Solve every token state reachable from ({s}, {}) under ``policy``."""
    info = None
    if policy.kind == "prepay":
        info = solve_market(config, immediate_agreement_policy(config))
    sol = TokenSolution(config, policy, info)
    sol.reachable()
    return sol


def seller_total_value(solution: TokenSolution) -> float:
    return solution.value(SELLER, bit(SELLER), 0)


def token_states(config: MarketConfig, n_tokens: int) -> list:
    """Every (M, K) with the seller informed and at most ``n_tokens`` tokens sold."""
    out = []
    buyers = list(config.buyers)
    for sub_m in range(1 << len(buyers)):
        m = bit(SELLER) | sum(bit(b) for k, b in enumerate(buyers) if sub_m >> k & 1)
        for sub_k in range(1 << len(buyers)):
            kk = sum(bit(b) for k, b in enumerate(buyers) if sub_k >> k & 1)
            if popcount(kk) <= n_tokens:
                out.append((m, kk))
    return out

