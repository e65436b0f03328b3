"""Nash-bargaining prices and rational-expectations values for a fixed policy.

States are solved from the full-information state downwards. In each state
the prices of all active links solve one small linear system whose matrix is
a non-singular M-matrix, and the values then follow in closed form.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .model import (DomainError, MarketConfig, bit, enumerate_states, link_sets, members,
                    popcount, redundant_link_count)


class NoActiveLinks(DomainError):
    """The state has no active link, so no price system exists."""


def format_state(state) -> str:
    if isinstance(state, tuple):
        return ",".join(f"{s:#x}" for s in state)
    return f"{state:#x}"


class NumericalError(ArithmeticError):
    def __init__(self, message, state=None):
        if state is not None:
            message = f"{message} (state {format_state(state)})"
        super().__init__(message)
        self.state = state


class InactiveLinkError(KeyError):
    """Price requested for a link that does not trade."""


RESIDUAL_TOL = 1e-10


def effective_recognition(rho: float, delta: float, n_inactive: int, n_active: int) -> float:
    """Recognition probability of an active link, net of draws that leave the state fixed."""
    if n_active < 1:
        raise NoActiveLinks("no active links")
    return rho / (1.0 - delta * rho * n_inactive)


def base_case_price(config: MarketConfig, active_count: int, delta: float | None = None) -> float:
    """Price when one uninformed buyer remains and ``active_count`` links reach them."""
    if active_count < 1:
        raise DomainError("active_count must be at least 1")
    d = config.discount if delta is None else delta
    w, v = config.weight, config.value
    n_inactive = config.n_pairs - active_count
    rh = effective_recognition(config.rho, d, n_inactive, active_count)
    return w * (1 - d * rh * active_count) * v / (1 - d * rh * (w * active_count + 1 - w))


@dataclass
class PriceSystem:
    """``psi @ p = kappa / (1 - delta * rho_hat)`` for the active links of one state."""

    state: int
    links: list
    phi: np.ndarray
    psi: np.ndarray
    kappa: np.ndarray
    rho_hat: float
    delta: float

    @property
    def rhs(self) -> np.ndarray:
        return self.kappa / (1.0 - self.delta * self.rho_hat)

    def check_m_matrix(self):
        off = self.psi - np.diag(np.diag(self.psi))
        if np.any(off > 0) or not np.allclose(np.diag(self.psi), 1.0):
            raise NumericalError("price matrix is not a Z-matrix with unit diagonal", self.state)
        rows = self.psi.sum(axis=1)
        if np.any(rows <= 0):
            raise NumericalError("price matrix fails semipositivity at the ones vector",
                                 self.state)

    def residual(self, prices) -> float:
        return float(np.max(np.abs(self.psi @ prices - self.rhs), initial=0.0))


def _link_matrix(links, weight: float) -> np.ndarray:
    k = len(links)
    phi = np.zeros((k, k))
    for u, (i, j) in enumerate(links):
        for t, (i2, j2) in enumerate(links):
            if u == t:
                continue
            if j == j2:
                phi[u, t] = weight
            elif i == i2:
                phi[u, t] = 1.0 - weight
    return phi


def assemble_price_system(config: MarketConfig, state: int, links, future_values) -> PriceSystem:
    """Build Phi, Psi and kappa for ``state`` given solved successor values.

    ``future_values`` maps each successor state to an agent-indexed array.
    """
    if not links:
        raise NoActiveLinks(f"state {state:#x} has no active links")
    d, w, v = config.discount, config.weight, config.value
    n_inactive = config.n_pairs - len(links)
    rh = effective_recognition(config.rho, d, n_inactive, len(links))
    try:
        succ = [future_values[state | bit(j)] for _, j in links]
    except KeyError as exc:
        raise RuntimeError(f"successor {exc.args[0]:#x} of {state:#x} not solved yet") from exc
    succ_sum = np.sum(succ, axis=0)
    sellers_of: dict = {}
    for i, j in links:
        sellers_of[j] = sellers_of.get(j, 0) + 1
    kappa = np.empty(len(links))
    for u, (i, j) in enumerate(links):
        after = succ[u]
        kappa[u] = (w * (1 - d * rh * sellers_of[j]) * v
                    + w * d * (after[j] - rh * d * succ_sum[j])
                    - (1 - w) * d * (after[i] - rh * d * succ_sum[i]))
    phi = _link_matrix(links, w)
    psi = np.eye(len(links)) - (d * rh / (1 - d * rh)) * phi
    return PriceSystem(state, list(links), phi, psi, kappa, rh, d)


def solve_state_prices(system: PriceSystem, check=True) -> np.ndarray:
    if check:
        system.check_m_matrix()
    rhs = system.rhs
    try:
        prices = np.linalg.solve(system.psi, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular price system: {exc}", system.state) from exc
    res = system.residual(prices)
    if not np.isfinite(res) or res > RESIDUAL_TOL * max(1.0, float(np.max(np.abs(system.kappa)))):
        raise NumericalError(f"price residual {res:.3e} too large", system.state)
    return prices


def state_values(config: MarketConfig, state: int, links, prices, future_values) -> np.ndarray:
    """Rational-expectations values of every agent in ``state``."""
    n = config.n_agents
    if state == config.full_mask:
        return np.zeros(n)
    d, v = config.discount, config.value
    flow = np.zeros(n)
    cont = np.zeros(n)
    for (i, j), p in zip(links, prices):
        flow[i] += p
        flow[j] += v - p
        cont += future_values[state | bit(j)]
    # draws that leave the state unchanged: redundant pairs plus inactive cross links
    stay = config.n_pairs - len(links)
    return config.rho * (flow + d * cont) / (1.0 - d * config.rho * stay)


@dataclass
class Solution:
    config: MarketConfig
    policy: object
    prices: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    links: dict = field(default_factory=dict)
    systems: dict = field(default_factory=dict)

    def price(self, seller: int, buyer: int, state: int) -> float:
        try:
            return self.prices[(seller, buyer, state)]
        except KeyError:
            raise InactiveLinkError(f"no trade on {seller}->{buyer} in state {state:#x}") from None

    def value(self, agent: int, state: int) -> float:
        return float(self.values[state][agent])

    def state_prices(self, state: int) -> dict:
        return {(i, j): self.prices[(i, j, state)] for i, j in self.links[state]}

    # simulator hooks
    def active_trade(self, a: int, b: int, state: int):
        """(seller, buyer, item, price, next_state) if the pair trades, else None."""
        if (state >> a & 1) == (state >> b & 1):
            return None
        i, j = (a, b) if state >> a & 1 else (b, a)
        p = self.prices.get((i, j, state))
        if p is None:
            return None
        return i, j, 2, p, state | bit(j)

    def is_absorbing(self, state: int) -> bool:
        return not self.links.get(state)

    def start_state(self) -> int:
        return self.config.seller_mask

    def to_dict(self) -> dict:
        out = {}
        for state in enumerate_states(self.config):
            out[f"{state:#x}"] = {
                "prices": {f"{i}->{j}": self.prices[(i, j, state)] for i, j in self.links[state]},
                "values": {str(k): float(x) for k, x in enumerate(self.values[state])},
            }
        return {"config": self.config.to_dict(), "policy": self.policy.describe(),
                "states": out}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["state", "seller", "buyer", "price"])
        for state in enumerate_states(self.config):
            for i, j in self.links[state]:
                writer.writerow([f"{state:#x}", i, j, repr(self.prices[(i, j, state)])])
        return buf.getvalue()


def solve_market(config: MarketConfig, policy, keep_systems: bool = False) -> Solution:
    """Backward induction over the state lattice for a fixed trading policy."""
    sol = Solution(config, policy)
    for state in enumerate_states(config):
        if state == config.full_mask:
            sol.links[state] = ()
            sol.values[state] = np.zeros(config.n_agents)
            continue
        links = link_sets(config, policy, state).active
        sol.links[state] = links
        if links:
            system = assemble_price_system(config, state, links, sol.values)
            prices = solve_state_prices(system)
            if keep_systems:
                sol.systems[state] = system
            for (i, j), p in zip(links, prices):
                sol.prices[(i, j, state)] = float(p)
        else:
            prices = ()
        sol.values[state] = state_values(config, state, links, prices, sol.values)
    return sol


@dataclass
class SymmetricSolution:
    """Immediate-agreement prices and values indexed by the number informed."""

    config: MarketConfig
    price_by_m: dict
    seller_value: dict
    buyer_value: dict


def symmetric_solve(config: MarketConfig, delta: float | None = None) -> SymmetricSolution:
    """Immediate-agreement solution in O(n) using symmetry across agents."""
    n, ns = config.n_agents, config.n_sellers
    d = config.discount if delta is None else delta
    w, v, rho = config.weight, config.value, config.rho
    price = {}
    vs = {n: 0.0}
    vb = {n: 0.0}
    for m in range(n - 1, ns - 1, -1):
        rm = rho / (1.0 - d * rho * redundant_link_count(m, n, ns))
        vs1, vb1 = vs[m + 1], vb[m + 1]
        # p = w(v + d Vs(m+1) - d Vb(m)) - (1-w)(d Vs(m+1) - d Vs(m)), with Vs(m), Vb(m)
        # linear in p; collect the p terms on the left.
        lhs = 1.0 - w * d * rm * m - (1 - w) * d * rm * (n - m)
        rhs = (w * v + (2 * w - 1) * d * vs1
               - w * d * rm * (m * v + d * m * (n - m - 1) * vb1 + d * m * vs1)
               + (1 - w) * d * d * rm * m * (n - m) * vs1)
        p = rhs / lhs
        price[m] = p
        vs[m] = rm * ((n - m) * p + d * m * (n - m) * vs1)
        vb[m] = rm * (m * (v - p) + d * m * (n - m - 1) * vb1 + d * m * vs1)
    return SymmetricSolution(config, price, vs, vb)


def informed_count(state: int) -> int:
    return popcount(state)


def uninformed(config: MarketConfig, state: int) -> list[int]:
    return members(config.full_mask & ~state)
