"""Monte Carlo simulation of the random-matching process under solved prices.

Each episode draws its own counter-based stream (Philox keyed by the seed and
the episode index), so results do not depend on evaluation order.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import all_pairs

CUTOFF = 1e-12
BLOCK = 64


class SimulationError(RuntimeError):
    pass


@dataclass
class EpisodeResult:
    payoffs: np.ndarray
    trades: list = field(default_factory=list)
    terminal_period: int = 0
    terminal_state: object = None


@dataclass
class ValueEstimate:
    mean: np.ndarray
    std_error: np.ndarray
    episodes: int
    seed: int
    start_state: object = None

    def to_dict(self) -> dict:
        state = self.start_state
        if isinstance(state, tuple):
            state = ",".join(f"{s:#x}" for s in state)
        elif state is not None:
            state = f"{state:#x}"
        return {"start_state": state, "episodes": self.episodes, "seed": self.seed,
                "mean": [float(x) for x in self.mean],
                "std_error": [float(x) for x in self.std_error]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(episode)))


def simulate_episode(solution, start_state=None, seed: int = 0, episode: int = 0,
                     cutoff: float = CUTOFF) -> EpisodeResult:
    """Run one discounted episode; one uniformly drawn pair meets per period."""
    cfg = solution.config
    pairs = all_pairs(cfg)
    d, v = cfg.discount, cfg.value
    state = solution.start_state() if start_state is None else start_state
    rng = episode_rng(seed, episode)
    payoffs = np.zeros(cfg.n_agents)
    trades = []
    weight = 1.0
    t = 0
    draws = ()
    k = 0
    while not solution.is_absorbing(state) and weight >= cutoff:
        if k == len(draws):
            draws = rng.integers(len(pairs), size=BLOCK)
            k = 0
        a, b = pairs[draws[k]]
        k += 1
        trade = solution.active_trade(a, b, state)
        if trade is not None:
            i, j, item, price, nxt = trade
            if price is None or not math.isfinite(price):
                raise SimulationError(f"no price for executed trade {i}->{j} in {state}")
            payoffs[i] += weight * price
            payoffs[j] += weight * ((v if item == 2 else 0.0) - price)
            trades.append((t, i, j, item, price))
            state = nxt
        t += 1
        weight *= d
    return EpisodeResult(payoffs, trades, t, state)


def estimate_values(solution, start_state=None, episodes: int = 10_000, seed: int = 0,
                    keep_logs: int = 0):
    """Sample mean and standard error of discounted payoffs over seeded episodes.

    Returns ``(estimate, logs)`` where ``logs`` holds the first ``keep_logs``
    episodes' trade lists.
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    n = solution.config.n_agents
    total = np.zeros(n)
    total_sq = np.zeros(n)
    logs = []
    for e in range(episodes):
        res = simulate_episode(solution, start_state, seed, e)
        total += res.payoffs
        total_sq += res.payoffs ** 2
        if e < keep_logs:
            logs.append(res.trades)
    mean = total / episodes
    if episodes > 1:
        var = np.maximum(total_sq - episodes * mean ** 2, 0.0) / (episodes - 1)
        se = np.sqrt(var / episodes)
    else:
        se = np.full(n, math.inf)
    start = solution.start_state() if start_state is None else start_state
    return ValueEstimate(mean, se, episodes, seed, start), logs


def trade_log_csv(logs) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["episode", "period", "seller", "buyer", "item", "price"])
    for e, trades in enumerate(logs):
        for t, i, j, item, price in trades:
            writer.writerow([e, t, i, j, "info" if item == 2 else "token", repr(price)])
    return buf.getvalue()
