"""Random-scan Gibbs sampler for the network distribution ``pi(a) ~ exp(Q(a))``.

Each step picks ``flips_per_step`` distinct off-diagonal entries uniformly at
random and redraws them one after another from their full conditionals,
``P(a_ij = 1 | rest) = sigmoid(delta_Q_ij)``.  A step consumes exactly two
uniforms per flip (cell choice, then the Bernoulli draw) so a chain is fully
determined by its stream.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .graph import VillageNetwork
from .potential import ScoreMatrices, _delta
from .rng import stream

__all__ = [
    "GibbsConfig",
    "gibbs_step",
    "simulate_network",
    "simulate_villages",
    "sample_states",
    "density_trace",
]


@dataclass(frozen=True)
class GibbsConfig:
    """``sweeps`` is the number of Gibbs steps R per simulated network."""

    sweeps: int = 7000
    flips_per_step: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.sweeps < 0:
            raise ValueError(f"sweeps must be >= 0, got {self.sweeps}")
        if self.flips_per_step < 1:
            raise ValueError(f"flips_per_step must be >= 1, got {self.flips_per_step}")

    def draws_needed(self, steps: int | None = None) -> int:
        return 2 * self.flips_per_step * (self.sweeps if steps is None else steps)


@njit(cache=True, nogil=True)
def _run(a, at, u, m, v, draws, flips):
    n = a.shape[0]
    ncell = n * (n - 1)
    chosen = np.empty(flips, np.int64)
    steps = draws.shape[0] // (2 * flips)
    p = 0
    for _ in range(steps):
        for f in range(flips):
            avail = ncell - f
            c = int(draws[p] * avail)
            if c >= avail:
                c = avail - 1
            p += 1
            # map c to the c-th cell not chosen earlier in this step;
            # chosen[:f] is kept sorted
            pos = f
            for g in range(f):
                if chosen[g] <= c:
                    c += 1
                else:
                    pos = g
                    break
            for g in range(f, pos, -1):
                chosen[g] = chosen[g - 1]
            chosen[pos] = c
            i = c // (n - 1)
            j = c - i * (n - 1)
            if j >= i:
                j += 1
            d = _delta(a, at, u, m, v, i, j)
            x = 1.0 if draws[p] * (1.0 + np.exp(-d)) < 1.0 else 0.0
            p += 1
            a[i, j] = x
            at[j, i] = x


@njit(cache=True, nogil=True)
def _record(a, at, u, m, v, draws, flips, thin, out):
    # run `thin` steps between recorded states; states encoded as bit masks
    n = a.shape[0]
    per = 2 * flips * thin
    for r in range(out.shape[0]):
        _run(a, at, u, m, v, draws[r * per : (r + 1) * per], flips)
        code = 0
        bit = 0
        for i in range(n):
            for j in range(n):
                if i != j:
                    if a[i, j] > 0.5:
                        code |= 1 << bit
                    bit += 1
        out[r] = code


def _work(net_or_adj) -> tuple[np.ndarray, np.ndarray]:
    a = np.array(getattr(net_or_adj, "adjacency", net_or_adj), dtype=np.float64)
    return a, np.ascontiguousarray(a.T)


def _check(a: np.ndarray, scores: ScoreMatrices):
    if a.shape != scores.u.shape:
        raise ValueError("network and scores disagree in size")
    if a.shape[0] < 2:
        raise ValueError("a network needs at least two nodes")


def gibbs_step(
    net: VillageNetwork, scores: ScoreMatrices, rng: np.random.Generator, flips_per_step: int = 1
) -> VillageNetwork:
    a, at = _work(net)
    _check(a, scores)
    _run(a, at, scores.u, scores.m, scores.v, rng.random(2 * flips_per_step), flips_per_step)
    return net.with_adjacency(a.astype(np.uint8))


def run_chain(adjacency: np.ndarray, scores: ScoreMatrices, draws: np.ndarray, flips: int) -> np.ndarray:
    """Advance a float64 adjacency copy in place; low-level entry for batch callers."""
    a, at = _work(adjacency)
    _run(a, at, scores.u, scores.m, scores.v, draws, flips)
    return a


def simulate_network(
    start: VillageNetwork,
    scores: ScoreMatrices,
    config: GibbsConfig,
    rng: np.random.Generator | None = None,
) -> VillageNetwork:
    """State after ``config.sweeps`` steps from ``start``.

    Without ``rng`` the stream is ``(config.seed, "gibbs", village_id)``.
    """
    a, at = _work(start)
    _check(a, scores)
    if config.sweeps == 0:
        return start
    if rng is None:
        rng = stream(config.seed, "gibbs", start.village_id)
    draws = rng.random(config.draws_needed())
    _run(a, at, scores.u, scores.m, scores.v, draws, config.flips_per_step)
    return start.with_adjacency(a.astype(np.uint8))


def simulate_villages(
    starts: Sequence[VillageNetwork],
    scores: Sequence[ScoreMatrices],
    config: GibbsConfig,
    rng_for: Callable[[VillageNetwork], np.random.Generator] | None = None,
    workers: int = 1,
) -> list[VillageNetwork]:
    """Simulate many villages, each on its own stream; output ignores ``workers``."""
    if rng_for is None:
        def rng_for(net):
            return stream(config.seed, "gibbs", net.village_id)

    def one(k):
        return simulate_network(starts[k], scores[k], config, rng_for(starts[k]))

    if workers <= 1:
        return [one(k) for k in range(len(starts))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(len(starts))))


def decode_state(code: int, n: int) -> np.ndarray:
    a = np.zeros((n, n), dtype=np.uint8)
    bit = 0
    for i in range(n):
        for j in range(n):
            if i != j:
                a[i, j] = (code >> bit) & 1
                bit += 1
    return a


def sample_states(
    start: VillageNetwork,
    scores: ScoreMatrices,
    n_states: int,
    thin: int,
    rng: np.random.Generator,
    flips_per_step: int = 1,
    chunk: int = 100_000,
) -> np.ndarray:
    """Record the chain state every ``thin`` steps, as integer bit masks.

    Bit ``b`` of a code is the ``b``-th off-diagonal entry in row-major order;
    see :func:`decode_state`.  Needs ``n * (n - 1) < 63``.
    """
    a, at = _work(start)
    _check(a, scores)
    if a.shape[0] * (a.shape[0] - 1) >= 63:
        raise ValueError("state codes only fit networks with fewer than 63 entries")
    out = np.empty(n_states, dtype=np.int64)
    per = 2 * flips_per_step * thin
    for lo in range(0, n_states, chunk):
        hi = min(lo + chunk, n_states)
        draws = rng.random((hi - lo) * per)
        _record(a, at, scores.u, scores.m, scores.v, draws, flips_per_step, thin, out[lo:hi])
    return out


def density_trace(
    start: VillageNetwork,
    scores: ScoreMatrices,
    config: GibbsConfig,
    every: int,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Density after every ``every`` steps, ``config.sweeps // every`` values."""
    a, at = _work(start)
    _check(a, scores)
    if rng is None:
        rng = stream(config.seed, "gibbs-trace", start.village_id)
    n = a.shape[0]
    blocks = config.sweeps // every
    out = np.empty(blocks)
    for b in range(blocks):
        _run(a, at, scores.u, scores.m, scores.v, rng.random(config.draws_needed(every)), config.flips_per_step)
        out[b] = a.sum() / (n * (n - 1))
    return out
