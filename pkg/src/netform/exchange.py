"""Adaptive exchange-algorithm MCMC for the potential-game network model.

The likelihood ``pi(A | beta) = exp(Q(A; beta)) / Z(beta)`` has an intractable
``Z``.  Each iteration proposes ``beta' ~ N(beta, tau * Sigma)``, simulates an
auxiliary network per village at ``beta'`` (Gibbs, started from the observed
network) and accepts with

    log r = sum_r [Q(A~_r; beta) + Q(A_r; beta') - Q(A~_r; beta') - Q(A_r; beta)]
          = (beta' - beta) . (S(A) - S(A~))

because ``Q`` is linear in ``beta`` with sufficient statistics ``S``.  The
prior is flat.  ``log tau`` follows a Robbins-Monro recursion towards the
target acceptance rate.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .gibbs import GibbsConfig, _run
from .graph import VillageNetwork
from .potential import ParameterVector, sufficient_statistics
from .rng import stream

__all__ = [
    "DivergedChainError",
    "AdaptationSchedule",
    "SamplerConfig",
    "EstimationData",
    "ChainState",
    "ExchangeOutcome",
    "PosteriorChain",
    "TwoPhaseResult",
    "adapt_scale",
    "exchange_step",
    "run_chain",
    "run_two_phase",
    "regularized_covariance",
    "summarize_posterior",
    "batch_means_se",
    "write_chain_csv",
    "read_chain_csv",
]

log = logging.getLogger(__name__)


class DivergedChainError(RuntimeError):
    def __init__(self, message: str, beta: np.ndarray):
        super().__init__(f"{message}; offending beta = {np.array2string(beta, precision=4)}")
        self.beta = beta


@dataclass(frozen=True)
class AdaptationSchedule:
    """Step sizes ``gamma_t = c / t**kappa`` with ``0.5 < kappa <= 1``."""

    c: float = 1.0
    kappa: float = 0.6
    target: float = 0.234

    def __post_init__(self):
        if not 0.5 < self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in (0.5, 1], got {self.kappa}")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if not 0.0 < self.target < 1.0:
            raise ValueError("target acceptance must lie in (0, 1)")

    def gamma(self, t: int) -> float:
        return self.c / t**self.kappa


def adapt_scale(
    log_tau: float,
    acceptance_prob: float,
    step_index: int,
    schedule: AdaptationSchedule = AdaptationSchedule(),
) -> float:
    """One Robbins-Monro update of ``log tau``."""
    if step_index < 1:
        raise ValueError("step_index starts at 1")
    return log_tau + schedule.gamma(step_index) * (acceptance_prob - schedule.target)


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 100_000
    retain: int = 50_000
    tau0: float = 1.0
    target_acceptance: float = 0.234
    adapt_c: float = 1.0
    adapt_kappa: float = 0.6
    adapt_on: str = "probability"
    proposal_cov: np.ndarray | None = None
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    seed: int = 0
    workers: int = 1
    checkpoint_every: int = 1000

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 1 <= self.retain <= self.iterations:
            raise ValueError(f"retain must lie in [1, iterations], got {self.retain}")
        if self.tau0 <= 0:
            raise ValueError("tau0 must be positive")
        if self.adapt_on not in ("probability", "flag"):
            raise ValueError("adapt_on must be 'probability' or 'flag'")
        AdaptationSchedule(self.adapt_c, self.adapt_kappa, self.target_acceptance)

    @property
    def schedule(self) -> AdaptationSchedule:
        return AdaptationSchedule(self.adapt_c, self.adapt_kappa, self.target_acceptance)


class EstimationData:
    """Observed networks and features of all villages, packed for the sampler."""

    def __init__(self, networks: Sequence[VillageNetwork], features: Sequence):
        if len(networks) != len(features) or not networks:
            raise ValueError("need one feature set per network, at least one village")
        first = features[0]
        self.u_names, self.m_names, self.v_names = first.u_names, first.m_names, first.v_names
        self.village_ids = []
        self._obs, self._xu, self._xm, self._xv = [], [], [], []
        stats = []
        for net, f in zip(networks, features):
            if net.village_id != f.village_id or net.n != f.n:
                raise ValueError(f"network/feature mismatch for village {net.village_id}")
            if (f.u_names, f.m_names, f.v_names) != (self.u_names, self.m_names, self.v_names):
                raise ValueError("feature names must be identical across villages")
            n = net.n
            self.village_ids.append(net.village_id)
            self._obs.append(np.ascontiguousarray(net.adjacency, dtype=np.float64))
            self._xu.append(np.ascontiguousarray(f.u_features.reshape(n * n, -1)))
            self._xm.append(np.ascontiguousarray(f.m_features.reshape(n * n, -1)))
            self._xv.append(np.ascontiguousarray(f.v_features.reshape(n * n, -1)))
            stats.append(sufficient_statistics(net, f))
        self.observed_stats = np.sum(stats, axis=0)
        self.networks = list(networks)
        self.features = list(features)

    @property
    def dim(self) -> int:
        return len(self.u_names) + len(self.m_names) + len(self.v_names)

    @property
    def names(self) -> list[str]:
        return ParameterVector.zeros(self).names

    def parameter(self, flat) -> ParameterVector:
        return ParameterVector.zeros(self).with_flat(flat)

    def __len__(self):
        return len(self.village_ids)

    def _split(self, beta):
        ku, km = len(self.u_names), len(self.m_names)
        return beta[:ku], beta[ku : ku + km], beta[ku + km :]

    def scores(self, k: int, beta: np.ndarray):
        bu, bm, bv = self._split(beta)
        n = self._obs[k].shape[0]
        with np.errstate(over="ignore", invalid="ignore"):
            u = (self._xu[k] @ bu).reshape(n, n) if bu.size else np.zeros((n, n))
            m = (self._xm[k] @ bm).reshape(n, n) if bm.size else np.zeros((n, n))
            v = (self._xv[k] @ bv).reshape(n, n) if bv.size else np.zeros((n, n))
        return u, m, v

    def village_stats(self, k: int, a: np.ndarray) -> np.ndarray:
        paths = a @ a
        np.fill_diagonal(paths, 0.0)
        return np.concatenate(
            [
                a.reshape(-1) @ self._xu[k],
                np.triu(a * a.T, k=1).reshape(-1) @ self._xm[k],
                paths.reshape(-1) @ self._xv[k],
            ]
        )

    def simulate_stats(
        self,
        beta: np.ndarray,
        gibbs: GibbsConfig,
        seed: int,
        counter: tuple[int, int],
        pool: ThreadPoolExecutor | None = None,
    ) -> np.ndarray:
        """Summed statistics of one auxiliary network per village at ``beta``."""

        def one(k):
            u, m, v = self.scores(k, beta)
            if not (np.isfinite(u).all() and np.isfinite(m).all() and np.isfinite(v).all()):
                return None
            a = self._obs[k].copy()
            at = np.ascontiguousarray(a.T)
            rng = stream(seed, "exchange-gibbs", self.village_ids[k], counter=counter)
            _run(a, at, u, m, v, rng.random(gibbs.draws_needed()), gibbs.flips_per_step)
            return self.village_stats(k, a)

        if pool is None:
            parts = [one(k) for k in range(len(self))]
        else:
            parts = list(pool.map(one, range(len(self))))
        if any(p is None for p in parts):
            raise DivergedChainError("non-finite utility scores", beta)
        total = parts[0].copy()
        for p in parts[1:]:
            total += p
        return total


@dataclass
class ChainState:
    beta: np.ndarray
    log_tau: float
    chol: np.ndarray
    phase: int = 1
    iteration: int = 0


@dataclass(frozen=True)
class ExchangeOutcome:
    beta: np.ndarray
    proposal: np.ndarray
    accepted: bool
    acceptance_prob: float
    log_ratio: float


def exchange_log_ratio(
    beta: np.ndarray, proposal: np.ndarray, observed_stats: np.ndarray, simulated_stats: np.ndarray
) -> float:
    return float((proposal - beta) @ (observed_stats - simulated_stats))


def exchange_step(
    state: ChainState,
    data: EstimationData,
    config: SamplerConfig,
    pool: ThreadPoolExecutor | None = None,
    proposal: np.ndarray | None = None,
) -> ExchangeOutcome:
    """Advance ``state`` by one exchange iteration (``state.iteration + 1``)."""
    t = state.iteration + 1
    rng = stream(config.seed, "exchange", counter=(t, state.phase))
    z = rng.standard_normal(len(state.beta))
    log_u = math.log(rng.random())
    if proposal is None:
        proposal = state.beta + math.exp(0.5 * state.log_tau) * (state.chol @ z)
    if not np.all(np.isfinite(proposal)):
        raise DivergedChainError("non-finite proposal", proposal)
    sim = data.simulate_stats(proposal, config.gibbs, config.seed, (t, state.phase), pool)
    with np.errstate(over="ignore", invalid="ignore"):
        lr = exchange_log_ratio(state.beta, proposal, data.observed_stats, sim)
    if math.isnan(lr):
        raise DivergedChainError("non-finite potential difference", proposal)
    prob = math.exp(min(0.0, lr))
    accepted = log_u < lr
    return ExchangeOutcome(
        beta=proposal if accepted else state.beta,
        proposal=proposal,
        accepted=bool(accepted),
        acceptance_prob=prob,
        log_ratio=lr,
    )


@dataclass
class PosteriorChain:
    """Draws (T x K), log tau trace, acceptance flags and probabilities of one phase."""

    draws: np.ndarray
    log_tau: np.ndarray
    accepted: np.ndarray
    acceptance_prob: np.ndarray
    names: list[str]
    phase: int
    retain: int

    @property
    def retained(self) -> np.ndarray:
        return self.draws[-self.retain :]

    def acceptance_rate(self, last: int | None = None) -> float:
        flags = self.accepted if last is None else self.accepted[-last:]
        return float(np.mean(flags))

    def __len__(self):
        return len(self.draws)


@dataclass
class TwoPhaseResult:
    phase1: PosteriorChain
    phase2: PosteriorChain
    proposal_cov: np.ndarray
    regularization: float

    @property
    def posterior(self) -> PosteriorChain:
        return self.phase2


def regularized_covariance(draws: np.ndarray) -> tuple[np.ndarray, float]:
    """Empirical covariance plus ``eps * I``, ``eps = 1e-6 * mean diagonal``."""
    cov = np.atleast_2d(np.cov(draws, rowvar=False))
    mean_diag = float(np.mean(np.diag(cov)))
    eps = 1e-6 * mean_diag
    if eps <= 0 or not math.isfinite(eps):
        eps = 1e-6
        log.warning("phase-1 draws have no spread; proposal covariance set to %g * I", eps)
    cond = np.linalg.cond(cov) if mean_diag > 0 else math.inf
    if cond > 1e12:
        log.warning("empirical covariance is near-singular (condition %.3g); adding %g * I", cond, eps)
    else:
        log.info("adding %g * I to the empirical covariance", eps)
    return cov + eps * np.eye(cov.shape[0]), eps


class _Checkpoint:
    def __init__(self, path: Path | None, every: int):
        self.path = Path(path) if path is not None else None
        self.every = every

    def due(self, t: int) -> bool:
        return self.path is not None and self.every > 0 and t % self.every == 0

    def save(self, **arrays):
        tmp = self.path.with_name(self.path.name + ".tmp.npz")
        np.savez(tmp, **arrays)
        os.replace(tmp, self.path)

    def load(self) -> dict | None:
        if self.path is None or not self.path.exists():
            return None
        with np.load(self.path, allow_pickle=False) as z:
            return {k: z[k] for k in z.files}


def run_chain(
    data: EstimationData,
    config: SamplerConfig,
    beta0,
    proposal_cov: np.ndarray | None = None,
    phase: int = 1,
    checkpoint: str | os.PathLike | None = None,
    stop_after: int | None = None,
    _resume: dict | None = None,
    _extra: dict | None = None,
) -> PosteriorChain | None:
    """Run ``config.iterations`` exchange iterations from ``beta0``.

    ``stop_after`` halts (after checkpointing) once that many iterations of this
    phase are done and returns None; rerunning with the same checkpoint resumes.
    """
    K = data.dim
    cov = np.eye(K) if proposal_cov is None else np.asarray(proposal_cov, dtype=float)
    chol = np.linalg.cholesky(cov)
    T = config.iterations
    draws = np.empty((T, K))
    log_tau = np.empty(T)
    accepted = np.zeros(T, dtype=bool)
    probs = np.empty(T)
    state = ChainState(np.array(beta0, dtype=float), math.log(config.tau0), chol, phase, 0)
    if state.beta.shape != (K,):
        raise ValueError(f"beta0 must have {K} coordinates")
    if _resume is not None:
        done = int(_resume["iteration"])
        draws[:done] = _resume["draws"][:done]
        log_tau[:done] = _resume["log_tau"][:done]
        accepted[:done] = _resume["accepted"][:done]
        probs[:done] = _resume["acceptance_prob"][:done]
        state.beta = _resume["beta"].copy()
        state.log_tau = float(_resume["state_log_tau"])
        state.iteration = done
    ckpt = _Checkpoint(checkpoint, config.checkpoint_every)
    schedule = config.schedule
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        while state.iteration < T:
            out = exchange_step(state, data, config, pool)
            t = state.iteration + 1
            signal = out.acceptance_prob if config.adapt_on == "probability" else float(out.accepted)
            state.beta = out.beta
            state.log_tau = adapt_scale(state.log_tau, signal, t, schedule)
            state.iteration = t
            draws[t - 1] = out.beta
            log_tau[t - 1] = state.log_tau
            accepted[t - 1] = out.accepted
            probs[t - 1] = out.acceptance_prob
            stopping = stop_after is not None and t >= stop_after and t < T
            if ckpt.due(t) or stopping:
                ckpt.save(
                    phase=phase,
                    iteration=t,
                    draws=draws[:t],
                    log_tau=log_tau[:t],
                    accepted=accepted[:t],
                    acceptance_prob=probs[:t],
                    beta=state.beta,
                    state_log_tau=state.log_tau,
                    proposal_cov=cov,
                    **(_extra or {}),
                )
            if stopping:
                return None
    finally:
        if pool is not None:
            pool.shutdown()
    return PosteriorChain(draws, log_tau, accepted, probs, data.names, phase, config.retain)


def run_two_phase(
    data: EstimationData,
    config: SamplerConfig,
    beta0=None,
    checkpoint: str | os.PathLike | None = None,
    stop_after: int | None = None,
) -> TwoPhaseResult | None:
    """Phase 1 with identity covariance; phase 2 with the covariance of phase 1's
    retained draws.  Both phases start at ``tau0``; phase 2 starts where phase 1
    ended.  ``stop_after`` counts iterations over both phases.
    """
    K = data.dim
    beta0 = np.zeros(K) if beta0 is None else np.asarray(beta0, dtype=float)
    saved = _Checkpoint(checkpoint, config.checkpoint_every).load()
    T = config.iterations
    phase1 = None
    resume1 = resume2 = None
    if saved is not None:
        if int(saved["phase"]) == 1:
            resume1 = saved
        else:
            phase1 = PosteriorChain(
                saved["p1_draws"], saved["p1_log_tau"], saved["p1_accepted"],
                saved["p1_acceptance_prob"], data.names, 1, config.retain,
            )
            resume2 = saved
    if phase1 is None:
        init = None if config.proposal_cov is None else config.proposal_cov
        phase1 = run_chain(
            data, config, beta0, init, 1, checkpoint,
            stop_after=stop_after, _resume=resume1,
        )
        if phase1 is None:
            return None
    cov, eps = regularized_covariance(phase1.retained)
    extra = {
        "p1_draws": phase1.draws,
        "p1_log_tau": phase1.log_tau,
        "p1_accepted": phase1.accepted,
        "p1_acceptance_prob": phase1.acceptance_prob,
    }
    if checkpoint is not None and resume2 is None:
        _Checkpoint(checkpoint, 1).save(
            phase=2, iteration=0, draws=np.empty((0, K)), log_tau=np.empty(0),
            accepted=np.empty(0, bool), acceptance_prob=np.empty(0),
            beta=phase1.draws[-1], state_log_tau=math.log(config.tau0),
            proposal_cov=cov, **extra,
        )
    stop2 = None if stop_after is None else stop_after - T
    if stop2 is not None and stop2 <= 0:
        return None
    start2 = phase1.draws[-1] if resume2 is None else resume2["beta"]
    phase2 = run_chain(
        data, config, start2, cov, 2, checkpoint,
        stop_after=stop2, _resume=None if resume2 is None or int(resume2["iteration"]) == 0 else resume2,
        _extra=extra,
    )
    if phase2 is None:
        return None
    return TwoPhaseResult(phase1, phase2, cov, eps)


# ---------------------------------------------------------------------------
# summaries and I/O


def batch_means_se(x: np.ndarray, batches: int = 20) -> np.ndarray:
    """Monte Carlo standard error of the mean of each column by batch means."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    size = x.shape[0] // batches
    if size < 1:
        raise ValueError("not enough draws for batch means")
    means = x[: size * batches].reshape(batches, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(batches)


def _stars(p_two_sided: float) -> str:
    if p_two_sided < 0.01:
        return "***"
    if p_two_sided < 0.05:
        return "**"
    if p_two_sided < 0.10:
        return "*"
    return ""


def summarize_posterior(chain: PosteriorChain) -> pd.DataFrame:
    """Posterior mean, SD, tail probability and stars over the retained draws.

    Stars use the two-sided posterior tail ``2 * min(P(b > 0), P(b < 0))`` at
    the 1/5/10 % levels.
    """
    x = chain.retained
    p_pos = (x > 0).mean(axis=0)
    p_two = 2 * np.minimum(p_pos, (x < 0).mean(axis=0))
    q = np.percentile(x, [2.5, 97.5], axis=0)
    return pd.DataFrame(
        {
            "mean": x.mean(axis=0),
            "sd": x.std(axis=0, ddof=1),
            "q025": q[0],
            "q975": q[1],
            "p_positive": p_pos,
            "stars": [_stars(p) for p in p_two],
            "mcse": batch_means_se(x) if len(x) >= 40 else np.full(x.shape[1], np.nan),
        },
        index=chain.names,
    )


def write_chain_csv(result: TwoPhaseResult, path, header: str | None = None) -> None:
    rows = []
    for chain in (result.phase1, result.phase2):
        T = len(chain)
        df = pd.DataFrame(chain.draws, columns=chain.names)
        df.insert(0, "iteration", np.arange(1, T + 1))
        df.insert(0, "phase", chain.phase)
        df["log_tau"] = chain.log_tau
        df["accepted"] = chain.accepted.astype(int)
        df["acceptance_prob"] = chain.acceptance_prob
        df["retained"] = (
            (np.arange(T) >= T - chain.retain) & (chain.phase == 2)
        ).astype(int)
        rows.append(df)
    with Path(path).open("w", newline="") as fh:
        if header:
            fh.write(header)
        pd.concat(rows).to_csv(fh, index=False, lineterminator="\n", float_format="%.17g")


def read_chain_csv(path) -> tuple[list[str], np.ndarray]:
    """Coordinate names and the retained posterior draws of a chain file."""
    df = pd.read_csv(path, comment="#", float_precision="round_trip")
    meta = {"phase", "iteration", "log_tau", "accepted", "acceptance_prob", "retained"}
    if not meta <= set(df.columns):
        raise ValueError(f"{path}: not a chain file (missing {sorted(meta - set(df.columns))})")
    names = [c for c in df.columns if c not in meta]
    kept = df[df["retained"] == 1]
    if kept.empty:
        raise ValueError(f"{path}: chain has no retained draws")
    return names, kept[names].to_numpy(dtype=float)
