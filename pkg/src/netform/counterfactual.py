"""Counterfactual experiments: regenerate covariates, resimulate, summarize.

For every grid value and replicate a parameter vector is drawn from the
retained posterior draws, the scenario's covariate is regenerated on the
observed households, and each village's network is simulated from the empty
network.  Replicate ``r`` uses the same parameter draw and the same random
streams at every grid value (common random numbers), so curves across the
grid differ only through the covariates.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .features import FeatureRecipe, GenderCoding, build_features
from .gibbs import GibbsConfig, _run
from .graph import VillageNetwork, network_stats
from .households import EDUCATION_LEVELS, OCCUPATIONS, ConfigError, Village
from .potential import ParameterVector, score
from .rng import stream

__all__ = [
    "ScenarioKind",
    "Scenario",
    "CounterfactualResult",
    "dispersion_transform",
    "regenerate_covariates",
    "run_counterfactual",
    "STATISTICS",
]

log = logging.getLogger(__name__)


class ScenarioKind(str, enum.Enum):
    SAME_GENDER_SHARE = "same_gender_share"
    MALE_SHARE = "male_share"
    INCOME_DISPERSION = "income_dispersion"
    OCCUPATION_SHARE = "occupation_share"
    EDUCATION_HOMOGENEITY = "education_homogeneity"
    AGE_DISPERSION = "age_dispersion"
    MOTHER_HOME_SHARE = "mother_home_share"


_GENDER_KINDS = {ScenarioKind.SAME_GENDER_SHARE, ScenarioKind.MALE_SHARE}
_RANGES = {
    ScenarioKind.SAME_GENDER_SHARE: (0.5, 1.0),
    ScenarioKind.MALE_SHARE: (0.0, 1.0),
    ScenarioKind.INCOME_DISPERSION: (0.0, math.inf),
    ScenarioKind.OCCUPATION_SHARE: (0.0, 1.0),
    ScenarioKind.EDUCATION_HOMOGENEITY: (0.25, 1.0),
    ScenarioKind.AGE_DISPERSION: (0.0, math.inf),
    ScenarioKind.MOTHER_HOME_SHARE: (0.0, 1.0),
}

STATISTICS = ("mean_degree", "density", "clustering", "asymmetry", "mean_distance")


@dataclass(frozen=True)
class Scenario:
    """One counterfactual experiment.

    ``target`` is the occupation for OCCUPATION_SHARE (default daily_laborer),
    the parent (``father``/``mother``) for EDUCATION_HOMOGENEITY and
    AGE_DISPERSION, or the favoured education level as ``parent:level``.
    ``majority`` picks the majority gender for SAME_GENDER_SHARE: ``boy``,
    ``girl`` or ``random`` (a fair coin per replicate).
    """

    kind: ScenarioKind
    grid: tuple[float, ...]
    replications: int = 1000
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    seed: int = 0
    target: str | None = None
    majority: str = "random"

    def __post_init__(self):
        kind = ScenarioKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        if not self.grid:
            raise ConfigError(f"{kind.value}: empty grid")
        lo, hi = _RANGES[kind]
        for g in self.grid:
            if not lo <= g <= hi:
                raise ConfigError(f"{kind.value}: grid value {g} outside [{lo}, {hi}]")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.majority not in ("random", "boy", "girl"):
            raise ConfigError("majority must be 'random', 'boy' or 'girl'")
        if kind is ScenarioKind.OCCUPATION_SHARE and self.target not in (None, *OCCUPATIONS):
            raise ConfigError(f"unknown occupation {self.target!r}")
        if kind in (ScenarioKind.AGE_DISPERSION, ScenarioKind.EDUCATION_HOMOGENEITY):
            parent = (self.target or "father").split(":")[0]
            if parent not in ("father", "mother"):
                raise ConfigError(f"{kind.value}: target must name 'father' or 'mother'")

    @property
    def label(self) -> str:
        return self.kind.value if self.target is None else f"{self.kind.value}:{self.target}"


def dispersion_transform(
    x: np.ndarray, delta: float, center: float, floor: bool = True
) -> tuple[np.ndarray, int]:
    """``center + delta * (x - center)``, floored at 0 unless ``floor=False``.

    Returns the values and the number of negative values (floored or not).
    """
    x = np.asarray(x, dtype=float)
    # delta = 1 must reproduce the data bit for bit, which the affine form does not
    y = x.copy() if delta == 1 else center + delta * (x - center)
    neg = y < 0
    return (np.where(neg, 0.0, y) if floor else y), int(neg.sum())


def _households(villages):
    return [h for v in villages for h in v.households]


def _rebuild(villages: Sequence[Village], new_households) -> list[Village]:
    out, k = [], 0
    for v in villages:
        out.append(Village(v.village_id, tuple(new_households[k : k + v.n])))
        k += v.n
    return out


def _inverse_cdf(u: np.ndarray, probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(probs) - 1)


def regenerate_covariates(
    villages: Sequence[Village],
    kind: ScenarioKind | str,
    value: float,
    rng: np.random.Generator,
    target: str | None = None,
    majority: str = "random",
) -> list[Village]:
    """Copy of ``villages`` with the scenario's covariate regenerated at ``value``.

    Dispersion scenarios centre on the sample mean of ``villages`` and floor
    negative values at zero (the count is logged).  Uniform draws are taken in
    a fixed order, so the same ``rng`` state couples different values.
    """
    kind = ScenarioKind(kind)
    lo, hi = _RANGES[kind]
    if not lo <= value <= hi:
        raise ConfigError(f"{kind.value}: value {value} outside [{lo}, {hi}]")
    hh = _households(villages)
    N = len(hh)

    if kind is ScenarioKind.SAME_GENDER_SHARE:
        coin = rng.random()
        boys = majority == "boy" or (majority == "random" and coin < 0.5)
        in_majority = rng.random(N) < value
        has_boy = in_majority if boys else ~in_majority
        new = [replace(h, has_boy=bool(b), has_girl=not b) for h, b in zip(hh, has_boy)]
    elif kind is ScenarioKind.MALE_SHARE:
        has_boy = rng.random(N) < value
        new = [replace(h, has_boy=bool(b), has_girl=not b) for h, b in zip(hh, has_boy)]
    elif kind in (ScenarioKind.INCOME_DISPERSION, ScenarioKind.AGE_DISPERSION):
        name = "income" if kind is ScenarioKind.INCOME_DISPERSION else f"{target or 'father'}_age"
        x = np.array([getattr(h, name) for h in hh], dtype=float)
        y, floored = dispersion_transform(x, value, float(x.mean()))
        if floored:
            log.info("%s: floored %d of %d values at 0 (delta=%g)", name, floored, N, value)
        new = [replace(h, **{name: float(val)}) for h, val in zip(hh, y)]
    elif kind is ScenarioKind.OCCUPATION_SHARE:
        occ = target or "daily_laborer"
        others = [o for o in OCCUPATIONS if o != occ]
        observed = np.array([sum(h.father_occupation == o for h in hh) for o in others], float)
        probs = observed / observed.sum() if observed.sum() > 0 else np.full(len(others), 1 / len(others))
        is_target = rng.random(N) < value
        pick = _inverse_cdf(rng.random(N), probs)
        new = [
            replace(h, father_occupation=occ if t else others[k])
            for h, t, k in zip(hh, is_target, pick)
        ]
    elif kind is ScenarioKind.EDUCATION_HOMOGENEITY:
        parent, _, level = (target or "father").partition(":")
        name = f"{parent}_education"
        if not level:
            counts = [sum(getattr(h, name) == e for h in hh) for e in EDUCATION_LEVELS]
            level = EDUCATION_LEVELS[int(np.argmax(counts))]
        if level not in EDUCATION_LEVELS:
            raise ConfigError(f"unknown education level {level!r}")
        k0 = EDUCATION_LEVELS.index(level)
        probs = np.full(len(EDUCATION_LEVELS), (1 - value) / (len(EDUCATION_LEVELS) - 1))
        probs[k0] = value
        # favoured level first so the coupling is monotone in value
        order = [k0] + [k for k in range(len(EDUCATION_LEVELS)) if k != k0]
        pick = _inverse_cdf(rng.random(N), probs[order])
        new = [replace(h, **{name: EDUCATION_LEVELS[order[k]]}) for h, k in zip(hh, pick)]
    elif kind is ScenarioKind.MOTHER_HOME_SHARE:
        home = rng.random(N) < value
        new = [replace(h, mother_stays_home=bool(b)) for h, b in zip(hh, home)]
    else:  # pragma: no cover
        raise ConfigError(f"unhandled scenario {kind}")
    return _rebuild(villages, new)


def _fmean(x) -> float:
    x = np.sort(np.asarray(x, dtype=float))
    x = x[~np.isnan(x)]
    return math.fsum(x) / len(x) if len(x) else math.nan


def _fwmean(x, w) -> float:
    x, w = np.asarray(x, float), np.asarray(w, float)
    ok = ~np.isnan(x)
    if not ok.any():
        return math.nan
    order = np.lexsort((w[ok], x[ok]))
    xs, ws = x[ok][order], w[ok][order]
    return math.fsum(xs * ws) / math.fsum(ws)


def _aggregate(stats, sizes) -> dict[str, float]:
    sizes = np.asarray(sizes, float)
    degrees = np.array([s.mean_degree for s in stats])
    out = {
        "mean_degree": _fwmean(degrees, sizes),
        "mean_degree_unweighted": _fmean(degrees),
    }
    for name in STATISTICS[1:]:
        x = np.array([getattr(s, name) for s in stats])
        out[name] = _fmean(x)
        out[f"{name}_weighted"] = _fwmean(x, sizes)
    return out


@dataclass
class CounterfactualResult:
    scenario: Scenario
    table: pd.DataFrame
    replicates: dict = field(repr=False, default_factory=dict)

    def curve(self, statistic: str) -> pd.DataFrame:
        t = self.table
        return t[t["statistic"] == statistic].set_index("grid_value")[["mean", "lo", "hi"]]

    def to_csv(self, path, header: str | None = None) -> None:
        with Path(path).open("w", newline="") as fh:
            if header:
                fh.write(header)
            self.table.to_csv(fh, index=False, lineterminator="\n", float_format="%.17g")


def _posterior_draws(posterior) -> np.ndarray:
    draws = getattr(posterior, "retained", posterior)
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if draws.size == 0:
        raise ValueError("counterfactuals need at least one posterior draw")
    return draws


def run_counterfactual(
    posterior,
    villages: Sequence[Village],
    recipe: FeatureRecipe,
    scenario: Scenario,
    convention: GenderCoding | str = GenderCoding.ANY_OVERLAP,
    workers: int = 1,
) -> CounterfactualResult:
    """Scenario curves with 2.5/97.5 percentile bands over replicates.

    ``posterior`` is a :class:`PosteriorChain` or an array of retained draws
    ordered as u, m, v coefficients of ``recipe``.  Gender scenarios build
    features with exclusive coding; the others use ``convention``.
    """
    draws = _posterior_draws(posterior)
    template = ParameterVector(
        np.zeros(len(recipe.u)), np.zeros(len(recipe.m)), np.zeros(len(recipe.v)),
        recipe.u, recipe.m, recipe.v,
    )
    if draws.shape[1] != len(template):
        raise ValueError(
            f"posterior draws have {draws.shape[1]} coordinates, recipe needs {len(template)}"
        )
    coding = GenderCoding.EXCLUSIVE if scenario.kind in _GENDER_KINDS else GenderCoding(convention)
    kind, seed, gibbs = scenario.kind, scenario.seed, scenario.gibbs
    label = scenario.label

    def replicate(r: int):
        pick = int(stream(seed, "cf-beta", label, r).integers(len(draws)))
        beta = template.with_flat(draws[pick])
        per_grid = []
        for g in scenario.grid:
            rng = stream(seed, "cf-covariates", label, r)
            hat = regenerate_covariates(
                villages, kind, g, rng, target=scenario.target, majority=scenario.majority
            )
            stats, sizes, same = [], [], []
            for v in hat:
                f = build_features(v, recipe, coding)
                s = score(f, beta)
                a = np.zeros((v.n, v.n))
                at = np.zeros((v.n, v.n))
                if gibbs.sweeps:
                    draws_v = stream(seed, "cf-gibbs", label, r, v.village_id).random(gibbs.draws_needed())
                    _run(a, at, s.u, s.m, s.v, draws_v, gibbs.flips_per_step)
                stats.append(network_stats(VillageNetwork(v.village_id, a.astype(np.uint8))))
                sizes.append(v.n)
                same.append(f.gender.sum())
            agg = _aggregate(stats, sizes)
            if kind in _GENDER_KINDS:
                pairs = sum(n * (n - 1) for n in sizes)
                agg["same_gender_dyad_share"] = math.fsum(same) / pairs
            per_grid.append(agg)
        return pick, per_grid

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(replicate, range(scenario.replications)))
    else:
        results = [replicate(r) for r in range(scenario.replications)]

    rows = []
    stat_names = list(results[0][1][0])
    values = {}
    for gi, g in enumerate(scenario.grid):
        for name in stat_names:
            x = np.array([res[1][gi][name] for res in results], dtype=float)
            values[(g, name)] = x
            ok = x[~np.isnan(x)]
            if ok.size:
                lo, hi = np.percentile(ok, [2.5, 97.5])
                mean = _fmean(ok)
            else:
                lo = hi = mean = math.nan
            rows.append(
                {
                    "scenario": label,
                    "grid_value": g,
                    "statistic": name,
                    "mean": mean,
                    "lo": float(lo),
                    "hi": float(hi),
                    "replications": int(ok.size),
                }
            )
    table = pd.DataFrame(rows)
    return CounterfactualResult(scenario, table, values)
