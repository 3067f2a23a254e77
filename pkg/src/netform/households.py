"""Household covariates: records, file I/O, summaries and a synthetic generator."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .rng import stream

__all__ = [
    "EDUCATION_LEVELS",
    "OCCUPATIONS",
    "HOUSEHOLD_COLUMNS",
    "Household",
    "Village",
    "DataError",
    "SchemaError",
    "ValidationError",
    "UniquenessError",
    "ConfigError",
    "load_households",
    "write_households",
    "summarize_households",
    "RoundedNormal",
    "GammaSpec",
    "SizeSpec",
    "GeneratorSpec",
    "generate_synthetic",
]

EDUCATION_LEVELS = ("none", "primary", "secondary", "university")
OCCUPATIONS = ("daily_laborer", "farmer", "self_employed", "other")


class DataError(ValueError):
    """Base class for problems with household or network input."""


class SchemaError(DataError):
    pass


class ValidationError(DataError):
    pass


class UniquenessError(DataError):
    pass


class ConfigError(ValueError):
    """Invalid or infeasible configuration."""


@dataclass(frozen=True)
class Household:
    village_id: int
    household_id: int
    has_boy: bool
    has_girl: bool
    father_age: float
    mother_age: float
    income: float
    homestead_land: float
    farming_land: float
    father_education: str
    mother_education: str
    father_occupation: str
    mother_stays_home: bool

    def validate(self) -> None:
        if not (self.has_boy or self.has_girl):
            raise ValidationError(
                f"household {self.household_id} in village {self.village_id} has no child"
            )
        for name in ("father_age", "mother_age", "income", "homestead_land", "farming_land"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"{name} must be finite and non-negative, got {value!r}")
        for name in ("father_education", "mother_education"):
            if getattr(self, name) not in EDUCATION_LEVELS:
                raise ValidationError(f"{name}={getattr(self, name)!r} not in {EDUCATION_LEVELS}")
        if self.father_occupation not in OCCUPATIONS:
            raise ValidationError(
                f"father_occupation={self.father_occupation!r} not in {OCCUPATIONS}"
            )


HOUSEHOLD_COLUMNS = tuple(f.name for f in fields(Household))
_BOOL_COLUMNS = {"has_boy", "has_girl", "mother_stays_home"}
_INT_COLUMNS = {"village_id", "household_id"}
_CATEGORY_COLUMNS = {
    "father_education": EDUCATION_LEVELS,
    "mother_education": EDUCATION_LEVELS,
    "father_occupation": OCCUPATIONS,
}
_TRUE = {"1", "true", "t", "yes"}
_FALSE = {"0", "false", "f", "no"}


@dataclass(frozen=True)
class Village:
    village_id: int
    households: tuple[Household, ...]

    def __post_init__(self):
        object.__setattr__(self, "households", tuple(self.households))

    @property
    def n(self) -> int:
        return len(self.households)

    def validate(self) -> None:
        if self.n < 2:
            raise ValidationError(
                f"village {self.village_id} has {self.n} household(s); at least 2 are needed"
            )
        ids = [h.household_id for h in self.households]
        if len(set(ids)) != len(ids):
            raise UniquenessError(f"duplicate household_id in village {self.village_id}")
        for h in self.households:
            if h.village_id != self.village_id:
                raise ValidationError(
                    f"household {h.household_id} belongs to village {h.village_id}, "
                    f"not {self.village_id}"
                )
            h.validate()

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(h, name) for h in self.households])


# ---------------------------------------------------------------------------
# file I/O


def _parse_cell(column: str, raw: str, lineno: int):
    token = raw.strip()
    try:
        if column in _INT_COLUMNS:
            return int(token)
        if column in _BOOL_COLUMNS:
            low = token.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {token!r}")
        if column in _CATEGORY_COLUMNS:
            if token not in _CATEGORY_COLUMNS[column]:
                raise ValueError(
                    f"{token!r} is not one of {', '.join(_CATEGORY_COLUMNS[column])}"
                )
            return token
        return float(token)
    except ValueError as exc:
        raise ValidationError(f"line {lineno}: column {column}: {exc}") from None


def load_households(path, delimiter: str = ",") -> list[Village]:
    """Read a delimited covariate file, one row per household.

    Returns villages sorted by id, households in file order.  Any bad row
    raises with its line number; nothing is silently dropped.
    """
    path = Path(path)
    by_village: dict[int, list[Household]] = {}
    seen: dict[tuple[int, int], int] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(
            (line for line in fh if not line.startswith("#")), delimiter=delimiter
        )
        header = [c.strip() for c in (reader.fieldnames or [])]
        missing = [c for c in HOUSEHOLD_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s): {', '.join(missing)}")
        reader.fieldnames = header
        for row in reader:
            lineno = reader.line_num
            values = {c: _parse_cell(c, row[c] or "", lineno) for c in HOUSEHOLD_COLUMNS}
            hh = Household(**values)
            try:
                hh.validate()
            except ValidationError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from None
            key = (hh.village_id, hh.household_id)
            if key in seen:
                raise UniquenessError(
                    f"line {lineno}: duplicate (village_id, household_id) = {key}, "
                    f"first seen on line {seen[key]}"
                )
            seen[key] = lineno
            by_village.setdefault(hh.village_id, []).append(hh)
    villages = [Village(vid, tuple(hs)) for vid, hs in sorted(by_village.items())]
    for v in villages:
        v.validate()
    return villages


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() and abs(value) < 2**53 else repr(value)
    return str(value)


def write_households(
    villages: Iterable[Village], path, delimiter: str = ",", header: str | None = None
) -> None:
    """Write the covariate file; ``header`` is written verbatim first (``#`` lines)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        if header:
            fh.write(header)
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(HOUSEHOLD_COLUMNS)
        for v in villages:
            for h in v.households:
                writer.writerow([_fmt(getattr(h, c)) for c in HOUSEHOLD_COLUMNS])


# ---------------------------------------------------------------------------
# summaries


def _moments(values: Sequence[float]) -> tuple[float, float, float, float]:
    # sorted + fsum keeps the result exactly independent of input order
    x = np.sort(np.asarray(values, dtype=float))
    n = len(x)
    mean = math.fsum(x) / n
    var = math.fsum((x - mean) ** 2) / (n - 1) if n > 1 else 0.0
    return mean, math.sqrt(var), float(x[0]), float(x[-1])


def _household_indicators(households: Sequence[Household]) -> dict[str, np.ndarray]:
    def col(name):
        return np.array([getattr(h, name) for h in households])

    out = {
        "male_children": col("has_boy").astype(float),
        "female_children": col("has_girl").astype(float),
        "father_age": col("father_age").astype(float),
        "mother_age": col("mother_age").astype(float),
        "income": col("income").astype(float),
        "homestead_land": col("homestead_land").astype(float),
        "farming_land": col("farming_land").astype(float),
    }
    for parent in ("father", "mother"):
        edu = col(f"{parent}_education")
        for level in EDUCATION_LEVELS:
            out[f"{parent}_education_{level}"] = (edu == level).astype(float)
    occ = col("father_occupation")
    for name in OCCUPATIONS[:3]:
        out[f"father_{name}"] = (occ == name).astype(float)
    out["mother_stays_home"] = col("mother_stays_home").astype(float)
    return out


def summarize_households(villages: Sequence[Village]) -> pd.DataFrame:
    """Mean, SD, min and max of every household covariate plus group size.

    Binary rows are category shares.  SD uses the n - 1 denominator.
    """
    if not villages:
        raise ValueError("summarize_households needs at least one village")
    households = [h for v in villages for h in v.households]
    rows = {name: _moments(x) for name, x in _household_indicators(households).items()}
    rows["group_size"] = _moments([v.n for v in villages])
    return pd.DataFrame.from_dict(rows, orient="index", columns=["mean", "sd", "min", "max"])


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class RoundedNormal:
    """Normal draw rounded to an integer and clipped to ``[lo, hi]``."""

    mean: float
    sd: float
    lo: int = 0
    hi: int = 120

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.clip(np.rint(rng.normal(self.mean, self.sd, size)), self.lo, self.hi)

    def pmf(self) -> tuple[np.ndarray, np.ndarray]:
        k = np.arange(self.lo, self.hi + 1, dtype=float)
        upper = stats.norm.cdf((k + 0.5 - self.mean) / self.sd)
        lower = stats.norm.cdf((k - 0.5 - self.mean) / self.sd)
        lower[0] = 0.0
        upper[-1] = 1.0
        return k, upper - lower

    def moments(self) -> tuple[float, float]:
        k, p = self.pmf()
        mean = float(p @ k)
        return mean, float(math.sqrt(p @ (k - mean) ** 2))


@dataclass(frozen=True)
class GammaSpec:
    """Gamma distribution parameterised by its mean and SD (zero SD = constant)."""

    mean: float
    sd: float

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.sd == 0:
            return np.full(size, float(self.mean))
        shape = (self.mean / self.sd) ** 2
        return rng.gamma(shape, self.sd**2 / self.mean, size)

    def moments(self) -> tuple[float, float]:
        return float(self.mean), float(self.sd)


@dataclass(frozen=True)
class SizeSpec:
    """Village size: ``uniform`` integers on [min, max] or a rounded, clipped normal."""

    min: int = 7
    max: int = 37
    dist: str = "uniform"
    mean: float | None = None
    sd: float | None = None

    def _normal(self) -> RoundedNormal:
        return RoundedNormal(self.mean, self.sd, self.min, self.max)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.dist == "uniform":
            return rng.integers(self.min, self.max + 1, size)
        return self._normal().sample(rng, size).astype(int)

    def moments(self) -> tuple[float, float]:
        if self.dist == "uniform":
            k = self.max - self.min + 1
            return (self.min + self.max) / 2, math.sqrt((k * k - 1) / 12)
        return self._normal().moments()


def _as_probs(values, names, label) -> tuple[float, ...]:
    if isinstance(values, dict):
        unknown = set(values) - set(names)
        if unknown:
            raise ConfigError(f"{label}: unknown categories {sorted(unknown)}")
        values = [values.get(n, 0.0) for n in names]
    p = tuple(float(x) for x in values)
    if len(p) != len(names) or any(x < 0 for x in p) or not math.isclose(sum(p), 1.0, abs_tol=1e-9):
        raise ConfigError(f"{label}: need {len(names)} non-negative probabilities summing to 1")
    return p


@dataclass(frozen=True)
class GeneratorSpec:
    """Marginal distributions for synthetic villages.

    Covariates are independent across households and across fields.  Gender:
    ``has_boy ~ Bernoulli(p_boy)``; families with a boy also have a girl with
    probability ``p_both``; families without a boy always have a girl.
    """

    villages: int = 222
    size: SizeSpec = field(default_factory=SizeSpec)
    p_boy: float = 0.5
    p_both: float = 0.0
    father_age: RoundedNormal = RoundedNormal(34.19, 6.12, 20, 82)
    mother_age: RoundedNormal = RoundedNormal(27.18, 5.00, 16, 55)
    income: GammaSpec = GammaSpec(11.20, 5.06)
    homestead_land: GammaSpec = GammaSpec(0.084, 0.114)
    farming_land: GammaSpec = GammaSpec(0.317, 1.700)
    father_education: tuple[float, ...] = (0.16, 0.32, 0.41, 0.11)
    mother_education: tuple[float, ...] = (0.08, 0.23, 0.61, 0.08)
    father_occupation: tuple[float, ...] = (0.35, 0.21, 0.31, 0.13)
    p_mother_home: float = 0.93

    def validate(self) -> None:
        if self.villages < 1:
            raise ConfigError(f"villages must be >= 1, got {self.villages}")
        if self.size.min < 2 or self.size.max < self.size.min:
            raise ConfigError(f"infeasible village size range [{self.size.min}, {self.size.max}]")
        if self.size.dist not in ("uniform", "normal"):
            raise ConfigError(f"unknown size distribution {self.size.dist!r}")
        if self.size.dist == "normal" and (self.size.mean is None or not self.size.sd):
            raise ConfigError("normal size distribution needs mean and sd > 0")
        for name in ("p_boy", "p_both", "p_mother_home"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        for name in ("father_age", "mother_age"):
            spec = getattr(self, name)
            if spec.sd <= 0 or spec.lo < 0 or spec.hi < spec.lo:
                raise ConfigError(f"{name}: need sd > 0 and 0 <= lo <= hi")
        for name in ("income", "homestead_land", "farming_land"):
            spec = getattr(self, name)
            if spec.mean <= 0 or spec.sd < 0:
                raise ConfigError(f"{name}: need mean > 0 and sd >= 0")
        _as_probs(self.father_education, EDUCATION_LEVELS, "father_education")
        _as_probs(self.mother_education, EDUCATION_LEVELS, "mother_education")
        _as_probs(self.father_occupation, OCCUPATIONS, "father_occupation")

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        """Build from a parsed config section; unspecified fields keep defaults."""
        data = dict(data)
        kwargs = {}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown generator keys: {sorted(unknown)}")
        base = cls()
        for key, value in data.items():
            default = getattr(base, key)
            try:
                if isinstance(default, (RoundedNormal, GammaSpec, SizeSpec)):
                    kwargs[key] = replace(default, **value)
                elif key == "father_occupation":
                    kwargs[key] = _as_probs(value, OCCUPATIONS, key)
                elif key in ("father_education", "mother_education"):
                    kwargs[key] = _as_probs(value, EDUCATION_LEVELS, key)
                else:
                    kwargs[key] = type(default)(value)
            except TypeError as exc:
                raise ConfigError(f"generator.{key}: {exc}") from None
        spec = cls(**kwargs)
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        return asdict(self)

    def expected_moments(self) -> dict[str, tuple[float, float]]:
        """Population mean and SD of each summary row under this spec."""

        def bern(p):
            return p, math.sqrt(p * (1 - p))

        out = {
            "male_children": bern(self.p_boy),
            "female_children": bern(1 - self.p_boy + self.p_boy * self.p_both),
            "father_age": self.father_age.moments(),
            "mother_age": self.mother_age.moments(),
            "income": self.income.moments(),
            "homestead_land": self.homestead_land.moments(),
            "farming_land": self.farming_land.moments(),
        }
        for parent in ("father", "mother"):
            probs = getattr(self, f"{parent}_education")
            for level, p in zip(EDUCATION_LEVELS, probs):
                out[f"{parent}_education_{level}"] = bern(p)
        for name, p in zip(OCCUPATIONS[:3], self.father_occupation):
            out[f"father_{name}"] = bern(p)
        out["mother_stays_home"] = bern(self.p_mother_home)
        out["group_size"] = self.size.moments()
        return out


def _draw_village(spec: GeneratorSpec, village_id: int, n: int, rng) -> Village:
    has_boy = rng.random(n) < spec.p_boy
    has_girl = np.where(has_boy, rng.random(n) < spec.p_both, True)
    father_age = spec.father_age.sample(rng, n)
    mother_age = spec.mother_age.sample(rng, n)
    income = spec.income.sample(rng, n)
    homestead = spec.homestead_land.sample(rng, n)
    farming = spec.farming_land.sample(rng, n)
    fedu = rng.choice(len(EDUCATION_LEVELS), n, p=spec.father_education)
    medu = rng.choice(len(EDUCATION_LEVELS), n, p=spec.mother_education)
    focc = rng.choice(len(OCCUPATIONS), n, p=spec.father_occupation)
    home = rng.random(n) < spec.p_mother_home
    households = tuple(
        Household(
            village_id=village_id,
            household_id=k + 1,
            has_boy=bool(has_boy[k]),
            has_girl=bool(has_girl[k]),
            father_age=float(father_age[k]),
            mother_age=float(mother_age[k]),
            income=float(income[k]),
            homestead_land=float(homestead[k]),
            farming_land=float(farming[k]),
            father_education=EDUCATION_LEVELS[fedu[k]],
            mother_education=EDUCATION_LEVELS[medu[k]],
            father_occupation=OCCUPATIONS[focc[k]],
            mother_stays_home=bool(home[k]),
        )
        for k in range(n)
    )
    return Village(village_id, households)


def generate_synthetic(
    spec: GeneratorSpec,
    seed: int,
    correlate: Callable[[Village, np.random.Generator], Village] | None = None,
) -> list[Village]:
    """Draw ``spec.villages`` villages with ids 1..V, deterministically in ``seed``.

    ``correlate`` is an optional hook applied to each drawn village (with its
    own stream) to impose dependence between covariates.
    """
    spec.validate()
    sizes = spec.size.sample(stream(seed, "generator", "sizes"), spec.villages)
    villages = []
    for vid, n in enumerate(sizes, start=1):
        village = _draw_village(spec, vid, int(n), stream(seed, "generator", "village", vid))
        if correlate is not None:
            village = correlate(village, stream(seed, "generator", "correlate", vid))
        village.validate()
        villages.append(village)
    return villages
