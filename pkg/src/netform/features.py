"""Dyadic regressors for the direct (u), mutual (m) and indirect (v) utility terms.

A feature recipe lists, per term, transform tokens:

``intercept``
    constant 1.
``gender`` / ``male`` / ``female``
    same-gender-children indicators.
``adiff:FIELD``
    ``|x_i - x_j|`` for a numeric household field.
``i:FIELD`` / ``j:FIELD``
    individual levels of the sender / receiver (u term only).
``same:FIELD``
    1 if the two households have equal values of FIELD.
``same:FIELD=VALUE``
    1 if the dummy ``FIELD == VALUE`` is equal for both households.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .households import (
    EDUCATION_LEVELS,
    OCCUPATIONS,
    ConfigError,
    Household,
    Village,
)

__all__ = [
    "GenderCoding",
    "CodingError",
    "SymmetryError",
    "FeatureRecipe",
    "DyadFeatureSet",
    "gender_indicators",
    "build_features",
    "table2_recipe",
    "structural_recipe",
]

NUMERIC_FIELDS = ("father_age", "mother_age", "income", "homestead_land", "farming_land")
CATEGORICAL_FIELDS = (
    "has_boy",
    "has_girl",
    "father_education",
    "mother_education",
    "father_occupation",
    "mother_stays_home",
)
_GENDER_TOKENS = ("gender", "male", "female")


class GenderCoding(str, enum.Enum):
    """How households with both a boy and a girl enter the dyadic indicators."""

    ANY_OVERLAP = "any_overlap"
    EXCLUSIVE = "exclusive"


class CodingError(ValueError):
    pass


class SymmetryError(ConfigError):
    pass


def gender_indicators(
    hi: Household, hj: Household, convention: GenderCoding = GenderCoding.ANY_OVERLAP
) -> tuple[bool, bool, bool]:
    """Return ``(gender_ij, male_ij, female_ij)`` for one pair of households."""
    convention = GenderCoding(convention)
    if convention is GenderCoding.EXCLUSIVE:
        for h in (hi, hj):
            if h.has_boy == h.has_girl:
                raise CodingError(
                    f"household {h.household_id} (village {h.village_id}) does not carry "
                    "exactly one child gender; exclusive coding needs single-gender families"
                )
    male = hi.has_boy and hj.has_boy
    female = hi.has_girl and hj.has_girl
    return male or female, male, female


def _parse_token(token: str, term: str) -> tuple[str, str | None, str | None]:
    if token == "intercept" or token in _GENDER_TOKENS:
        return token, None, None
    kind, sep, rest = token.partition(":")
    if not sep or not rest:
        raise ConfigError(f"{term}: malformed feature token {token!r}")
    name, eq, value = rest.partition("=")
    if kind in ("i", "j"):
        if term != "u":
            raise SymmetryError(
                f"{term}: individual level {token!r} would make the {term} term asymmetric"
            )
        if name not in NUMERIC_FIELDS:
            raise ConfigError(f"{term}: {token!r} needs a numeric field")
    elif kind == "adiff":
        if name not in NUMERIC_FIELDS:
            raise ConfigError(f"{term}: {token!r} needs a numeric field")
    elif kind == "same":
        if name not in CATEGORICAL_FIELDS + NUMERIC_FIELDS:
            raise ConfigError(f"{term}: unknown field in {token!r}")
        if eq:
            allowed = {
                "father_education": EDUCATION_LEVELS,
                "mother_education": EDUCATION_LEVELS,
                "father_occupation": OCCUPATIONS,
            }.get(name)
            if allowed is not None and value not in allowed:
                raise ConfigError(f"{term}: {value!r} is not a category of {name}")
    else:
        raise ConfigError(f"{term}: unknown transform {kind!r} in {token!r}")
    return kind, name, (value if eq else None)


@dataclass(frozen=True)
class FeatureRecipe:
    u: tuple[str, ...]
    m: tuple[str, ...] = ()
    v: tuple[str, ...] = ()

    def __post_init__(self):
        for term in ("u", "m", "v"):
            tokens = tuple(getattr(self, term))
            object.__setattr__(self, term, tokens)
            if len(set(tokens)) != len(tokens):
                raise ConfigError(f"{term}: duplicate feature tokens")
            for t in tokens:
                _parse_token(t, term)

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureRecipe":
        unknown = set(data) - {"u", "m", "v", "convention", "preset", "gender"}
        if unknown:
            raise ConfigError(f"unknown feature keys: {sorted(unknown)}")
        preset = data.get("preset")
        if preset is not None:
            base = {"table2": table2_recipe, "structural": structural_recipe}.get(preset)
            if base is None:
                raise ConfigError(f"unknown feature preset {preset!r}")
            recipe = base(data.get("gender", "gender"))
            return cls(
                tuple(data.get("u", recipe.u)),
                tuple(data.get("m", recipe.m)),
                tuple(data.get("v", recipe.v)),
            )
        if "u" not in data:
            raise ConfigError("feature recipe needs a 'u' list")
        return cls(tuple(data["u"]), tuple(data.get("m", ())), tuple(data.get("v", ())))

    def to_dict(self) -> dict:
        return {"u": list(self.u), "m": list(self.m), "v": list(self.v)}


@dataclass(frozen=True)
class DyadFeatureSet:
    """Per-village regressor tensors, shape ``(n, n, n_features)``.

    u/m/v tensors are stored densely with a zero diagonal; m and v are
    symmetric in their first two axes.
    """

    village_id: int
    u_features: np.ndarray
    m_features: np.ndarray
    v_features: np.ndarray
    u_names: tuple[str, ...]
    m_names: tuple[str, ...]
    v_names: tuple[str, ...]
    gender: np.ndarray
    male: np.ndarray
    female: np.ndarray
    convention: GenderCoding = GenderCoding.ANY_OVERLAP
    has_boy: np.ndarray = field(default=None, repr=False)
    has_girl: np.ndarray = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.u_features.shape[0]


def _fieldvals(households: Sequence[Household], name: str) -> np.ndarray:
    return np.array([getattr(h, name) for h in households])


def _gender_matrices(households, convention):
    boy = _fieldvals(households, "has_boy").astype(bool)
    girl = _fieldvals(households, "has_girl").astype(bool)
    if GenderCoding(convention) is GenderCoding.EXCLUSIVE:
        bad = np.flatnonzero(boy == girl)
        if bad.size:
            h = households[bad[0]]
            raise CodingError(
                f"household {h.household_id} (village {h.village_id}) does not carry exactly "
                "one child gender; exclusive coding needs single-gender families"
            )
    off = ~np.eye(len(households), dtype=bool)
    male = np.outer(boy, boy) & off
    female = np.outer(girl, girl) & off
    return male | female, male, female, boy, girl


def _column(token, households, gmats, n):
    gender, male, female = gmats
    kind, name, value = _parse_token(token, "u")
    if kind == "intercept":
        return np.ones((n, n))
    if kind == "gender":
        return gender.astype(float)
    if kind == "male":
        return male.astype(float)
    if kind == "female":
        return female.astype(float)
    x = _fieldvals(households, name)
    if kind == "adiff":
        x = x.astype(float)
        return np.abs(x[:, None] - x[None, :])
    if kind == "i":
        return np.repeat(x.astype(float)[:, None], n, axis=1)
    if kind == "j":
        return np.repeat(x.astype(float)[None, :], n, axis=0)
    if value is not None:
        x = x == value
    return (x[:, None] == x[None, :]).astype(float)


def _stack(tokens, households, gmats, n) -> np.ndarray:
    out = np.zeros((n, n, len(tokens)))
    for k, token in enumerate(tokens):
        out[:, :, k] = _column(token, households, gmats, n)
    idx = np.arange(n)
    out[idx, idx, :] = 0.0
    return out


def build_features(
    village: Village,
    recipe: FeatureRecipe,
    convention: GenderCoding = GenderCoding.ANY_OVERLAP,
) -> DyadFeatureSet:
    """Precompute the regressor tensors of one village for ``recipe``."""
    convention = GenderCoding(convention)
    households = village.households
    n = len(households)
    gender, male, female, boy, girl = _gender_matrices(households, convention)
    gmats = (gender, male, female)
    return DyadFeatureSet(
        village_id=village.village_id,
        u_features=_stack(recipe.u, households, gmats, n),
        m_features=_stack(recipe.m, households, gmats, n),
        v_features=_stack(recipe.v, households, gmats, n),
        u_names=recipe.u,
        m_names=recipe.m,
        v_names=recipe.v,
        gender=gender,
        male=male,
        female=female,
        convention=convention,
        has_boy=boy,
        has_girl=girl,
    )


def _gender_tokens(gender: str) -> tuple[str, ...]:
    if gender == "gender":
        return ("gender",)
    if gender in ("male_female", "male-female"):
        return ("male", "female")
    raise ConfigError(f"gender specification must be 'gender' or 'male_female', got {gender!r}")


_U_CONTROLS = (
    "adiff:father_age",
    "i:father_age",
    "j:father_age",
    "adiff:mother_age",
    "i:mother_age",
    "j:mother_age",
    "adiff:income",
    "i:income",
    "j:income",
    "adiff:homestead_land",
    "i:homestead_land",
    "j:homestead_land",
    "adiff:farming_land",
    "i:farming_land",
    "j:farming_land",
    "same:father_education",
    "same:mother_education",
    "same:father_occupation=daily_laborer",
    "same:father_occupation=farmer",
    "same:father_occupation=self_employed",
    "same:mother_stays_home",
)


def table2_recipe(gender: str = "gender") -> FeatureRecipe:
    """Dyadic logit design: intercept, gender indicator(s) and the household controls."""
    return FeatureRecipe(u=("intercept",) + _gender_tokens(gender) + _U_CONTROLS)


def structural_recipe(gender: str = "gender") -> FeatureRecipe:
    """u term as in :func:`table2_recipe`; m and v keep only symmetric transforms."""
    symmetric = ("intercept",) + _gender_tokens(gender) + tuple(
        t for t in _U_CONTROLS if not t.startswith(("i:", "j:"))
    )
    return FeatureRecipe(u=table2_recipe(gender).u, m=symmetric, v=symmetric)
