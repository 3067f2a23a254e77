"""Linear scores, the village potential and its single-entry change statistic.

The potential of a directed network ``a`` is

    Q(a) = sum_{i != j} a_ij u_ij
         + sum_{i < j} a_ij a_ji m_ij
         + sum_{i} sum_{j != i} sum_{k != i, j} a_ij a_jk v_ik

and turning ``a_ij`` on (all else fixed) changes it by

    u_ij + a_ji m_ij + sum_{k != i, j} (a_jk v_ik + a_ki v_kj).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from numba import njit

__all__ = [
    "DimensionError",
    "ParameterVector",
    "ScoreMatrices",
    "score",
    "potential",
    "delta_potential",
    "sufficient_statistics",
]

TERMS = ("u", "m", "v")


class DimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """Coefficients of the three utility terms, keyed by feature name."""

    beta_u: np.ndarray
    beta_m: np.ndarray
    beta_v: np.ndarray
    u_names: tuple[str, ...]
    m_names: tuple[str, ...] = ()
    v_names: tuple[str, ...] = ()

    def __post_init__(self):
        for t in TERMS:
            beta = np.asarray(getattr(self, f"beta_{t}"), dtype=float).reshape(-1)
            names = tuple(getattr(self, f"{t}_names"))
            if beta.shape[0] != len(names):
                raise DimensionError(
                    f"beta_{t} has {beta.shape[0]} entries but {len(names)} names"
                )
            if not np.all(np.isfinite(beta)):
                raise ValueError(f"beta_{t} has non-finite entries")
            beta.setflags(write=False)
            object.__setattr__(self, f"beta_{t}", beta)
            object.__setattr__(self, f"{t}_names", names)

    @property
    def names(self) -> list[str]:
        """Flat coordinate labels, e.g. ``u:intercept``."""
        return [f"{t}:{n}" for t in TERMS for n in getattr(self, f"{t}_names")]

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.beta_u, self.beta_m, self.beta_v])

    def __len__(self):
        return len(self.beta_u) + len(self.beta_m) + len(self.beta_v)

    def __eq__(self, other):
        if not isinstance(other, ParameterVector):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.flat, other.flat)

    def with_flat(self, x) -> "ParameterVector":
        x = np.asarray(x, dtype=float)
        if x.shape != (len(self),):
            raise DimensionError(f"expected {len(self)} coordinates, got shape {x.shape}")
        ku, km = len(self.beta_u), len(self.beta_m)
        return ParameterVector(
            x[:ku], x[ku : ku + km], x[ku + km :], self.u_names, self.m_names, self.v_names
        )

    @classmethod
    def zeros(cls, features) -> "ParameterVector":
        return cls(
            np.zeros(len(features.u_names)),
            np.zeros(len(features.m_names)),
            np.zeros(len(features.v_names)),
            features.u_names,
            features.m_names,
            features.v_names,
        )

    @classmethod
    def from_mapping(
        cls,
        values: Mapping[str, Mapping[str, float]],
        u_names: Sequence[str],
        m_names: Sequence[str] = (),
        v_names: Sequence[str] = (),
    ) -> "ParameterVector":
        """Build from ``{"u": {name: value}, ...}``; missing names are 0."""
        names = {"u": tuple(u_names), "m": tuple(m_names), "v": tuple(v_names)}
        unknown_terms = set(values) - set(TERMS)
        if unknown_terms:
            raise DimensionError(f"unknown utility terms {sorted(unknown_terms)}")
        betas = {}
        for t in TERMS:
            given = dict(values.get(t, {}))
            extra = set(given) - set(names[t])
            if extra:
                raise DimensionError(f"{t}: no feature named {sorted(extra)}")
            betas[t] = np.array([float(given.get(n, 0.0)) for n in names[t]])
        return cls(betas["u"], betas["m"], betas["v"], names["u"], names["m"], names["v"])

    def to_mapping(self) -> dict[str, dict[str, float]]:
        return {
            t: dict(zip(getattr(self, f"{t}_names"), map(float, getattr(self, f"beta_{t}"))))
            for t in TERMS
        }


@dataclass(frozen=True, eq=False)
class ScoreMatrices:
    """Dense ``n x n`` utility scores with zero diagonals; m and v symmetric."""

    u: np.ndarray
    m: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in TERMS:
            x = np.array(getattr(self, name), dtype=np.float64)
            if x.ndim != 2 or x.shape[0] != x.shape[1]:
                raise DimensionError(f"score matrix {name} must be square")
            np.fill_diagonal(x, 0.0)
            x.setflags(write=False)
            object.__setattr__(self, name, x)
        if not (self.u.shape == self.m.shape == self.v.shape):
            raise DimensionError("score matrices disagree in size")
        for name in ("m", "v"):
            x = getattr(self, name)
            if not np.allclose(x, x.T, rtol=0, atol=1e-12 * max(1.0, np.abs(x).max())):
                raise ValueError(f"score matrix {name} must be symmetric")

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.u).all() and np.isfinite(self.m).all() and np.isfinite(self.v).all())


def _apply(tensor: np.ndarray, beta: np.ndarray, term: str) -> np.ndarray:
    if tensor.shape[2] != beta.shape[0]:
        raise DimensionError(
            f"{term}: {tensor.shape[2]} features but {beta.shape[0]} coefficients"
        )
    if beta.shape[0] == 0:
        return np.zeros(tensor.shape[:2])
    return tensor @ beta


def score(features, beta: ParameterVector) -> ScoreMatrices:
    """Evaluate ``u = x^u . beta_u`` (and m, v) for every pair of one village."""
    for t in TERMS:
        if tuple(getattr(features, f"{t}_names")) != tuple(getattr(beta, f"{t}_names")):
            raise DimensionError(f"{t}: feature names of data and parameters differ")
    with np.errstate(over="ignore", invalid="ignore"):
        return ScoreMatrices(
            _apply(features.u_features, beta.beta_u, "u"),
            _apply(features.m_features, beta.beta_m, "m"),
            _apply(features.v_features, beta.beta_v, "v"),
        )


def _two_paths(a: np.ndarray) -> np.ndarray:
    """Number of i -> j -> k paths for each ordered i != k."""
    a = np.asarray(a, dtype=np.float64)
    p = a @ a
    np.fill_diagonal(p, 0.0)
    return p


def potential(net, scores: ScoreMatrices) -> float:
    a = np.asarray(getattr(net, "adjacency", net), dtype=np.float64)
    if a.shape != scores.u.shape:
        raise DimensionError("network and scores disagree in size")
    direct = (a * scores.u).sum()
    mutual = np.triu(a * a.T * scores.m, k=1).sum()
    indirect = (_two_paths(a) * scores.v).sum()
    return float(direct + mutual + indirect)


@njit(cache=True, nogil=True)
def _delta(a, at, u, m, v, i, j):
    # at is a.T; u, m, v have zero diagonals, so the k = i and k = j terms vanish
    n = a.shape[0]
    d = u[i, j] + at[i, j] * m[i, j]
    for k in range(n):
        d += a[j, k] * v[i, k] + at[i, k] * v[j, k]
    return d


def delta_potential(net, scores: ScoreMatrices, i: int, j: int) -> float:
    """``Q(a with a_ij = 1) - Q(a with a_ij = 0)``, in O(n)."""
    if i == j:
        raise ValueError(f"diagonal entry ({i}, {j}) is not a link")
    a = np.asarray(getattr(net, "adjacency", net), dtype=np.float64)
    n = a.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"entry ({i}, {j}) outside a {n}-node network")
    return float(_delta(a, np.ascontiguousarray(a.T), scores.u, scores.m, scores.v, i, j))


def sufficient_statistics(net, features) -> np.ndarray:
    """Statistics ``S(a)`` with ``Q(a; beta) = beta.flat @ S(a)``."""
    a = np.asarray(getattr(net, "adjacency", net), dtype=np.float64)
    su = np.tensordot(a, features.u_features, axes=([0, 1], [0, 1]))
    sm = np.tensordot(np.triu(a * a.T, k=1), features.m_features, axes=([0, 1], [0, 1]))
    sv = np.tensordot(_two_paths(a), features.v_features, axes=([0, 1], [0, 1]))
    return np.concatenate([su, sm, sv])
