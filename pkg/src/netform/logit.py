"""Dyadic logit for link formation, fit by damped Newton-Raphson."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import linalg, special, stats

from .graph import VillageNetwork

__all__ = [
    "LogitSpec",
    "DyadDesign",
    "LogitFit",
    "SeparationError",
    "RankWarning",
    "stack_dyads",
    "fit_logit",
]


class LogitSpec(str, enum.Enum):
    GENDER = "gender"
    MALE_FEMALE = "male_female"


class SeparationError(RuntimeError):
    pass


class RankWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DyadDesign:
    """Stacked ordered pairs ``(i, j), i != j`` over villages."""

    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]
    groups: np.ndarray

    @property
    def nobs(self) -> int:
        return self.X.shape[0]

    def select(self, names: Sequence[str]) -> "DyadDesign":
        idx = [self.names.index(n) for n in names]
        return DyadDesign(self.X[:, idx], self.y, tuple(names), self.groups)


def stack_dyads(networks: Sequence[VillageNetwork], features: Sequence) -> DyadDesign:
    """Rows in (village, i, j) order; regressors are the u-term features."""
    Xs, ys, gs = [], [], []
    names = tuple(features[0].u_names)
    for net, f in zip(networks, features):
        if tuple(f.u_names) != names:
            raise ValueError("u-feature names differ across villages")
        n = net.n
        off = ~np.eye(n, dtype=bool)
        Xs.append(f.u_features[off])
        ys.append(net.adjacency[off].astype(float))
        gs.append(np.full(n * (n - 1), net.village_id))
    return DyadDesign(np.vstack(Xs), np.concatenate(ys), names, np.concatenate(gs))


@dataclass(frozen=True)
class LogitFit:
    names: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    gradient_norm: float
    nobs: int
    dropped: tuple[str, ...] = ()
    se_type: str = "classical"
    covariance: np.ndarray = field(default=None, repr=False)

    def table(self) -> pd.DataFrame:
        """Coefficient, SE, z, two-sided p-value and significance stars."""
        z = self.coefficients / self.standard_errors
        p = 2 * stats.norm.sf(np.abs(z))
        stars = np.select([p < 0.01, p < 0.05, p < 0.10], ["***", "**", "*"], "")
        return pd.DataFrame(
            {"coef": self.coefficients, "se": self.standard_errors, "z": z, "p": p, "stars": stars},
            index=list(self.names),
        )


def _independent_columns(X: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    # scan left to right and keep a column only if it adds rank, so of two
    # collinear columns the later one is dropped
    keep: list[int] = []
    for k in range(X.shape[1]):
        col = X[:, k]
        norm = np.linalg.norm(col)
        if norm == 0:
            continue
        if keep:
            coef = linalg.lstsq(X[:, keep], col)[0]
            col = col - X[:, keep] @ coef
        if np.linalg.norm(col) > tol * norm:
            keep.append(k)
    return np.array(keep, dtype=int)


def _loglik(eta: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_logit(
    design: DyadDesign,
    spec: LogitSpec | str | None = None,
    cluster: bool = False,
    gtol: float = 1e-8,
    max_iter: int = 100,
    coef_bound: float = 30.0,
) -> LogitFit:
    """Maximum-likelihood logit of ``y`` on ``X``.

    ``spec`` picks the gender regressors: GENDER keeps ``gender`` and drops
    ``male``/``female``; MALE_FEMALE does the reverse.  Collinear columns
    are dropped with a :class:`RankWarning`.  ``cluster=True`` gives
    village-clustered sandwich standard errors.
    """
    if spec is not None:
        spec = LogitSpec(spec)
        drop = {"male", "female"} if spec is LogitSpec.GENDER else {"gender"}
        need = {"gender"} if spec is LogitSpec.GENDER else {"male", "female"}
        missing = need - set(design.names)
        if missing:
            raise ValueError(f"design lacks {sorted(missing)} for spec {spec.value}")
        design = design.select([n for n in design.names if n not in drop])

    keep = _independent_columns(design.X)
    dropped = tuple(n for k, n in enumerate(design.names) if k not in set(keep))
    if dropped:
        warnings.warn(f"dropping collinear column(s): {', '.join(dropped)}", RankWarning, stacklevel=2)
        design = design.select([design.names[k] for k in keep])

    X, y = design.X, design.y
    beta = np.zeros(X.shape[1])
    eta = X @ beta
    ll = _loglik(eta, y)
    converged = False
    gnorm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        p = special.expit(eta)
        grad = X.T @ (y - p)
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < gtol:
            converged = True
            it -= 1
            break
        w = p * (1 - p)
        H = (X * w[:, None]).T @ X
        try:
            step = linalg.solve(H, grad, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            step = linalg.lstsq(H, grad)[0]
        t = 1.0
        while True:
            cand = beta + t * step
            eta_c = X @ cand
            ll_c = _loglik(eta_c, y)
            if ll_c >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        beta, eta, ll = cand, eta_c, ll_c
        if np.max(np.abs(beta)) > coef_bound:
            k = int(np.argmax(np.abs(beta)))
            raise SeparationError(
                f"coefficient on {design.names[k]!r} diverges ({beta[k]:.3g}); "
                "the outcome is (quasi-)separated by this column"
            )
    if not converged:
        k = int(np.argmax(np.abs(beta)))
        raise SeparationError(
            f"Newton iterations did not converge (max |gradient| {gnorm:.3g}); "
            f"largest coefficient {design.names[k]!r} = {beta[k]:.3g}"
        )

    p = special.expit(eta)
    H = (X * (p * (1 - p))[:, None]).T @ X
    Hinv = linalg.inv(H)
    if cluster:
        scores = X * (y - p)[:, None]
        groups, inv = np.unique(design.groups, return_inverse=True)
        G = len(groups)
        S = np.zeros((G, X.shape[1]))
        np.add.at(S, inv, scores)
        meat = S.T @ S * (G / (G - 1))
        cov = Hinv @ meat @ Hinv
    else:
        cov = Hinv
    return LogitFit(
        names=design.names,
        coefficients=beta,
        standard_errors=np.sqrt(np.diag(cov)),
        loglik=ll,
        iterations=it,
        converged=converged,
        gradient_norm=gnorm,
        nobs=design.nobs,
        dropped=dropped,
        se_type="cluster" if cluster else "classical",
        covariance=cov,
    )
