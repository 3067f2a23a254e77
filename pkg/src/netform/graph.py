"""Directed village networks and the statistics tracked across the pipeline."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy.sparse.csgraph import shortest_path

from .households import DataError, ValidationError, Village

__all__ = [
    "VillageNetwork",
    "NetworkStats",
    "UndefinedStatisticError",
    "density",
    "clustering",
    "asymmetry",
    "mean_distance",
    "reachable_fraction",
    "network_stats",
    "summarize_networks",
    "LinkProportions",
    "link_proportion_diagnostics",
    "summarize_link_proportions",
    "load_edges",
    "write_edges",
    "write_adjacency",
]


class UndefinedStatisticError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class VillageNetwork:
    """Directed 0/1 adjacency of one village; ``a[i, j] = 1`` if i lists j."""

    village_id: int
    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError(f"adjacency must be square, got shape {a.shape}")
        if not np.isin(a, (0, 1)).all():
            raise ValidationError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a)):
            raise ValidationError(f"village {self.village_id}: self-links are not allowed")
        a = a.astype(np.uint8)
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def empty(cls, village_id: int, n: int) -> "VillageNetwork":
        return cls(village_id, np.zeros((n, n), dtype=np.uint8))

    def with_adjacency(self, a: np.ndarray) -> "VillageNetwork":
        return VillageNetwork(self.village_id, a)

    def __eq__(self, other):
        if not isinstance(other, VillageNetwork):
            return NotImplemented
        return self.village_id == other.village_id and np.array_equal(
            self.adjacency, other.adjacency
        )

    def __hash__(self):
        return hash((self.village_id, self.adjacency.tobytes()))


def _adj(net) -> np.ndarray:
    return net.adjacency if isinstance(net, VillageNetwork) else np.asarray(net)


def density(net) -> float:
    a = _adj(net)
    n = a.shape[0]
    return float(a.sum()) / (n * (n - 1))


def clustering(net) -> float:
    """Closed triples over triples with at least two links, on the symmetrized graph."""
    a = _adj(net).astype(bool)
    n = a.shape[0]
    if n < 3:
        raise UndefinedStatisticError("clustering needs at least 3 nodes")
    s = (a | a.T).astype(np.int64)
    triangles = int(np.trace(s @ s @ s)) // 6
    deg = s.sum(axis=1)
    two_paths = int((deg * (deg - 1) // 2).sum())
    open_triples = two_paths - 3 * triangles
    denom = triangles + open_triples
    return triangles / denom if denom else 0.0


def asymmetry(net) -> float:
    """Variance of the link indicator scaled to 1 at density 0.5: ``4 p (1 - p)``."""
    p = density(net)
    return 4.0 * p * (1.0 - p)


def _distances(net) -> np.ndarray:
    a = _adj(net)
    d = shortest_path(a.astype(float), method="D", directed=True, unweighted=True)
    np.fill_diagonal(d, np.inf)
    return d


def mean_distance(net) -> float:
    """Mean directed shortest-path length over reachable ordered pairs."""
    d = _distances(net)
    finite = np.isfinite(d)
    if not finite.any():
        raise UndefinedStatisticError("no ordered pair is reachable")
    return float(d[finite].mean())


def reachable_fraction(net) -> float:
    a = _adj(net)
    n = a.shape[0]
    return float(np.isfinite(_distances(net)).sum()) / (n * (n - 1))


@dataclass(frozen=True)
class NetworkStats:
    mean_degree: float
    density: float
    clustering: float
    asymmetry: float
    mean_distance: float
    reachable_fraction: float
    degrees: tuple[int, ...]


def network_stats(net) -> NetworkStats:
    """All village statistics at once; undefined ones come back as NaN."""
    a = _adj(net)
    deg = a.sum(axis=1).astype(int)
    try:
        clus = clustering(a)
    except UndefinedStatisticError:
        clus = math.nan
    d = _distances(a)
    finite = np.isfinite(d)
    n = a.shape[0]
    return NetworkStats(
        mean_degree=float(deg.mean()),
        density=density(a),
        clustering=clus,
        asymmetry=asymmetry(a),
        mean_distance=float(d[finite].mean()) if finite.any() else math.nan,
        reachable_fraction=float(finite.sum()) / (n * (n - 1)),
        degrees=tuple(int(x) for x in deg),
    )


def summarize_networks(networks: Sequence[VillageNetwork]) -> pd.DataFrame:
    """Network rows of the data summary.

    Degree moments run over households; density, clustering and asymmetry are
    per-village values averaged over villages.
    """
    if not networks:
        raise ValueError("summarize_networks needs at least one network")
    stats = [network_stats(net) for net in networks]
    degrees = np.array([d for s in stats for d in s.degrees], dtype=float)
    sizes = np.array([net.n for net in networks], dtype=float)

    def row(x):
        x = np.asarray(x, dtype=float)
        x = x[~np.isnan(x)]
        if x.size == 0:
            return [math.nan] * 4
        sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
        return [float(x.mean()), sd, float(x.min()), float(x.max())]

    rows = {
        "degree": row(degrees),
        "density": row([s.density for s in stats]),
        "clustering": row([s.clustering for s in stats]),
        "asymmetry": row([s.asymmetry for s in stats]),
        "mean_distance": row([s.mean_distance for s in stats]),
        "group_size": row(sizes),
    }
    return pd.DataFrame.from_dict(rows, orient="index", columns=["mean", "sd", "min", "max"])


# ---------------------------------------------------------------------------
# identification diagnostics


@dataclass(frozen=True)
class LinkProportions:
    """Link shares among pairs with same-gender children (NaN when undefined).

    ``through_*`` variants differ in how an intermediary j qualifies: via the
    (i, j) pair, the (j, k) pair, or both.  ``through_same_gender`` is the
    ``through_both`` variant.
    """

    village_id: int
    direct_links: int
    indirect_links: int
    direct_mutual: float
    through_ij: float
    through_jk: float
    through_both: float
    indirect_nonmutual_direct: float
    indirect_mutual_direct: float
    indirect_reciprocal: float

    @property
    def through_same_gender(self) -> float:
        return self.through_both


def _ratio(num, den) -> float:
    return float(num) / float(den) if den else math.nan


def link_proportion_diagnostics(net: VillageNetwork, features) -> LinkProportions:
    a = _adj(net).astype(np.int64)
    g = np.asarray(features.gender, dtype=np.int64)
    if g.shape != a.shape:
        raise ValueError("gender matrix and adjacency disagree in size")
    at = a.T
    direct = a * g
    ag = a * g
    off = 1 - np.eye(a.shape[0], dtype=np.int64)
    paths = (a @ a) * off * g
    total = int(paths.sum())
    return LinkProportions(
        village_id=net.village_id,
        direct_links=int(direct.sum()),
        indirect_links=total,
        direct_mutual=_ratio((direct * at).sum(), direct.sum()),
        through_ij=_ratio(((ag @ a) * off * g).sum(), total),
        through_jk=_ratio(((a @ ag) * off * g).sum(), total),
        through_both=_ratio(((ag @ ag) * off * g).sum(), total),
        indirect_nonmutual_direct=_ratio((paths * a * (1 - at)).sum(), total),
        indirect_mutual_direct=_ratio((paths * a * at).sum(), total),
        indirect_reciprocal=_ratio((paths * at * (1 - a)).sum(), total),
    )


_PROPORTION_ROWS = {
    "direct_mutual": "Direct links that are also mutual",
    "through_both": "Indirect links through families with same-gender children",
    "through_ij": "  variant: intermediary shares gender with i",
    "through_jk": "  variant: intermediary shares gender with k",
    "indirect_nonmutual_direct": "Indirect links that are also non-mutually direct",
    "indirect_mutual_direct": "Indirect links that are also mutually direct",
    "indirect_reciprocal": "Indirect links that involve direct reciprocal (non-mutual) links",
}


def summarize_link_proportions(records: Iterable[LinkProportions]) -> pd.DataFrame:
    """Across-village distribution (min, quartiles, max) of each proportion."""
    records = list(records)
    rows = {}
    for key, label in _PROPORTION_ROWS.items():
        x = np.array([getattr(r, key) for r in records], dtype=float)
        x = x[~np.isnan(x)]
        if x.size:
            q = np.percentile(x, [0, 25, 50, 75, 100])
        else:
            q = [math.nan] * 5
        rows[key] = [label, *map(float, q), int(x.size)]
    return pd.DataFrame.from_dict(
        rows, orient="index", columns=["label", "min", "p25", "median", "p75", "max", "villages"]
    )


# ---------------------------------------------------------------------------
# file I/O


def load_edges(path, villages: Sequence[Village]) -> list[VillageNetwork]:
    """Read ``village_id, i, j`` rows (household ids) into one network per village."""
    path = Path(path)
    index = {v.village_id: {h.household_id: k for k, h in enumerate(v.households)} for v in villages}
    adj = {v.village_id: np.zeros((v.n, v.n), dtype=np.uint8) for v in villages}
    with path.open(newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["village_id", "i", "j"]:
            raise DataError(f"{path}: header must be 'village_id,i,j'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                vid, i, j = (int(c) for c in row)
            except ValueError:
                raise DataError(f"{path}: line {lineno}: expected three integers") from None
            if vid not in index:
                raise DataError(f"{path}: line {lineno}: unknown village {vid}")
            try:
                ii, jj = index[vid][i], index[vid][j]
            except KeyError as exc:
                raise DataError(
                    f"{path}: line {lineno}: unknown household {exc.args[0]} in village {vid}"
                ) from None
            if ii == jj:
                raise DataError(f"{path}: line {lineno}: self-link {i}->{j}")
            adj[vid][ii, jj] = 1
    return [VillageNetwork(v.village_id, adj[v.village_id]) for v in villages]


def write_edges(
    networks: Sequence[VillageNetwork], villages: Sequence[Village], path, header: str | None = None
) -> None:
    by_id = {v.village_id: v for v in villages}
    with Path(path).open("w", newline="") as fh:
        if header:
            fh.write(header)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["village_id", "i", "j"])
        for net in networks:
            ids = [h.household_id for h in by_id[net.village_id].households]
            for i, j in zip(*np.nonzero(net.adjacency)):
                writer.writerow([net.village_id, ids[i], ids[j]])


def write_adjacency(net: VillageNetwork, path) -> None:
    np.savetxt(path, net.adjacency, fmt="%d")
