"""Run configuration: one TOML file drives every CLI subcommand.

Relative paths resolve against the directory holding the config file.  The
seed is mandatory.  The config hash covers everything except the worker
count, which never changes results.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .counterfactual import Scenario
from .exchange import SamplerConfig
from .features import FeatureRecipe, GenderCoding, table2_recipe
from .gibbs import GibbsConfig
from .households import ConfigError, GeneratorSpec
from .potential import DimensionError, ParameterVector

__all__ = ["RunConfig", "load_config", "parse_config", "config_hash"]

_TOP_KEYS = {
    "seed", "output_dir", "workers", "data", "features", "logit", "sampler",
    "gibbs", "generate", "simulate", "diagnose", "scenario", "counterfactual",
}


def config_hash(raw: dict) -> str:
    """First 12 hex digits of the SHA-256 of the canonical JSON of ``raw``."""
    body = {k: v for k, v in raw.items() if k != "workers"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _section(raw: dict, name: str, allowed: set[str]) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"[{name}]: unknown keys {sorted(unknown)}")
    return sec


def _int(sec: dict, key: str, default: int, label: str, minimum: int = 0) -> int:
    value = sec.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{label}.{key} must be an integer >= {minimum}, got {value!r}")
    return value


@dataclass(frozen=True)
class RunConfig:
    seed: int
    base_dir: Path
    output_dir: Path
    hash: str
    households_path: Path | None = None
    edges_path: Path | None = None
    synthetic: GeneratorSpec | None = None
    recipe: FeatureRecipe = field(default_factory=table2_recipe)
    convention: GenderCoding = GenderCoding.ANY_OVERLAP
    logit_spec: str | None = None
    logit_cluster: bool = False
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    beta0: dict | None = None
    truth: dict | None = None
    truth_sweeps: int = 7000
    simulate_beta: dict | None = None
    simulate_start: str = "empty"
    diagnose_every: int = 100
    diagnose_beta: dict | None = None
    chain_path: Path | None = None
    scenarios: tuple[Scenario, ...] = ()
    workers: int = 1
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def header(self) -> str:
        return f"# config_hash={self.hash}\n"

    def parameter(self, mapping: dict | None, what: str) -> ParameterVector:
        """Parameter vector over the recipe's names; missing coefficients are 0."""
        r = self.recipe
        try:
            return ParameterVector.from_mapping(mapping or {}, r.u, r.m, r.v)
        except DimensionError as exc:
            raise ConfigError(f"{what}: {exc}") from None

    def with_workers(self, workers: int) -> "RunConfig":
        from dataclasses import replace

        if workers < 1:
            raise ConfigError("workers must be >= 1")
        return replace(self, workers=workers, sampler=replace(self.sampler, workers=workers))


def _path(base: Path, value, label: str, must_exist: bool) -> Path:
    if not isinstance(value, str):
        raise ConfigError(f"{label} must be a path string")
    p = Path(value)
    p = p if p.is_absolute() else base / p
    if must_exist and not p.exists():
        raise ConfigError(f"{label}: file not found: {p}")
    return p


def _beta_table(value, label: str) -> dict | None:
    if value is None:
        return None
    if not isinstance(value, dict) or set(value) - {"u", "m", "v"}:
        raise ConfigError(f"{label} must be a table with optional u, m, v sub-tables")
    return {k: {n: float(x) for n, x in v.items()} for k, v in value.items()}


def parse_config(raw: dict, base_dir: Path, check_paths: bool = True) -> RunConfig:
    """Validate a parsed config.  ``check_paths=False`` skips existence checks
    for inputs that an earlier subcommand (``generate``) will create."""
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if "seed" not in raw:
        raise ConfigError("config must set an integer 'seed'")
    seed = _int(raw, "seed", 0, "config")
    base_dir = Path(base_dir)
    workers = _int(raw, "workers", 1, "config", 1)
    output_dir = _path(base_dir, raw.get("output_dir", "output"), "output_dir", False)

    data = _section(raw, "data", {"households", "edges", "synthetic"})
    households = edges = synthetic = None
    if "synthetic" in data:
        synthetic = GeneratorSpec.from_dict(data["synthetic"])
    if "households" in data:
        households = _path(base_dir, data["households"], "data.households", check_paths)
    if "edges" in data:
        edges = _path(base_dir, data["edges"], "data.edges", check_paths)
    if households is None and synthetic is None:
        raise ConfigError("[data] needs 'households' (and 'edges') or a [data.synthetic] table")

    feats = _section(raw, "features", {"u", "m", "v", "preset", "gender", "convention"})
    recipe = FeatureRecipe.from_dict({k: v for k, v in feats.items() if k != "convention"}) if feats else table2_recipe()
    try:
        convention = GenderCoding(feats.get("convention", "any_overlap"))
    except ValueError:
        raise ConfigError(f"features.convention must be one of {[c.value for c in GenderCoding]}") from None

    logit = _section(raw, "logit", {"spec", "cluster"})
    spec = logit.get("spec")
    if spec not in (None, "gender", "male_female"):
        raise ConfigError("logit.spec must be 'gender' or 'male_female'")

    g = _section(raw, "gibbs", {"sweeps", "flips_per_step"})
    try:
        gibbs = GibbsConfig(
            sweeps=_int(g, "sweeps", 7000, "gibbs"),
            flips_per_step=_int(g, "flips_per_step", 1, "gibbs", 1),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"[gibbs]: {exc}") from None

    s = _section(
        raw, "sampler",
        {"iterations", "retain", "tau0", "target_acceptance", "adapt_c", "adapt_kappa",
         "adapt_on", "checkpoint_every", "beta0", "proposal_cov"},
    )
    try:
        cov = s.get("proposal_cov", "identity")
        if cov == "identity":
            cov = None
        else:
            cov = np.asarray(cov, dtype=float)
            np.linalg.cholesky(cov)
        sampler = SamplerConfig(
            iterations=_int(s, "iterations", 100_000, "sampler", 1),
            retain=_int(s, "retain", 50_000, "sampler", 1),
            tau0=float(s.get("tau0", 1.0)),
            target_acceptance=float(s.get("target_acceptance", 0.234)),
            adapt_c=float(s.get("adapt_c", 1.0)),
            adapt_kappa=float(s.get("adapt_kappa", 0.6)),
            adapt_on=s.get("adapt_on", "probability"),
            proposal_cov=cov,
            gibbs=gibbs,
            seed=seed,
            workers=workers,
            checkpoint_every=_int(s, "checkpoint_every", 1000, "sampler"),
        )
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise ConfigError(f"[sampler]: {exc}") from None
    dim = len(recipe.u) + len(recipe.m) + len(recipe.v)
    if cov is not None and cov.shape != (dim, dim):
        raise ConfigError(f"sampler.proposal_cov must be {dim} x {dim}")

    gen = _section(raw, "generate", {"truth", "sweeps"})
    sim = _section(raw, "simulate", {"beta", "start"})
    if sim.get("start", "empty") not in ("empty", "observed"):
        raise ConfigError("simulate.start must be 'empty' or 'observed'")
    diag = _section(raw, "diagnose", {"every", "beta"})
    cf = _section(raw, "counterfactual", {"chain"})
    chain_path = _path(base_dir, cf["chain"], "counterfactual.chain", False) if "chain" in cf else None

    scen = raw.get("scenario", [])
    if not isinstance(scen, list):
        raise ConfigError("[[scenario]] must be an array of tables")
    scenarios = []
    for k, item in enumerate(scen):
        allowed = {"kind", "grid", "replications", "target", "majority", "sweeps", "flips_per_step"}
        bad = set(item) - allowed
        if bad:
            raise ConfigError(f"scenario[{k}]: unknown keys {sorted(bad)}")
        if "kind" not in item or "grid" not in item:
            raise ConfigError(f"scenario[{k}] needs 'kind' and 'grid'")
        try:
            sg = GibbsConfig(
                sweeps=_int(item, "sweeps", gibbs.sweeps, f"scenario[{k}]"),
                flips_per_step=_int(item, "flips_per_step", gibbs.flips_per_step, f"scenario[{k}]", 1),
                seed=seed,
            )
            scenarios.append(
                Scenario(
                    kind=item["kind"],
                    grid=tuple(item["grid"]),
                    replications=_int(item, "replications", 1000, f"scenario[{k}]", 1),
                    gibbs=sg,
                    seed=seed,
                    target=item.get("target"),
                    majority=item.get("majority", "random"),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"scenario[{k}]: {exc}") from None
    labels = [sc.label for sc in scenarios]
    if len(set(labels)) != len(labels):
        raise ConfigError("scenario labels (kind:target) must be unique")

    cfg = RunConfig(
        seed=seed,
        base_dir=base_dir,
        output_dir=output_dir,
        hash=config_hash(raw),
        households_path=households,
        edges_path=edges,
        synthetic=synthetic,
        recipe=recipe,
        convention=convention,
        logit_spec=spec,
        logit_cluster=bool(logit.get("cluster", False)),
        sampler=sampler,
        gibbs=gibbs,
        beta0=_beta_table(s.get("beta0"), "sampler.beta0"),
        truth=_beta_table(gen.get("truth"), "generate.truth"),
        truth_sweeps=_int(gen, "sweeps", gibbs.sweeps, "generate"),
        simulate_beta=_beta_table(sim.get("beta"), "simulate.beta"),
        simulate_start=sim.get("start", "empty"),
        diagnose_every=_int(diag, "every", 100, "diagnose", 1),
        diagnose_beta=_beta_table(diag.get("beta"), "diagnose.beta"),
        chain_path=chain_path,
        scenarios=tuple(scenarios),
        workers=workers,
        raw=raw,
    )
    for what in ("beta0", "truth", "simulate_beta", "diagnose_beta"):
        cfg.parameter(getattr(cfg, what), what)
    return cfg


def load_config(path, check_paths: bool = True) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw, path.resolve().parent, check_paths)
