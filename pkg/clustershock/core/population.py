import json
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from functools import cached_property
from typing import Any

import numpy as np
import pydantic

from clustershock.core.errors import SchemaError, ShapeMismatch
from clustershock.core.layout import StrataLayout
from clustershock.core.rng import RandomStream
from clustershock.schemas.enums import CrossArmMode, ShockFamily, ShockModel
from clustershock.schemas.population import (
    CompactPopulationConfig,
    EpsSpec,
    PopulationConfig,
    ShockSpec,
    StratumConfig,
)
from clustershock.utils.common_utils import load_config
from clustershock.utils.log_util import logger

_SCALE_KEYS = {
    ShockFamily.NORMAL: "sd",
    ShockFamily.UNIFORM: "half_width",
    ShockFamily.TWO_POINT: "magnitude",
}

# scale giving unit variance, used for the standardized unit-level law
_UNIT_SCALE = {
    ShockFamily.NORMAL: 1.0,
    ShockFamily.UNIFORM: math.sqrt(3.0),
    ShockFamily.TWO_POINT: 1.0,
    ShockFamily.DEGENERATE: 0.0,
}


@dataclass(frozen=True)
class ShockDistribution:
    """
    Mean-zero law of a shock pair (d=0, d=1).

    ``scale`` is the sd for normal, the half width for uniform and the
    magnitude of the +/- atoms for two_point. Correlated pairs are built as
    a joint normal for the normal family and as matched/antimatched sign
    flips with probability (1 + rho) / 2 otherwise; both give corr = rho.
    """

    family: ShockFamily = ShockFamily.DEGENERATE
    scale: float = 0.0
    cross_arm: CrossArmMode = CrossArmMode.IDENTICAL
    rho: float = 0.0

    def variance(self) -> float:
        match self.family:
            case ShockFamily.NORMAL | ShockFamily.TWO_POINT:
                return self.scale**2
            case ShockFamily.UNIFORM:
                return self.scale**2 / 3.0
            case _:
                return 0.0

    def diff_variance(self) -> float:
        """V(shock(1) - shock(0))."""
        match self.cross_arm:
            case CrossArmMode.IDENTICAL:
                return 0.0
            case CrossArmMode.INDEPENDENT:
                return 2.0 * self.variance()
            case _:
                return 2.0 * (1.0 - self.rho) * self.variance()

    def _base(self, rng: np.random.Generator, size: int) -> np.ndarray:
        match self.family:
            case ShockFamily.NORMAL:
                return self.scale * rng.standard_normal(size)
            case ShockFamily.UNIFORM:
                return rng.uniform(-self.scale, self.scale, size)
            case ShockFamily.TWO_POINT:
                return self.scale * (2.0 * rng.integers(0, 2, size) - 1.0)
            case _:
                return np.zeros(size)

    def draw(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        if self.family == ShockFamily.DEGENERATE:
            return np.zeros(size), np.zeros(size)
        d0 = self._base(rng, size)
        match self.cross_arm:
            case CrossArmMode.IDENTICAL:
                d1 = d0.copy()
            case CrossArmMode.INDEPENDENT:
                d1 = self._base(rng, size)
            case _:
                if self.family == ShockFamily.NORMAL:
                    z = self.scale * rng.standard_normal(size)
                    d1 = self.rho * d0 + math.sqrt(max(0.0, 1.0 - self.rho**2)) * z
                else:
                    keep = rng.random(size) < (1.0 + self.rho) / 2.0
                    d1 = np.where(keep, d0, -d0)
        return d0, d1


@dataclass(frozen=True, eq=False)
class Stratum:
    id: int
    y0: np.ndarray
    y1: np.ndarray
    eps_sd0: np.ndarray
    eps_sd1: np.ndarray
    eta_dist: ShockDistribution
    n_treat: int

    @property
    def n_k(self) -> int:
        return len(self.y0)

    @property
    def n_control(self) -> int:
        return self.n_k - self.n_treat


@dataclass(frozen=True, eq=False)
class Population:
    """Finite population of K strata with stochastic potential outcomes."""

    strata: tuple[Stratum, ...]
    shock_model: ShockModel = ShockModel.ADDITIVE
    eps_law: ShockDistribution = ShockDistribution(
        ShockFamily.NORMAL, 1.0, CrossArmMode.INDEPENDENT
    )

    @property
    def K(self) -> int:
        return len(self.strata)

    @cached_property
    def layout(self) -> StrataLayout:
        return StrataLayout(tuple(s.n_k for s in self.strata))

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def n_bar(self) -> float:
        return self.n / self.K

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.array(self.layout.sizes, dtype=np.int64)

    @cached_property
    def n_treat(self) -> np.ndarray:
        return np.array([s.n_treat for s in self.strata], dtype=np.int64)

    @cached_property
    def n_control(self) -> np.ndarray:
        return self.sizes - self.n_treat

    @cached_property
    def weights(self) -> np.ndarray:
        """n_k / n_bar."""
        return self.sizes / self.n_bar

    @cached_property
    def y0(self) -> np.ndarray:
        return np.concatenate([s.y0 for s in self.strata])

    @cached_property
    def y1(self) -> np.ndarray:
        return np.concatenate([s.y1 for s in self.strata])

    @cached_property
    def eps_sd0(self) -> np.ndarray:
        return np.concatenate([s.eps_sd0 for s in self.strata])

    @cached_property
    def eps_sd1(self) -> np.ndarray:
        return np.concatenate([s.eps_sd1 for s in self.strata])

    @cached_property
    def stratum_ids(self) -> tuple[int, ...]:
        return tuple(s.id for s in self.strata)

    @property
    def equal_sizes(self) -> bool:
        return len(set(self.layout.sizes)) == 1


@dataclass(frozen=True, eq=False)
class ShockRealization:
    eta0: np.ndarray
    eta1: np.ndarray
    eps0: np.ndarray
    eps1: np.ndarray


@dataclass(frozen=True, eq=False)
class PotentialOutcomes:
    Y0: np.ndarray
    Y1: np.ndarray
    layout: StrataLayout


def _shock_distribution(spec: ShockSpec, stratum: int | None) -> ShockDistribution:
    if spec.params.get("mean", 0.0) != 0.0:
        raise SchemaError("shock mean must be 0", stratum=stratum)
    rho = _resolve_rho(spec.cross_arm, spec.rho, stratum)
    if spec.family == ShockFamily.DEGENERATE:
        return ShockDistribution(ShockFamily.DEGENERATE, 0.0, spec.cross_arm, rho)
    key = _SCALE_KEYS[spec.family]
    scale = spec.params.get(key, spec.params.get("scale"))
    if scale is None:
        raise SchemaError(
            f"eta: {spec.family.value} family needs params.{key}", stratum=stratum
        )
    if not math.isfinite(scale) or scale < 0:
        raise SchemaError(f"eta: {key} must be finite and >= 0", stratum=stratum)
    return ShockDistribution(spec.family, float(scale), spec.cross_arm, rho)


def _resolve_rho(mode: CrossArmMode, rho: float | None, stratum: int | None) -> float:
    if mode != CrossArmMode.CORRELATED:
        return 0.0
    if rho is None or not -1.0 <= rho <= 1.0:
        raise SchemaError("correlated cross_arm needs rho in [-1, 1]", stratum=stratum)
    return float(rho)


def _eps_law(spec: EpsSpec) -> ShockDistribution:
    rho = _resolve_rho(spec.cross_arm, spec.rho, None)
    return ShockDistribution(spec.family, _UNIT_SCALE[spec.family], spec.cross_arm, rho)


def _sd_vector(value: list[float] | float, n_k: int, name: str, stratum: int) -> np.ndarray:
    sd = np.full(n_k, float(value)) if isinstance(value, (int, float)) else np.asarray(value, dtype=float)
    if sd.shape != (n_k,):
        raise SchemaError(f"length({name}) must equal n_k = {n_k}", stratum=stratum)
    if not np.all(np.isfinite(sd)) or np.any(sd < 0):
        raise SchemaError(f"{name} entries must be finite and >= 0", stratum=stratum)
    return sd


def _build_stratum(cfg: StratumConfig, k: int) -> Stratum:
    y0 = np.asarray(cfg.y0, dtype=float)
    y1 = np.asarray(cfg.y1, dtype=float)
    n_k = len(y0)
    if len(y1) != n_k:
        raise SchemaError("length(y0) must equal length(y1)", stratum=k)
    if n_k < 2:
        raise SchemaError("n_k must be >= 2", stratum=k)
    if not (np.all(np.isfinite(y0)) and np.all(np.isfinite(y1))):
        raise SchemaError("baseline outcomes must be finite", stratum=k)
    n_treat = n_k // 2 if cfg.n_treat is None else cfg.n_treat
    if not 1 <= n_treat <= n_k - 1:
        raise SchemaError("both arms nonempty: need 1 <= n_treat <= n_k - 1", stratum=k)
    return Stratum(
        id=k,
        y0=y0,
        y1=y1,
        eps_sd0=_sd_vector(cfg.eps_sd0, n_k, "eps_sd0", k),
        eps_sd1=_sd_vector(cfg.eps_sd1, n_k, "eps_sd1", k),
        eta_dist=_shock_distribution(cfg.eta, k),
        n_treat=n_treat,
    )


def expand_compact(cfg: CompactPopulationConfig) -> PopulationConfig:
    if cfg.K < 2:
        raise SchemaError(f"K must be >= 2, got {cfg.K}")
    sizes = [cfg.n_per_stratum] * cfg.K if isinstance(cfg.n_per_stratum, int) else list(cfg.n_per_stratum)
    if len(sizes) != cfg.K:
        raise SchemaError(f"n_per_stratum lists {len(sizes)} sizes for K = {cfg.K}")
    treats = cfg.n_treat if isinstance(cfg.n_treat, list) else [cfg.n_treat] * cfg.K
    if len(treats) != cfg.K:
        raise SchemaError(f"n_treat lists {len(treats)} entries for K = {cfg.K}")

    c = np.linspace(-1.0, 1.0, cfg.K)
    strata = []
    for k, (n_k, n_treat) in enumerate(zip(sizes, treats)):
        u = np.linspace(-1.0, 1.0, n_k)
        y0 = cfg.stratum_shift * c[k] + cfg.y0_spread * u
        y1 = y0 + cfg.tau + cfg.tau_between * c[k] + cfg.tau_within * u
        strata.append(
            StratumConfig(
                y0=y0.tolist(),
                y1=y1.tolist(),
                eps_sd0=cfg.eps_sd0,
                eps_sd1=cfg.eps_sd1,
                n_treat=n_treat,
                eta=cfg.eta,
            )
        )
    return PopulationConfig(
        shock_model=cfg.shock_model,
        treatment_arms=cfg.treatment_arms,
        eps=cfg.eps,
        strata=strata,
    )


def build_population(config: PopulationConfig | CompactPopulationConfig) -> Population:
    if isinstance(config, CompactPopulationConfig):
        if config.treatment_arms != 2:
            raise SchemaError("only binary treatment supported")
        config = expand_compact(config)
    if config.treatment_arms != 2:
        raise SchemaError("only binary treatment supported")
    if len(config.strata) < 2:
        raise SchemaError(f"K must be >= 2, got {len(config.strata)}")
    strata = tuple(_build_stratum(s, k) for k, s in enumerate(config.strata, start=1))
    pop = Population(strata=strata, shock_model=config.shock_model, eps_law=_eps_law(config.eps))
    logger.debug(f"built population K={pop.K} n={pop.n} model={pop.shock_model.value}")
    return pop


def parse_population_config(data: dict[str, Any]) -> PopulationConfig | CompactPopulationConfig:
    model = PopulationConfig if "strata" in data else CompactPopulationConfig
    try:
        return model.model_validate(data)
    except pydantic.ValidationError as e:
        err = e.errors()[0]
        path = ".".join(str(p) for p in err["loc"])
        raise SchemaError(err["msg"], path=path) from e


def population_from_dict(data: dict[str, Any]) -> Population:
    return build_population(parse_population_config(data))


def _with_file(path: str, e: SchemaError) -> SchemaError:
    where = path if e.path is None else f"{path}:{e.path}"
    return SchemaError(e.message, stratum=e.stratum, path=where)


def load_population_config(path: str) -> PopulationConfig | CompactPopulationConfig:
    """Read a JSON (or ``.toml``) population config and validate it."""
    try:
        data = load_config(path)
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e.msg} (line {e.lineno})", path=path) from e
    except tomllib.TOMLDecodeError as e:
        raise SchemaError(f"invalid TOML: {e}", path=path) from e
    try:
        return parse_population_config(data)
    except SchemaError as e:
        raise _with_file(path, e) from e


def load_population(path: str) -> Population:
    config = load_population_config(path)
    try:
        return build_population(config)
    except SchemaError as e:
        raise _with_file(path, e) from e


def draw_eta(pop: Population, stream: RandomStream) -> tuple[np.ndarray, np.ndarray]:
    """Stratum shocks, one generator per call, strata grouped by law in first-seen order."""
    rng = stream.substream("eta").generator()
    eta0 = np.zeros(pop.K)
    eta1 = np.zeros(pop.K)
    groups: dict[ShockDistribution, list[int]] = {}
    for k, s in enumerate(pop.strata):
        groups.setdefault(s.eta_dist, []).append(k)
    for dist, idx in groups.items():
        d0, d1 = dist.draw(rng, len(idx))
        eta0[idx] = d0
        eta1[idx] = d1
    return eta0, eta1


def draw_eps(pop: Population, stream: RandomStream) -> tuple[np.ndarray, np.ndarray]:
    rng = stream.substream("eps").generator()
    z0, z1 = pop.eps_law.draw(rng, pop.n)
    return pop.eps_sd0 * z0, pop.eps_sd1 * z1


def draw_shocks(pop: Population, stream: RandomStream) -> ShockRealization:
    eta0, eta1 = draw_eta(pop, stream)
    eps0, eps1 = draw_eps(pop, stream)
    return ShockRealization(eta0, eta1, eps0, eps1)


def zero_shocks(pop: Population) -> ShockRealization:
    return ShockRealization(np.zeros(pop.K), np.zeros(pop.K), np.zeros(pop.n), np.zeros(pop.n))


def check_shock_shapes(pop: Population, shocks: ShockRealization) -> None:
    for name in ("eta0", "eta1"):
        if np.shape(getattr(shocks, name)) != (pop.K,):
            raise ShapeMismatch(f"{name} has shape {np.shape(getattr(shocks, name))}, expected ({pop.K},)")
    for name in ("eps0", "eps1"):
        if not pop.layout.matches(getattr(shocks, name)):
            raise ShapeMismatch(f"{name} has shape {np.shape(getattr(shocks, name))}, expected ({pop.n},)")


def conditional_means(pop: Population, eta0: np.ndarray, eta1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """E[Y(d) | eta] per unit."""
    idx = pop.layout.index
    if pop.shock_model == ShockModel.MULTIPLICATIVE_ETA:
        return pop.y0 * (1.0 + eta0[idx]), pop.y1 * (1.0 + eta1[idx])
    return pop.y0 + eta0[idx], pop.y1 + eta1[idx]


def realize_outcomes(pop: Population, shocks: ShockRealization) -> PotentialOutcomes:
    check_shock_shapes(pop, shocks)
    m0, m1 = conditional_means(pop, shocks.eta0, shocks.eta1)
    return PotentialOutcomes(m0 + shocks.eps0, m1 + shocks.eps1, pop.layout)
