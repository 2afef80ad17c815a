"""Steady-state experiments for boundary-driven models.

Exact oracles for the stationary laws that are known in closed form
(uniform, rescaled symmetric Beta, ordered Dirichlet mixtures, discrete
Gamma, Gamma, Poisson products), stationary samplers built on the engine,
and the statistical reports that compare the two sides.

Every comparison is emitted as a :class:`ComparisonReport` carrying the
test kind, the statistic, its threshold, and the sampling metadata
(truncation ``epsilon`` / step ``dt`` / ``burn_in``) so a report is
reproducible on its own.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np
from scipy import stats as sp_stats
from scipy.special import betainc

from . import engine
from .distributions import (
    DiscreteGammaFamily,
    GammaFamily,
    OrderedDirichlet,
    as_generator,
)
from .engine._model_arrays import build_constant_plan
from .errors import (
    BadShapeError,
    ConfigError,
    KindMismatchError,
    NotOrderedError,
    OutOfRangeError,
    ReservoirMismatchError,
    TermBudgetError,
    UnsupportedModelError,
)
from .models import (
    Family,
    Graph,
    ModelSpec,
    ReservoirKind,
    ReservoirSpec,
    chain_graph,
    model_from_json,
    validate_model,
)
from .rng import RngStream

__all__ = [
    "OracleKind",
    "StationaryOracle",
    "ComparisonReport",
    "OracleMoment",
    "batch_means",
    "mixing_oracle_moments",
    "rising_factorial",
    "chain_models",
    "default_event_thinning",
    "ks_report",
    "tv_report",
    "hidden_single_site_experiment",
    "hidden_equilibrium_degeneracy_check",
    "ness_chain_experiment",
    "reservoir_variant_equivalence",
    "sip_poisson_mixture_experiment",
    "irw_poisson_product_experiment",
    "epsilon_convergence_sweep",
    "dt_convergence_check",
    "run_experiment",
    "SWEEP_TARGETS",
]

# Default statistical gates: the compared laws are exact, so thresholds only
# have to absorb Monte Carlo noise plus truncation bias (the latter is
# controlled separately by the epsilon/dt sweeps).
Z_THRESHOLD = 3.0
KS_THRESHOLD = 0.01
TV_THRESHOLD = 0.02
DISPERSION_BAND = 0.03
PMF_MASS_WINDOW = 1e-6
MC_FALLBACK_SAMPLES = 10_000_000

_ORACLE_SEED = 190_527  # deterministic stream for oracle Monte Carlo fallbacks


def rising_factorial(a: float, k: int) -> float:
    """a (a+1) ... (a+k-1); equals Gamma(a+k)/Gamma(a) for a > 0."""
    out = 1.0
    for j in range(int(k)):
        out *= a + j
    return out


def _stirling2_row(k: int) -> list[float]:
    """Stirling numbers of the second kind S(k, j) for j = 0..k."""
    row = [1.0]
    for n in range(1, k + 1):
        new = [0.0] * (n + 1)
        for j in range(1, n + 1):
            new[j] = j * (row[j] if j < len(row) else 0.0) + row[j - 1]
        row = new
    return row


def _safe_z(diff: float, se: float) -> float:
    if se > 0:
        return abs(diff) / se
    return 0.0 if diff == 0 else math.inf


# --- stationary oracles ------------------------------------------------------------


class OracleKind(str, Enum):
    UNIFORM = "UNIFORM"
    BETA_RESCALED = "BETA_RESCALED"
    ORDERED_DIRICHLET = "ORDERED_DIRICHLET"
    DISCRETE_GAMMA = "DISCRETE_GAMMA"
    GAMMA = "GAMMA"
    POISSON_PRODUCT = "POISSON_PRODUCT"


@dataclass(frozen=True)
class StationaryOracle:
    """Exact stationary law used as the reference side of a comparison.

    UNIFORM/BETA_RESCALED/GAMMA/DISCRETE_GAMMA are single-site laws;
    ORDERED_DIRICHLET wraps a mixing law over a chain; POISSON_PRODUCT is
    an independent product over sites.  Moments are closed-form (exact to
    roundoff); sampling uses exact constructions, never approximations.
    """

    kind: OracleKind
    two_s: float = 1.0
    theta_left: float = 0.0
    theta_right: float = 0.0
    theta: float = 0.0
    law: OrderedDirichlet | None = None
    z_star: tuple[float, ...] = ()

    # -- constructors ---------------------------------------------------------------

    @classmethod
    def uniform(cls, theta_left: float, theta_right: float) -> "StationaryOracle":
        return cls(OracleKind.UNIFORM, two_s=1.0,
                   theta_left=theta_left, theta_right=theta_right)

    @classmethod
    def beta_rescaled(cls, two_s: float, theta_left: float,
                      theta_right: float) -> "StationaryOracle":
        return cls(OracleKind.BETA_RESCALED, two_s=two_s,
                   theta_left=theta_left, theta_right=theta_right)

    @classmethod
    def ordered_dirichlet(cls, law: OrderedDirichlet) -> "StationaryOracle":
        return cls(OracleKind.ORDERED_DIRICHLET, two_s=law.two_s,
                   theta_left=law.theta_left, theta_right=law.theta_right, law=law)

    @classmethod
    def discrete_gamma(cls, two_s: float, theta: float) -> "StationaryOracle":
        return cls(OracleKind.DISCRETE_GAMMA, two_s=two_s, theta=theta)

    @classmethod
    def gamma(cls, two_s: float, theta: float) -> "StationaryOracle":
        return cls(OracleKind.GAMMA, two_s=two_s, theta=theta)

    @classmethod
    def poisson_product(cls, z_star: Sequence[float]) -> "StationaryOracle":
        return cls(OracleKind.POISSON_PRODUCT,
                   z_star=tuple(float(z) for z in z_star))

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", OracleKind(self.kind))
        if self.kind in (OracleKind.UNIFORM, OracleKind.BETA_RESCALED):
            if self.theta_left > self.theta_right:
                raise OutOfRangeError("theta_left must be <= theta_right")
            if self.kind is OracleKind.UNIFORM and self.two_s != 1.0:
                raise KindMismatchError("the uniform oracle fixes two_s = 1")
        elif self.kind is OracleKind.ORDERED_DIRICHLET:
            if self.law is None:
                raise KindMismatchError("ORDERED_DIRICHLET needs a mixing law")
        elif self.kind is OracleKind.POISSON_PRODUCT:
            if not self.z_star:
                raise BadShapeError("POISSON_PRODUCT needs at least one site")
            if any(z < 0 for z in self.z_star):
                raise OutOfRangeError("Poisson means must be >= 0")
        elif self.theta < 0:
            raise OutOfRangeError("theta must be >= 0")

    # -- structure ------------------------------------------------------------------

    @property
    def n_sites(self) -> int:
        if self.kind is OracleKind.ORDERED_DIRICHLET:
            return self.law.n_sites
        if self.kind is OracleKind.POISSON_PRODUCT:
            return len(self.z_star)
        return 1

    @property
    def span(self) -> float:
        return self.theta_right - self.theta_left

    def _check_site(self, site: int) -> int:
        if not 1 <= site <= self.n_sites:
            raise OutOfRangeError(f"site {site} out of range 1..{self.n_sites}")
        return int(site)

    # -- moments --------------------------------------------------------------------

    def _beta_raw_moment(self, k: int) -> float:
        """E[(theta_left + span * B)^k] with B symmetric Beta(two_s, two_s)."""
        a = self.two_s
        eb = [1.0]
        for m in range(k):
            eb.append(eb[-1] * (a + m) / (2 * a + m))
        out = 0.0
        for m in range(k + 1):
            out += math.comb(k, m) * self.theta_left ** (k - m) * self.span**m * eb[m]
        return out

    def site_moment(self, k: int, site: int = 1) -> float:
        """Raw moment E[X_site^k], exact in closed form."""
        site = self._check_site(site)
        k = int(k)
        if k < 0:
            raise OutOfRangeError("moment order must be >= 0")
        if self.kind in (OracleKind.UNIFORM, OracleKind.BETA_RESCALED):
            return self._beta_raw_moment(k)
        if self.kind is OracleKind.ORDERED_DIRICHLET:
            exps = [0] * self.law.n_sites
            exps[site - 1] = k
            return self.law.moment(exps)
        if self.kind is OracleKind.GAMMA:
            return GammaFamily(self.two_s, self.theta).moment(k) if self.theta > 0 \
                else float(k == 0)
        if self.kind is OracleKind.DISCRETE_GAMMA:
            fam = DiscreteGammaFamily(self.two_s, self.theta)
            s_row = _stirling2_row(k)
            return sum(s_row[j] * fam.factorial_moment(j) for j in range(k + 1))
        lam = self.z_star[site - 1]
        s_row = _stirling2_row(k)
        return sum(s_row[j] * lam**j for j in range(k + 1))

    def site_mean(self, site: int = 1) -> float:
        return self.site_moment(1, site)

    def site_variance(self, site: int = 1) -> float:
        m1 = self.site_moment(1, site)
        return self.site_moment(2, site) - m1 * m1

    def covariance(self, i: int, j: int) -> float:
        """Cov(X_i, X_j); zero across sites for the product kinds."""
        i, j = self._check_site(i), self._check_site(j)
        if i == j:
            return self.site_variance(i)
        if self.kind is OracleKind.ORDERED_DIRICHLET:
            exps = [0] * self.law.n_sites
            exps[i - 1] = exps[j - 1] = 1
            return self.law.moment(exps) - self.site_mean(i) * self.site_mean(j)
        return 0.0

    # -- pointwise laws ---------------------------------------------------------------

    def cdf(self, x, site: int = 1):
        """CDF of the given site; continuous kinds only."""
        self._check_site(site)
        x = np.asarray(x, dtype=float)
        if self.kind in (OracleKind.UNIFORM, OracleKind.BETA_RESCALED):
            if self.span == 0.0:
                out = (x >= self.theta_left).astype(float)
            else:
                u = np.clip((x - self.theta_left) / self.span, 0.0, 1.0)
                out = betainc(self.two_s, self.two_s, u)
            return out if out.ndim else float(out)
        if self.kind is OracleKind.GAMMA:
            if self.theta == 0.0:
                out = (x >= 0.0).astype(float)
                return out if out.ndim else float(out)
            return GammaFamily(self.two_s, self.theta).cdf(x)
        raise KindMismatchError(f"{self.kind.value} has no scalar cdf")

    def pmf(self, n, site: int = 1):
        """pmf of the given site; discrete kinds only."""
        site = self._check_site(site)
        if self.kind is OracleKind.DISCRETE_GAMMA:
            return DiscreteGammaFamily(self.two_s, self.theta).pmf(n)
        if self.kind is OracleKind.POISSON_PRODUCT:
            lam = self.z_star[site - 1]
            n = np.asarray(n, dtype=np.int64)
            out = np.asarray(sp_stats.poisson.pmf(n, lam))
            return out if out.ndim else float(out)
        raise KindMismatchError(f"{self.kind.value} has no pmf")

    def sample(self, stream, size: int | None = None) -> np.ndarray:
        """Exact draws, shaped (n_sites,) or (size, n_sites)."""
        gen = as_generator(stream)
        m = 1 if size is None else int(size)
        if self.kind in (OracleKind.UNIFORM, OracleKind.BETA_RESCALED):
            if self.span == 0.0:
                out = np.full((m, 1), self.theta_left)
            else:
                g1 = gen.gamma(self.two_s, 1.0, size=m)
                g2 = gen.gamma(self.two_s, 1.0, size=m)
                out = (self.theta_left + self.span * g1 / (g1 + g2))[:, None]
        elif self.kind is OracleKind.ORDERED_DIRICHLET:
            out = np.atleast_2d(self.law.sample(gen, size=m))
        elif self.kind is OracleKind.GAMMA:
            out = GammaFamily(self.two_s, self.theta).sample(gen, size=m)[:, None] \
                if self.theta > 0 else np.zeros((m, 1))
        elif self.kind is OracleKind.DISCRETE_GAMMA:
            out = DiscreteGammaFamily(self.two_s, self.theta).sample(gen, size=m)
            out = np.asarray(out, dtype=float)[:, None]
        else:
            out = gen.poisson(np.asarray(self.z_star), size=(m, len(self.z_star)))
            out = out.astype(float)
        return out[0] if size is None else out


# --- comparison reports ------------------------------------------------------------

_TEST_KINDS = ("ks", "moment-z", "chi-square", "tv")
_CONTEXT_KEYS = ("epsilon", "dt", "burn_in")


@dataclass(frozen=True)
class ComparisonReport:
    """One statistical check: pass if and only if statistic <= threshold.

    ``metadata`` must carry the sampling context (at least one of
    ``epsilon``, ``dt``, ``burn_in``); a report without it is not
    reproducible and is rejected at construction.
    """

    name: str
    kind: str
    statistic: float
    threshold: float
    n_samples: int
    metadata: Mapping[str, Any]
    detail: Mapping[str, Any] = field(default_factory=dict)
    passed: bool = field(init=False)

    def __post_init__(self) -> None:
        if self.kind not in _TEST_KINDS:
            raise OutOfRangeError(
                f"test kind must be one of {_TEST_KINDS}, got {self.kind!r}"
            )
        md = dict(self.metadata)
        if not any(key in md for key in _CONTEXT_KEYS):
            raise BadShapeError(
                "report metadata must include epsilon, dt or burn_in context"
            )
        if not (self.threshold >= 0):
            raise OutOfRangeError("threshold must be >= 0")
        object.__setattr__(self, "metadata", md)
        object.__setattr__(self, "detail", dict(self.detail))
        object.__setattr__(self, "statistic", float(self.statistic))
        object.__setattr__(self, "passed", bool(self.statistic <= self.threshold))

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "n_samples": int(self.n_samples),
            "passed": self.passed,
            "metadata": dict(self.metadata),
            "detail": dict(self.detail),
        }


def batch_means(samples, n_batches: int = 32):
    """Mean, batch-means standard error and effective sample size (axis 0).

    Contiguous batches absorb autocorrelation of thinned chain output; the
    effective sample size is var(x) / se^2, capped at the actual count.
    Scalars come back for 1-d input, per-column arrays for 2-d input.
    """
    x = np.asarray(samples, dtype=float)
    one_dim = x.ndim == 1
    if one_dim:
        x = x[:, None]
    if x.ndim != 2:
        raise BadShapeError("samples must be 1-d or 2-d")
    if n_batches < 2:
        raise OutOfRangeError("need at least two batches")
    n = x.shape[0]
    if n < 2 * n_batches:
        raise BadShapeError(f"need >= {2 * n_batches} samples, got {n}")
    per = n // n_batches
    kept = x[: per * n_batches]
    mean = kept.mean(axis=0)
    bm = kept.reshape(n_batches, per, -1).mean(axis=1)
    se = bm.std(axis=0, ddof=1) / math.sqrt(n_batches)
    var = kept.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ess = np.where(se > 0, var / se**2, float(per * n_batches))
    ess = np.minimum(ess, float(per * n_batches))
    if one_dim:
        return float(mean[0]), float(se[0]), float(ess[0])
    return mean, se, ess


# --- mixing-law moment oracle --------------------------------------------------------


@dataclass(frozen=True)
class OracleMoment:
    """A moment value with its (possibly zero) declared standard error."""

    value: float
    se: float
    method: str  # "closed-form" | "monte-carlo"


def _exponent_vector(law: OrderedDirichlet, xi) -> list[int]:
    if hasattr(xi, "mapping"):  # a dual index keyed by chain sites 1..N
        exps = [0] * law.n_sites
        for v, k in xi.mapping.items():
            if not isinstance(v, int) or not 1 <= v <= law.n_sites:
                raise OutOfRangeError(f"dual index site {v!r} outside 1..{law.n_sites}")
            exps[v - 1] = int(k)
        return exps
    exps = [int(e) for e in xi]
    if len(exps) != law.n_sites:
        raise BadShapeError(f"expected {law.n_sites} exponents, got {len(exps)}")
    return exps


def mixing_oracle_moments(
    law: OrderedDirichlet,
    xi,
    *,
    stream: RngStream | np.random.Generator | None = None,
    term_budget: int = 200_000,
    mc_samples: int = MC_FALLBACK_SAMPLES,
) -> OracleMoment:
    """E[prod_i theta_i^xi_i] under the ordered mixing law.

    Exact through the Dirichlet-gap expansion; if that exceeds the term
    budget the value is estimated by Monte Carlo with a declared standard
    error.  ``xi`` is a dual index (sites 1..N) or an exponent sequence.
    """
    exps = _exponent_vector(law, xi)
    if any(e < 0 for e in exps):
        raise OutOfRangeError("exponents must be >= 0")
    if sum(exps) > 8:
        raise OutOfRangeError("total moment order above 8 is not supported")
    try:
        return OracleMoment(law.moment(exps, term_budget=term_budget), 0.0,
                            "closed-form")
    except TermBudgetError:
        pass
    gen = as_generator(stream if stream is not None else RngStream(_ORACLE_SEED))
    total = 0.0
    total_sq = 0.0
    left = int(mc_samples)
    block_size = 250_000
    powers = np.asarray(exps, dtype=float)
    while left > 0:
        m = min(block_size, left)
        draws = law.sample(gen, size=m)
        vals = np.prod(draws**powers, axis=1)
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        left -= m
    mean = total / mc_samples
    var = max(total_sq / mc_samples - mean * mean, 0.0)
    return OracleMoment(mean, math.sqrt(var / mc_samples), "monte-carlo")


# --- experiment scaffolding -----------------------------------------------------------

_HIDDEN_CHAIN_FAMILIES = (Family.HIDDEN_HARMONIC, Family.HARMONIC_CONTINUOUS)


def chain_models(
    family: Family | str,
    n_sites: int,
    two_s: float,
    theta_left: float,
    theta_right: float,
    *,
    reservoir_kind: ReservoirKind | str = ReservoirKind.STANDARD,
) -> tuple[Graph, ModelSpec]:
    """Boundary-driven chain with target reservoirs at both ends (coupling 1)."""
    family = Family(family)
    graph = chain_graph(n_sites)
    if n_sites == 1:
        reservoirs = {1: (ReservoirSpec(theta_star=theta_left),
                          ReservoirSpec(theta_star=theta_right))}
    else:
        reservoirs = {1: ReservoirSpec(theta_star=theta_left),
                      n_sites: ReservoirSpec(theta_star=theta_right)}
    spec = ModelSpec(family=family, two_s=two_s, reservoirs=reservoirs,
                     harmonic_reservoir_kind=ReservoirKind(reservoir_kind))
    return graph, validate_model(graph, spec)


def default_event_thinning(graph: Graph, spec: ModelSpec,
                           epsilon: float | None) -> float:
    """Thinning interval of five expected events per site (constant-rate families)."""
    plan = build_constant_plan(graph, spec, epsilon)
    total = float(plan.rates.sum())
    if total <= 0:
        raise OutOfRangeError("model has no active jump classes")
    return 5.0 * graph.n / total


def _metadata(**kwargs: Any) -> dict[str, Any]:
    return {k: v for k, v in kwargs.items() if v is not None}


def ks_report(samples, oracle: StationaryOracle, *, name: str,
              metadata: Mapping[str, Any], threshold: float = KS_THRESHOLD,
              site: int = 1) -> ComparisonReport:
    """Kolmogorov-Smirnov distance of scalar samples from an oracle cdf."""
    x = np.asarray(samples, dtype=float).ravel()
    result = sp_stats.kstest(x, lambda q: oracle.cdf(q, site=site))
    return ComparisonReport(
        name=name, kind="ks", statistic=float(result.statistic),
        threshold=threshold, n_samples=x.size, metadata=metadata,
        detail={"pvalue": float(result.pvalue), "oracle": oracle.kind.value},
    )


def tv_report(samples, oracle: StationaryOracle, *, name: str,
              metadata: Mapping[str, Any], threshold: float = TV_THRESHOLD,
              mass_window: float = PMF_MASS_WINDOW, site: int = 1) -> ComparisonReport:
    """Total-variation distance between an empirical pmf and an oracle pmf.

    The support window is the smallest prefix 0..K holding oracle mass
    1 - ``mass_window``; all remaining mass is lumped into one tail bin.
    """
    x = np.asarray(samples)
    counts = np.rint(np.asarray(x, dtype=float)).astype(np.int64).ravel()
    if np.any(counts < 0):
        raise OutOfRangeError("pmf comparison needs nonnegative counts")
    k_max, mass = 0, float(oracle.pmf(0, site=site))
    while mass < 1.0 - mass_window:
        k_max += 1
        mass += float(oracle.pmf(k_max, site=site))
        if k_max > 100_000:
            raise OutOfRangeError("oracle pmf window exceeds 100000 states")
    p_or = np.asarray(oracle.pmf(np.arange(k_max + 1), site=site), dtype=float)
    emp = np.bincount(np.minimum(counts, k_max + 1), minlength=k_max + 2)
    emp = emp / counts.size
    tv = 0.5 * (np.abs(emp[: k_max + 1] - p_or).sum()
                + abs(emp[k_max + 1] - (1.0 - p_or.sum())))
    return ComparisonReport(
        name=name, kind="tv", statistic=float(tv), threshold=threshold,
        n_samples=counts.size, metadata=metadata,
        detail={"window_max": k_max, "window_mass": float(p_or.sum()),
                "oracle": oracle.kind.value},
    )


def _moment_z_report(name: str, emp: float, emp_se: float, oracle_value: float,
                     oracle_se: float, n: int, metadata: Mapping[str, Any],
                     *, threshold: float = Z_THRESHOLD,
                     ess: float | None = None, **extra: Any) -> ComparisonReport:
    se = math.hypot(emp_se, oracle_se)
    z = _safe_z(emp - oracle_value, se)
    detail = {"empirical": emp, "oracle": oracle_value, "se": se}
    if ess is not None:
        detail["ess"] = ess
    detail.update(extra)
    return ComparisonReport(name=name, kind="moment-z", statistic=z,
                            threshold=threshold, n_samples=n,
                            metadata=metadata, detail=detail)


# --- hidden single site ---------------------------------------------------------------


def hidden_single_site_experiment(
    two_s: float,
    theta_left: float,
    theta_right: float,
    *,
    epsilon: float,
    n_samples: int = 100_000,
    burn_in: float | None = None,
    thin: float | None = None,
    stream: RngStream | np.random.Generator,
    backend: str | None = None,
    ks_threshold: float = KS_THRESHOLD,
) -> ComparisonReport:
    """KS check of the single hidden parameter against its rescaled Beta law."""
    graph, spec = chain_models(Family.HIDDEN_HARMONIC, 1, two_s,
                               theta_left, theta_right)
    if thin is None:
        thin = default_event_thinning(graph, spec, epsilon)
    if burn_in is None:
        burn_in = 40.0 * thin
    init = np.array([(theta_left + theta_right) / 2.0])
    samples, info = engine.stationary_samples(
        graph, spec, init, burn_in, n_samples, thin, stream,
        epsilon=epsilon, backend=backend,
    )
    oracle = StationaryOracle.beta_rescaled(two_s, theta_left, theta_right)
    meta = _metadata(epsilon=epsilon, burn_in=burn_in, thin=thin,
                     n_events=info["n_events"], family=spec.family.value)
    return ks_report(samples[:, 0], oracle, name="hidden-single-site-ks",
                     metadata=meta, threshold=ks_threshold)


def hidden_equilibrium_degeneracy_check(
    n_sites: int,
    two_s: float,
    theta_star: float,
    *,
    family: Family | str = Family.HIDDEN_KMP,
    burn_in: float = 200.0,
    n_samples: int = 200,
    thin: float = 1.0,
    stream: RngStream | np.random.Generator,
    backend: str | None = None,
    epsilon: float | None = None,
    threshold: float = 1e-3,
) -> ComparisonReport:
    """Sup-distance of a hidden chain from the constant equal-reservoir vector.

    With every reservoir target equal the mixing law degenerates to a point
    mass, so after burn-in every sampled theta vector must sit within
    ``threshold`` of the constant vector in the sup norm.
    """
    family = Family(family)
    if family not in (Family.HIDDEN_KMP, Family.HIDDEN_HARMONIC):
        raise UnsupportedModelError("degeneracy check needs a hidden family")
    graph = chain_graph(n_sites)
    if n_sites == 1:
        reservoirs: Any = {1: (ReservoirSpec(theta_star=theta_star),
                               ReservoirSpec(theta_star=theta_star))}
    else:
        reservoirs = {1: ReservoirSpec(theta_star=theta_star),
                      n_sites: ReservoirSpec(theta_star=theta_star)}
    spec = validate_model(graph, ModelSpec(family=family, two_s=two_s,
                                           reservoirs=reservoirs))
    if family is Family.HIDDEN_HARMONIC and epsilon is None:
        epsilon = 1e-4
    init = np.full(n_sites, theta_star + max(1.0, theta_star))
    samples, info = engine.stationary_samples(
        graph, spec, init, burn_in, n_samples, thin, stream,
        epsilon=epsilon, backend=backend,
    )
    sup = float(np.abs(samples - theta_star).max())
    meta = _metadata(epsilon=epsilon, burn_in=burn_in, thin=thin,
                     n_events=info["n_events"], family=family.value)
    return ComparisonReport(
        name="equal-reservoir-degeneracy", kind="moment-z", statistic=sup,
        threshold=threshold, n_samples=samples.shape[0], metadata=meta,
        detail={"error_scale": "sup-distance", "theta_star": theta_star},
    )


# --- boundary-driven chain experiment --------------------------------------------------


def ness_chain_experiment(
    family: Family | str,
    n_sites: int,
    two_s: float,
    theta_left: float,
    theta_right: float,
    *,
    epsilon: float,
    n_samples: int = 20_000,
    burn_in: float | None = None,
    thin: float | None = None,
    stream: RngStream | np.random.Generator,
    backend: str | None = None,
    z_threshold: float = Z_THRESHOLD,
    max_moment: int = 3,
) -> list[ComparisonReport]:
    """Compare chain steady-state samples against the ordered mixing oracle.

    Hidden family: per-site means and pair covariances of the theta samples
    are z-tested against the exact ordered-Dirichlet values, and the
    profile-monotonicity implied by the ordered support is checked too.
    Particle family: per-site moments E[x^k], k <= ``max_moment``, are
    z-tested against the mixture predictions rising(two_s, k) E[theta_i^k].
    """
    family = Family(family)
    if family not in _HIDDEN_CHAIN_FAMILIES:
        raise UnsupportedModelError(
            f"chain experiment covers {[f.value for f in _HIDDEN_CHAIN_FAMILIES]}"
        )
    if theta_left > theta_right:
        raise NotOrderedError("theta_left must be <= theta_right")
    graph, spec = chain_models(family, n_sites, two_s, theta_left, theta_right)
    law = OrderedDirichlet(n_sites, two_s, theta_left, theta_right)
    oracle = StationaryOracle.ordered_dirichlet(law)
    if thin is None:
        thin = default_event_thinning(graph, spec, epsilon)
    if burn_in is None:
        burn_in = 40.0 * thin

    profile = np.array([oracle.site_mean(i) for i in range(1, n_sites + 1)])
    if family is Family.HIDDEN_HARMONIC:
        init = profile
    else:
        init = two_s * profile  # mixture mean of the site masses
    samples, info = engine.stationary_samples(
        graph, spec, init, burn_in, n_samples, thin, stream,
        epsilon=epsilon, backend=backend,
    )
    meta = _metadata(epsilon=epsilon, burn_in=burn_in, thin=thin,
                     n_events=info["n_events"], family=family.value,
                     n_sites=n_sites, two_s=two_s)
    n = samples.shape[0]
    reports: list[ComparisonReport] = []

    if family is Family.HIDDEN_HARMONIC:
        means, ses, esses = batch_means(samples)
        for i in range(1, n_sites + 1):
            reports.append(_moment_z_report(
                f"site-{i}-mean", float(means[i - 1]), float(ses[i - 1]),
                oracle.site_mean(i), 0.0, n, meta,
                threshold=z_threshold, ess=float(esses[i - 1]),
            ))
        centered = samples - means
        for i in range(1, n_sites + 1):
            for j in range(i, n_sites + 1):
                prod = centered[:, i - 1] * centered[:, j - 1]
                c_mean, c_se, c_ess = batch_means(prod)
                reports.append(_moment_z_report(
                    f"cov-{i}-{j}", c_mean, c_se, oracle.covariance(i, j),
                    0.0, n, meta, threshold=z_threshold, ess=c_ess,
                ))
        for i in range(1, n_sites):
            diff = samples[:, i - 1] - samples[:, i]
            d_mean, d_se, d_ess = batch_means(diff)
            oracle_gap = oracle.site_mean(i) - oracle.site_mean(i + 1)
            z = (d_mean - oracle_gap) / d_se if d_se > 0 else 0.0
            reports.append(ComparisonReport(
                name=f"profile-monotone-{i}-{i + 1}", kind="moment-z",
                statistic=z, threshold=z_threshold, n_samples=n, metadata=meta,
                detail={"one_sided": True, "mean_gap": d_mean, "se": d_se,
                        "oracle_gap": oracle_gap, "ess": d_ess},
            ))
    else:
        for k in range(1, max_moment + 1):
            r_k = rising_factorial(two_s, k)
            powers = samples**k
            means, ses, esses = batch_means(powers)
            for i in range(1, n_sites + 1):
                exps = [0] * n_sites
                exps[i - 1] = k
                om = mixing_oracle_moments(law, exps)
                reports.append(_moment_z_report(
                    f"site-{i}-moment-{k}", float(means[i - 1]),
                    float(ses[i - 1]), r_k * om.value, r_k * om.se, n, meta,
                    threshold=z_threshold, ess=float(esses[i - 1]),
                    oracle_method=om.method,
                ))
    return reports


def reservoir_variant_equivalence(
    n_sites: int,
    two_s: float,
    theta_left: float,
    theta_right: float,
    *,
    epsilon: float,
    n_samples: int = 20_000,
    burn_in: float | None = None,
    thin: float | None = None,
    stream: RngStream,
    backend: str | None = None,
    z_threshold: float = Z_THRESHOLD,
    moments: Sequence[int] = (1, 2),
) -> list[ComparisonReport]:
    """Two-sample z-tests between the two mass-input reservoir mechanisms.

    Runs the continuous harmonic chain once with density-form reservoirs
    and once with the resampling form, then compares stationary site
    moments pairwise; both mechanisms share the same hidden-parameter
    construction, hence the same steady state.
    """
    results = {}
    for idx, kind in enumerate((ReservoirKind.STANDARD, ReservoirKind.SAMPLED)):
        graph, spec = chain_models(Family.HARMONIC_CONTINUOUS, n_sites, two_s,
                                   theta_left, theta_right, reservoir_kind=kind)
        thin_k = thin if thin is not None \
            else default_event_thinning(graph, spec, epsilon)
        burn_k = burn_in if burn_in is not None else 40.0 * thin_k
        profile = np.array([
            two_s * OrderedDirichlet(n_sites, two_s, theta_left, theta_right).mean(i)
            for i in range(1, n_sites + 1)
        ])
        sub = stream.child(idx) if isinstance(stream, RngStream) else stream
        samples, info = engine.stationary_samples(
            graph, spec, profile, burn_k, n_samples, thin_k, sub,
            epsilon=epsilon, backend=backend,
        )
        results[kind] = (samples, info, thin_k, burn_k)

    std_samples, std_info, thin_a, burn_a = results[ReservoirKind.STANDARD]
    smp_samples, smp_info, _, _ = results[ReservoirKind.SAMPLED]
    meta = _metadata(epsilon=epsilon, burn_in=burn_a, thin=thin_a,
                     n_events_standard=std_info["n_events"],
                     n_events_sampled=smp_info["n_events"],
                     family=Family.HARMONIC_CONTINUOUS.value)
    reports = []
    n = std_samples.shape[0]
    for k in moments:
        m_a, se_a, ess_a = batch_means(std_samples**k)
        m_b, se_b, ess_b = batch_means(smp_samples**k)
        for i in range(1, n_sites + 1):
            se = math.hypot(float(se_a[i - 1]), float(se_b[i - 1]))
            z = _safe_z(float(m_a[i - 1] - m_b[i - 1]), se)
            reports.append(ComparisonReport(
                name=f"site-{i}-moment-{k}-variants", kind="moment-z",
                statistic=z, threshold=z_threshold, n_samples=n, metadata=meta,
                detail={"standard": float(m_a[i - 1]), "sampled": float(m_b[i - 1]),
                        "se": se, "ess": min(float(ess_a[i - 1]),
                                             float(ess_b[i - 1]))},
            ))
    return reports


# --- particle families with birth/death boundaries -------------------------------------


def _rate_reservoir_map(spec: ModelSpec) -> dict[Any, tuple[ReservoirSpec, ...]]:
    res_map = spec.reservoir_map
    for v, entries in res_map.items():
        for r in entries:
            if r.alpha is None:
                raise ReservoirMismatchError(
                    f"vertex {v!r} needs birth/death (alpha, gamma) rates"
                )
    return res_map


def _coupling_array(graph: Graph) -> np.ndarray:
    coup = np.zeros(graph.n)
    for v, c in graph.couplings:
        coup[graph.index[v]] = c
    return coup


def _linear_mean_profile(graph: Graph, spec: ModelSpec, two_s: float) -> np.ndarray:
    """Stationary site means of the linear families (exchange + birth/death).

    Means solve (two_s L + diag(c (gamma - alpha))) m = two_s c alpha with L
    the weighted graph Laplacian; for independent walkers two_s = 1 and the
    alpha term in the death rate is absent, matching the flow fixed point.
    """
    ei, ej, w = graph.edge_arrays()
    lap = np.zeros((graph.n, graph.n))
    for k in range(len(w)):
        i, j = int(ei[k]), int(ej[k])
        lap[i, i] += w[k]
        lap[j, j] += w[k]
        lap[i, j] -= w[k]
        lap[j, i] -= w[k]
    coup = _coupling_array(graph)
    alpha = np.zeros(graph.n)
    gamma = np.zeros(graph.n)
    for v, entries in spec.reservoir_map.items():
        alpha[graph.index[v]] = sum(r.alpha for r in entries)
        gamma[graph.index[v]] = sum(r.gamma for r in entries)
    mat = two_s * lap + np.diag(coup * (gamma - alpha))
    rhs = two_s * coup * alpha
    return np.linalg.solve(mat, rhs)


def _sip_event_rate(graph: Graph, spec: ModelSpec, mean: np.ndarray) -> float:
    """Approximate stationary event rate, for thinning heuristics only."""
    ei, ej, w = graph.edge_arrays()
    two_s = spec.two_s
    total = 0.0
    for k in range(len(w)):
        i, j = int(ei[k]), int(ej[k])
        total += w[k] * (mean[i] * (two_s + mean[j]) + mean[j] * (two_s + mean[i]))
    coup = _coupling_array(graph)
    for v, entries in spec.reservoir_map.items():
        i = graph.index[v]
        for r in entries:
            total += coup[i] * (r.alpha * (two_s + mean[i]) + r.gamma * mean[i])
    return total


def sip_poisson_mixture_experiment(
    graph: Graph,
    two_s: float,
    reservoirs: Mapping[Any, Any],
    *,
    n_samples: int = 50_000,
    dt: float = 1e-3,
    burn_in: float | None = None,
    thin: float | None = None,
    em_replicas: int = 64,
    em_batches: int = 16,
    em_thin_steps: int | None = None,
    stream: RngStream,
    backend: str | None = None,
    z_threshold: float = Z_THRESHOLD,
    tv_threshold: float = TV_THRESHOLD,
    bep_mean_rtol: float = 0.02,
) -> list[ComparisonReport]:
    """Factorial-moment bridge between inclusion particles and their diffusion.

    The particle steady state is a Poisson mixture over the diffusion
    steady state, so the k-th factorial moment of the counts at a site
    must equal the k-th raw moment of the diffusion mass there (k <= 3).
    On a single site the counts law is also checked in total variation
    against the discrete Gamma with theta = alpha / (gamma - alpha), and
    the diffusion mean against two_s * alpha / (gamma - alpha).
    """
    sip_spec = validate_model(graph, ModelSpec(family=Family.SIP, two_s=two_s,
                                               reservoirs=reservoirs))
    bep_spec = validate_model(graph, ModelSpec(family=Family.BEP, two_s=two_s,
                                               reservoirs=reservoirs))
    res_map = _rate_reservoir_map(sip_spec)
    relax = []
    for v, entries in res_map.items():
        for r in entries:
            if not r.alpha < r.gamma:
                raise OutOfRangeError(
                    f"vertex {v!r} needs alpha < gamma for a finite steady state"
                )
            relax.append(r.gamma - r.alpha)
    mean_profile = _linear_mean_profile(graph, sip_spec, two_s)

    if thin is None:
        thin = 5.0 * graph.n / _sip_event_rate(graph, sip_spec, mean_profile)
    if burn_in is None:
        burn_in = 30.0 / min(relax)

    counts, info = engine.stationary_samples(
        graph, sip_spec, np.zeros(graph.n), burn_in, n_samples, thin,
        stream.child(0) if isinstance(stream, RngStream) else stream,
        backend=backend,
    )
    n = counts.shape[0]

    # Matching diffusion moments from replicated stepping, batched in time so
    # the spread across segments yields an honest standard error.
    if em_thin_steps is None:
        em_thin_steps = max(1, int(round(0.05 / dt)))
    burn_steps = int(round(burn_in / dt))
    per_seg = max(1, -(-n_samples // (em_replicas * em_batches)))
    seg_steps = per_seg * em_thin_steps
    batch = np.tile(mean_profile, (em_replicas, 1))
    em_stream = stream.child(1) if isinstance(stream, RngStream) else stream
    seg_means = np.zeros((em_batches, 3, graph.n))
    clamp_total = 0
    n_bep = 0
    for b in range(em_batches):
        # each segment must consume fresh randomness, not replay the stream
        seg_stream = em_stream.child(b) if isinstance(em_stream, RngStream) \
            else em_stream
        sums, m, clamps, batch = engine.em_moment_sums(
            graph, bep_spec, batch, dt, burn_steps if b == 0 else 0,
            seg_steps, em_thin_steps, seg_stream, backend=backend,
        )
        seg_means[b] = sums / m
        clamp_total += clamps
        n_bep += m
    bep_mean = seg_means.mean(axis=0)
    bep_se = seg_means.std(axis=0, ddof=1) / math.sqrt(em_batches)

    meta = _metadata(dt=dt, burn_in=burn_in, thin=thin,
                     n_events=info["n_events"], two_s=two_s,
                     em_replicas=em_replicas, clamped_steps=clamp_total)
    reports: list[ComparisonReport] = []
    for k in (1, 2, 3):
        fact = counts.astype(float)
        for j in range(1, k):
            fact = fact * (counts - j)
        f_mean, f_se, f_ess = batch_means(fact if k > 1 else counts.astype(float))
        for i in range(1, graph.n + 1):
            se = math.hypot(float(f_se[i - 1]), float(bep_se[k - 1, i - 1]))
            z = _safe_z(float(f_mean[i - 1] - bep_mean[k - 1, i - 1]), se)
            reports.append(ComparisonReport(
                name=f"site-{i}-bridge-k{k}", kind="moment-z", statistic=z,
                threshold=z_threshold, n_samples=n, metadata=meta,
                detail={"factorial_moment": float(f_mean[i - 1]),
                        "diffusion_moment": float(bep_mean[k - 1, i - 1]),
                        "se": se, "ess": float(f_ess[i - 1]),
                        "n_diffusion_samples": n_bep},
            ))

    single_entries = list(res_map.items())
    if graph.n == 1 and len(single_entries) == 1 \
            and len(single_entries[0][1]) == 1:
        r = single_entries[0][1][0]
        theta = r.alpha / (r.gamma - r.alpha)
        oracle = StationaryOracle.discrete_gamma(two_s, theta)
        reports.append(tv_report(counts[:, 0], oracle, name="single-site-pmf-tv",
                                 metadata=meta, threshold=tv_threshold))
        target = two_s * theta
        rel = abs(float(bep_mean[0, 0]) / target - 1.0) if target > 0 \
            else abs(float(bep_mean[0, 0]))
        reports.append(ComparisonReport(
            name="bep-mean-relative", kind="moment-z", statistic=rel,
            threshold=bep_mean_rtol, n_samples=n_bep, metadata=meta,
            detail={"error_scale": "relative", "empirical": float(bep_mean[0, 0]),
                    "oracle": target, "se": float(bep_se[0, 0])},
        ))
    return reports


def irw_poisson_product_experiment(
    graph: Graph,
    reservoirs: Mapping[Any, Any],
    *,
    n_samples: int = 50_000,
    burn_in: float | None = None,
    thin: float | None = None,
    stream: RngStream | np.random.Generator,
    backend: str | None = None,
    z_threshold: float = Z_THRESHOLD,
    dispersion_band: float = DISPERSION_BAND,
) -> list[ComparisonReport]:
    """Check driven independent walkers against their Poisson product law.

    The steady state is a product of Poisson laws with means given by the
    deterministic flow fixed point: per site the mean is z-tested against
    that fixed point and the index of dispersion must sit in
    1 +/- ``dispersion_band``; all site pairs must be uncorrelated at the
    z threshold.
    """
    spec = validate_model(graph, ModelSpec(family=Family.IRW,
                                           reservoirs=reservoirs))
    _rate_reservoir_map(spec)
    z_star = engine.irw_fixed_point(graph, spec)

    ei, ej, w = graph.edge_arrays()
    event_rate = sum(w[k] * (z_star[int(ei[k])] + z_star[int(ej[k])])
                     for k in range(len(w)))
    coup = _coupling_array(graph)
    for v, entries in spec.reservoir_map.items():
        i = graph.index[v]
        for r in entries:
            event_rate += coup[i] * (r.alpha + r.gamma * z_star[i])
    if thin is None:
        thin = 5.0 * graph.n / event_rate
    if burn_in is None:
        lap_mat = np.zeros((graph.n, graph.n))
        for k in range(len(w)):
            i, j = int(ei[k]), int(ej[k])
            lap_mat[i, i] += w[k]
            lap_mat[j, j] += w[k]
            lap_mat[i, j] -= w[k]
            lap_mat[j, i] -= w[k]
        gamma_diag = np.zeros(graph.n)
        for v, entries in spec.reservoir_map.items():
            gamma_diag[graph.index[v]] = coup[graph.index[v]] * sum(
                r.gamma for r in entries)
        slowest = float(np.linalg.eigvalsh(lap_mat + np.diag(gamma_diag))[0])
        burn_in = 20.0 / max(slowest, 1e-12)

    samples, info = engine.stationary_samples(
        graph, spec, np.rint(z_star), burn_in, n_samples, thin, stream,
        backend=backend,
    )
    n = samples.shape[0]
    meta = _metadata(burn_in=burn_in, thin=thin, n_events=info["n_events"],
                     family=Family.IRW.value)
    reports: list[ComparisonReport] = []
    means, ses, esses = batch_means(samples)
    for i in range(1, graph.n + 1):
        reports.append(_moment_z_report(
            f"site-{i}-mean", float(means[i - 1]), float(ses[i - 1]),
            float(z_star[i - 1]), 0.0, n, meta, threshold=z_threshold,
            ess=float(esses[i - 1]),
        ))
    variances = samples.var(axis=0, ddof=1)
    for i in range(1, graph.n + 1):
        disp = float(variances[i - 1] / means[i - 1]) if means[i - 1] > 0 \
            else math.inf
        reports.append(ComparisonReport(
            name=f"site-{i}-dispersion", kind="chi-square",
            statistic=abs(disp - 1.0), threshold=dispersion_band,
            n_samples=n, metadata=meta,
            detail={"dispersion": disp, "mean": float(means[i - 1]),
                    "variance": float(variances[i - 1]),
                    "ess": float(esses[i - 1])},
        ))
    centered = samples - means
    for i in range(1, graph.n + 1):
        for j in range(i + 1, graph.n + 1):
            prod = centered[:, i - 1] * centered[:, j - 1]
            c_mean, c_se, c_ess = batch_means(prod)
            reports.append(_moment_z_report(
                f"cross-cov-{i}-{j}", c_mean, c_se, 0.0, 0.0, n, meta,
                threshold=z_threshold, ess=c_ess,
            ))
    return reports


# --- convergence sweeps ----------------------------------------------------------------


def _sweep_hidden_single(eps, stream, *, two_s=1.0, theta_left=0.0,
                         theta_right=1.0, n_samples=20_000, thin, burn_in,
                         backend=None):
    graph, spec = chain_models(Family.HIDDEN_HARMONIC, 1, two_s,
                               theta_left, theta_right)
    init = np.array([(theta_left + theta_right) / 2.0])
    samples, info = engine.stationary_samples(
        graph, spec, init, burn_in, n_samples, thin, stream,
        epsilon=eps, backend=backend,
    )
    x = samples[:, 0]
    mean, se, _ = batch_means(x)
    m2_mean, m2_se, _ = batch_means(x * x)
    oracle = StationaryOracle.beta_rescaled(two_s, theta_left, theta_right)
    ks = float(sp_stats.kstest(x, lambda q: oracle.cdf(q)).statistic)
    stats = {"site-1-mean": (mean, se), "site-1-moment-2": (m2_mean, m2_se)}
    return stats, {"ks": ks, "n_events": info["n_events"], "n_sites": 1}


def _sweep_hidden_chain(eps, stream, *, n_sites=3, two_s=1.0, theta_left=0.0,
                        theta_right=1.0, n_samples=20_000, thin, burn_in,
                        backend=None):
    graph, spec = chain_models(Family.HIDDEN_HARMONIC, n_sites, two_s,
                               theta_left, theta_right)
    law = OrderedDirichlet(n_sites, two_s, theta_left, theta_right)
    init = np.array([law.mean(i) for i in range(1, n_sites + 1)])
    samples, info = engine.stationary_samples(
        graph, spec, init, burn_in, n_samples, thin, stream,
        epsilon=eps, backend=backend,
    )
    means, ses, _ = batch_means(samples)
    stats = {f"site-{i}-mean": (float(means[i - 1]), float(ses[i - 1]))
             for i in range(1, n_sites + 1)}
    return stats, {"n_events": info["n_events"], "n_sites": n_sites}


def _sweep_particle_chain(eps, stream, *, n_sites=2, two_s=1.0, theta_left=0.0,
                          theta_right=1.0, n_samples=20_000, thin, burn_in,
                          backend=None):
    graph, spec = chain_models(Family.HARMONIC_CONTINUOUS, n_sites, two_s,
                               theta_left, theta_right)
    law = OrderedDirichlet(n_sites, two_s, theta_left, theta_right)
    init = two_s * np.array([law.mean(i) for i in range(1, n_sites + 1)])
    samples, info = engine.stationary_samples(
        graph, spec, init, burn_in, n_samples, thin, stream,
        epsilon=eps, backend=backend,
    )
    stats = {}
    for k in (1, 2):
        means, ses, _ = batch_means(samples**k)
        for i in range(1, n_sites + 1):
            stats[f"site-{i}-moment-{k}"] = (float(means[i - 1]),
                                             float(ses[i - 1]))
    return stats, {"n_events": info["n_events"], "n_sites": n_sites}


SWEEP_TARGETS: dict[str, Callable[..., tuple[dict, dict]]] = {
    "hidden-single-site": _sweep_hidden_single,
    "hidden-chain": _sweep_hidden_chain,
    "particle-chain": _sweep_particle_chain,
}


def epsilon_convergence_sweep(
    experiment: str,
    epsilons: Sequence[float],
    *,
    stream: RngStream,
    rel_tol: float = 0.01,
    z_tol: float = 1.0,
    backend: str | None = None,
    **params: Any,
) -> list[ComparisonReport]:
    """Drift of steady-state statistics between consecutive truncation levels.

    The sampling window (thin, burn-in) is fixed from the finest epsilon so
    that every level sees the same observation schedule.  A drift report
    passes when the statistic moved by less than ``rel_tol`` relatively or
    by less than ``z_tol`` combined standard errors; levels whose event
    budget collapses (vanishing jump rate) are flagged UNSTABLE and fail.
    """
    if experiment not in SWEEP_TARGETS:
        raise ConfigError(
            f"unknown sweep target {experiment!r}; options: {sorted(SWEEP_TARGETS)}"
        )
    eps_values = [float(e) for e in epsilons]
    if len(eps_values) < 2:
        raise OutOfRangeError("a sweep needs at least two epsilon values")
    runner = SWEEP_TARGETS[experiment]

    run_params = dict(params)
    n_sites = int(run_params.get("n_sites", 1 if "single" in experiment else
                                 (3 if experiment == "hidden-chain" else 2)))
    two_s = float(run_params.get("two_s", 1.0))
    theta_left = float(run_params.get("theta_left", 0.0))
    theta_right = float(run_params.get("theta_right", 1.0))
    n_samples = int(run_params.get("n_samples", 20_000))
    eps_ref = min(eps_values)
    family = Family.HIDDEN_HARMONIC if "hidden" in experiment \
        else Family.HARMONIC_CONTINUOUS
    graph_ref, spec_ref = chain_models(family, n_sites, two_s,
                                       theta_left, theta_right)
    thin = float(run_params.pop("thin", None)
                 or default_event_thinning(graph_ref, spec_ref, eps_ref))
    burn_in = float(run_params.pop("burn_in", None) or 40.0 * thin)
    target_events = 5.0 * n_sites * n_samples

    levels: list[dict[str, Any]] = []
    for idx, eps in enumerate(eps_values):
        stats, info = runner(eps, stream.child(idx), thin=thin, burn_in=burn_in,
                             backend=backend, **run_params)
        unstable = info["n_events"] < 0.02 * target_events
        levels.append({"eps": eps, "stats": stats, "info": info,
                       "unstable": unstable})

    reports: list[ComparisonReport] = []
    for prev, cur in zip(levels, levels[1:]):
        meta = _metadata(epsilon=cur["eps"], epsilon_prev=prev["eps"],
                         burn_in=burn_in, thin=thin, experiment=experiment)
        for label, (v_cur, se_cur) in cur["stats"].items():
            v_prev, se_prev = prev["stats"][label]
            delta = abs(v_cur - v_prev)
            rel = delta / max(abs(v_prev), 1e-12)
            z = _safe_z(delta, math.hypot(se_prev, se_cur))
            statistic = min(rel / rel_tol, z / z_tol)
            detail: dict[str, Any] = {
                "rel_change": rel, "z": z, "value_prev": v_prev,
                "value": v_cur, "se_prev": se_prev, "se": se_cur,
            }
            if prev["unstable"] or cur["unstable"]:
                statistic = math.inf
                detail["status"] = "UNSTABLE"
                detail["n_events"] = [prev["info"]["n_events"],
                                      cur["info"]["n_events"]]
            if "ks" in cur["info"]:
                detail["ks"] = [prev["info"]["ks"], cur["info"]["ks"]]
            reports.append(ComparisonReport(
                name=f"drift-{label}-eps-{prev['eps']:g}-to-{cur['eps']:g}",
                kind="moment-z", statistic=statistic, threshold=1.0,
                n_samples=n_samples, metadata=meta, detail=detail,
            ))
    return reports


def dt_convergence_check(
    two_s: float,
    alpha: float,
    gamma: float,
    dts: Sequence[float],
    *,
    stream: RngStream,
    t_burn: float = 20.0,
    t_sample: float = 400.0,
    em_replicas: int = 512,
    em_thin_time: float = 0.05,
    rel_tol: float = 0.01,
    backend: str | None = None,
) -> list[ComparisonReport]:
    """Drift of the single-site diffusion stationary mean under dt refinement.

    The defaults put roughly 2 * 10^5 replica-time-units behind each level,
    bringing the Monte Carlo error of a level mean near 0.3% so the
    ``rel_tol`` = 1% gate reflects discretization drift rather than noise.
    """
    if not alpha < gamma:
        raise OutOfRangeError("needs alpha < gamma for a finite steady state")
    dt_values = [float(dt) for dt in dts]
    if len(dt_values) < 2:
        raise OutOfRangeError("a dt check needs at least two step sizes")
    graph = chain_graph(1)
    reservoirs = {1: ReservoirSpec(alpha=alpha, gamma=gamma)}
    spec = ModelSpec(family=Family.BEP, two_s=two_s, reservoirs=reservoirs)
    target = two_s * alpha / (gamma - alpha)

    levels = []
    for idx, dt in enumerate(dt_values):
        thin = max(1, int(round(em_thin_time / dt)))
        batch = np.full((em_replicas, 1), target)
        sums, m, clamps, _ = engine.em_moment_sums(
            graph, spec, batch, dt, int(round(t_burn / dt)),
            int(round(t_sample / dt)), thin, stream.child(idx), backend=backend,
        )
        levels.append({"dt": dt, "mean": float(sums[0, 0] / m), "n": m,
                       "clamps": clamps})
    reports = []
    for prev, cur in zip(levels, levels[1:]):
        rel = abs(cur["mean"] - prev["mean"]) / max(abs(prev["mean"]), 1e-12)
        meta = _metadata(dt=cur["dt"], dt_prev=prev["dt"], burn_in=t_burn)
        reports.append(ComparisonReport(
            name=f"drift-bep-mean-dt-{prev['dt']:g}-to-{cur['dt']:g}",
            kind="moment-z", statistic=rel, threshold=rel_tol,
            n_samples=cur["n"], metadata=meta,
            detail={"value_prev": prev["mean"], "value": cur["mean"],
                    "oracle": target, "error_scale": "relative"},
        ))
    return reports


# --- JSON experiment dispatch ------------------------------------------------------------


def _require(cfg: Mapping[str, Any], key: str) -> Any:
    if key not in cfg:
        raise ConfigError(f"experiment config needs {key!r}")
    return cfg[key]


def _chain_rate_model(cfg: Mapping[str, Any]) -> tuple[Graph, dict[Any, Any]]:
    """Graph plus birth/death reservoirs from a config block.

    Accepts either a full ``model`` object (vertices/edges/couplings and
    reservoirs) or chain shorthand: ``n_sites`` with scalar ``alpha`` /
    ``gamma`` applied to both ends (per-end overrides via ``alpha_left``
    etc.).
    """
    if "model" in cfg:
        graph, spec = model_from_json(cfg["model"])
        return graph, dict(spec.reservoir_map)
    n_sites = int(cfg.get("n_sites", 1))
    alpha = cfg.get("alpha")
    gamma = cfg.get("gamma")
    a_l = float(cfg.get("alpha_left", alpha if alpha is not None else 1.0))
    g_l = float(cfg.get("gamma_left", gamma if gamma is not None else 2.0))
    a_r = float(cfg.get("alpha_right", a_l))
    g_r = float(cfg.get("gamma_right", g_l))
    graph = chain_graph(n_sites)
    if n_sites == 1:
        reservoirs: dict[Any, Any] = {1: ReservoirSpec(alpha=a_l, gamma=g_l)}
    else:
        reservoirs = {1: ReservoirSpec(alpha=a_l, gamma=g_l),
                      n_sites: ReservoirSpec(alpha=a_r, gamma=g_r)}
    return graph, reservoirs


def run_experiment(
    config: Mapping[str, Any],
    stream: RngStream | None = None,
    *,
    backend: str | None = None,
) -> dict[str, Any]:
    """Dispatch a JSON experiment config to the matching experiment.

    Returns ``{"experiment", "reports", "n_reports", "all_passed"}`` with
    reports already JSON-shaped.  Config errors raise :class:`ConfigError`.
    """
    if not isinstance(config, Mapping):
        raise ConfigError("experiment config must be a JSON object")
    name = _require(config, "experiment")
    if stream is None:
        stream = RngStream(int(config.get("seed", 0)))

    common = dict(
        n_samples=int(config["n_samples"]) if "n_samples" in config else None,
        burn_in=float(config["burn_in"]) if "burn_in" in config else None,
        thin=float(config["thin"]) if "thin" in config else None,
    )
    common = {k: v for k, v in common.items() if v is not None}
    try:
        if name == "ness-chain":
            reports = ness_chain_experiment(
                Family(_require(config, "family")),
                int(_require(config, "n_sites")),
                float(config.get("two_s", 1.0)),
                float(config.get("theta_left", 0.0)),
                float(config.get("theta_right", 1.0)),
                epsilon=float(_require(config, "epsilon")),
                stream=stream, backend=backend, **common,
            )
        elif name == "hidden-single-site":
            reports = [hidden_single_site_experiment(
                float(config.get("two_s", 1.0)),
                float(config.get("theta_left", 0.0)),
                float(config.get("theta_right", 1.0)),
                epsilon=float(_require(config, "epsilon")),
                stream=stream, backend=backend, **common,
            )]
        elif name == "reservoir-variants":
            reports = reservoir_variant_equivalence(
                int(_require(config, "n_sites")),
                float(config.get("two_s", 1.0)),
                float(config.get("theta_left", 0.0)),
                float(config.get("theta_right", 1.0)),
                epsilon=float(_require(config, "epsilon")),
                stream=stream, backend=backend, **common,
            )
        elif name == "equilibrium-degeneracy":
            reports = [hidden_equilibrium_degeneracy_check(
                int(config.get("n_sites", 3)),
                float(config.get("two_s", 1.0)),
                float(config.get("theta_star", 1.0)),
                family=Family(config.get("family", Family.HIDDEN_KMP.value)),
                stream=stream, backend=backend,
                **({"epsilon": float(config["epsilon"])}
                   if "epsilon" in config else {}),
                **common,
            )]
        elif name == "sip-bep-mixture":
            graph, reservoirs = _chain_rate_model(config)
            kwargs = dict(common)
            if "dt" in config:
                kwargs["dt"] = float(config["dt"])
            reports = sip_poisson_mixture_experiment(
                graph, float(config.get("two_s", 1.0)), reservoirs,
                stream=stream, backend=backend, **kwargs,
            )
        elif name == "irw-poisson":
            graph, reservoirs = _chain_rate_model(config)
            reports = irw_poisson_product_experiment(
                graph, reservoirs, stream=stream, backend=backend, **common,
            )
        elif name == "epsilon-sweep":
            params = dict(config.get("params", {}))
            params.update(common)
            reports = epsilon_convergence_sweep(
                str(_require(config, "target")),
                [float(e) for e in _require(config, "epsilons")],
                stream=stream, backend=backend, **params,
            )
        elif name == "dt-check":
            reports = dt_convergence_check(
                float(config.get("two_s", 1.0)),
                float(config.get("alpha", 1.0)),
                float(config.get("gamma", 2.0)),
                [float(d) for d in _require(config, "dts")],
                stream=stream, backend=backend,
            )
        else:
            raise ConfigError(f"unknown experiment {name!r}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad experiment config: {exc}") from exc

    return {
        "experiment": name,
        "reports": [r.to_json() for r in reports],
        "n_reports": len(reports),
        "all_passed": all(r.passed for r in reports),
    }
