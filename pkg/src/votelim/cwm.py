"""Multi-group mean-field (Curie-Weiss) voting model.

The model exists in two equivalent forms: the Gibbs measure on spin
configurations with quadratic interaction energy, and a mixture of
conditional product measures whose mixing density is exp(-n * F) for the
free-energy surface F built from the inverse coupling matrix.  Both forms
are implemented here, each computable independently, so they can serve as
mutual oracles.  A tanh change of variables gives a third, compactly
supported form on (-1, 1)^M used for concentration-of-measure profiles.

Samplers and quadrature boxes are validated in the high-temperature
regime only (identity minus coupling positive definite), where the
free energy is convex with its unique minimum at the origin.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, QuadratureError, ResourceError
from .measures import TANH
from .models import (
    GroupStructure,
    MarginPmf,
    MarginSample,
    _guard_lattice,
    _pmf_from_nodes,
    binomial_margins,
    block_rng,
    _block_sizes,
)
from .quadrature import refine_until_stable, tensor_rule

GIBBS_MAX_N = 20
REPRESENTATION_MAX_N = 16

#: Metropolis settings for the latent-bias chain in dimension >= 2.  The
#: chain count is fixed so output does not depend on the worker count.
N_CHAINS = 8
BURN_IN = 10_000
THINNING = 10

#: minimum acceptable acceptance rate of the rejection envelope
MIN_ENVELOPE_ACCEPTANCE = 0.01


class CouplingSpec:
    """Symmetric positive semi-definite coupling matrix J (optionally a scalar beta)."""

    def __init__(self, j):
        j = np.asarray(j, dtype=float)
        if j.ndim == 0:
            j = j.reshape(1, 1)
        if j.ndim != 2 or j.shape[0] != j.shape[1]:
            raise ConfigError("coupling must be a square matrix")
        if not np.allclose(j, j.T, atol=1e-12):
            raise ConfigError("coupling matrix must be symmetric")
        eigvals = np.linalg.eigvalsh(j)
        if eigvals.min() < -1e-12 * max(1.0, abs(eigvals).max()):
            raise ConfigError("coupling matrix must be positive semi-definite")
        self.j = j
        self.j.flags.writeable = False
        self.m = j.shape[0]
        self._eigvals = eigvals

    @classmethod
    def single_group(cls, beta: float) -> "CouplingSpec":
        if beta < 0:
            raise ConfigError("inverse temperature beta must be nonnegative")
        return cls([[float(beta)]])

    @property
    def beta(self) -> float:
        if self.m != 1:
            raise ConfigError("beta shortcut only defined for a single group")
        return float(self.j[0, 0])

    @property
    def is_positive_definite(self) -> bool:
        return bool(self._eigvals.min() > 1e-12)

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.j == 0.0))

    @property
    def is_high_temperature(self) -> bool:
        """True when I - J is (strictly) positive definite."""
        return bool(np.linalg.eigvalsh(np.eye(self.m) - self.j).min() > 0.0)

    def _key(self):
        return ("coupling", tuple(map(tuple, self.j)))


def _log_cosh(x: np.ndarray) -> np.ndarray:
    # |x| + log1p(e^{-2|x|}) - log 2, stable for large |x|
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)


def single_group_free_energy(beta: float, m) -> np.ndarray:
    """Free energy in the compact variable for one group:
    F(m) = ((1/beta) * artanh(m)^2 + ln(1 - m^2)) / 2 on (-1, 1)."""
    if beta <= 0:
        raise ConfigError("the free energy needs beta > 0")
    m = np.asarray(m, dtype=float)
    return 0.5 * (np.arctanh(m) ** 2 / beta + np.log1p(-(m**2)))


class FreeEnergySurface:
    """The latent-bias free energy x -> x' Q x / 2 - sum_g alpha_g ln cosh x_g.

    Q = sqrt(alpha) J^{-1} sqrt(alpha) with alpha_g = n_g / n, the only
    convention under which the mixing density exp(-n F) reproduces the
    Gibbs measure.  F(0) = 0, F is even, and in the high-temperature
    regime it is convex with the origin as unique global minimizer, which
    yields the Gaussian tail bound behind the integration box.
    """

    def __init__(self, spec: CouplingSpec, groups: GroupStructure, n: int):
        if not spec.is_positive_definite:
            raise ConfigError("the mixing density needs a positive definite coupling")
        if spec.m != groups.m:
            raise ConfigError("coupling size does not match the group count")
        self.spec = spec
        self.n = n
        self.sizes = groups.sizes(n)
        self.m = groups.m
        self.alpha = np.asarray(self.sizes, dtype=float) / n
        root_alpha = np.sqrt(self.alpha)
        self.q_matrix = root_alpha[:, None] * np.linalg.inv(spec.j) * root_alpha[None, :]
        self._precision0 = n * (self.q_matrix - np.diag(self.alpha))
        self._normalizer = None

    def value(self, x) -> np.ndarray:
        """F evaluated on one point (M,) or a batch (K, M)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = x[None, :] if single else x
        quad = 0.5 * np.einsum("ki,ij,kj->k", pts, self.q_matrix, pts)
        val = quad - _log_cosh(pts) @ self.alpha
        return float(val[0]) if single else val

    def density(self, x) -> np.ndarray:
        """Unnormalized mixing density exp(-n F(x))."""
        return np.exp(-self.n * np.asarray(self.value(x)))

    def curvature_sigmas(self) -> np.ndarray:
        """Marginal standard deviations of the Gaussian matching F's quadratic part."""
        eigvals = np.linalg.eigvalsh(self._precision0)
        if eigvals.min() <= 0.0:
            raise ConfigError(
                "the integration box needs the high-temperature regime "
                "(identity minus coupling positive definite)"
            )
        return np.sqrt(np.diag(np.linalg.inv(self._precision0)))

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """Integration box: 10 curvature standard deviations per coordinate.

        F is convex and F(x) >= x' P0 x / (2n) in high temperature, so the
        omitted tail mass is below the matching Gaussian's, under 1e-22.
        """
        half = 10.0 * self.curvature_sigmas()
        return -half, half

    def quad_nodes(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Weighted nodes of the unnormalized density; weights sum to ~Z."""
        lower, upper = self.box()
        points, weights = tensor_rule(lower, upper, level)
        values = self.density(points)
        # the mode sits at the origin with density exactly 1; a grid that
        # never sees it (possible very close to criticality, where the
        # curvature box dwarfs the quartic-dominated peak) must not be
        # allowed to fake convergence on pure tail values
        if values.max() < 0.5:
            raise QuadratureError(
                "integration grid failed to resolve the density peak; "
                "the coupling is too close to criticality for quadrature"
            )
        return points, weights * values

    def normalizer(self) -> float:
        """Z = integral of exp(-n F), cached after the first quadrature."""
        if self._normalizer is None:
            value, _ = refine_until_stable(
                lambda level: np.array([self.quad_nodes(level)[1].sum()]), tol=1e-12
            )
            self._normalizer = float(value[0])
        return self._normalizer


_SURFACE_CACHE: dict = {}


def free_energy_surface(spec: CouplingSpec, groups: GroupStructure, n: int) -> FreeEnergySurface:
    """Shared, cached surface so normalizers are computed once per (spec, groups, n)."""
    key = (spec._key(), groups._key(), int(n))
    surface = _SURFACE_CACHE.get(key)
    if surface is None:
        surface = FreeEnergySurface(spec, groups, n)
        _SURFACE_CACHE[key] = surface
    return surface


def definetti_density(spec: CouplingSpec, groups: GroupStructure, n: int, x) -> float:
    """Unnormalized mixing density exp(-n F(x)) at a single point."""
    surface = free_energy_surface(spec, groups, n)
    return float(surface.density(np.asarray(x, dtype=float)))


# -- Gibbs form -----------------------------------------------------------------

def gibbs_pmf(spec: CouplingSpec, groups: GroupStructure, n: int) -> MarginPmf:
    """Exact margin law of the Gibbs measure by lattice enumeration.

    The margin vector is a sufficient statistic: each margin class carries
    weight exp(k' D J D k / 2) with D = diag(1/sqrt(n_g)), multiplied by
    its configuration count, a product of binomial coefficients.
    """
    if n > GIBBS_MAX_N:
        raise ResourceError(f"Gibbs enumeration guard: n={n} > {GIBBS_MAX_N}")
    sizes = groups.sizes(n)
    if groups.m != spec.m:
        raise ConfigError("coupling size does not match the group count")
    axes_margins = [2.0 * np.arange(s + 1) - s for s in sizes]
    grids = np.meshgrid(*axes_margins, indexing="ij")
    scaled = np.stack([g / math.sqrt(s) for g, s in zip(grids, sizes)], axis=-1)
    energy = 0.5 * np.einsum("...i,ij,...j->...", scaled, spec.j, scaled)
    log_w = energy
    shape = tuple(s + 1 for s in sizes)
    for g, s in enumerate(sizes):
        log_comb = np.array([math.lgamma(s + 1) - math.lgamma(j + 1) - math.lgamma(s - j + 1)
                             for j in range(s + 1)])
        reshape = [1] * len(sizes)
        reshape[g] = s + 1
        log_w = log_w + log_comb.reshape(reshape)
    log_w -= log_w.max()
    probs = np.exp(log_w)
    probs /= probs.sum()
    assert probs.shape == shape
    return MarginPmf(sizes, probs)


# -- mixing-density form ----------------------------------------------------------

def definetti_margin_pmf(
    spec: CouplingSpec, groups: GroupStructure, n: int, tol: float = 1e-12
) -> MarginPmf:
    """Margin law via quadrature of the conditional law against exp(-n F).

    Zero coupling decouples the voters: the mixing measure degenerates to
    the point mass at the origin and the law is a product of fair coins.
    """
    sizes = groups.sizes(n)
    _guard_lattice(sizes)
    if spec.is_zero:
        origin = np.zeros((1, groups.m))
        return MarginPmf(sizes, _pmf_from_nodes(origin, np.array([1.0]), sizes, TANH))
    surface = free_energy_surface(spec, groups, n)

    def at_level(level: int) -> np.ndarray:
        points, weights = surface.quad_nodes(level)
        return _pmf_from_nodes(points, weights / weights.sum(), sizes, TANH)

    probs, _ = refine_until_stable(at_level, tol=tol)
    return MarginPmf(sizes, probs)


def representation_equivalence_check(
    spec: CouplingSpec, groups: GroupStructure, n: int
) -> float:
    """Max abs difference between the Gibbs and mixing-density margin laws.

    The two computations are independent (enumeration vs quadrature); the
    contract is a discrepancy below 1e-8.
    """
    if n > REPRESENTATION_MAX_N:
        raise ResourceError(f"equivalence check guard: n={n} > {REPRESENTATION_MAX_N}")
    return gibbs_pmf(spec, groups, n).max_abs_diff(definetti_margin_pmf(spec, groups, n))


# -- compact (tanh-transformed) form ----------------------------------------------

class CompactMixingDensity:
    """The mixing measure transported to (-1, 1)^M by t = tanh(x).

    Density exp(-n F(artanh t)) * prod 1/(1 - t^2) / Z with the same
    normalizer as the noncompact form; evaluates to 0 at |t_g| = 1.
    """

    def __init__(self, spec: CouplingSpec, groups: GroupStructure, n: int):
        self.surface = free_energy_surface(spec, groups, n)
        self.m = self.surface.m
        self.n = n

    def log_density_unnormalized(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        out = np.full(t.shape[0], -np.inf)
        interior = np.all(np.abs(t) < 1.0, axis=1)
        if np.any(interior):
            ti = t[interior]
            x = np.arctanh(ti)
            log_jac = -np.sum(np.log1p(-(ti**2)), axis=1)
            out[interior] = -self.n * self.surface.value(x) + log_jac
        return out

    def density(self, t) -> np.ndarray:
        """Normalized density; scalar in, scalar out."""
        t = np.asarray(t, dtype=float)
        single = t.ndim <= 1
        pts = np.atleast_2d(t)
        vals = np.exp(self.log_density_unnormalized(pts)) / self.surface.normalizer()
        return float(vals[0]) if single else vals

    def _box_integral(self, lower, upper, level: int) -> float:
        points, weights = tensor_rule(lower, upper, level)
        vals = np.exp(self.log_density_unnormalized(points))
        return float(weights @ vals) / self.surface.normalizer()

    def total_mass(self, tol: float = 1e-12) -> float:
        """Quadrature of the normalized density over the full cube; ~1."""
        return self.mass_in_box(-np.ones(self.m), np.ones(self.m), tol=tol)

    def mass_in_box(self, lower, upper, tol: float = 1e-12) -> float:
        lower = np.clip(np.asarray(lower, dtype=float), -1.0, 1.0)
        upper = np.clip(np.asarray(upper, dtype=float), -1.0, 1.0)
        if np.any(lower >= upper):
            return 0.0
        value, _ = refine_until_stable(
            lambda level: np.array([self._box_integral(lower, upper, level)]), tol=tol
        )
        return float(value[0])

    def mass_outside_symmetric_box(self, delta: float, rtol: float = 1e-9) -> float:
        """Mass of (-1,1)^M minus [-delta, delta]^M, integrated directly.

        The complement is partitioned into 2M disjoint slabs (first
        coordinate exceeding delta decides the slab), so small tails are
        computed without catastrophic cancellation.
        """
        if delta >= 1.0:
            return 0.0
        total = 0.0
        for g in range(self.m):
            for side in (-1.0, 1.0):
                lower = np.empty(self.m)
                upper = np.empty(self.m)
                lower[:g], upper[:g] = -delta, delta
                lower[g + 1 :], upper[g + 1 :] = -1.0, 1.0
                if side > 0:
                    lower[g], upper[g] = delta, 1.0
                else:
                    lower[g], upper[g] = -1.0, -delta
                total += self._refine_relative(lower, upper, rtol=rtol)
        return total

    def _refine_relative(self, lower, upper, start=64, cap=4096, rtol=1e-9) -> float:
        prev = self._box_integral(lower, upper, start)
        level = 2 * start
        while level <= cap:
            cur = self._box_integral(lower, upper, level)
            if abs(cur - prev) <= max(1e-300, rtol * abs(cur)):
                return cur
            prev = cur
            level *= 2
        raise QuadratureError(
            f"tail integral over [{lower}, {upper}] did not stabilize "
            f"(last change {abs(cur - prev):g})"
        )


def compact_representation(
    spec: CouplingSpec, groups: GroupStructure, n: int
) -> CompactMixingDensity:
    """The tanh-transformed mixing density on (-1, 1)^M."""
    return CompactMixingDensity(spec, groups, n)


@dataclass(frozen=True)
class ConcentrationPoint:
    n: int
    tail_mass: float
    underflow: bool


def concentration_profile(
    spec: CouplingSpec, groups: GroupStructure, n_grid, delta: float
) -> list[ConcentrationPoint]:
    """Mixing-measure mass outside [-delta, delta]^M along an n grid.

    In high temperature the tail decays exponentially in n, so the log
    tail mass should fall on a near-straight line.  Tail masses that
    underflow double precision are reported as 0 with a flag.
    """
    if delta <= 0:
        raise ConfigError("delta must be positive")
    if not spec.is_high_temperature:
        raise ConfigError("concentration profiles are defined in high temperature only")
    out = []
    for n in n_grid:
        if delta >= 1.0:
            out.append(ConcentrationPoint(int(n), 0.0, False))
            continue
        tail = compact_representation(spec, groups, int(n)).mass_outside_symmetric_box(delta)
        out.append(ConcentrationPoint(int(n), tail, tail == 0.0))
    return out


# -- sampling ----------------------------------------------------------------------

def sample_cwm_margins(
    spec: CouplingSpec,
    groups: GroupStructure,
    n: int,
    count: int,
    seed: int,
    workers: int = 1,
) -> MarginSample:
    """Two-stage seeded sampler for the mean-field model.

    Latent biases come from exp(-n F): for one group by rejection against
    the Gaussian envelope matching F's quadratic lower bound (the ratio
    exp(n(ln cosh x - x^2/2)) never exceeds 1), for several groups by
    random-walk Metropolis chains with fixed burn-in and thinning.  Vote
    margins are then binomial given tanh of the bias.  Only validated in
    the high-temperature regime.
    """
    if count < 1:
        raise ConfigError("sample count must be at least 1")
    if not spec.is_high_temperature:
        raise ConfigError("the sampler is validated in the high-temperature regime only")
    sizes = np.asarray(groups.sizes(n), dtype=np.int64)

    if spec.is_zero:
        parts = [
            _fair_coin_block(block_rng(seed, j), sizes, c)
            for j, c in enumerate(_block_sizes(count))
        ]
        raw = np.vstack(parts)
    elif spec.m == 1:
        surface = free_energy_surface(spec, groups, n)
        jobs = list(enumerate(_block_sizes(count)))

        def draw(args):
            j, c = args
            return _rejection_block(block_rng(seed, j), surface, sizes, c)

        raw = np.vstack(_run_jobs(draw, jobs, workers))
    else:
        surface = free_energy_surface(spec, groups, n)
        needs = [count // N_CHAINS + (1 if c < count % N_CHAINS else 0) for c in range(N_CHAINS)]
        jobs = [(c, need) for c, need in enumerate(needs) if need > 0]

        def draw(args):
            c, need = args
            return _metropolis_block(block_rng(seed, c), surface, sizes, need)

        raw = np.vstack(_run_jobs(draw, jobs, workers))

    gamma = np.sqrt(sizes.astype(float))
    return MarginSample(
        n=n,
        group_sizes=tuple(int(s) for s in sizes),
        raw=raw,
        normalized=raw / gamma,
        gamma=tuple(float(g) for g in gamma),
        regimes=("cwm",) * groups.m,
        seed=seed,
    )


def _run_jobs(draw, jobs, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(draw, jobs))
    return [draw(job) for job in jobs]


def _fair_coin_block(rng, sizes, count):
    p = np.full((count, len(sizes)), 0.5)
    return binomial_margins(rng, sizes, p)


def _rejection_block(rng, surface: FreeEnergySurface, sizes, count):
    sigma_env = float(surface.curvature_sigmas()[0])
    n = surface.n
    out = np.empty(count)
    filled = proposed = accepted = 0
    while filled < count:
        x = rng.normal(0.0, sigma_env, size=count)
        log_ratio = n * (_log_cosh(x) - 0.5 * x**2)
        keep = x[np.log(rng.random(count)) < log_ratio]
        take = min(keep.size, count - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
        proposed += count
        accepted += keep.size
        if proposed >= 10_000 and accepted < MIN_ENVELOPE_ACCEPTANCE * proposed:
            raise ConfigError(
                f"rejection envelope acceptance rate {accepted / proposed:.2%} "
                "is below 1%; review the coupling parameters"
            )
    p = 0.5 * (1.0 + np.tanh(out[:, None]))
    return binomial_margins(rng, sizes, p)


def _metropolis_block(rng, surface: FreeEnergySurface, sizes, need):
    m = surface.m
    n = surface.n
    step = 2.4 / math.sqrt(m) * surface.curvature_sigmas()
    total = BURN_IN + THINNING * need
    increments = rng.standard_normal((total, m)) * step
    log_u = np.log(rng.random(total))
    x = np.zeros(m)
    log_cur = 0.0  # -n F(0)
    kept = np.empty((need, m))
    k = 0
    for t in range(total):
        proposal = x + increments[t]
        log_prop = -n * surface.value(proposal)
        if log_u[t] < log_prop - log_cur:
            x = proposal
            log_cur = log_prop
        if t >= BURN_IN and (t - BURN_IN) % THINNING == THINNING - 1:
            kept[k] = x
            k += 1
    p = 0.5 * (1.0 + np.tanh(kept))
    return binomial_margins(rng, sizes, p)


# -- moments ------------------------------------------------------------------------

def pair_correlation(
    spec: CouplingSpec, groups: GroupStructure, n: int, tol: float = 1e-12
) -> np.ndarray:
    """E[tanh(x)^2] per group under the normalized mixing density."""
    surface = free_energy_surface(spec, groups, n)

    def at_level(level: int) -> np.ndarray:
        points, weights = surface.quad_nodes(level)
        return (weights @ np.tanh(points) ** 2) / weights.sum()

    values, _ = refine_until_stable(at_level, tol=tol)
    return values


def empirical_margin_covariance(sample: MarginSample) -> np.ndarray:
    """Sample covariance of the normalized margins (no analytic formula is claimed)."""
    return np.cov(sample.normalized, rowvar=False)
