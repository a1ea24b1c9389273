"""Multi-group voting models driven by mixing-measure sequences.

A model couples a group structure, a mixing-measure sequence (static,
contracted toward the origin, or a mean-field coupling), and a bias map.
Conditional on a latent bias vector m the voters flip independent coins
with success probability (1 + m_bar)/2 per group, so group margins are
binomial transforms.  This module provides the exact margin law (atomic
summation or adaptive quadrature), an independent brute-force enumeration
oracle, and a seeded block-parallel Monte Carlo sampler.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy import stats

from .errors import ConfigError, ResourceError
from .measures import BaseMeasure, apply_bias_map
from .quadrature import refine_until_stable

LATTICE_GUARD = 10**7
BRUTE_FORCE_MAX_N = 20
POPULATION_GUARD = 10**12

#: samples per deterministic block; the RNG stream of block j depends only on
#: (seed, j), so results are identical no matter how blocks map to workers.
SAMPLE_BLOCK = 8192


class GroupStructure:
    """Fixed group count with proportions resolved to integer sizes.

    Sizes come from largest-remainder rounding of ``proportions * n`` with a
    floor of 2 per group (so pair correlations are always defined), repaired
    so that the sizes sum to n exactly.
    """

    def __init__(self, m: int, proportions):
        if m < 1:
            raise ConfigError("group count must be at least 1")
        props = np.asarray(proportions, dtype=float)
        if props.shape != (m,):
            raise ConfigError(f"expected {m} group proportions")
        if np.any(props <= 0):
            raise ConfigError("group proportions must be positive")
        if abs(float(props.sum()) - 1.0) > 1e-12:
            raise ConfigError("group proportions must sum to 1")
        self.m = m
        self.proportions = tuple(float(p) for p in props)

    def sizes(self, n: int) -> tuple[int, ...]:
        if n < 2 * self.m:
            raise ConfigError(
                f"population {n} cannot give every one of {self.m} groups at least 2 voters"
            )
        if n > POPULATION_GUARD:
            raise ResourceError(f"population {n} exceeds the overflow guard")
        quotas = np.asarray(self.proportions) * n
        base = np.floor(quotas).astype(int)
        remainder = int(n - base.sum())
        order = np.argsort(-(quotas - base), kind="stable")
        base[order[:remainder]] += 1
        # repair the floor of 2; donors exist because n >= 2m
        while np.any(base < 2):
            short = int(np.argmin(base))
            base[int(np.argmax(base))] -= 1
            base[short] += 1
        return tuple(int(s) for s in base)

    def _key(self):
        return ("groups", self.m, self.proportions)


@dataclass(frozen=True)
class StaticSequence:
    """Collective-bias setting: one fixed symmetric mixing measure for every n."""

    base: BaseMeasure

    def __post_init__(self):
        if not self.base.is_symmetric:
            raise ConfigError("a static mixing measure must be symmetric")

    kind = "static"

    def _key(self):
        return ("static", self.base._key())


@dataclass(frozen=True)
class ContractedSequence:
    """Mixing measures mu_n obtained by scaling a fixed base measure by eps_n."""

    base: BaseMeasure
    schedule: object

    kind = "contracted"

    def _key(self):
        return ("contracted", self.base._key(), self.schedule._key())


@dataclass(frozen=True)
class CurieWeissSequence:
    """Mean-field coupling; the mixing measure has density exp(-n F) (see cwm)."""

    coupling: object

    kind = "curie-weiss"

    def _key(self):
        return ("curie-weiss", self.coupling._key())


class DeFinettiModel:
    """A complete voting model: groups, mixing sequence, and bias map."""

    def __init__(self, groups: GroupStructure, sequence, bias_map):
        self.groups = groups
        self.sequence = sequence
        self.bias_map = bias_map
        kind = sequence.kind
        if kind in ("static", "contracted") and sequence.base.dim != groups.m:
            raise ConfigError(
                f"mixing measure dimension {sequence.base.dim} != group count {groups.m}"
            )
        if kind == "contracted" and sequence.schedule.m != groups.m:
            raise ConfigError("schedule group count does not match the model")
        if kind == "curie-weiss":
            if sequence.coupling.m != groups.m:
                raise ConfigError("coupling matrix size does not match the group count")
            if getattr(bias_map, "name", None) != "tanh":
                raise ConfigError("the mean-field model requires the tanh bias map")

    def mixing_measure(self, n: int) -> BaseMeasure:
        """The mixing measure mu_n (static and contracted sequences only)."""
        seq = self.sequence
        if seq.kind == "static":
            return seq.base
        if seq.kind == "contracted":
            sizes = self.groups.sizes(n)
            return seq.base.contract(seq.schedule.eps(n, sizes))
        raise ConfigError("the mean-field mixing measure is a density, not a BaseMeasure")

    def normalization(self, n: int) -> tuple[np.ndarray, tuple[str, ...]]:
        """Per-group margin divisor gamma and regime tags.

        Fast/critical groups use sqrt(n_g); subcritical groups use eps * n_g,
        which is the divisor under which their margins keep a nondegenerate
        limit.  Static and mean-field models are reported in sqrt(n_g) units.
        """
        sizes = np.asarray(self.groups.sizes(n), dtype=float)
        seq = self.sequence
        if seq.kind == "contracted":
            regimes = seq.schedule.regimes()
            eps = seq.schedule.eps(n, sizes)
            gamma = np.where(
                np.asarray(regimes) == "subcritical", eps * sizes, np.sqrt(sizes)
            )
            return gamma, regimes
        tag = "static" if seq.kind == "static" else "cwm"
        return np.sqrt(sizes), (tag,) * self.groups.m

    def _key(self):
        return (self.groups._key(), self.sequence._key(), self.bias_map.name)


# -- margin probability tables -------------------------------------------------

class MarginPmf:
    """Exact joint law of the group margins on their parity lattice.

    Internally an array over count indices j (margin k_g = 2 j_g - n_g);
    behaves as a mapping from integer margin vectors to probabilities,
    with off-lattice vectors mapped to probability 0.
    """

    def __init__(self, group_sizes, probs: np.ndarray):
        self.group_sizes = tuple(int(s) for s in group_sizes)
        expected = tuple(s + 1 for s in self.group_sizes)
        if probs.shape != expected:
            raise ValueError(f"probs shape {probs.shape} != lattice shape {expected}")
        self.probs = probs

    @property
    def m(self) -> int:
        return len(self.group_sizes)

    def margin_axis(self, g: int) -> np.ndarray:
        n_g = self.group_sizes[g]
        return 2 * np.arange(n_g + 1) - n_g

    def prob(self, k) -> float:
        k = np.atleast_1d(np.asarray(k, dtype=int))
        idx = []
        for g, n_g in enumerate(self.group_sizes):
            if abs(int(k[g])) > n_g or (int(k[g]) + n_g) % 2 != 0:
                return 0.0
            idx.append((int(k[g]) + n_g) // 2)
        return float(self.probs[tuple(idx)])

    def __getitem__(self, k) -> float:
        return self.prob(k)

    def items(self) -> Iterator[tuple[tuple[int, ...], float]]:
        for idx in np.ndindex(self.probs.shape):
            k = tuple(2 * j - n_g for j, n_g in zip(idx, self.group_sizes))
            yield k, float(self.probs[idx])

    def to_dict(self) -> dict:
        return dict(self.items())

    def total(self) -> float:
        return float(self.probs.sum())

    def reflected(self) -> "MarginPmf":
        """The law of -S; equals self when the model is sign-symmetric."""
        return MarginPmf(self.group_sizes, np.flip(self.probs))

    def max_abs_diff(self, other: "MarginPmf") -> float:
        if self.group_sizes != other.group_sizes:
            raise ValueError("margin laws live on different lattices")
        return float(np.max(np.abs(self.probs - other.probs)))

    def group_marginal(self, g: int) -> np.ndarray:
        axes = tuple(a for a in range(self.m) if a != g)
        return self.probs.sum(axis=axes) if axes else self.probs


def _binom_table(n_g: int, p: np.ndarray) -> np.ndarray:
    """Row q is the Binomial(n_g, p[q]) pmf over 0..n_g counts."""
    return stats.binom.pmf(np.arange(n_g + 1), n_g, p[:, None])


def _pmf_from_nodes(points, weights, sizes, bmap, chunk_target=2_000_000) -> np.ndarray:
    """Mix conditional binomial laws over weighted bias nodes."""
    m_bar = apply_bias_map(bmap, points)
    p = 0.5 * (1.0 + m_bar)
    shape = tuple(s + 1 for s in sizes)
    acc = np.zeros(shape)
    letters = [chr(ord("a") + g) for g in range(len(sizes))]
    subs = ",".join(["q"] + ["q" + c for c in letters]) + "->" + "".join(letters)
    chunk = max(1, chunk_target // max(shape))
    for start in range(0, len(weights), chunk):
        sl = slice(start, start + chunk)
        tables = [_binom_table(s, p[sl, g]) for g, s in enumerate(sizes)]
        acc += np.einsum(subs, np.asarray(weights)[sl], *tables, optimize=True)
    return acc


def conditional_margin_pmf(m, groups: GroupStructure, n: int) -> MarginPmf:
    """Joint margin law under the conditional product measure at bias m.

    ``m`` is the post-bias-map vector in [-1, 1]^M; per group the count of
    +1 votes is Binomial(n_g, (1 + m_g)/2) and the margin is 2*count - n_g.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    if m.shape != (groups.m,):
        raise ConfigError(f"bias vector must have length {groups.m}")
    if np.any(np.abs(m) > 1.0):
        raise ConfigError("conditional bias must lie in [-1, 1] per component")
    sizes = groups.sizes(n)
    _guard_lattice(sizes)
    probs = _pmf_from_nodes(m[None, :], np.array([1.0]), sizes, _IdentityBias())
    return MarginPmf(sizes, probs)


class _IdentityBias:
    name = "identity"

    def __call__(self, m):
        return m


def _guard_lattice(sizes) -> None:
    if math.prod(s + 1 for s in sizes) > LATTICE_GUARD:
        raise ResourceError(
            f"margin lattice with sizes {tuple(sizes)} exceeds {LATTICE_GUARD:g} entries"
        )


def _is_atomic(measure: BaseMeasure) -> bool:
    from .measures import Mixture, PointMassMixture, Product

    if isinstance(measure, PointMassMixture):
        return True
    if isinstance(measure, Product):
        return all(_is_atomic(f) for f in measure.factors)
    if isinstance(measure, Mixture):
        return all(_is_atomic(c) for c in measure.components)
    return False


def exact_margin_pmf(model: DeFinettiModel, n: int, tol: float = 1e-12) -> MarginPmf:
    """Exact margin law: the conditional binomial law mixed over mu_n.

    Atomic mixing measures are summed exactly; continuous ones use
    Gauss-Legendre nodes doubled until no pmf entry moves by more than
    ``tol``.  Guarded by the lattice-size resource limit.
    """
    sizes = model.groups.sizes(n)
    _guard_lattice(sizes)
    if model.sequence.kind == "curie-weiss":
        from . import cwm

        return cwm.definetti_margin_pmf(model.sequence.coupling, model.groups, n, tol=tol)
    measure = model.mixing_measure(n)
    if _is_atomic(measure):
        points, weights = measure.quad_nodes(0)
        probs = _pmf_from_nodes(points, weights, sizes, model.bias_map)
        return MarginPmf(sizes, probs)

    def at_level(level: int) -> np.ndarray:
        points, weights = measure.quad_nodes(level)
        return _pmf_from_nodes(points, weights, sizes, model.bias_map)

    probs, _ = refine_until_stable(at_level, tol=tol)
    return MarginPmf(sizes, probs)


def brute_force_pmf(model: DeFinettiModel, n: int, tol: float = 1e-12) -> MarginPmf:
    """Independent oracle: enumerate every one of the 2^n vote configurations.

    Each configuration's probability is the product of per-voter factors
    integrated against mu_n; no binomial coefficients enter.  Intended to
    cross-check exact_margin_pmf on small instances.
    """
    if n > BRUTE_FORCE_MAX_N:
        raise ResourceError(f"brute force enumerates 2^n configurations; n={n} > {BRUTE_FORCE_MAX_N}")
    sizes = model.groups.sizes(n)
    m_groups = model.groups.m

    n_configs = 1 << n
    bits = (np.arange(n_configs, dtype=np.int64)[:, None] >> np.arange(n)) & 1
    indicator = np.zeros((n, m_groups))
    start = 0
    for g, s in enumerate(sizes):
        indicator[start : start + s, g] = 1.0
        start += s
    plus_counts = (bits @ indicator).astype(np.int64)  # +1 votes per group
    minus_counts = np.asarray(sizes, dtype=np.int64) - plus_counts
    strides = np.cumprod([1] + [s + 1 for s in sizes[::-1]][:-1])[::-1].astype(np.int64)
    flat_idx = plus_counts @ strides

    def accumulate(points, weights) -> np.ndarray:
        p = 0.5 * (1.0 + apply_bias_map(model.bias_map, points))
        total = np.zeros(n_configs)
        interior = np.all((p > 0.0) & (p < 1.0), axis=1)
        if np.any(interior):
            logp = np.log(p[interior])
            log1mp = np.log1p(-p[interior])
            w_int = np.asarray(weights)[interior]
            chunk = max(1, 4_000_000 // n_configs)
            for s0 in range(0, len(w_int), chunk):
                sl = slice(s0, s0 + chunk)
                logw = plus_counts @ logp[sl].T + minus_counts @ log1mp[sl].T
                total += np.exp(logw) @ w_int[sl]
        for q in np.nonzero(~interior)[0]:
            factor = np.ones(n_configs)
            for g in range(m_groups):
                factor *= p[q, g] ** plus_counts[:, g]
                factor *= (1.0 - p[q, g]) ** minus_counts[:, g]
            total += weights[q] * factor
        probs = np.bincount(flat_idx, weights=total, minlength=math.prod(s + 1 for s in sizes))
        return probs.reshape(tuple(s + 1 for s in sizes))

    if model.sequence.kind == "curie-weiss":
        from . import cwm

        surface = cwm.free_energy_surface(model.sequence.coupling, model.groups, n)

        def at_level(level: int) -> np.ndarray:
            points, weights = surface.quad_nodes(level)
            return accumulate(points, weights / weights.sum())

        probs, _ = refine_until_stable(at_level, tol=tol)
        return MarginPmf(sizes, probs)

    measure = model.mixing_measure(n)
    if _is_atomic(measure):
        points, weights = measure.quad_nodes(0)
        return MarginPmf(sizes, accumulate(points, weights))

    def at_level(level: int) -> np.ndarray:
        points, weights = measure.quad_nodes(level)
        return accumulate(points, weights)

    probs, _ = refine_until_stable(at_level, tol=tol)
    return MarginPmf(sizes, probs)


# -- sampling -------------------------------------------------------------------

@dataclass(frozen=True)
class MarginSample:
    """A seeded batch of margin vectors with their normalization metadata."""

    n: int
    group_sizes: tuple[int, ...]
    raw: np.ndarray          # (count, M) integer margins
    normalized: np.ndarray   # raw / gamma
    gamma: tuple[float, ...]
    regimes: tuple[str, ...]
    seed: int

    @property
    def count(self) -> int:
        return self.raw.shape[0]

    def to_csv(self, path) -> None:
        """Columnar long-format CSV: sample_index, group, raw_margin, normalized_margin."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_index", "group", "raw_margin", "normalized_margin"])
            for i in range(self.count):
                for g in range(len(self.group_sizes)):
                    writer.writerow(
                        [i, g, int(self.raw[i, g]), repr(float(self.normalized[i, g]))]
                    )

    def manifest(self) -> dict:
        return {
            "n": self.n,
            "group_sizes": list(self.group_sizes),
            "count": self.count,
            "seed": self.seed,
            "gamma": list(self.gamma),
            "regimes": list(self.regimes),
        }


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Generator for sample block ``block``: child ``(block,)`` of SeedSequence(seed)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block,)))


def _block_sizes(count: int) -> list[int]:
    full, rest = divmod(count, SAMPLE_BLOCK)
    return [SAMPLE_BLOCK] * full + ([rest] if rest else [])


def binomial_margins(rng: np.random.Generator, sizes: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Margins 2*Binomial(n_g, p_g) - n_g, vectorized over rows of p."""
    return 2 * rng.binomial(sizes[None, :], p) - sizes[None, :]


def sample_margins(
    model: DeFinettiModel, n: int, count: int, seed: int, workers: int = 1
) -> MarginSample:
    """Seeded two-stage sampler: bias from mu_n, then binomial margins.

    Sampling is split into fixed-size blocks whose RNG streams depend only
    on (seed, block index), so the result is bitwise identical for any
    worker count.
    """
    if count < 1:
        raise ConfigError("sample count must be at least 1")
    if model.sequence.kind == "curie-weiss":
        from . import cwm

        return cwm.sample_cwm_margins(
            model.sequence.coupling, model.groups, n, count, seed, workers=workers
        )
    sizes = np.asarray(model.groups.sizes(n), dtype=np.int64)
    measure = model.mixing_measure(n)

    def draw(args) -> np.ndarray:
        block, block_count = args
        rng = block_rng(seed, block)
        m_vals = measure.sample(rng, block_count)
        p = 0.5 * (1.0 + apply_bias_map(model.bias_map, m_vals))
        return binomial_margins(rng, sizes, p)

    jobs = list(enumerate(_block_sizes(count)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(draw, jobs))
    else:
        parts = [draw(job) for job in jobs]
    raw = np.vstack(parts)
    gamma, regimes = model.normalization(n)
    return MarginSample(
        n=n,
        group_sizes=tuple(int(s) for s in sizes),
        raw=raw,
        normalized=raw / gamma,
        gamma=tuple(float(g) for g in gamma),
        regimes=regimes,
        seed=seed,
    )


# -- summary statistics ----------------------------------------------------------

@dataclass(frozen=True)
class AbsMarginEstimate:
    """Per-group expected per-capita absolute margin with an error bound."""

    per_capita: tuple[float, ...]
    standard_error: tuple[float, ...]
    mode: str


def expected_abs_margin(
    model: DeFinettiModel,
    n: int,
    mode: str = "exact",
    count: int | None = None,
    seed: int | None = None,
) -> AbsMarginEstimate:
    """E(|S_g| / n_g) per group, exactly or by seeded Monte Carlo."""
    sizes = model.groups.sizes(n)
    if mode == "exact":
        pmf = exact_margin_pmf(model, n)
        values = []
        for g, n_g in enumerate(sizes):
            marg = pmf.group_marginal(g)
            values.append(float(np.abs(pmf.margin_axis(g)) @ marg) / n_g)
        return AbsMarginEstimate(tuple(values), (0.0,) * len(sizes), "exact")
    if mode == "monte-carlo":
        if count is None or seed is None:
            raise ConfigError("monte-carlo mode needs count and seed")
        sample = sample_margins(model, n, count, seed)
        per_cap = np.abs(sample.raw) / np.asarray(sizes, dtype=float)
        means = per_cap.mean(axis=0)
        ses = per_cap.std(axis=0, ddof=1) / math.sqrt(count)
        return AbsMarginEstimate(
            tuple(float(v) for v in means), tuple(float(s) for s in ses), "monte-carlo"
        )
    raise ConfigError(f"unknown mode {mode!r}; expected 'exact' or 'monte-carlo'")


def pair_correlation(model: DeFinettiModel, n: int, tol: float = 1e-12) -> np.ndarray:
    """E[m_bar_g^2] per group, which equals the within-group pair correlation.

    Under the conditional product law, E X_g1 X_g2 = E[(E_m X)^2] = E[m_bar^2].
    """
    if model.sequence.kind == "curie-weiss":
        from . import cwm

        return cwm.pair_correlation(model.sequence.coupling, model.groups, n, tol=tol)
    measure = model.mixing_measure(n)

    def second_moment(points, weights) -> np.ndarray:
        m_bar = apply_bias_map(model.bias_map, points)
        return np.asarray(weights) @ (m_bar**2)

    if _is_atomic(measure):
        return second_moment(*measure.quad_nodes(0))
    values, _ = refine_until_stable(
        lambda level: second_moment(*measure.quad_nodes(level)), tol=tol
    )
    return values
