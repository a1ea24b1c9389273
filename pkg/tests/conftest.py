"""Shared model builders and hypothesis strategies."""

import hypothesis.strategies as st

from votelim import (
    CLAMP,
    ContractedSequence,
    DeFinettiModel,
    Gaussian,
    GroupStructure,
    Mixture,
    PointMassMixture,
    PowerLawSchedule,
    StaticSequence,
    UniformBox,
)

GROUPS_1 = GroupStructure(1, [1.0])
GROUPS_2 = GroupStructure(2, [0.5, 0.5])

DELTA_0 = PointMassMixture([(0.0, 1.0)])
TWO_ATOM_2 = PointMassMixture([([-2.0], 0.5), ([2.0], 0.5)])
TWO_ATOM_HALF = PointMassMixture([([-0.5], 0.5), ([0.5], 0.5)])
UNIFORM_1 = UniformBox([-1.0], [1.0])
GAUSS_1 = Gaussian([0.0], [[1.0]])


def static_delta0(m=1):
    if m == 1:
        return DeFinettiModel(GROUPS_1, StaticSequence(DELTA_0), CLAMP)
    base = PointMassMixture([([0.0] * m, 1.0)])
    groups = GroupStructure(m, [1.0 / m] * m)
    return DeFinettiModel(groups, StaticSequence(base), CLAMP)


def contracted(base, exponent, groups=None, bias=CLAMP, coefficient=1.0):
    groups = groups or (GROUPS_1 if base.dim == 1 else GROUPS_2)
    schedule = PowerLawSchedule(coefficient, exponent, m=groups.m)
    return DeFinettiModel(groups, ContractedSequence(base, schedule), bias)


# -- hypothesis strategies ----------------------------------------------------

@st.composite
def symmetric_measures_1d(draw):
    """Random symmetric 1-D measures supported in [-1, 1].

    Compact support keeps the clamp bias map kink-free on the support,
    which is the pairing the toolkit intends (tanh handles full-line
    supports such as Gaussians).
    """
    kind = draw(st.sampled_from(["atoms", "box", "mixture"]))
    if kind == "atoms":
        a = draw(st.floats(0.1, 1.0))
        w = draw(st.floats(0.05, 0.45))
        return PointMassMixture([([-a], w), ([0.0], 1.0 - 2 * w), ([a], w)])
    if kind == "box":
        half = draw(st.floats(0.1, 1.0))
        return UniformBox([-half], [half])
    half = draw(st.floats(0.1, 1.0))
    w = draw(st.floats(0.1, 0.9))
    return Mixture([(UniformBox([-half], [half]), w), (DELTA_0, 1.0 - w)])


@st.composite
def symmetric_gaussians_1d(draw):
    sigma = draw(st.floats(0.1, 2.0))
    return Gaussian([0.0], [[sigma**2]])


@st.composite
def measures_1d(draw):
    """Random 1-D measures, not necessarily symmetric."""
    kind = draw(st.sampled_from(["atoms", "box", "gauss"]))
    if kind == "atoms":
        locs = draw(st.lists(st.floats(-3.0, 3.0), min_size=1, max_size=4, unique=True))
        raw = draw(
            st.lists(st.floats(0.05, 1.0), min_size=len(locs), max_size=len(locs))
        )
        total = sum(raw)
        return PointMassMixture([([x], w / total) for x, w in zip(locs, raw)])
    if kind == "box":
        lo = draw(st.floats(-3.0, 2.0))
        width = draw(st.floats(0.1, 3.0))
        return UniformBox([lo], [lo + width])
    mean = draw(st.floats(-2.0, 2.0))
    sigma = draw(st.floats(0.1, 2.0))
    return Gaussian([mean], [[sigma**2]])
