import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collapsemap.core import (
    CODATA2018,
    ParamPoint,
    PhysicalConstants,
    PiecewiseBound,
    PowerLawSegment,
    Theory,
    bound_at,
    is_excluded,
    lower_envelope,
    lower_envelope_with_sources,
)


def test_param_point_rejects_nonpositive():
    with pytest.raises(ValueError):
        ParamPoint(0.0, 1.0)
    with pytest.raises(ValueError):
        ParamPoint(1e-7, -1.0)
    with pytest.raises(ValueError):
        ParamPoint(math.inf, 1.0)


def test_constants_sanity_checks():
    with pytest.raises(ValueError):
        PhysicalConstants(hbar=-1, k_B=1, m_p=1, m_e=1, avogadro=1)
    with pytest.raises(ValueError):
        PhysicalConstants(hbar=1, k_B=1, m_p=1.0, m_e=1.0, avogadro=1)
    assert 1836 < CODATA2018.m_p / CODATA2018.m_e < 1837


def test_species_rate_scaling():
    assert Theory.GRW.species_rate(1e-16, 720) == pytest.approx(7.2e-14)
    assert Theory.CSL.species_rate(1e-16, 720) == pytest.approx(720**2 * 1e-16)


def test_segment_validation():
    with pytest.raises(ValueError):
        PowerLawSegment(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        PowerLawSegment(1.0, 1.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        PiecewiseBound((PowerLawSegment(1, 0, 0, 1), PowerLawSegment(1, 0, 2, 3)))


def test_bound_at_domain_and_errors():
    pb = PiecewiseBound((PowerLawSegment(1e-9, 0, 1e-10, 1e-7), PowerLawSegment(1e5, 2, 1e-7)))
    assert bound_at(pb, 1e-11) is None
    assert bound_at(pb, 1e-8) == pytest.approx(1e-9)
    assert bound_at(pb, 1e-7) == pytest.approx(1e5 * 1e-14)
    with pytest.raises(ValueError):
        bound_at(pb, 0.0)
    with pytest.raises(ValueError):
        bound_at(pb, -1.0)


def test_exclusion_is_strict():
    pb = PiecewiseBound.power_law(1e13, 2.0)
    s = 1e-7
    on = ParamPoint(s, float(1e13 * s**2))
    assert not is_excluded(pb, on)
    assert is_excluded(pb, ParamPoint(s, on.lam * (1 + 1e-12)))
    assert not is_excluded(pb, ParamPoint(s, on.lam * (1 - 1e-12)))


def test_vectorised_matches_scalar():
    pb = PiecewiseBound((PowerLawSegment(3.0, 1.0, 0.0, 1e-3), PowerLawSegment(3e6, 3.0, 1e-3)))
    s = np.logspace(-12, 0, 97)
    lam = np.logspace(-30, 5, 97)
    vec = pb.excludes(s, lam)
    assert list(vec) == [is_excluded(pb, ParamPoint(a, b)) for a, b in zip(s, lam)]


def test_envelope_errors():
    with pytest.raises(ValueError, match="no constraints"):
        lower_envelope([])
    a = PiecewiseBound.power_law(1.0, 0.0, 0.0, 1e-6)
    b = PiecewiseBound.power_law(1.0, 0.0, 1e-3, math.inf)
    with pytest.raises(ValueError):
        lower_envelope([a, b])


def test_envelope_of_crossing_lines():
    flat = PiecewiseBound.constant(1e-8)
    steep = PiecewiseBound.power_law(1e6, 2.0)
    env, src = lower_envelope_with_sources([flat, steep])
    cross = math.sqrt(1e-8 / 1e6)
    assert [s.exponent for s in env.segments] == [2.0, 0.0]
    assert src == [1, 0]
    assert env.segments[0].sigma_hi == pytest.approx(cross, rel=1e-12)


def test_envelope_merges_identical_lines():
    a = PiecewiseBound.power_law(2.0, 1.0)
    b = PiecewiseBound.power_law(2.0, 1.0)
    env, src = lower_envelope_with_sources([a, b])
    assert len(env.segments) == 1
    assert src == [0]  # ties go to the first bound


def test_envelope_partial_domains():
    wide = PiecewiseBound.constant(1.0)
    narrow = PiecewiseBound.power_law(1e-3, 0.0, 1e-6, 1e-4)
    env = lower_envelope([wide, narrow])
    assert env(1e-7) == pytest.approx(1.0)
    assert env(1e-5) == pytest.approx(1e-3)
    assert env(1e-3) == pytest.approx(1.0)


segments = st.builds(
    lambda c, p: (10.0**c, p),
    st.floats(-30, 10),
    st.sampled_from([-3.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0]),
)


@st.composite
def bounds(draw):
    cuts = sorted(draw(st.lists(st.floats(-11, -1), min_size=0, max_size=3, unique=True)))
    edges = [0.0] + [10.0**c for c in cuts] + [math.inf]
    segs = []
    for lo, hi in zip(edges, edges[1:]):
        c, p = draw(segments)
        segs.append(PowerLawSegment(c, p, lo, hi))
    return PiecewiseBound(tuple(segs))


@settings(max_examples=60, deadline=None)
@given(st.lists(bounds(), min_size=1, max_size=5), st.integers(0, 2**31 - 1))
def test_envelope_equals_pointwise_minimum(family, seed):
    env = lower_envelope(family)
    rng = np.random.default_rng(seed)
    s = 10.0 ** rng.uniform(-12, 0, 200)
    lam = 10.0 ** rng.uniform(-40, 10, 200)
    brute = np.zeros(s.shape, bool)
    for pb in family:
        brute |= pb.excludes(s, lam)
    assert np.array_equal(env.excludes(s, lam), brute)
    ref = np.min([pb.evaluate(s) for pb in family], axis=0)
    np.testing.assert_allclose(env.evaluate(s), ref, rtol=1e-9)
