import math

import numpy as np
import pytest

from collapsemap import classify
from collapsemap.catalog import Constraint, ConstraintSource, SourceKind
from collapsemap.classify import (
    ALL_EMPIRICAL_LAYERS,
    ModelSpec,
    Status,
    Window,
    build_constraints,
    classify_point,
    coverage_check,
    envelope_polyline,
    err_boundary,
)
from collapsemap.core import Confidence, Ontology, ParamPoint, PiecewiseBound, Theory


def test_model_spec_validation():
    with pytest.raises(ValueError, match="flash ontology requires GRW"):
        ModelSpec(Theory.CSL, Ontology.FLASH)
    with pytest.raises(ValueError):
        ModelSpec(year_max=1900)


def test_default_layers_exclude_dashed_sources(experiments):
    kinds = {c.source.kind for c in build_constraints(ModelSpec(), experiments)}
    assert kinds == {SourceKind.XRAY, SourceKind.CAVE_WARMING, SourceKind.DIFFRACTION}


def test_proposed_rows_only_on_request(experiments):
    off = build_constraints(ModelSpec(), experiments)
    on = build_constraints(ModelSpec(include_proposed=True), experiments)
    assert not any(c.proposed for c in off)
    assert sum(c.proposed for c in on) == 2


def test_year_filter(experiments):
    cons = build_constraints(ModelSpec(layers={SourceKind.DIFFRACTION}, year_max=1988), experiments)
    assert [c.source.year for c in cons] == [1927, 1930, 1959, 1987, 1988]


def test_constraints_sorted_by_kind_then_year(experiments):
    cons = build_constraints(ModelSpec(layers=ALL_EMPIRICAL_LAYERS), experiments)
    keys = [c.source.sort_key for c in cons]
    assert keys == sorted(keys)


@pytest.mark.parametrize("theory, ontology, pt", [
    (Theory.GRW, Ontology.MATTER_DENSITY, ParamPoint(1e-7, 1e-16)),
    (Theory.GRW, Ontology.FLASH, ParamPoint(1e-6, 3e-8)),
    (Theory.CSL, Ontology.MATTER_DENSITY, ParamPoint(1e-6, 3e-8)),
])
def test_marked_parameters_acceptable(experiments, theory, ontology, pt):
    spec = ModelSpec(theory, ontology, layers=ALL_EMPIRICAL_LAYERS)
    assert classify_point(spec, pt, experiments).status is Status.ACCEPTABLE


def test_refuted_unsatisfactory_both(experiments):
    spec = ModelSpec()
    c = classify_point(spec, ParamPoint(1e-7, 1.0), experiments)
    assert c.status is Status.REFUTED
    assert {s.kind for s in c.refuted_by} >= {SourceKind.XRAY, SourceKind.DIFFRACTION}
    assert classify_point(spec, ParamPoint(1e-7, 1e-20), experiments).status is Status.UNSATISFACTORY
    # tiny sigma: x-ray bound falls below the PUR threshold
    assert classify_point(spec, ParamPoint(1e-12, 1e-20), experiments).status is Status.BOTH


def test_proposed_experiments_only_project(experiments):
    spec = ModelSpec(include_proposed=True)
    c = classify_point(spec, ParamPoint(1e-7, 1e-8), experiments)
    assert c.status is Status.ACCEPTABLE
    assert c.projected_by and all(s.year is None for s in c.projected_by)


def test_active_bounds_report(experiments):
    bounds = classify.active_bounds_at(ModelSpec(), 1e-7, experiments)
    assert bounds["xray"] == pytest.approx(1e7 * 1e-14)
    assert "diffraction 2011 Gerlich" in bounds


def test_envelope_polyline_spans_and_text(experiments):
    spec = ModelSpec(layers=ALL_EMPIRICAL_LAYERS)
    poly = err_boundary(spec, experiments, (1e-12, 1.0))
    v = poly.vertices
    assert v[0, 0] == pytest.approx(-12) and v[-1, 0] == pytest.approx(0)
    assert np.all(np.diff(v[:, 0]) > 0)
    assert poly.spans[0].log_sigma_lo == pytest.approx(-12)
    for a, b in zip(poly.spans, poly.spans[1:]):
        assert a.log_sigma_hi == pytest.approx(b.log_sigma_lo)
    text = poly.to_text("t")
    lines = text.splitlines()
    assert lines[0] == "# t"
    assert "log10_sigma log10_lambda" in lines
    assert len([ln for ln in lines if not ln.startswith("#")]) == len(v) + 1


def test_envelope_polyline_is_the_minimum(experiments):
    cons = classify.empirical(build_constraints(ModelSpec(Theory.CSL, layers=ALL_EMPIRICAL_LAYERS),
                                                experiments))
    poly = envelope_polyline(cons, (1e-12, 1.0))
    xs = np.linspace(-12, 0, 301)
    interp = np.interp(xs, poly.vertices[:, 0], poly.vertices[:, 1])
    ref = np.log10(np.min([c.bound.evaluate(10.0**xs) for c in cons], axis=0))
    np.testing.assert_allclose(interp, ref, atol=1e-9)


def test_envelope_window_validation(experiments):
    cons = build_constraints(ModelSpec(), experiments)
    with pytest.raises(ValueError):
        envelope_polyline(cons, (1.0, 1e-3))
    with pytest.raises(ValueError):
        envelope_polyline([], (1e-9, 1.0))


def test_window_lattices_nest():
    w = Window()
    xs1, _ = w.lattice(50)
    xs2, _ = w.lattice(100)
    np.testing.assert_allclose(xs2[::2], xs1)
    with pytest.raises(ValueError):
        Window((0.0, 0.0), (1.0, 2.0))


def test_coverage_witness_is_acceptable(experiments):
    spec = ModelSpec(layers=ALL_EMPIRICAL_LAYERS)
    cov = coverage_check(spec, experiments, resolution=80)
    assert not cov.covered
    assert classify_point(spec, cov.witness, experiments).status is Status.ACCEPTABLE


def test_coverage_with_blanket_constraint(experiments):
    blanket = Constraint(ConstraintSource(SourceKind.SOUND), Theory.GRW,
                         PiecewiseBound.constant(1e-40), Confidence.SOLID)
    cov = coverage_check(ModelSpec(), experiments, resolution=60, extra=[blanket])
    assert cov.covered and cov.witness is None and cov.n_acceptable == 0


def test_region_masks_shapes(experiments):
    xs, ys = Window().cell_centers(50)
    r, u = classify.region_masks(ModelSpec(), experiments, xs, ys)
    assert r.shape == u.shape == (50, 50)
    assert r.any() and u.any() and (~(r | u)).any()


def test_exclusion_mask_agrees_with_classify(experiments):
    spec = ModelSpec(Theory.CSL, layers=ALL_EMPIRICAL_LAYERS)
    cons = classify.empirical(build_constraints(spec, experiments))
    rng = np.random.default_rng(0)
    s = 10.0 ** rng.uniform(-12, 0, 200)
    lam = 10.0 ** rng.uniform(-36, 4, 200)
    mask = classify.exclusion_mask(cons, s, lam)
    for a, b, m in zip(s, lam, mask):
        assert m == bool(classify_point(spec, ParamPoint(a, b), experiments).refuted_by)
    assert not math.isnan(mask.sum())
