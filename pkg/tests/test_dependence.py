"""Sup-distance metric, verdicts, dependence curves and the counterexample."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsdelab.dependence import (
    DependenceReport,
    apriori_check,
    classify,
    counterexample_curve,
    counterexample_oracle,
    default_index,
    lambda_dependence_curve,
    ode_solution,
    sup_distance,
    uniqueness_gap,
    xi_dependence_curve,
)
from bsdelab.drivers import TerminalValue, as_driver, catalog_lookup
from bsdelab.lattice import build, path_levels
from bsdelab.solver import SolverError, solve_lipschitz

ZERO = catalog_lookup("zero")
G = catalog_lookup("remark33")


def brute_sup_distance(f, g):
    levels = path_levels(f.model)
    vals = [max((f.y[k][lv[k]] - g.y[k][lv[k]]) ** 2 for k in range(f.model.N + 1))
            for lv in levels]
    return float(np.mean(vals))


def test_sup_distance_enumeration_matches_brute_force():
    model = build(1.0, 8)
    f = solve_lipschitz(model, ZERO, "w*w")
    g = solve_lipschitz(model, as_driver("linear(1,0)"), "w")
    assert sup_distance(f, g) == pytest.approx(brute_sup_distance(f, g), rel=1e-12)


def test_sup_distance_doob_for_brownian_motion():
    # E sup |W|^2 lies between E|W_T|^2 = T and the Doob bound 4T
    model = build(1.0, 16)
    d = sup_distance(solve_lipschitz(model, ZERO, "w"), solve_lipschitz(model, ZERO, 0.0))
    assert 1.0 <= d <= 4.0


def test_sampling_approximates_enumeration():
    model = build(1.0, 16)
    f = solve_lipschitz(model, ZERO, "w")
    g = solve_lipschitz(model, ZERO, 0.0)
    exact = sup_distance(f, g)
    sampled = sup_distance(f, g, max_enum_n=4, n_samples=200_000, seed=3)
    assert sampled == pytest.approx(exact, rel=0.02)
    assert sampled == sup_distance(f, g, max_enum_n=4, n_samples=200_000, seed=3)


def test_deterministic_shortcut():
    model = build(1.0, 40)
    f = solve_lipschitz(model, as_driver("constant(c=1)"), 0.0)
    g = solve_lipschitz(model, ZERO, 0.0)
    assert sup_distance(f, g) == pytest.approx(1.0)


def test_sup_distance_rejects_mismatched_lattices():
    with pytest.raises(ValueError):
        sup_distance(solve_lipschitz(build(1.0, 4), ZERO, 0.0),
                     solve_lipschitz(build(1.0, 8), ZERO, 0.0))


@pytest.mark.parametrize(
    "dists, verdict",
    [
        ([1.0, 0.1, 0.001], "converges"),
        ([1.0, 0.5, 0.2], "inconclusive"),
        ([3.0, 1.01, 1.0, 1.0], "diverges-to: 1"),
        ([0.5], "inconclusive"),
    ],
)
def test_classify(dists, verdict):
    assert classify(dists)[0] == verdict


def test_plateau_under_scheme_error_is_inconclusive():
    assert classify([1.0, 1.0, 1.0], scheme_error=0.2)[0] == "inconclusive"


@given(st.lists(st.floats(1e-3, 1e3), min_size=3, max_size=10))
@settings(max_examples=100)
def test_classify_is_scale_invariant_for_plateaus(dists):
    v1, _ = classify(dists, threshold=0.0)
    v2, _ = classify([10 * d for d in dists], threshold=0.0)
    assert v1.split(":")[0] == v2.split(":")[0]


def test_report_json_shape():
    rep = DependenceReport(["a"], [1.0], [0.5], "inconclusive", ratios=[0.5])
    assert set(rep.to_json()) == {"perturbations", "distances", "verdict", "ratios"}
    with pytest.raises(ValueError):
        DependenceReport(["a"], [1.0, 2.0], [0.5], "inconclusive")
    with pytest.raises(ValueError):
        DependenceReport(["a"], [1.0], [-0.5], "inconclusive")


def test_default_index():
    assert default_index(build(1.0, 64), 3.0) == 32.0
    assert default_index(build(1.0, 16), 3.0) == 8.0
    with pytest.raises(SolverError):
        default_index(build(1.0, 4), 3.0)


def test_xi_curve_lipschitz_converges():
    model = build(1.0, 12)
    seq = [f"w + {2.0 ** -k}" for k in range(0, 8)]
    rep = xi_dependence_curve(model, as_driver("linear(1,1)"), "w", seq)
    assert rep.converges
    assert all(b < a for a, b in zip(rep.distances, rep.distances[1:]))
    # constant shifts: ratio is the same for all members of the sequence
    np.testing.assert_allclose(rep.ratios, rep.ratios[0], rtol=1e-9)


def test_lambda_curve_linear_family():
    model = build(1.0, 12)
    rep = lambda_dependence_curve(model, catalog_lookup("linear_family"),
                                  lambda lam: TerminalValue(f"w + {lam!r}"),
                                  [1.0, 0.5, 0.25, 0.125], m=6.0)
    assert all(b < a for a, b in zip(rep.distances, rep.distances[1:]))
    C = rep.extra["fitted_C"]
    for d, r in zip(rep.distances, rep.extra["rhs"]):
        assert d <= C * r * (1 + 1e-12)
    with pytest.raises(ValueError):
        lambda_dependence_curve(model, catalog_lookup("linear_family"),
                                lambda lam: TerminalValue("w"), [2.0])


def test_uniqueness_gap():
    model = build(1.0, 64)
    assert uniqueness_gap(model, G, 1.0, 32.0) < 1e-2
    assert uniqueness_gap(model, G, 0.0, 32.0) > 0.5
    with pytest.raises(SolverError):
        uniqueness_gap(build(1.0, 16), G, 0.0, 32.0)


def test_apriori_check():
    model = build(1.0, 10)
    ratios = apriori_check(model, ZERO, [("w", 0.0), ("2*w", "w")])
    assert ratios[0] == pytest.approx(ratios[1]) and 1.0 <= ratios[0] <= 4.0
    with pytest.warns(UserWarning):
        assert apriori_check(model, ZERO, [("w", "w")]) == [None]


def test_counterexample_oracle():
    y_n, y_min, y_max = counterexample_oracle(1.0, 8, 0.0)
    assert y_n == pytest.approx(1.5**3) and y_min == 0.0 and y_max == 1.0
    with pytest.raises(ValueError):
        counterexample_oracle(1.0, 0, 0.0)
    with pytest.raises(ValueError):
        counterexample_oracle(1.0, 1, 2.0)


def test_ode_matches_closed_form():
    times = np.linspace(0.0, 1.0, 33)
    y = ode_solution(G, 1.0 / 8, 1.0, times)
    np.testing.assert_allclose(y, counterexample_oracle(1.0, 8, times)[0], rtol=1e-7)
    with pytest.raises(ValueError):
        ode_solution(as_driver("linear(0,1)"), 0.0, 1.0, times)


@pytest.mark.parametrize("method", ["ode", "oracle"])
def test_counterexample_curve_shapes(method):
    ns = [2**k for k in range(0, 31, 3)]
    to_min, to_max = counterexample_curve(1.0, ns, method)
    assert to_min.diverges and to_min.limit == pytest.approx(1.0, rel=0.01)
    assert to_max.converges
    assert all(b < a for a, b in zip(to_min.distances, to_min.distances[1:]))
    assert all(b < a for a, b in zip(to_max.distances, to_max.distances[1:]))
    with pytest.raises(ValueError):
        counterexample_curve(1.0, ns, "lattice")
