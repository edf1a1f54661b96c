"""Driver catalog, terminal values and the growth/Lipschitz audits."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsdelab.drivers import (
    CatalogError,
    Driver,
    DriverFamily,
    TerminalValue,
    as_driver,
    audit_linear_growth,
    audit_lipschitz,
    catalog_lookup,
)
from bsdelab.dsl import DSLError


def test_remark33_values():
    g = catalog_lookup("remark33")
    assert g.A == 3.0 and g.lipschitz is None
    y = np.array([-8.0, -1.0, 0.0, 1.0, 27.0])
    np.testing.assert_allclose(g(0.0, y, 0.0), [12.0, 3.0, 0.0, 3.0, 27.0], rtol=1e-14)
    assert g.depends_on_y and not g.depends_on_z


def test_linear_constants():
    g = as_driver("linear(2, -3)")
    assert g.A == g.lipschitz == 3.0
    assert g(0.0, 1.0, 1.0) == -1.0
    assert as_driver("linear(a=0.5)")(0.0, 4.0, 100.0) == 2.0


def test_catalog_errors():
    with pytest.raises(CatalogError):
        catalog_lookup("nope")
    with pytest.raises(CatalogError):
        catalog_lookup("constant")
    with pytest.raises(CatalogError):
        as_driver("linear_family")


def test_dsl_driver_needs_growth_constant():
    with pytest.raises(DSLError):
        as_driver("y*y")
    g = as_driver("2*abs(y)", A=2.0, lipschitz=2.0)
    assert g.A == 2.0 and g.lipschitz == 2.0


def test_constant_source_gets_exact_constants():
    g = as_driver("0")
    assert (g.A, g.lipschitz) == (0.0, 0.0)
    g = as_driver("-2")
    assert (g.A, g.lipschitz) == (2.0, 0.0)
    np.testing.assert_array_equal(g(0.0, np.zeros(3), 0.0), [-2.0, -2.0, -2.0])


def test_driver_rejects_foreign_variables():
    with pytest.raises(DSLError):
        Driver(expr="y + w", A=1.0)
    with pytest.raises(ValueError):
        Driver(expr="y", A=-1.0)


def test_callable_driver_with_vector_z():
    g = Driver(func=lambda t, y, z: y + np.sum(np.abs(z), axis=-1), A=1.0, lipschitz=1.0,
               dim_z=2, name="l1")
    assert g(0.0, 1.0, np.array([1.0, -2.0])) == 4.0


def test_family_slice_and_domain():
    fam = catalog_lookup("linear_family")
    assert isinstance(fam, DriverFamily)
    assert fam.slice(0.5)(0.0, 4.0, 0.0) == 2.0
    assert fam.slice(0.0)(0.0, 4.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        fam.slice(2.0)
    neg = DriverFamily(expr="lam*y", domain=(-1.0, 1.0), lam0=0.0, A=1.0)
    assert neg.slice(-0.5)(0.0, 2.0, 0.0) == -1.0


def test_terminal_values():
    xi = TerminalValue("w")
    np.testing.assert_array_equal(xi(np.array([-1.0, 2.0])), [-1.0, 2.0])
    c = TerminalValue(-0.25)
    assert c.is_constant
    np.testing.assert_array_equal(c(np.zeros(2)), [-0.25, -0.25])
    with pytest.raises(DSLError):
        TerminalValue("y + w")


@pytest.mark.parametrize("name", ["remark33", "zero", "linear(1,1)", "linear(-0.5,2)"])
def test_catalog_passes_growth_audit(name):
    assert audit_linear_growth(as_driver(name), seed=1) <= 0


@pytest.mark.parametrize("name", ["zero", "linear(1,1)", "linear(-0.5,2)", "constant(c=3)"])
def test_catalog_passes_lipschitz_audit(name):
    assert audit_lipschitz(as_driver(name), seed=2) <= 0


def test_audits_catch_false_declarations():
    liar = Driver(expr="5*y", A=1.0, lipschitz=1.0)
    assert audit_linear_growth(liar) > 0
    assert audit_lipschitz(liar) > 0
    with pytest.raises(ValueError):
        audit_lipschitz(catalog_lookup("remark33"))


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
@settings(max_examples=200)
def test_remark33_is_even_and_below_growth_bound(y, z):
    g = catalog_lookup("remark33")
    assert g(0.0, y, z) == g(0.0, -y, z)
    assert g(0.0, y, z) <= 3.0 * (1.0 + abs(y)) + 1e-9
