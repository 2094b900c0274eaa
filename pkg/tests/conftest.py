import numpy as np
import pytest

from ksm_stab import sigma as sg
from ksm_stab.datasets import load_dataset
from ksm_stab.field_solver import find_tau0, solve_soliton
from ksm_stab.functionals import Functionals, normalize_field
from ksm_stab.ksm import h_stats


@pytest.fixture(scope="session")
def z1():
    return load_dataset("Z1")


@pytest.fixture(scope="session")
def z2():
    return load_dataset("Z2")


@pytest.fixture(scope="session")
def p1_fiber():
    return load_dataset("p1-fiber")


@pytest.fixture(scope="session")
def p2_fiber():
    return load_dataset("P2-fiber")


@pytest.fixture(scope="session")
def square_fiber():
    return load_dataset("square-fiber")


@pytest.fixture(scope="session")
def z1_soliton_fn(z1):
    """Functionals for Z1 with the solved Kaehler-Ricci field (b_g ~ 0)."""
    rep = solve_soliton(z1)
    assert rep.success
    fld = normalize_field(list(rep.coefficients), h_stats(z1), z1.dual())
    return Functionals(z1, sg.linear(0.0), fld)


@pytest.fixture(scope="session")
def z2_soliton_fn(z2):
    rep = solve_soliton(z2)
    assert rep.success
    fld = normalize_field(list(rep.coefficients), h_stats(z2), z2.dual())
    return Functionals(z2, sg.linear(0.0), fld)


@pytest.fixture(scope="session")
def z2_tau0(z2):
    """(tau0, Functionals) at the Z2 boundary field: the non-uniform instance."""
    from fractions import Fraction

    tau0, rep = find_tau0(z2)
    assert rep.success
    fld = normalize_field([Fraction(31, 19)], h_stats(z2), z2.dual())
    return tau0, Functionals(z2, sg.tau_mix(tau0), fld)


@pytest.fixture(scope="session")
def product_fn(p1_fiber):
    """The analytic-oracle instance: bare P^1 fiber, constant sigma, c = 0."""
    fld = normalize_field([0], h_stats(p1_fiber), p1_fiber.dual())
    return Functionals(p1_fiber, sg.constant(0.0), fld)


@pytest.fixture(scope="session")
def unstable_z1_fn(z1):
    """Z1 with c = 0 and constant sigma: b_g = b_h = 1/6, unstable."""
    fld = normalize_field([0], h_stats(z1), z1.dual())
    return Functionals(z1, sg.constant(0.0), fld)


def product_oracle_dual_values(z: np.ndarray) -> np.ndarray:
    """Exact Legendre dual of 2 log cosh(y/2) + log 2 on [-1, 1]."""
    with np.errstate(all="ignore"):
        w = (1 + z) * np.log1p(z) + (1 - z) * np.log1p(-z) - np.log(2)
    w = np.where(np.abs(z) >= 1.0, np.log(2), w)
    return w
