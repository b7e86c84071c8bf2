"""Shared fixtures: the expensive spectral decompositions are built once."""

import numpy as np
import pytest

from stabcert.domain import from_callable, make_grid
from stabcert.operators import FractionalLaplacian, Schrodinger, ShiftedHermite, diagonalize


@pytest.fixture(scope="session")
def hermite_dec():
    """Shifted harmonic oscillator with c = 0 on the reference wall grid."""
    return diagonalize(ShiftedHermite(c=0.0), make_grid(1, 10.0, 512, periodic=False))


@pytest.fixture(scope="session")
def frac_dec():
    """|xi| symbol (s = 1, c = 0) on the reference periodic grid."""
    return diagonalize(FractionalLaplacian(s=1.0), make_grid(1, 10.0, 512, periodic=True))


@pytest.fixture(scope="session")
def shifted_potential_dec():
    """Schrodinger with V = x^2 - 4: exactly two unstable modes."""
    dom = make_grid(1, 10.0, 512, periodic=False)
    pot = from_callable(dom, lambda x: x**2 - 4.0)
    return diagonalize(Schrodinger(potential=pot), dom)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
