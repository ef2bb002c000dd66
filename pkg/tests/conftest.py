from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from macrobell.fock_core import NumericMode
from macrobell.oracle import ORACLE_SEED


@pytest.fixture
def rng() -> np.random.Generator:
	return np.random.default_rng(ORACLE_SEED)


@pytest.fixture(params=[NumericMode.EXACT, NumericMode.LOG], ids=["exact", "log"])
def mode(request) -> NumericMode:
	return request.param


# v(N, N_sigma) on |psi_phi_perp^N>, worked out by hand from the Fock weights
DISTINGUISHABILITY_FIXTURES = {
	(0, 0): Fraction(1),
	(0, 1): Fraction(0),
	(1, 0): Fraction(3, 4),
	(1, 1): Fraction(1, 2),
	(1, 2): Fraction(3, 4),
	(1, 3): Fraction(0),
	(2, 0): Fraction(5, 8),
	(2, 1): Fraction(1, 2),
	(2, 2): Fraction(3, 4),
	(2, 3): Fraction(1, 2),
	(2, 4): Fraction(5, 8),
	(2, 5): Fraction(0),
}

V_MAX_FIXTURES = [Fraction(1), Fraction(3, 4), Fraction(3, 4), Fraction(45, 64), Fraction(45, 64)]
