from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, FrozenSet, List, Optional, Set, Tuple

import numpy as np

from .errors import DomainError
from .fock_core import (
	DEFAULT_TABLE,
	ModeLike,
	NumericMode,
	Scalar,
	check_nonnegative,
	log_sum_exp_signed,
	resolve_mode,
	scalar_sum,
)
from .macro_states import GainSpec, photon_spectrum
from .sweeps import ProgressCallback, run_grid

logger = logging.getLogger(__name__)

TSIRELSON_BOUND = 2.0 * math.sqrt(2.0)
LOCAL_BOUND = 2.0
ASYMPTOTIC_V_MAX = 2.0 / math.pi


@dataclass(frozen=True)
class ThresholdObservable:
	"""Dichotomic photon-number threshold measurement.

	+1 when the phi mode holds at most ``n_sigma`` photons and the orthogonal
	mode more; -1 for the mirrored case; 0 (inconclusive) otherwise.
	``angle`` is the measurement basis, a rotation of the (phi, phi_perp) pair.
	"""

	n_sigma: int
	angle: float = 0.0

	def __post_init__(self) -> None:
		check_nonnegative("N_sigma", self.n_sigma)

	def eigenvalue(self, n_phi: int, n_perp: int) -> int:
		if n_phi <= self.n_sigma < n_perp:
			return 1
		if n_perp <= self.n_sigma < n_phi:
			return -1
		return 0


@dataclass(frozen=True)
class AngleSettings:
	phi_a: float
	phi_a_prime: float
	phi_b: float
	phi_b_prime: float

	@classmethod
	def from_pi_units(cls, phi_a: float, phi_a_prime: float, phi_b: float, phi_b_prime: float) -> AngleSettings:
		return cls(phi_a * math.pi, phi_a_prime * math.pi, phi_b * math.pi, phi_b_prime * math.pi)

	def terms(self) -> List[Tuple[float, float, int]]:
		return [
			(self.phi_a, self.phi_b, 1),
			(self.phi_a, self.phi_b_prime, 1),
			(self.phi_a_prime, self.phi_b, 1),
			(self.phi_a_prime, self.phi_b_prime, -1),
		]

	def chsh_factor(self) -> float:
		"""CHSH combination of cos(2 delta); the Bell value of a cut is this times v."""
		return math.fsum(sign * math.cos(2.0 * (a - b)) for a, b, sign in self.terms())


# correlators go as cos(2*delta): optimal spacing is pi/8, and b' sits at -pi/8
OPTIMAL_SETTINGS = AngleSettings.from_pi_units(0.0, 0.25, 0.125, -0.125)


@dataclass(frozen=True)
class RegionPair:
	s_plus: range
	s_minus: range

	def as_sets(self) -> Tuple[FrozenSet[int], FrozenSet[int]]:
		return frozenset(self.s_plus), frozenset(self.s_minus)


RegionsFn = Callable[[int, int], RegionPair]


def _interval(members: List[int]) -> range:
	if not members:
		return range(0)
	return range(min(members), max(members) + 1)


def primitive_regions(N: int, n_sigma: int) -> RegionPair:
	N = check_nonnegative("N", N)
	n_sigma = check_nonnegative("N_sigma", n_sigma)
	plus = [k for k in range(N + 1) if 2 * k <= n_sigma and 2 * N - 2 * k + 1 > n_sigma]
	minus = [k for k in range(N + 1) if 2 * k > n_sigma and 2 * N - 2 * k + 1 <= n_sigma]
	return RegionPair(_interval(plus), _interval(minus))


def regions(N: int, n_sigma: int) -> RegionPair:
	"""Index ranges of the +1 and -1 outcomes over the phi_perp Fock components.

	Thresholds above N are reflected to 2N - n_sigma first; past 2N nothing
	is left to reflect and the set definitions are enumerated directly.
	"""
	N = check_nonnegative("N", N)
	n_sigma = check_nonnegative("N_sigma", n_sigma)
	if n_sigma > N:
		reflected = 2 * N - n_sigma
		if reflected < 0:
			return primitive_regions(N, n_sigma)
		n_sigma = reflected
	return RegionPair(range(0, n_sigma // 2 + 1), range(N - (n_sigma - 1) // 2, N + 1))


def optimal_threshold(N: int) -> int:
	N = check_nonnegative("N", N)
	return N if N % 2 == 0 else N - 1


@lru_cache(maxsize=None)
def _log_normalization_squared(N: int) -> float:
	return N * math.log(4.0) + DEFAULT_TABLE.log_factorial(N) + DEFAULT_TABLE.log_factorial(N + 1)


@lru_cache(maxsize=None)
def _term_f_exact(N: int, k: int) -> Fraction:
	table = DEFAULT_TABLE
	m2 = 4 ** N * table.factorial(N) * table.factorial(N + 1)
	return Fraction(table.binomial(N, k) ** 2 * table.factorial(2 * k) * table.factorial(2 * N - 2 * k + 1), m2)


def _log_term_f(N: int, ks: np.ndarray) -> np.ndarray:
	table = DEFAULT_TABLE
	log_binom = table.log_factorial(N) - table.log_factorial_array(ks) - table.log_factorial_array(N - ks)
	return 2.0 * log_binom + table.log_factorial_array(2 * ks) + table.log_factorial_array(2 * N - 2 * ks + 1) - _log_normalization_squared(N)


def term_F(N: int, k: int, mode: ModeLike = None) -> Scalar:
	N = check_nonnegative("N", N)
	if isinstance(k, bool) or int(k) != k or not 0 <= k <= N:
		raise DomainError(f"k={k!r} outside [0, {N}]")
	k = int(k)
	if resolve_mode(mode, N) is NumericMode.EXACT:
		return Scalar.from_fraction(_term_f_exact(N, k))
	return Scalar.from_log(1, float(_log_term_f(N, np.array([k]))[0]))


@lru_cache(maxsize=None)
def _region_sum_exact(N: int, s_plus: range, s_minus: range) -> Fraction:
	plus = sum((_term_f_exact(N, k) for k in s_plus), Fraction(0))
	minus = sum((_term_f_exact(N, k) for k in s_minus), Fraction(0))
	return plus - minus


def _region_sum_log(N: int, pair: RegionPair) -> Scalar:
	s_plus, s_minus = pair.s_plus, pair.s_minus
	top = s_plus.stop - 1 if len(s_plus) else -1
	mirrored = len(s_minus) - 1
	telescopes = (
		(not s_plus or s_plus.start == 0)
		and (not s_minus or s_minus.stop == N + 1)
		and mirrored <= top
		and 2 * N - 4 * mirrored > 0
	)
	if not telescopes:
		terms = [Scalar.from_log(1, float(v)) for v in _log_term_f(N, np.array(list(s_plus), dtype=np.int64))]
		terms += [Scalar.from_log(-1, float(v)) for v in _log_term_f(N, np.array(list(s_minus), dtype=np.int64))]
		return scalar_sum(terms, NumericMode.LOG)

	# F(k) - F(N-k) = (C(N,k)/M)^2 (2k)! (2N-2k)! (2N-4k) > 0 for k < N/2
	table = DEFAULT_TABLE
	paired = np.arange(0, mirrored + 1, dtype=np.int64)
	log_binom = table.log_factorial(N) - table.log_factorial_array(paired) - table.log_factorial_array(N - paired)
	log_diff = (
		2.0 * log_binom
		+ table.log_factorial_array(2 * paired)
		+ table.log_factorial_array(2 * N - 2 * paired)
		+ np.log((2 * N - 4 * paired).astype(float))
		- _log_normalization_squared(N)
	)
	unpaired = np.arange(mirrored + 1, top + 1, dtype=np.int64)
	log_terms = np.concatenate([log_diff, _log_term_f(N, unpaired)])
	return log_sum_exp_signed(log_terms, np.ones(log_terms.size, dtype=np.int64))


def distinguishability(N: int, n_sigma: int, mode: ModeLike = None, *, regions_fn: RegionsFn = regions) -> Scalar:
	"""Expectation of the threshold observable on |psi_phi_perp^N>."""
	N = check_nonnegative("N", N)
	n_sigma = check_nonnegative("N_sigma", n_sigma)
	pair = regions_fn(N, n_sigma)
	if resolve_mode(mode, N) is NumericMode.EXACT:
		return Scalar.from_fraction(_region_sum_exact(N, pair.s_plus, pair.s_minus))
	return _region_sum_log(N, pair)


@lru_cache(maxsize=None)
def _distinguishability_float(N: int, n_sigma: int, mode: Optional[NumericMode]) -> float:
	return distinguishability(N, n_sigma, mode).to_float()


def v_max_closed(N: int, mode: ModeLike = None) -> Scalar:
	"""Largest distinguishability of cut N: (C(N,[N/2]) 2^-N)^2 (N+1), or (N+2) for odd N."""
	N = check_nonnegative("N", N)
	half = N // 2
	factor = N + 1 if N % 2 == 0 else N + 2
	if resolve_mode(mode, N) is NumericMode.EXACT:
		return Scalar.from_fraction(Fraction(DEFAULT_TABLE.binomial(N, half) ** 2 * factor, 4 ** N))
	log_central = DEFAULT_TABLE.log_central(N)
	return Scalar.from_log(1, 2.0 * log_central + math.log(factor))


def v_max_asymptote(N: int) -> float:
	N = check_nonnegative("N", N)
	if N < 1:
		raise DomainError("asymptotic evaluation needs N >= 1")
	return v_max_closed(N, NumericMode.LOG).to_float()


def violates_chsh(v: Scalar) -> bool:
	# 2*sqrt(2)*v > 2  <=>  2 v^2 > 1 for v > 0, decidable exactly on rationals
	if v.sign <= 0:
		return False
	if v.is_exact:
		return 2 * v.exact * v.exact > 1
	return TSIRELSON_BOUND * v.to_float() > LOCAL_BOUND


def violation_frontier(max_n: int, mode: ModeLike = None) -> Set[int]:
	max_n = check_nonnegative("max_n", max_n)
	return {N for N in range(max_n + 1) if violates_chsh(v_max_closed(N, mode))}


def correlator(N: int, n_sigma: int, phi_a: float, phi_b: float, mode: ModeLike = None) -> float:
	mode = resolve_mode(mode, check_nonnegative("N", N))
	return math.cos(2.0 * (phi_a - phi_b)) * _distinguishability_float(N, n_sigma, mode)


def chsh_value(N: int, n_sigma: int, settings: AngleSettings, mode: ModeLike = None) -> float:
	mode = resolve_mode(mode, check_nonnegative("N", N))
	v = _distinguishability_float(N, check_nonnegative("N_sigma", n_sigma), mode)
	return v * settings.chsh_factor()


def preselected_chsh(
	gain: GainSpec,
	n_th: int,
	n_sigma: Optional[int],
	settings: AngleSettings = OPTIMAL_SETTINGS,
	mode: ModeLike = None,
) -> float:
	"""Bell value of the preselected state: the convex sum of the per-cut values.

	``n_sigma=None`` uses each cut's optimal threshold.
	"""
	spectrum = photon_spectrum(gain, n_th)
	terms = []
	for N, weight in spectrum:
		threshold = optimal_threshold(N) if n_sigma is None else n_sigma
		terms.append(weight * chsh_value(N, threshold, settings, mode))
	return math.fsum(terms)


def v_max_table(
	max_n: int,
	mode: ModeLike = None,
	*,
	max_workers: Optional[int] = None,
	progress_cb: Optional[ProgressCallback] = None,
) -> List[Tuple[int, Scalar]]:
	return run_grid(lambda N: v_max_closed(N, mode), range(check_nonnegative("max_n", max_n) + 1), phase="vmax", max_workers=max_workers, progress_cb=progress_cb)


def distinguishability_table(
	max_n: int,
	n_sigma: Optional[int] = None,
	mode: ModeLike = None,
	*,
	max_workers: Optional[int] = None,
	progress_cb: Optional[ProgressCallback] = None,
) -> List[Tuple[int, int, Scalar]]:
	max_n = check_nonnegative("max_n", max_n)
	if n_sigma is None:
		keys = [(N, s) for N in range(max_n + 1) for s in range(2 * N + 2)]
	else:
		keys = [(N, n_sigma) for N in range(max_n + 1)]
	rows = run_grid(lambda key: distinguishability(key[0], key[1], mode), keys, phase="dist", max_workers=max_workers, progress_cb=progress_cb)
	return [(N, s, v) for (N, s), v in rows]


def chsh_table(
	max_n: int,
	settings: AngleSettings = OPTIMAL_SETTINGS,
	mode: ModeLike = None,
	*,
	max_workers: Optional[int] = None,
	progress_cb: Optional[ProgressCallback] = None,
) -> List[Tuple[int, float]]:
	return run_grid(
		lambda N: chsh_value(N, optimal_threshold(N), settings, mode),
		range(check_nonnegative("max_n", max_n) + 1),
		phase="chsh",
		max_workers=max_workers,
		progress_cb=progress_cb,
	)
