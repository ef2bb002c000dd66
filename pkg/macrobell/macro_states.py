from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, Iterator, List, Set, Tuple, Union

import numpy as np

from .errors import DomainError, EmptySupportError
from .fock_core import (
	DEFAULT_TABLE,
	ModeLike,
	NumericMode,
	Scalar,
	check_nonnegative,
	resolve_mode,
	scalar_sum,
)

logger = logging.getLogger(__name__)

DEFAULT_TRUNCATION_EPSILON = 1e-12
# hard stop for the beta series; tanh(g)**2 rounds to 1.0 long before g ~ 20
MAX_CUT = 50_000_000

Ket = Tuple[int, int]


class Polarization(Enum):
	PHI = "phi"
	PHI_PERP = "phi_perp"


@dataclass(frozen=True)
class GainSpec:
	g: float
	truncation_epsilon: float = DEFAULT_TRUNCATION_EPSILON

	def __post_init__(self) -> None:
		if not math.isfinite(self.g) or self.g < 0:
			raise DomainError(f"gain must be finite and >= 0, got {self.g!r}")
		if not 0.0 < self.truncation_epsilon < 1.0:
			raise DomainError(f"truncation epsilon must lie in (0, 1), got {self.truncation_epsilon!r}")

	@property
	def c_g(self) -> float:
		return math.cosh(self.g)

	@property
	def t_g(self) -> float:
		return math.tanh(self.g)

	@property
	def log_c_g(self) -> float:
		return self.g + math.log1p(math.exp(-2.0 * self.g)) - math.log(2.0)

	@property
	def log_t_g(self) -> float:
		if self.g == 0.0:
			return float("-inf")
		e = math.exp(-2.0 * self.g)
		return math.log1p(-e) - math.log1p(e)

	@property
	def x(self) -> float:
		return self.t_g ** 2

	@property
	def one_minus_x(self) -> float:
		# 1 - tanh^2 = cosh^-2, kept separate so it does not round to 0
		return math.exp(-2.0 * self.log_c_g)

	@property
	def mean_population(self) -> float:
		return math.sinh(self.g) ** 2


def _normalization_squared(N: int) -> int:
	return 4 ** N * DEFAULT_TABLE.factorial(N) * DEFAULT_TABLE.factorial(N + 1)


def _log_normalization_squared(N: int) -> float:
	return N * math.log(4.0) + DEFAULT_TABLE.log_factorial(N) + DEFAULT_TABLE.log_factorial(N + 1)


def fock_ket(N: int, k: int, polarization: Polarization) -> Ket:
	if polarization is Polarization.PHI:
		return (2 * k + 1, 2 * N - 2 * k)
	return (2 * k, 2 * N - 2 * k + 1)


def _falling(n: int, r: int, mode: NumericMode) -> Scalar:
	if mode is NumericMode.EXACT:
		return Scalar.from_fraction(DEFAULT_TABLE.factorial(n) // DEFAULT_TABLE.factorial(n - r))
	return Scalar.from_log(1, DEFAULT_TABLE.log_factorial(n) - DEFAULT_TABLE.log_factorial(n - r))


@dataclass(frozen=True, eq=False)
class TwoModeFockVector:
	"""Sparse two-mode state stored as squared amplitudes per |n_phi, n_perp>.

	Every state built here has real nonnegative amplitudes, so populations
	determine it completely.
	"""

	populations: Dict[Ket, Scalar]
	mode: NumericMode

	def norm_squared(self) -> Scalar:
		return scalar_sum(list(self.populations.values()), self.mode)

	def total_photons(self) -> Set[int]:
		return {a + b for a, b in self.populations}

	def amplitude(self, ket: Ket) -> float:
		pop = self.populations.get(ket)
		return 0.0 if pop is None else math.sqrt(pop.to_float())

	def annihilate(self, n_phi: int, n_perp: int) -> TwoModeFockVector:
		# a^r |n> = sqrt(n!/(n-r)!) |n-r>; the ket map is injective so populations just rescale
		out: Dict[Ket, Scalar] = {}
		for (a, b), pop in self.populations.items():
			if a < n_phi or b < n_perp:
				continue
			out[(a - n_phi, b - n_perp)] = pop * _falling(a, n_phi, self.mode) * _falling(b, n_perp, self.mode)
		return TwoModeFockVector(out, self.mode)

	def expectation(self, eigenvalue: Callable[[int, int], int]) -> Scalar:
		terms: List[Scalar] = []
		for (a, b), pop in self.populations.items():
			ev = eigenvalue(a, b)
			if ev:
				terms.append(pop * ev)
		return scalar_sum(terms, self.mode)


@dataclass(frozen=True, eq=False)
class MacroQubit:
	N: int
	polarization: Polarization
	mode: NumericMode
	weights: Tuple[Scalar, ...]

	@property
	def normalization_squared(self) -> int:
		return _normalization_squared(self.N)

	@property
	def normalization(self) -> Scalar:
		return Scalar.from_log(1, _log_normalization_squared(self.N) / 2.0)

	@property
	def coeffs(self) -> Tuple[Scalar, ...]:
		return tuple(w.sqrt() for w in self.weights)

	def ket(self, k: int) -> Ket:
		return fock_ket(self.N, k, self.polarization)

	def kets(self) -> List[Ket]:
		return [self.ket(k) for k in range(self.N + 1)]

	def amplitudes(self) -> np.ndarray:
		return np.sqrt(np.array([w.to_float() for w in self.weights]))

	def norm_squared(self) -> Scalar:
		return scalar_sum(list(self.weights), self.mode)

	def to_fock_vector(self) -> TwoModeFockVector:
		return TwoModeFockVector(dict(zip(self.kets(), self.weights)), self.mode)


def macro_qubit(N: int, polarization: Union[Polarization, str], mode: ModeLike = None) -> MacroQubit:
	"""Fock decomposition of the amplified single photon at cut ``N``.

	Weight of ket k is ``C(N,k)^2 (2k+1)! (2N-2k)! / M^2`` for ``phi`` and
	``C(N,k)^2 (2k)! (2N-2k+1)! / M^2`` for ``phi_perp``, with
	``M^2 = 4^N N! (N+1)!``.
	"""
	N = check_nonnegative("N", N)
	polarization = Polarization(polarization)
	mode = resolve_mode(mode, N)
	table = DEFAULT_TABLE
	kets = [fock_ket(N, k, polarization) for k in range(N + 1)]
	if mode is NumericMode.EXACT:
		m2 = _normalization_squared(N)
		weights = tuple(
			Scalar.from_fraction(Fraction(table.binomial(N, k) ** 2 * table.factorial(a) * table.factorial(b), m2))
			for k, (a, b) in enumerate(kets)
		)
	else:
		ks = np.arange(N + 1)
		n1 = np.array([a for a, _ in kets])
		n2 = np.array([b for _, b in kets])
		log_binom = table.log_factorial(N) - table.log_factorial_array(ks) - table.log_factorial_array(N - ks)
		log_w = 2.0 * log_binom + table.log_factorial_array(n1) + table.log_factorial_array(n2) - _log_normalization_squared(N)
		weights = tuple(Scalar.from_log(1, float(v)) for v in log_w)
	return MacroQubit(N, polarization, mode, weights)


def beta(N: int, gain: GainSpec) -> Scalar:
	"""Cut amplitude ``C_g^-2 T_g^N sqrt(N+1)`` as a log-space scalar."""
	N = check_nonnegative("N", N)
	if gain.g == 0.0:
		return Scalar.one(NumericMode.LOG) if N == 0 else Scalar.zero(NumericMode.LOG)
	return Scalar.from_log(1, -2.0 * gain.log_c_g + N * gain.log_t_g + 0.5 * math.log(N + 1))


def truncation_cut(gain: GainSpec, n_th: int = 0) -> int:
	"""Smallest N_max whose tail beyond it carries less than epsilon of the mass above n_th.

	The tail of sum_N (N+1) x^N (1-x)^2 from K on is x^K (1 + K(1-x)); it is
	monotone in K, so exponential search plus bisection finds the cut.
	"""
	n_th = check_nonnegative("N_th", n_th)
	if gain.g == 0.0:
		return n_th
	log_x = 2.0 * gain.log_t_g
	omx = gain.one_minus_x
	log_eps = math.log(gain.truncation_epsilon)
	head = math.log1p(n_th * omx)

	def log_tail(offset: int) -> float:
		K = n_th + offset
		return offset * log_x + math.log1p(K * omx) - head

	hi = 1
	while log_tail(hi) >= log_eps:
		hi *= 2
		if hi > MAX_CUT:
			raise DomainError(f"beta series for g={gain.g} does not reach epsilon below N={MAX_CUT}")
	lo = hi // 2 if hi > 1 else 0
	while hi - lo > 1:
		mid = (lo + hi) // 2
		if log_tail(mid) < log_eps:
			hi = mid
		else:
			lo = mid
	return n_th + hi - 1


@dataclass(frozen=True, eq=False)
class PhotonSpectrum:
	n_values: np.ndarray
	weights: np.ndarray
	n_threshold: int
	truncation_n_max: int
	truncation_epsilon: float = DEFAULT_TRUNCATION_EPSILON
	# probability that the unconditioned source passes the N >= n_threshold cut
	acceptance: float = 1.0

	def __iter__(self) -> Iterator[Tuple[int, float]]:
		for n, w in zip(self.n_values, self.weights):
			yield int(n), float(w)

	def __len__(self) -> int:
		return len(self.n_values)

	def as_dict(self) -> Dict[int, float]:
		return dict(iter(self))

	def weight(self, N: int) -> float:
		if N < self.n_threshold or N > self.truncation_n_max:
			return 0.0
		return float(self.weights[N - int(self.n_values[0])])

	def total(self) -> float:
		return math.fsum(self.weights)

	def preselect(self, n_th: int) -> PhotonSpectrum:
		n_th = check_nonnegative("N_th", n_th)
		if n_th <= self.n_threshold:
			return self
		keep = self.n_values >= n_th
		mass = math.fsum(self.weights[keep])
		if not keep.any() or mass <= 0.0:
			raise EmptySupportError(f"no weight left at N >= {n_th}")
		return PhotonSpectrum(
			self.n_values[keep], self.weights[keep] / mass, n_th, self.truncation_n_max, self.truncation_epsilon, self.acceptance * mass
		)


def preselection_acceptance(gain: GainSpec, n_th: int) -> float:
	"""sum_{N >= n_th} beta_N^2 = x^n_th (1 + n_th (1 - x)), with x = tanh(g)^2."""
	n_th = check_nonnegative("N_th", n_th)
	if n_th == 0:
		return 1.0
	if gain.g == 0.0:
		return 0.0
	return math.exp(2.0 * n_th * gain.log_t_g + math.log1p(n_th * gain.one_minus_x))


def photon_spectrum(gain: GainSpec, n_th: int = 0) -> PhotonSpectrum:
	"""Cut weights beta_N^2 after theoretical preselection at n_th, renormalized."""
	n_th = check_nonnegative("N_th", n_th)
	if gain.g == 0.0 and n_th >= 1:
		raise EmptySupportError("g = 0 leaves only the N = 0 cut; preselection at N_th >= 1 removes it")
	n_max = truncation_cut(gain, n_th)
	ns = np.arange(n_th, n_max + 1)
	omx = gain.one_minus_x
	raw = omx ** 2 * np.power(gain.x, ns - n_th) * (ns + 1) / (1.0 + n_th * omx)
	mass = math.fsum(raw)
	if mass <= 0.0:
		raise EmptySupportError(f"spectrum for g={gain.g} has no representable weight above N_th={n_th}")
	logger.debug("spectrum g=%s N_th=%d truncated at N_max=%d (kept mass %.15g)", gain.g, n_th, n_max, mass)
	return PhotonSpectrum(ns, raw / mass, n_th, n_max, gain.truncation_epsilon, preselection_acceptance(gain, n_th))


def mean_total_photons(spectrum: PhotonSpectrum) -> float:
	# 2N+1 macro photons plus the micro photon
	return math.fsum(spectrum.weights * (2 * spectrum.n_values + 2))


def default_threshold(spectrum: PhotonSpectrum, N: int) -> int:
	guess = int(round(mean_total_photons(spectrum) / 2.0)) - 1
	return min(max(guess, 0), 2 * N + 1)
