from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from scipy.optimize import nnls
from scipy.stats import binom

from .bell import LOCAL_BOUND, OPTIMAL_SETTINGS, AngleSettings, ThresholdObservable
from .errors import DomainError, EmptySupportError
from .fock_core import DEFAULT_TABLE, ModeLike, NumericMode, Scalar, check_nonnegative, resolve_mode, scalar_sum
from .macro_states import GainSpec, Polarization, macro_qubit, photon_spectrum, truncation_cut
from .sweeps import ProgressCallback, run_grid

logger = logging.getLogger(__name__)

Probability = Union[Fraction, float]

# joint (N, M) grids larger than this are refused rather than allocated
MAX_JOINT_CELLS = 50_000_000
MIXTURE_MAX_N = 10
MIXTURE_MAX_M = 4
# Bell values of the beamsplitter mixture are refused past this truncation cut
BS_BELL_MAX_N = 200
# (N, M) cells lighter than this are left out of the Bell value
BS_BELL_WEIGHT_FLOOR = 1e-15


def _check_transmissivity(t2: Probability) -> Probability:
	if isinstance(t2, bool) or not isinstance(t2, (int, float, Fraction)):
		raise DomainError(f"transmissivity must be a real number, got {t2!r}")
	if not 0 < t2 <= 1:
		raise DomainError(f"transmissivity t2 must lie in (0, 1], got {t2!r}")
	return t2


@dataclass(frozen=True)
class LossSpec:
	t2: Probability
	M: int = 0
	k_th: int = 0

	def __post_init__(self) -> None:
		_check_transmissivity(self.t2)
		check_nonnegative("M", self.M)
		check_nonnegative("K_th", self.k_th)

	@property
	def reflectivity(self) -> Probability:
		return 1 - self.t2

	def check_cut(self, N: int) -> None:
		if self.M > 2 * N + 1:
			raise DomainError(f"M={self.M} exceeds the 2N+1={2 * N + 1} photons of cut N={N}")


@dataclass(frozen=True)
class LossPatternWeight:
	"""n photons taken from the phi mode and M - n from phi_perp, weighted 1/(n!(M-n)!)."""

	n: int
	M: int

	def __post_init__(self) -> None:
		if not 0 <= self.n <= self.M:
			raise DomainError(f"loss pattern n={self.n} outside [0, {self.M}]")

	@property
	def weight(self) -> Fraction:
		return Fraction(1, DEFAULT_TABLE.factorial(self.n) * DEFAULT_TABLE.factorial(self.M - self.n))

	def scalar(self, mode: NumericMode) -> Scalar:
		if mode is NumericMode.EXACT:
			return Scalar.from_fraction(self.weight)
		return Scalar.from_log(1, -DEFAULT_TABLE.log_factorial(self.n) - DEFAULT_TABLE.log_factorial(self.M - self.n))


def loss_patterns(M: int) -> List[LossPatternWeight]:
	M = check_nonnegative("M", M)
	return [LossPatternWeight(n, M) for n in range(M + 1)]


def reflected_count_distribution(N: int, t2: Probability) -> Dict[int, Probability]:
	"""Probability of reflecting M of the 2N+1 macro photons, M = 0..2N+1.

	Loss is polarization independent, so the count is Binomial(2N+1, 1-t2)
	whatever the amplitudes. A rational ``t2`` gives exact probabilities; a
	float goes through ``scipy.stats.binom``.
	"""
	N = check_nonnegative("N", N)
	t2 = _check_transmissivity(t2)
	photons = 2 * N + 1
	if isinstance(t2, float):
		pmf = binom.pmf(np.arange(photons + 1), photons, 1.0 - t2)
		return {M: float(p) for M, p in enumerate(pmf)}
	r = 1 - t2
	return {M: math.comb(photons, M) * r ** M * t2 ** (photons - M) for M in range(photons + 1)}


def lossy_distinguishability(N: int, M: int, n_sigma: int, mode: ModeLike = None) -> Scalar:
	N = check_nonnegative("N", N)
	M = check_nonnegative("M", M)
	observable = ThresholdObservable(check_nonnegative("N_sigma", n_sigma))
	if M > 2 * N + 1:
		raise DomainError(f"M={M} exceeds the 2N+1={2 * N + 1} photons of cut N={N}")
	mode = resolve_mode(mode, N)
	state = macro_qubit(N, Polarization.PHI_PERP, mode).to_fock_vector()
	terms: List[Scalar] = []
	for pattern in loss_patterns(M):
		reduced = state.annihilate(pattern.n, pattern.M - pattern.n)
		if reduced.populations:
			terms.append(reduced.expectation(observable.eigenvalue) * pattern.scalar(mode))
	return scalar_sum(terms, mode) / DEFAULT_TABLE.binomial(2 * N + 1, M)


def lossy_diagonal(N: int, M: int, n_sigma: int) -> List[Fraction]:
	"""Diagonal of the lossy observable over the kets |a, 2N+1-a>, a = 0..2N+1."""
	observable = ThresholdObservable(n_sigma)
	photons = 2 * N + 1
	norm = math.comb(photons, M)
	diagonal: List[Fraction] = []
	for a in range(photons + 1):
		b = photons - a
		total = sum(math.comb(a, n) * math.comb(b, M - n) * observable.eigenvalue(a - n, b - M + n) for n in range(M + 1) if n <= a and M - n <= b)
		diagonal.append(Fraction(total, norm))
	return diagonal


def _threshold_column(N: int, n_sigma: int) -> np.ndarray:
	observable = ThresholdObservable(n_sigma)
	photons = 2 * N + 1
	return np.array([observable.eigenvalue(a, photons - a) for a in range(photons + 1)], dtype=float)


def _fit(target: np.ndarray, thresholds: range, N: int) -> Tuple[Dict[int, float], float]:
	if len(thresholds) == 0:
		return {}, float(np.linalg.norm(target))
	design = np.column_stack([_threshold_column(N, s) for s in thresholds])
	try:
		coeffs, rnorm = nnls(design, target)
	except RuntimeError as e:
		logger.warning("nnls did not converge for N=%d: %s", N, e)
		return {s: 0.0 for s in thresholds}, float(np.linalg.norm(target))
	return {s: float(c) for s, c in zip(thresholds, coeffs)}, float(rnorm)


@dataclass(frozen=True)
class MixtureFit:
	N: int
	M: int
	n_sigma: int
	support: range
	weights: Dict[int, float]
	residual: float
	unrestricted_weights: Dict[int, float]
	unrestricted_residual: float

	@property
	def weight_sum(self) -> float:
		return math.fsum(self.weights.values())

	@property
	def within_budget(self) -> bool:
		return self.weight_sum <= 1.0 + 1e-9

	@property
	def exact(self) -> bool:
		return self.residual <= 1e-9


def threshold_mixture_check(N: int, M: int, n_sigma: int) -> MixtureFit:
	"""Fit the lossy observable's diagonal as a nonnegative mix of threshold observables.

	The restricted fit only allows thresholds in [min(n_sigma, M), M + n_sigma];
	the unrestricted one allows every threshold 0..2N+1.
	"""
	N = check_nonnegative("N", N)
	M = check_nonnegative("M", M)
	n_sigma = check_nonnegative("N_sigma", n_sigma)
	if N > MIXTURE_MAX_N or M > MIXTURE_MAX_M:
		raise DomainError(f"mixture check is limited to N <= {MIXTURE_MAX_N}, M <= {MIXTURE_MAX_M}")
	if M > 2 * N + 1:
		raise DomainError(f"M={M} exceeds the 2N+1={2 * N + 1} photons of cut N={N}")
	target = np.array([float(d) for d in lossy_diagonal(N, M, n_sigma)])
	support = range(min(n_sigma, M), M + n_sigma + 1)
	weights, residual = _fit(target, support, N)
	free_weights, free_residual = _fit(target, range(0, 2 * N + 2), N)
	return MixtureFit(N, M, n_sigma, support, weights, residual, free_weights, free_residual)


@dataclass(frozen=True, eq=False)
class BsSpectrum:
	"""Joint weights over (cut N, reflected count M) after beamsplitter preselection."""

	n_values: np.ndarray
	joint: np.ndarray
	k_th: int
	t2: float
	acceptance: float

	def marginal_n(self) -> Dict[int, float]:
		return {int(n): float(w) for n, w in zip(self.n_values, self.joint.sum(axis=1)) if w > 0.0}

	def transmitted_spectrum(self) -> Dict[int, float]:
		out: Dict[int, float] = {}
		for i, N in enumerate(self.n_values):
			for M in np.nonzero(self.joint[i])[0]:
				photons = 2 * int(N) + 1 - int(M)
				out[photons] = out.get(photons, 0.0) + float(self.joint[i, M])
		return dict(sorted(out.items()))


def bs_preselect_spectrum(gain: GainSpec, t2: float, k_th: int) -> BsSpectrum:
	t2 = float(_check_transmissivity(t2))
	k_th = check_nonnegative("K_th", k_th)
	prior = photon_spectrum(gain, 0)
	ns = prior.n_values
	n_max = int(ns[-1])
	if len(ns) * (2 * n_max + 2) > MAX_JOINT_CELLS:
		raise DomainError(f"beamsplitter grid for g={gain.g} too large ({len(ns)} cuts)")
	ms = np.arange(2 * n_max + 2)
	pmf = binom.pmf(ms[None, :], (2 * ns + 1)[:, None], 1.0 - t2)
	pmf[:, ms < k_th] = 0.0
	joint = prior.weights[:, None] * pmf
	mass = float(joint.sum())
	if not mass > 0.0:
		raise EmptySupportError(f"no reflected count >= K_th={k_th} is reachable at t2={t2}, g={gain.g}")
	return BsSpectrum(ns, joint / mass, k_th, t2, mass)


@dataclass(frozen=True)
class BsBellValue:
	"""CHSH value of the beamsplitter-preselected state, split by reflected count and by cut.

	``by_count[M]`` is the value of the state conditioned on M reflected
	photons; ``by_cell[(N, M)]`` the value of its cut-N component.
	"""

	k_th: int
	n_sigma: int
	value: float
	acceptance: float
	count_weights: Dict[int, float]
	by_count: Dict[int, float]
	by_cell: Dict[Tuple[int, int], float]

	def violating_counts(self) -> List[int]:
		return [M for M, v in self.by_count.items() if v > LOCAL_BOUND]

	def violating_cuts(self, M: int) -> List[int]:
		return [N for (N, m), v in self.by_cell.items() if m == M and v > LOCAL_BOUND]


def bs_preselected_chsh(
	gain: GainSpec,
	t2: float,
	k_th: int,
	n_sigma: int,
	settings: AngleSettings = OPTIMAL_SETTINGS,
	mode: ModeLike = None,
	*,
	max_workers: Optional[int] = None,
	progress_cb: Optional[ProgressCallback] = None,
) -> BsBellValue:
	"""Bell value after conditioning on at least ``k_th`` reflected photons.

	Every (N, M) cell of the joint spectrum contributes its weight times the
	CHSH factor times the lossy distinguishability of cut N with M photons
	reflected. Cells lighter than ``BS_BELL_WEIGHT_FLOOR`` are skipped, and a
	cell that lost every macro photon contributes 0.
	"""
	n_sigma = check_nonnegative("N_sigma", n_sigma)
	n_max = truncation_cut(gain, 0)
	if n_max > BS_BELL_MAX_N:
		raise DomainError(f"Bell value of the beamsplitter mixture is limited to truncation cuts N <= {BS_BELL_MAX_N}, g={gain.g} needs {n_max}")
	spectrum = bs_preselect_spectrum(gain, t2, k_th)
	factor = settings.chsh_factor()
	weights: Dict[Tuple[int, int], float] = {}
	for i, N in enumerate(spectrum.n_values):
		for M in np.nonzero(spectrum.joint[i] > BS_BELL_WEIGHT_FLOOR)[0]:
			weights[(int(N), int(M))] = float(spectrum.joint[i, M])
	if not weights:
		raise EmptySupportError(f"no (N, M) cell above weight {BS_BELL_WEIGHT_FLOOR} at K_th={k_th}")

	def cell_value(cell: Tuple[int, int]) -> float:
		N, M = cell
		if M > 2 * N:
			return 0.0
		return factor * lossy_distinguishability(N, M, n_sigma, mode).to_float()

	by_cell = dict(run_grid(cell_value, list(weights), phase="bs-chsh", max_workers=max_workers, progress_cb=progress_cb))
	count_weights: Dict[int, List[float]] = {}
	count_values: Dict[int, List[float]] = {}
	for (N, M), w in weights.items():
		count_weights.setdefault(M, []).append(w)
		count_values.setdefault(M, []).append(w * by_cell[(N, M)])
	p_count = {M: math.fsum(ws) for M, ws in sorted(count_weights.items())}
	by_count = {M: math.fsum(count_values[M]) / p_m for M, p_m in p_count.items()}
	total = math.fsum(weights.values())
	value = math.fsum(w * by_cell[cell] for cell, w in weights.items()) / total
	logger.debug("bs chsh g=%s t2=%s K_th=%d N_sigma=%d: %d cells, value %.6f", gain.g, t2, k_th, n_sigma, len(weights), value)
	return BsBellValue(
		k_th,
		n_sigma,
		value,
		spectrum.acceptance,
		{M: p_m / total for M, p_m in p_count.items()},
		by_count,
		by_cell,
	)


@dataclass(frozen=True)
class ConvergenceRow:
	k_th: int
	best_n_th: int
	tv_distance: float


def total_variation(p: Dict[int, float], q: Dict[int, float]) -> float:
	return 0.5 * math.fsum(abs(p.get(n, 0.0) - q.get(n, 0.0)) for n in set(p) | set(q))


def bs_convergence_report(
	gain: GainSpec,
	t2: float,
	k_values: Iterable[int],
	*,
	max_workers: Optional[int] = None,
	progress_cb: Optional[ProgressCallback] = None,
) -> List[ConvergenceRow]:
	"""For each K_th, the theoretical threshold N_th whose spectrum is closest in total variation."""
	n_max = truncation_cut(gain, 0)
	candidates: List[Tuple[int, Dict[int, float]]] = []
	for n_th in range(n_max + 1):
		try:
			candidates.append((n_th, photon_spectrum(gain, n_th).as_dict()))
		except EmptySupportError:
			break

	def best_match(k_th: int) -> Optional[ConvergenceRow]:
		try:
			marginal = bs_preselect_spectrum(gain, t2, k_th).marginal_n()
		except EmptySupportError as e:
			logger.warning("K_th=%d skipped: %s", k_th, e)
			return None
		distance, n_th = min((total_variation(marginal, q), n_th) for n_th, q in candidates)
		return ConvergenceRow(k_th, n_th, distance)

	rows = run_grid(best_match, k_values, phase="bs-preselect", max_workers=max_workers, progress_cb=progress_cb)
	return [row for _, row in rows if row is not None]


def lossy_table(
	max_n: int,
	max_m: int,
	mode: ModeLike = None,
	*,
	max_workers: Optional[int] = None,
	progress_cb: Optional[ProgressCallback] = None,
) -> List[Tuple[int, int, int, Scalar]]:
	max_n = check_nonnegative("max_n", max_n)
	max_m = check_nonnegative("max_m", max_m)
	keys = [
		(N, M, s)
		for N in range(max_n + 1)
		for M in range(min(max_m, 2 * N) + 1)
		for s in range(2 * N + 2 - M)
	]
	rows = run_grid(lambda key: lossy_distinguishability(*key, mode=mode), keys, phase="loss", max_workers=max_workers, progress_cb=progress_cb)
	return [(N, M, s, v) for (N, M, s), v in rows]
