from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.linalg import expm

from .bell import AngleSettings, ThresholdObservable
from .errors import DimensionError, DomainError
from .fock_core import NumericMode, check_nonnegative
from .macro_states import Ket, Polarization, macro_qubit

logger = logging.getLogger(__name__)

# micro qubit index: b = 0 is one photon in phi, b = 1 one photon in phi_perp
MICRO_PHI = 0
MICRO_PERP = 1

ORACLE_SEED = 20240611
ORACLE_MAX_N = 8
ORACLE_CHSH_MAX_N = 6
ORACLE_LOSS_MAX_N = 5


def default_cutoff(N: int) -> int:
	return 2 * N + 2


def destroy(dim: int) -> np.ndarray:
	return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)


def number_operator(cutoff: int) -> np.ndarray:
	"""Total photon number on two modes truncated at ``cutoff`` photons each."""
	n = np.arange(cutoff + 1, dtype=float)
	return np.diag(np.add.outer(n, n).ravel())


def micro_observable(theta: float) -> np.ndarray:
	c, s = math.cos(2.0 * theta), math.sin(2.0 * theta)
	return np.array([[c, s], [s, -c]])


@lru_cache(maxsize=256)
def _rotation_matrix(cutoff: int, angle: float) -> np.ndarray:
	a = destroy(cutoff + 1)
	eye = np.eye(cutoff + 1)
	a_phi = np.kron(a, eye)
	a_perp = np.kron(eye, a)
	generator = a_perp.T @ a_phi - a_phi.T @ a_perp
	out = expm(angle * generator)
	out.setflags(write=False)
	return out


@dataclass(frozen=True)
class ModeRotation:
	"""Passive polarization rotation a_phi^+ -> cos(angle) a_phi^+ + sin(angle) a_perp^+."""

	angle: float

	def matrix(self, cutoff: int) -> np.ndarray:
		return _rotation_matrix(cutoff, float(self.angle))

	def micro_matrix(self) -> np.ndarray:
		c, s = math.cos(self.angle), math.sin(self.angle)
		return np.array([[c, -s], [s, c]])

	def inverse(self) -> ModeRotation:
		return ModeRotation(-self.angle)


@dataclass(frozen=True, eq=False)
class DenseState:
	cutoff: int
	amplitudes: np.ndarray

	def __post_init__(self) -> None:
		dim = self.cutoff + 1
		if self.amplitudes.shape != (dim, dim, 2):
			raise DimensionError(f"amplitudes of shape {self.amplitudes.shape} do not match cutoff {self.cutoff}")

	@property
	def dim(self) -> int:
		return (self.cutoff + 1) ** 2

	@property
	def flat(self) -> np.ndarray:
		return self.amplitudes.reshape(-1)

	def norm_squared(self) -> float:
		return float(np.vdot(self.flat, self.flat).real)

	def nonzero(self) -> Dict[Tuple[int, int, int], float]:
		return {tuple(int(i) for i in idx): float(self.amplitudes[idx]) for idx in zip(*np.nonzero(self.amplitudes))}


@dataclass(frozen=True, eq=False)
class DiagonalObservable:
	"""sum_kl alpha_kl |k,l><k,l| on the macro pair, tensored with a 2x2 micro operator."""

	coefficients: Dict[Ket, float]
	micro: np.ndarray = field(default_factory=lambda: np.eye(2))

	def __post_init__(self) -> None:
		if self.micro.shape != (2, 2) or not np.allclose(self.micro, self.micro.T.conj()):
			raise DimensionError("micro operator must be a Hermitian 2x2 matrix")

	@classmethod
	def threshold(cls, n_sigma: int, cutoff: int, micro: Optional[np.ndarray] = None) -> DiagonalObservable:
		obs = ThresholdObservable(n_sigma)
		coeffs = {(k, l): float(obs.eigenvalue(k, l)) for k in range(cutoff + 1) for l in range(cutoff + 1)}
		return cls(coeffs, np.eye(2) if micro is None else micro)

	def diagonal(self, cutoff: int) -> np.ndarray:
		out = np.zeros((cutoff + 1, cutoff + 1))
		for (k, l), alpha in self.coefficients.items():
			if k > cutoff or l > cutoff:
				raise DimensionError(f"coefficient at |{k},{l}> lies outside cutoff {cutoff}")
			out[k, l] = alpha
		return out.reshape(-1)

	def to_dense(self, cutoff: int, rotation: Optional[ModeRotation] = None) -> np.ndarray:
		macro = np.diag(self.diagonal(cutoff))
		if rotation is not None and rotation.angle != 0.0:
			u = rotation.matrix(cutoff)
			macro = u @ macro @ u.T
		return macro


def _macro_amplitudes(N: int, polarization: Polarization, cutoff: int) -> np.ndarray:
	qubit = macro_qubit(N, polarization, NumericMode.EXACT)
	out = np.zeros((cutoff + 1, cutoff + 1))
	for (a, b), amp in zip(qubit.kets(), qubit.amplitudes()):
		out[a, b] = amp
	return out


def dense_singlet_cut(N: int, cutoff: Optional[int] = None) -> DenseState:
	"""(|psi_phi>|1_perp> - |psi_perp>|1_phi>)/sqrt(2) on a dense truncated space."""
	N = check_nonnegative("N", N)
	if N > ORACLE_MAX_N:
		raise DomainError(f"dense oracle is limited to N <= {ORACLE_MAX_N}, got {N}")
	cutoff = default_cutoff(N) if cutoff is None else check_nonnegative("cutoff", cutoff)
	if cutoff < 2 * N + 1:
		raise DimensionError(f"cutoff {cutoff} cannot hold the 2N+1={2 * N + 1} macro photons")
	amps = np.zeros((cutoff + 1, cutoff + 1, 2))
	amps[:, :, MICRO_PERP] = _macro_amplitudes(N, Polarization.PHI, cutoff) / math.sqrt(2.0)
	amps[:, :, MICRO_PHI] = -_macro_amplitudes(N, Polarization.PHI_PERP, cutoff) / math.sqrt(2.0)
	return DenseState(cutoff, amps)


def oracle_expectation(
	state: DenseState,
	macro: np.ndarray,
	micro: np.ndarray,
	other: Optional[DenseState] = None,
) -> float:
	"""<state| macro (x) micro |other> by direct contraction; ``other`` defaults to ``state``."""
	ket = state if other is None else other
	if ket.cutoff != state.cutoff:
		raise DimensionError(f"states truncated at {state.cutoff} and {ket.cutoff}")
	if macro.shape != (state.dim, state.dim) or micro.shape != (2, 2):
		raise DimensionError(f"operator of shape {macro.shape} x {micro.shape} on a space of dimension {state.dim} x 2")
	bra = state.amplitudes.reshape(state.dim, 2)
	right = ket.amplitudes.reshape(ket.dim, 2)
	return float(np.einsum("ib,ij,bc,jc->", bra.conj(), macro, micro, right).real)


def random_diagonal_observable(rng: np.random.Generator, cutoff: int) -> DiagonalObservable:
	alphas = rng.normal(size=(cutoff + 1, cutoff + 1))
	coeffs = {(k, l): float(alphas[k, l]) for k in range(cutoff + 1) for l in range(cutoff + 1)}
	m = rng.normal(size=(2, 2))
	return DiagonalObservable(coeffs, m + m.T)


def cross_term(N: int, M: int, obs: DiagonalObservable) -> float:
	"""<psi^N| O |psi^M> with both cuts embedded in the larger cut's space."""
	cutoff = default_cutoff(max(N, M))
	return oracle_expectation(dense_singlet_cut(N, cutoff), obs.to_dense(cutoff), obs.micro, dense_singlet_cut(M, cutoff))


def oracle_antisymmetry(N: int, n_sigma: int) -> Tuple[float, float]:
	"""Threshold expectation on the phi and phi_perp macro components."""
	cutoff = default_cutoff(check_nonnegative("N", N))
	diag = DiagonalObservable.threshold(n_sigma, cutoff).diagonal(cutoff)
	phi = _macro_amplitudes(N, Polarization.PHI, cutoff).reshape(-1)
	perp = _macro_amplitudes(N, Polarization.PHI_PERP, cutoff).reshape(-1)
	return float(phi @ (diag * phi)), float(perp @ (diag * perp))


def _rotated_threshold(obs: ThresholdObservable, cutoff: int) -> np.ndarray:
	return DiagonalObservable.threshold(obs.n_sigma, cutoff).to_dense(cutoff, ModeRotation(obs.angle))


def oracle_correlator(N: int, n_sigma: int, phi_a: float, phi_b: float) -> float:
	state = dense_singlet_cut(N)
	macro = _rotated_threshold(ThresholdObservable(n_sigma, phi_a), state.cutoff)
	return oracle_expectation(state, macro, micro_observable(phi_b))


def oracle_chsh(N: int, n_sigma: int, settings: AngleSettings) -> float:
	N = check_nonnegative("N", N)
	if N > ORACLE_CHSH_MAX_N:
		raise DomainError(f"dense CHSH is limited to N <= {ORACLE_CHSH_MAX_N}, got {N}")
	state = dense_singlet_cut(N)
	macro_ops: Dict[float, np.ndarray] = {}
	total = 0.0
	for phi_a, phi_b, sign in settings.terms():
		if phi_a not in macro_ops:
			macro_ops[phi_a] = _rotated_threshold(ThresholdObservable(n_sigma, phi_a), state.cutoff)
		total += sign * oracle_expectation(state, macro_ops[phi_a], micro_observable(phi_b))
	return total


@lru_cache(maxsize=64)
def _loss_kernel(cutoff: int, t2: float) -> np.ndarray:
	# beamsplitter of transmissivity t2 on (mode, vacuum ancilla), ancilla input fixed to |0>
	theta = math.acos(math.sqrt(t2))
	a = destroy(cutoff + 1)
	eye = np.eye(cutoff + 1)
	mode = np.kron(a, eye)
	ancilla = np.kron(eye, a)
	unitary = expm(theta * (mode.T @ ancilla - ancilla.T @ mode))
	dim = cutoff + 1
	kernel = unitary.reshape(dim, dim, dim, dim)[:, :, :, 0]
	kernel.setflags(write=False)
	return kernel


@lru_cache(maxsize=64)
def _split_cached(N: int, t2: float) -> np.ndarray:
	cutoff = 2 * N + 1
	kernel = _loss_kernel(cutoff, t2)
	macro = _macro_amplitudes(N, Polarization.PHI_PERP, cutoff)
	# indices: transmitted phi, reflected phi, transmitted perp, reflected perp
	out = np.einsum("xvi,ywj,ij->xvyw", kernel, kernel, macro)
	out.setflags(write=False)
	return out


def _split(N: int, t2: Union[float, Fraction]) -> np.ndarray:
	N = check_nonnegative("N", N)
	if N > ORACLE_LOSS_MAX_N:
		raise DomainError(f"dense loss oracle is limited to N <= {ORACLE_LOSS_MAX_N}, got {N}")
	if not 0 < t2 <= 1:
		raise DomainError(f"transmissivity t2 must lie in (0, 1], got {t2!r}")
	return _split_cached(N, float(t2))


def oracle_reflected_distribution(N: int, t2: Union[float, Fraction]) -> Dict[int, float]:
	split = _split(N, t2)
	probs = np.einsum("xvyw->vw", split ** 2)
	out: Dict[int, float] = {}
	for v1 in range(probs.shape[0]):
		for v2 in range(probs.shape[1]):
			out[v1 + v2] = out.get(v1 + v2, 0.0) + float(probs[v1, v2])
	return {M: out.get(M, 0.0) for M in range(2 * N + 2)}


def oracle_loss(N: int, M: int, n_sigma: int, t2: Union[float, Fraction]) -> Tuple[float, float]:
	"""Probability of reflecting exactly M photons and the threshold expectation given that event.

	The expectation is NaN when the event cannot happen.
	"""
	M = check_nonnegative("M", M)
	if M > 2 * N + 1:
		raise DomainError(f"M={M} exceeds the 2N+1={2 * N + 1} photons of cut N={N}")
	split = _split(N, t2)
	cutoff = split.shape[0] - 1
	diag = DiagonalObservable.threshold(n_sigma, cutoff).diagonal(cutoff).reshape(cutoff + 1, cutoff + 1)
	prob = 0.0
	weighted = 0.0
	for v1 in range(max(0, M - cutoff), min(M, cutoff) + 1):
		chi = split[:, v1, :, M - v1]
		prob += float(np.sum(chi ** 2))
		weighted += float(np.sum(diag * chi ** 2))
	if prob <= 0.0:
		logger.debug("oracle_loss: no weight on M=%d at t2=%s", M, t2)
		return 0.0, float("nan")
	return prob, weighted / prob
