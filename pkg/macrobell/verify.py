from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from . import bell, loss, oracle
from .fock_core import NumericMode
from .macro_states import GainSpec, mean_total_photons, photon_spectrum

logger = logging.getLogger(__name__)

VERIFY_MAX_N = 5
ORACLE_TOLERANCE = 1e-12
GROUPS = ("regions", "bell", "spectrum", "loss", "oracle")


@dataclass
class GroupResult:
	name: str
	checked: int = 0
	failed: int = 0
	first_failure: Optional[Tuple[Any, ...]] = None
	detail: str = ""
	elapsed: float = 0.0

	@property
	def ok(self) -> bool:
		return self.failed == 0

	def check(self, case: Tuple[Any, ...], passed: bool, detail: str = "") -> None:
		self.checked += 1
		if passed:
			return
		self.failed += 1
		if self.first_failure is None:
			self.first_failure = case
			self.detail = detail
			logger.debug("%s: first failure at %r (%s)", self.name, case, detail)


@dataclass
class VerifyReport:
	groups: List[GroupResult] = field(default_factory=list)

	@property
	def ok(self) -> bool:
		return all(g.ok for g in self.groups)

	def failed_groups(self) -> List[str]:
		return [g.name for g in self.groups if not g.ok]


def _close(a: float, b: float, tol: float = ORACLE_TOLERANCE) -> bool:
	return abs(a - b) <= tol


def _check_regions(result: GroupResult, regions_fn: bell.RegionsFn) -> None:
	for N in range(VERIFY_MAX_N + 1):
		for s in range(2 * N + 2):
			got = regions_fn(N, s).as_sets()
			want = bell.primitive_regions(N, s).as_sets()
			result.check((N, s), got == want, f"got {got}, expected {want}")


def _check_bell(result: GroupResult, regions_fn: bell.RegionsFn) -> None:
	for N in range(VERIFY_MAX_N + 1):
		values = []
		for s in range(2 * N + 2):
			v = bell.distinguishability(N, s, NumericMode.EXACT, regions_fn=regions_fn)
			values.append(v)
			on_phi, on_perp = oracle.oracle_antisymmetry(N, s)
			result.check((N, s), _close(v.to_float(), on_perp) and _close(-v.to_float(), on_phi), f"v={v}, oracle=({on_phi}, {on_perp})")
		best = max(values)
		result.check((N, "v_max"), bell.v_max_closed(N, NumericMode.EXACT) == best, f"max over thresholds {best}")
	for N in range(5):
		for s in range(2 * N + 2):
			want = bell.chsh_value(N, s, bell.OPTIMAL_SETTINGS, NumericMode.EXACT)
			got = oracle.oracle_chsh(N, s, bell.OPTIMAL_SETTINGS)
			result.check((N, s, "chsh"), _close(got, want), f"oracle {got} vs {want}")


def _check_spectrum(result: GroupResult, regions_fn: bell.RegionsFn) -> None:
	for g in (0.25, 0.5, 1.0, 2.0, 3.0):
		gain = GainSpec(g)
		spectrum = photon_spectrum(gain)
		result.check((g, "norm"), _close(spectrum.total(), 1.0), f"total {spectrum.total()}")
		mean = mean_total_photons(spectrum)
		# 2N + 1 macro photons with mean N = 2 sinh(g)^2, plus the micro photon
		want = 4.0 * gain.mean_population + 2.0
		result.check((g, "mean"), abs(mean - want) <= 1e-9 * want, f"mean {mean} vs {want}")


def _check_loss(result: GroupResult, regions_fn: bell.RegionsFn) -> None:
	t2 = Fraction(1, 2)
	for N in range(VERIFY_MAX_N + 1):
		exact = loss.reflected_count_distribution(N, t2)
		dense = oracle.oracle_reflected_distribution(N, t2)
		result.check((N, "completeness"), sum(exact.values()) == 1, f"sum {sum(exact.values())}")
		for M, p in exact.items():
			result.check((N, M, "count"), _close(float(p), dense[M]), f"{p} vs oracle {dense[M]}")
		for s in range(2 * N + 2):
			v = bell.distinguishability(N, s, NumericMode.EXACT)
			result.check((N, 0, s), loss.lossy_distinguishability(N, 0, s, NumericMode.EXACT) == v, "M=0 does not reduce to v")
			for M in range(1, min(3, 2 * N + 1) + 1):
				v_bar = loss.lossy_distinguishability(N, M, s, NumericMode.EXACT).to_float()
				_, got = oracle.oracle_loss(N, M, s, t2)
				result.check((N, M, s), _close(got, v_bar), f"v_bar {v_bar} vs oracle {got}")


def _check_oracle(result: GroupResult, regions_fn: bell.RegionsFn) -> None:
	rng = np.random.default_rng(oracle.ORACLE_SEED)
	for N in range(VERIFY_MAX_N + 1):
		norm = oracle.dense_singlet_cut(N).norm_squared()
		result.check((N, "norm"), _close(norm, 1.0), f"norm {norm}")
	for N in range(5):
		for M in range(5):
			if N == M:
				continue
			for _ in range(50):
				obs = oracle.random_diagonal_observable(rng, oracle.default_cutoff(max(N, M)))
				value = oracle.cross_term(N, M, obs)
				result.check((N, M, "cross"), value == 0.0, f"cross term {value}")
	for cutoff in (2, 6, 12):
		number = oracle.number_operator(cutoff)
		for angle in (0.3, math.pi / 8, 1.1):
			rot = oracle.ModeRotation(angle)
			u = rot.matrix(cutoff)
			back = u @ rot.inverse().matrix(cutoff)
			result.check((cutoff, angle, "unitary"), np.allclose(back, np.eye(len(u)), atol=1e-10), "R(d)R(-d) != 1")
			result.check((cutoff, angle, "number"), np.allclose(u @ number, number @ u, atol=1e-10), "rotation changes photon number")


CHECKS: Dict[str, Callable[[GroupResult, bell.RegionsFn], None]] = {
	"regions": _check_regions,
	"bell": _check_bell,
	"spectrum": _check_spectrum,
	"loss": _check_loss,
	"oracle": _check_oracle,
}


def verify(groups: Optional[Iterable[str]] = None, *, regions_fn: bell.RegionsFn = bell.regions) -> VerifyReport:
	"""Run the cross-module fixture groups; ``regions_fn`` replaces the region rule under test."""
	selected = list(GROUPS) if not groups else [g for g in GROUPS if g in set(groups)]
	report = VerifyReport()
	for name in selected:
		result = GroupResult(name)
		start = time.perf_counter()
		try:
			CHECKS[name](result, regions_fn)
		except Exception as e:
			result.failed += 1
			result.first_failure = result.first_failure or ("error",)
			result.detail = result.detail or f"{type(e).__name__}: {e}"
			logger.debug("group %s raised", name, exc_info=True)
		result.elapsed = time.perf_counter() - start
		report.groups.append(result)
	return report
