from __future__ import annotations

import math
from fractions import Fraction

import pytest

from macrobell.bell import LOCAL_BOUND, OPTIMAL_SETTINGS, TSIRELSON_BOUND, AngleSettings, distinguishability, preselected_chsh
from macrobell.errors import DomainError, EmptySupportError
from macrobell.fock_core import NumericMode
from macrobell.loss import (
	LossPatternWeight,
	LossSpec,
	bs_convergence_report,
	bs_preselect_spectrum,
	bs_preselected_chsh,
	lossy_diagonal,
	lossy_distinguishability,
	lossy_table,
	loss_patterns,
	reflected_count_distribution,
	threshold_mixture_check,
	total_variation,
)
from macrobell.macro_states import GainSpec, photon_spectrum


@pytest.mark.parametrize(
	"N, M, n_sigma, expected",
	[
		(1, 1, 0, Fraction(2, 3)),
		(1, 1, 1, Fraction(2, 3)),
		(4, 1, 1, Fraction(35, 72)),
		(4, 1, 2, Fraction(5, 8)),
		(4, 1, 3, Fraction(5, 8)),
		(4, 1, 4, Fraction(5, 8)),
		(4, 1, 5, Fraction(5, 8)),
	],
)
def test_lossy_fixtures(N, M, n_sigma, expected):
	assert lossy_distinguishability(N, M, n_sigma, NumericMode.EXACT).to_fraction() == expected


def test_one_lost_photon_stays_below_lossless_maximum():
	best = max(lossy_distinguishability(4, 1, s, NumericMode.EXACT) for s in range(9))
	assert best.to_fraction() == Fraction(5, 8)
	assert best < Fraction(45, 64)


@pytest.mark.parametrize("N", [0, 1, 3, 8, 20])
def test_no_loss_reduces_to_distinguishability(N):
	for s in range(2 * N + 2):
		assert lossy_distinguishability(N, 0, s, NumericMode.EXACT) == distinguishability(N, s, NumericMode.EXACT)


def test_losing_every_photon_leaves_nothing():
	assert lossy_distinguishability(2, 5, 1, NumericMode.EXACT) == 0
	with pytest.raises(DomainError):
		lossy_distinguishability(2, 6, 1)


def test_log_mode_matches_exact(mode):
	exact = lossy_distinguishability(3, 2, 2, NumericMode.EXACT).to_float()
	assert lossy_distinguishability(3, 2, 2, mode).to_float() == pytest.approx(exact, rel=1e-12)


def test_lossy_diagonal_weights_the_state():
	diag = lossy_diagonal(1, 1, 0)
	# kets |a, 3-a>, a = 0..3; |0,3> -> 1 and |2,1> -> -1/3 as in the 2/3 fixture
	assert diag[0] == 1
	assert diag[2] == Fraction(-1, 3)
	assert diag[1] == -diag[2] and diag[3] == -diag[0]


def test_loss_patterns():
	patterns = loss_patterns(3)
	assert [p.n for p in patterns] == [0, 1, 2, 3]
	assert [p.weight for p in patterns] == [Fraction(1, 6), Fraction(1, 2), Fraction(1, 2), Fraction(1, 6)]
	assert LossPatternWeight(1, 3).scalar(NumericMode.LOG).to_float() == pytest.approx(0.5)
	with pytest.raises(DomainError):
		LossPatternWeight(4, 3)


def test_loss_spec_validation():
	spec = LossSpec(Fraction(1, 3), M=2)
	assert spec.reflectivity == Fraction(2, 3)
	spec.check_cut(1)
	with pytest.raises(DomainError):
		spec.check_cut(0)
	for bad in (0, -0.5, 1.5):
		with pytest.raises(DomainError):
			LossSpec(bad)


@pytest.mark.parametrize("N", [0, 1, 2, 5])
def test_reflected_counts_exact(N):
	dist = reflected_count_distribution(N, Fraction(1, 2))
	assert sum(dist.values()) == 1
	assert all(isinstance(p, Fraction) for p in dist.values())
	assert dist[0] == Fraction(1, 2 ** (2 * N + 1))


def test_reflected_counts_at_full_transmission():
	dist = reflected_count_distribution(3, 1)
	assert dist[0] == 1
	assert all(p == 0 for M, p in dist.items() if M > 0)


def test_reflected_counts_float():
	dist = reflected_count_distribution(2, 0.7)
	assert math.fsum(dist.values()) == pytest.approx(1.0, abs=1e-15)
	assert dist[1] == pytest.approx(5 * 0.3 * 0.7 ** 4)


def test_reflected_counts_float_at_large_cut():
	dist = reflected_count_distribution(600, 0.5)
	assert len(dist) == 1202
	assert math.fsum(dist.values()) == pytest.approx(1.0, abs=1e-12)
	assert math.fsum(M * p for M, p in dist.items()) == pytest.approx(600.5, rel=1e-12)
	exact = reflected_count_distribution(600, Fraction(1, 2))
	assert dist[600] == pytest.approx(float(exact[600]), rel=1e-10)


def test_mixture_without_loss_is_the_threshold_itself():
	fit = threshold_mixture_check(3, 0, 2)
	assert fit.residual == pytest.approx(0.0, abs=1e-12)
	assert fit.weights[2] == pytest.approx(1.0, abs=1e-12)
	assert fit.within_budget and fit.exact


@pytest.mark.parametrize("N, M, n_sigma", [(2, 1, 1), (3, 2, 1), (4, 1, 3), (5, 3, 4)])
def test_mixture_report_shape(N, M, n_sigma):
	fit = threshold_mixture_check(N, M, n_sigma)
	assert list(fit.weights) == list(range(min(n_sigma, M), M + n_sigma + 1))
	assert all(w >= 0.0 for w in fit.weights.values())
	assert list(fit.unrestricted_weights) == list(range(2 * N + 2))
	assert fit.residual >= 0.0
	assert fit.unrestricted_residual <= fit.residual + 1e-12


def test_mixture_rejects_large_inputs():
	with pytest.raises(DomainError):
		threshold_mixture_check(11, 1, 1)
	with pytest.raises(DomainError):
		threshold_mixture_check(1, 4, 1)


def test_bs_preselection_without_threshold_is_the_prior():
	gain = GainSpec(1.0)
	bs = bs_preselect_spectrum(gain, 0.5, 0)
	prior = photon_spectrum(gain).as_dict()
	marginal = bs.marginal_n()
	assert bs.acceptance == pytest.approx(1.0, abs=1e-12)
	assert total_variation(marginal, prior) < 1e-12


def test_bs_preselection_shifts_weight_up():
	gain = GainSpec(1.0)
	bs = bs_preselect_spectrum(gain, 0.5, 6)
	marginal = bs.marginal_n()
	assert math.fsum(marginal.values()) == pytest.approx(1.0, abs=1e-12)
	assert min(marginal) == 3
	prior = photon_spectrum(gain).as_dict()
	mean_bs = math.fsum(N * w for N, w in marginal.items())
	mean_prior = math.fsum(N * w for N, w in prior.items())
	assert mean_bs > mean_prior
	transmitted = bs.transmitted_spectrum()
	assert math.fsum(transmitted.values()) == pytest.approx(1.0, abs=1e-12)
	assert all(n % 1 == 0 and n >= 0 for n in transmitted)


def test_bs_preselection_empty_support():
	with pytest.raises(EmptySupportError):
		bs_preselect_spectrum(GainSpec(1.0), 1.0, 1)
	with pytest.raises(DomainError):
		bs_preselect_spectrum(GainSpec(1.0), 0.0, 1)


def test_bs_convergence_report_rows():
	rows = bs_convergence_report(GainSpec(1.5), 0.5, range(0, 6))
	assert [r.k_th for r in rows] == list(range(6))
	assert rows[0].best_n_th == 0
	assert rows[0].tv_distance < 1e-12
	assert all(0.0 <= r.tv_distance <= 1.0 for r in rows)


def test_lossy_table_schema():
	rows = lossy_table(2, 1, NumericMode.EXACT)
	keys = [(N, M, s) for N, M, s, _ in rows]
	assert keys == sorted(keys)
	assert (1, 1, 0) in keys and (0, 1, 0) not in keys
	lookup = {(N, M, s): v.to_fraction() for N, M, s, v in rows}
	assert lookup[(1, 1, 0)] == Fraction(2, 3)
	assert lookup[(2, 0, 2)] == Fraction(3, 4)


@pytest.mark.parametrize("n_sigma", [0, 1, 2, 30])
def test_bs_chsh_without_reflection_is_the_plain_source(n_sigma):
	gain = GainSpec(0.4)
	result = bs_preselected_chsh(gain, 1.0, 0, n_sigma)
	assert list(result.by_count) == [0]
	assert result.acceptance == pytest.approx(1.0, abs=1e-12)
	assert result.value == pytest.approx(preselected_chsh(gain, 0, n_sigma, OPTIMAL_SETTINGS), abs=1e-12)


def test_bs_chsh_is_the_mix_of_its_counts():
	result = bs_preselected_chsh(GainSpec(0.5), 0.7, 1, 1)
	assert min(result.by_count) == 1
	assert math.fsum(result.count_weights.values()) == pytest.approx(1.0, abs=1e-12)
	mixed = math.fsum(result.count_weights[M] * v for M, v in result.by_count.items())
	assert result.value == pytest.approx(mixed, abs=1e-12)
	assert all(abs(v) <= TSIRELSON_BOUND + 1e-12 for v in result.by_cell.values())


@pytest.mark.parametrize("k_th", [0, 1, 2, 3])
def test_bs_chsh_violating_count_has_a_violating_cut(k_th):
	result = bs_preselected_chsh(GainSpec(0.3), 0.9, k_th, 0)
	if k_th == 0:
		assert 0 in result.violating_counts()
	for M in result.violating_counts():
		assert result.violating_cuts(M), M


def test_bs_chsh_cell_values():
	result = bs_preselected_chsh(GainSpec(0.3), 0.5, 0, 0)
	factor = OPTIMAL_SETTINGS.chsh_factor()
	assert result.by_cell[(0, 0)] == pytest.approx(factor, abs=1e-12)
	assert result.by_cell[(1, 1)] == pytest.approx(factor * 2 / 3, abs=1e-12)
	# the cut lost its only photon
	assert result.by_cell[(0, 1)] == 0.0


def test_bs_chsh_collapsed_settings_stay_local():
	settings = AngleSettings(0.3, 0.3, 0.1, 0.1)
	result = bs_preselected_chsh(GainSpec(0.3), 0.8, 0, 0, settings)
	assert result.value <= LOCAL_BOUND + 1e-12
	assert result.violating_counts() == []


def test_bs_chsh_limits():
	with pytest.raises(DomainError):
		bs_preselected_chsh(GainSpec(2.0), 0.5, 0, 0)
	with pytest.raises(EmptySupportError):
		bs_preselected_chsh(GainSpec(0.3), 1.0, 1, 0)
