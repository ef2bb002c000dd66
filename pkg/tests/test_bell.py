from __future__ import annotations

import math
from fractions import Fraction

import hypothesis as hyp
import hypothesis.strategies as st
import pytest

from conftest import DISTINGUISHABILITY_FIXTURES, V_MAX_FIXTURES
from macrobell.bell import (
	ASYMPTOTIC_V_MAX,
	OPTIMAL_SETTINGS,
	TSIRELSON_BOUND,
	AngleSettings,
	RegionPair,
	ThresholdObservable,
	chsh_table,
	chsh_value,
	correlator,
	distinguishability,
	distinguishability_table,
	optimal_threshold,
	preselected_chsh,
	primitive_regions,
	regions,
	term_F,
	v_max_asymptote,
	v_max_closed,
	v_max_table,
	violates_chsh,
	violation_frontier,
)
from macrobell.errors import DomainError
from macrobell.fock_core import NumericMode, Scalar
from macrobell.macro_states import GainSpec


def test_threshold_eigenvalues():
	obs = ThresholdObservable(2)
	assert obs.eigenvalue(2, 5) == 1
	assert obs.eigenvalue(5, 2) == -1
	assert obs.eigenvalue(3, 3) == 0
	assert obs.eigenvalue(1, 2) == 0


@pytest.mark.parametrize(
	"N, n_sigma, plus, minus",
	[
		(0, 0, {0}, set()),
		(2, 2, {0, 1}, {2}),
		(4, 3, {0, 1}, {3, 4}),
		(3, 5, {0}, {3}),
		(3, 7, set(), set()),
	],
)
def test_region_examples(N, n_sigma, plus, minus):
	assert regions(N, n_sigma).as_sets() == (frozenset(plus), frozenset(minus))


@hyp.settings(max_examples=200, deadline=None)
@hyp.given(N=st.integers(min_value=0, max_value=80), data=st.data())
def test_regions_match_set_definitions(N, data):
	n_sigma = data.draw(st.integers(min_value=0, max_value=2 * N + 3))
	assert regions(N, n_sigma).as_sets() == primitive_regions(N, n_sigma).as_sets()


@pytest.mark.parametrize("N", [0, 1, 4, 9, 30])
def test_term_F_sums_to_one(N):
	assert sum((term_F(N, k, NumericMode.EXACT) for k in range(N + 1)), Scalar.zero(NumericMode.EXACT)) == 1


def test_term_F_rejects_bad_index():
	with pytest.raises(DomainError):
		term_F(3, 4)


@pytest.mark.parametrize("key, expected", sorted(DISTINGUISHABILITY_FIXTURES.items()))
def test_distinguishability_fixtures(key, expected):
	assert distinguishability(*key, NumericMode.EXACT).to_fraction() == expected


@pytest.mark.parametrize("key, expected", sorted(DISTINGUISHABILITY_FIXTURES.items()))
def test_distinguishability_log_mode(key, expected):
	assert distinguishability(*key, NumericMode.LOG).to_float() == pytest.approx(float(expected), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("N", [5, 20, 64])
def test_log_mode_agrees_with_exact(N):
	for n_sigma in range(0, 2 * N + 2, max(1, N // 5)):
		exact = distinguishability(N, n_sigma, NumericMode.EXACT).to_float()
		log = distinguishability(N, n_sigma, NumericMode.LOG).to_float()
		assert log == pytest.approx(exact, rel=1e-10, abs=1e-14)


def test_distinguishability_accepts_injected_regions():
	def everything_plus(N, n_sigma):
		return RegionPair(range(0, N + 1), range(0))

	assert distinguishability(3, 2, NumericMode.EXACT, regions_fn=everything_plus) == 1


@pytest.mark.parametrize("N, expected", list(enumerate(V_MAX_FIXTURES)))
def test_v_max_fixtures(N, expected):
	assert v_max_closed(N, NumericMode.EXACT).to_fraction() == expected
	assert v_max_closed(N, NumericMode.LOG).to_float() == pytest.approx(float(expected), rel=1e-13)


@pytest.mark.parametrize("N", range(0, 41))
def test_v_max_is_value_at_optimal_threshold(N):
	v_opt = distinguishability(N, optimal_threshold(N), NumericMode.EXACT)
	assert v_max_closed(N, NumericMode.EXACT) == v_opt
	assert all(distinguishability(N, s, NumericMode.EXACT) <= v_opt for s in range(2 * N + 2))


def test_optimal_threshold():
	assert [optimal_threshold(N) for N in range(6)] == [0, 0, 2, 2, 4, 4]


def test_v_max_asymptote():
	assert abs(v_max_asymptote(1_000_000) - ASYMPTOTIC_V_MAX) < 1e-6
	values = [v_max_asymptote(10 ** e) for e in range(2, 7)]
	assert all(a > b for a, b in zip(values, values[1:]))
	assert all(v > ASYMPTOTIC_V_MAX for v in values)
	with pytest.raises(DomainError):
		v_max_asymptote(0)


def test_v_max_asymptote_stable_to_ten_million():
	# v_max(N) = (2/pi) (1 + 1/(2N) - 3/(8N^2) + O(N^-3)) along even N
	ns = range(2_000_000, 10_000_001, 2_000_000)
	values = [v_max_asymptote(N) for N in ns]
	for N, v in zip(ns, values):
		assert v == pytest.approx(ASYMPTOTIC_V_MAX * (1 + 1 / (2 * N) - 3 / (8 * N * N)), rel=1e-13)
	assert all(a > b > ASYMPTOTIC_V_MAX for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("N", [65, 200, 1023, 1024, 1500])
def test_v_max_log_mode_matches_exact(N):
	exact = v_max_closed(N, NumericMode.EXACT).to_float()
	assert v_max_closed(N, NumericMode.LOG).to_float() == pytest.approx(exact, rel=1e-12)


def test_violates_chsh_exact_boundary():
	assert violates_chsh(Scalar.from_fraction(Fraction(3, 4)))
	assert not violates_chsh(Scalar.from_fraction(Fraction(45, 64)))
	assert not violates_chsh(Scalar.zero(NumericMode.EXACT))


def test_violation_frontier():
	assert violation_frontier(10) == {0, 1, 2}
	assert violation_frontier(10, NumericMode.LOG) == {0, 1, 2}


def test_correlator_follows_cos_two_delta():
	v = float(Fraction(3, 4))
	assert correlator(1, 0, 0.0, 0.0) == pytest.approx(v)
	assert correlator(1, 0, math.pi / 8, 0.0) == pytest.approx(v / math.sqrt(2.0))
	assert correlator(1, 0, math.pi / 4, 0.0) == pytest.approx(0.0, abs=1e-15)
	assert correlator(1, 0, 0.3, 0.1) == pytest.approx(correlator(1, 0, 0.5, 0.3))


def test_chsh_at_zero_cut_reaches_tsirelson():
	assert chsh_value(0, 0, OPTIMAL_SETTINGS) == pytest.approx(TSIRELSON_BOUND, rel=1e-15)


def test_chsh_first_cuts():
	assert chsh_value(1, 0, OPTIMAL_SETTINGS) == pytest.approx(TSIRELSON_BOUND * 0.75)
	assert chsh_value(3, 2, OPTIMAL_SETTINGS) == pytest.approx(TSIRELSON_BOUND * 45 / 64)
	assert chsh_value(3, 2, OPTIMAL_SETTINGS) < 2.0


def test_collapsed_settings_give_twice_the_correlator():
	settings = AngleSettings(0.2, 0.2, 0.5, 0.5)
	assert chsh_value(2, 2, settings) == pytest.approx(2 * correlator(2, 2, 0.2, 0.5))


def test_settings_in_pi_units():
	assert OPTIMAL_SETTINGS.phi_b == pytest.approx(math.pi / 8)
	assert OPTIMAL_SETTINGS.phi_b_prime == pytest.approx(-math.pi / 8)


@pytest.mark.parametrize("g", [0.5, 1.0, 2.0])
def test_preselected_chsh_bounded(g):
	gain = GainSpec(g)
	assert preselected_chsh(gain, 0, None) <= TSIRELSON_BOUND + 1e-12
	assert preselected_chsh(gain, 1, None) <= TSIRELSON_BOUND * 0.75 + 1e-12
	assert preselected_chsh(gain, 3, None) < 2.0


def test_preselected_chsh_at_zero_gain_is_single_pair():
	assert preselected_chsh(GainSpec(0.0), 0, 0) == pytest.approx(TSIRELSON_BOUND)


def test_tables_are_sorted_and_complete():
	rows = v_max_table(4, NumericMode.EXACT, max_workers=3)
	assert [N for N, _ in rows] == [0, 1, 2, 3, 4]
	assert [v.to_fraction() for _, v in rows] == V_MAX_FIXTURES
	dist = distinguishability_table(2, mode=NumericMode.EXACT)
	assert [(N, s) for N, s, _ in dist] == [(N, s) for N in range(3) for s in range(2 * N + 2)]
	assert {(N, s): v.to_fraction() for N, s, v in dist} == DISTINGUISHABILITY_FIXTURES
	chsh = chsh_table(3)
	assert [N for N, _ in chsh] == [0, 1, 2, 3]
	assert chsh[0][1] == pytest.approx(TSIRELSON_BOUND)


def test_progress_events_reported():
	events = []
	v_max_table(3, progress_cb=events.append)
	assert events[0] == {"phase": "vmax", "event": "start", "total": 4}
	assert events[-1]["event"] == "end"
	assert sum(e["event"] == "item_complete" for e in events) == 4
