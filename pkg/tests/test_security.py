import itertools
import json

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ghz_qsdc.quantum_core import DensityMatrix, GhzLabel, density_from_pure, make_ghz
from ghz_qsdc.security import (
    GENERATORS,
    STABILIZERS,
    GhzDiagonal,
    InconsistentRates,
    SecurityError,
    StabilizerRates,
    channel_verdict,
    diagonal_from_rates,
    estimate_rates,
    ghz_diagonal_of,
    local_outcome_distribution,
    local_sampler,
    rates_from_diagonal,
    twirl,
    yields,
)

import oracles

ATOL = 1e-12


def _ghz_coeffs(matrix):
    u = np.column_stack([oracles.ghz_vector(GhzLabel.from_index(k).value) for k in range(8)])
    return u.conj().T @ matrix @ u


diagonals = st.lists(st.floats(0, 1), min_size=8, max_size=8).filter(lambda v: sum(v) > 1e-3).map(
    lambda v: np.array(v) / sum(v)
)


# Stabilizers ----------------------------------------------------------------------

def test_stabilizer_matrices_match_hand_products():
    for element, expected in zip(STABILIZERS, oracles.stabilizer_matrices()):
        assert np.allclose(element.matrix, expected, atol=ATOL)


def test_hand_products_are_generator_products():
    x, z1, z2 = (oracles.stabilizer_matrices()[k] for k in range(3))
    products = [x @ z1, z1 @ z2, x @ z2, x @ z1 @ z2]
    listed = [oracles.stabilizer_matrices()[k] for k in (3, 4, 5, 6)]
    for p, s in zip(products, listed):
        assert np.allclose(p, s, atol=ATOL)


def test_stabilizers_commute():
    for a, b in itertools.combinations(STABILIZERS, 2):
        assert np.allclose(a.matrix @ b.matrix, b.matrix @ a.matrix, atol=ATOL)


@pytest.mark.parametrize("label", list(GhzLabel))
def test_ghz_states_are_eigenvectors(label):
    v = oracles.ghz_vector(label.value)
    for element in STABILIZERS:
        assert np.allclose(element.matrix @ v, element.eigenvalue(label) * v, atol=ATOL)


def test_element_masks_match_flip_patterns():
    assert [e.mask for e in STABILIZERS] == oracles.group_elements_of_rates()
    assert GENERATORS == STABILIZERS[:3]


# Twirl -------------------------------------------------------------------------------

def test_twirl_pure_p_plus_unchanged():
    rho = density_from_pure(make_ghz(GhzLabel.P_PLUS))
    out, diag = twirl(rho)
    assert np.allclose(out.matrix, rho.matrix, atol=ATOL)
    assert np.allclose(diag.probs, [1, 0, 0, 0, 0, 0, 0, 0], atol=ATOL)


def test_twirl_of_computational_mixture():
    out, diag = twirl(DensityMatrix(np.eye(8) / 8))
    assert np.allclose(out.matrix, np.eye(8) / 8, atol=ATOL)
    assert np.allclose(diag.probs, np.full(8, 1 / 8), atol=ATOL)
    rho = np.zeros((8, 8))
    rho[0, 0] = rho[7, 7] = 0.5
    _, diag = twirl(DensityMatrix(rho))
    assert np.allclose(diag.probs, [0.5, 0, 0, 0, 0.5, 0, 0, 0], atol=ATOL)


def test_twirl_matches_group_average_and_is_ghz_diagonal():
    rng = np.random.default_rng(20)
    for _ in range(100):
        rho = oracles.random_density(rng)
        out, diag = twirl(DensityMatrix(rho))
        assert np.allclose(out.matrix, oracles.twirl_by_group(rho), atol=ATOL)
        coeffs = _ghz_coeffs(out.matrix)
        off = coeffs - np.diag(np.diag(coeffs))
        assert np.abs(off).max() < ATOL
        assert np.allclose(np.diag(coeffs).real, np.diag(_ghz_coeffs(rho)).real, atol=ATOL)
        assert np.allclose(diag.probs, np.diag(_ghz_coeffs(rho)).real, atol=ATOL)
        again, _ = twirl(out)
        assert np.allclose(again.matrix, out.matrix, atol=ATOL)
        for g in GENERATORS:
            assert np.allclose(g.matrix @ out.matrix, out.matrix @ g.matrix, atol=ATOL)


def test_twirl_rejects_wrong_dimension():
    with pytest.raises(Exception):
        twirl(DensityMatrix(np.eye(4) / 4))


def test_ghz_diagonal_of_matches_projections():
    rng = np.random.default_rng(21)
    rho = oracles.random_density(rng)
    d = ghz_diagonal_of(DensityMatrix(rho))
    for label in GhzLabel:
        v = oracles.ghz_vector(label.value)
        assert d[label] == pytest.approx(np.vdot(v, rho @ v).real, abs=ATOL)


# Rates <-> diagonal --------------------------------------------------------------------

def test_rates_of_point_masses():
    assert rates_from_diagonal(GhzDiagonal.point(GhzLabel.P_PLUS)).s == (0,) * 7
    # Q+ has label (0,0,1): flipped by every element containing ZIZ
    assert rates_from_diagonal(GhzDiagonal.point(GhzLabel.Q_PLUS)).s == (0, 0, 1, 0, 1, 1, 1)
    assert np.allclose(rates_from_diagonal(GhzDiagonal.uniform()).s, [0.5] * 7, atol=ATOL)


def test_rates_match_trace_formula():
    rng = np.random.default_rng(22)
    for _ in range(50):
        p = oracles.random_diagonal(rng)
        d = GhzDiagonal(p)
        assert np.allclose(rates_from_diagonal(d).s, oracles.rates_by_trace(d.density_matrix().matrix), atol=ATOL)


def test_zero_rates_give_pure_channel():
    assert np.allclose(diagonal_from_rates(StabilizerRates((0.0,) * 7)).probs, [1, 0, 0, 0, 0, 0, 0, 0], atol=ATOL)


def test_q_plus_rates_invert():
    d = diagonal_from_rates(rates_from_diagonal(GhzDiagonal.point(GhzLabel.Q_PLUS)))
    assert d[GhzLabel.Q_PLUS] == pytest.approx(1.0, abs=ATOL)


def test_closed_form_matches_fourier_inversion():
    rng = np.random.default_rng(23)
    for _ in range(200):
        s = list(rates_from_diagonal(GhzDiagonal(oracles.random_diagonal(rng))).s)
        assert np.allclose(diagonal_from_rates(StabilizerRates(tuple(s))).probs,
                           oracles.diagonal_from_rates_fourier(s), atol=ATOL)


def test_round_trip_on_random_diagonals():
    rng = np.random.default_rng(24)
    for _ in range(10_000):
        p = oracles.random_diagonal(rng)
        back = diagonal_from_rates(rates_from_diagonal(GhzDiagonal(p)))
        assert np.abs(back.probs - p).max() < ATOL


def test_impossible_rates_rejected():
    with pytest.raises(InconsistentRates):
        diagonal_from_rates(StabilizerRates((1.0,) * 7))
    with pytest.raises(SecurityError):
        StabilizerRates((0.0,) * 6)
    with pytest.raises(SecurityError):
        StabilizerRates((1.5,) + (0.0,) * 6)


def test_ghz_diagonal_validation_and_json():
    with pytest.raises(SecurityError):
        GhzDiagonal(np.array([0.5, 0.6, 0, 0, 0, 0, 0, 0]))
    with pytest.raises(SecurityError):
        GhzDiagonal(np.array([1.5, -0.5, 0, 0, 0, 0, 0, 0]))
    with pytest.raises(SecurityError):
        GhzDiagonal(np.ones(7) / 7)
    d = GhzDiagonal(oracles.random_diagonal(np.random.default_rng(25)))
    data = d.to_dict()
    assert list(data) == [f"p{k:03b}" for k in range(8)]
    assert np.allclose(GhzDiagonal.from_dict(json.loads(json.dumps(data))).probs, d.probs, atol=ATOL)


# Yields ---------------------------------------------------------------------------------

def test_pure_channel_yield():
    r = yields(GhzDiagonal.point(GhzLabel.P_PLUS), 100)
    assert (r.h_b0, r.h_b1, r.h_b2, r.h_b2_given_b1, r.i_b0_b12) == (0, 0, 0, 0, 0)
    assert r.d_h == r.d_h_prime == 1.0
    assert (r.verdict.action, r.verdict.count) == ("distill", 100)


def test_uniform_channel_yield():
    r = yields(GhzDiagonal.uniform(), 100)
    assert (r.h_b0, r.h_b1, r.h_b2) == pytest.approx((1, 1, 1), abs=ATOL)
    assert r.d_h == pytest.approx(-1.0, abs=ATOL)
    assert r.verdict.action == "discard"
    assert channel_verdict(GhzDiagonal.uniform(), 100).action == "discard"


def test_yields_match_bruteforce_entropies():
    rng = np.random.default_rng(26)
    for _ in range(300):
        p = oracles.random_diagonal(rng)
        r = yields(GhzDiagonal(p))
        ref = oracles.brute_yields(p)
        got = {"h0": r.h_b0, "h1": r.h_b1, "h2": r.h_b2, "h2_given_1": r.h_b2_given_b1,
               "mutual": r.i_b0_b12, "d_h": r.d_h, "d_h_prime": r.d_h_prime}
        for k in ref:
            assert got[k] == pytest.approx(ref[k], abs=1e-10)


def test_improved_yield_never_worse_on_random_diagonals():
    rng = np.random.default_rng(27)
    for _ in range(10_000):
        r = yields(GhzDiagonal(oracles.random_diagonal(rng)))
        assert r.d_h_prime >= r.d_h - ATOL


@settings(max_examples=200, deadline=None)
@given(diagonals)
def test_yield_bounds(p):
    r = yields(GhzDiagonal(p))
    for h in (r.h_b0, r.h_b1, r.h_b2, r.h_b2_given_b1):
        assert -ATOL <= h <= 1 + ATOL
    assert r.i_b0_b12 >= -ATOL
    assert r.d_h - ATOL <= r.d_h_prime <= 1 + ATOL


@settings(max_examples=200, deadline=None)
@given(diagonals)
def test_mixed_channels_have_yield_below_one(p):
    # a point mass on any label is a pure GHZ state, so only genuine mixtures count
    assume(np.count_nonzero(p > 1e-9) >= 2)
    assert yields(GhzDiagonal(p)).d_h < 1


def test_verdict_uses_floor_of_improved_yield():
    p = np.array([0.9, 0.02, 0.02, 0.02, 0.01, 0.01, 0.01, 0.01])
    r = yields(GhzDiagonal(p), 1000)
    assert r.verdict.count == int(np.floor(1000 * r.d_h_prime))
    assert r.verdict.d_h == r.d_h


def test_verdict_rejects_negative_ensemble():
    with pytest.raises(SecurityError):
        channel_verdict(GhzDiagonal.uniform(), -1)


def test_yield_report_json_fields():
    data = json.loads(yields(GhzDiagonal.uniform(), 10).to_json())
    assert {"H_b0", "H_b1", "H_b2", "H_b2_given_b1", "I_b0_b12", "D_h", "D_h_prime", "verdict"} <= set(data)


# Estimation -----------------------------------------------------------------------------

def test_pure_copies_estimate_zero():
    est = estimate_rates(density_from_pure(make_ghz(GhzLabel.P_PLUS)), 10_000, np.random.default_rng(0))
    assert est.rates == (0.0,) * 7
    assert not est.detects()


def test_estimates_within_three_standard_errors():
    rng = np.random.default_rng(28)
    for _ in range(5):
        d = GhzDiagonal(oracles.random_diagonal(rng))
        truth = rates_from_diagonal(d).s
        est = estimate_rates(d.density_matrix(), 10_000, rng)
        for s, hat in zip(truth, est.rates):
            se = np.sqrt(s * (1 - s) / 10_000)
            assert abs(hat - s) <= 3 * se + 1e-12


@pytest.mark.parametrize("label", list(GhzLabel))
def test_local_parity_equals_eigenvalue_on_eigenstates(label):
    rho = density_from_pure(make_ghz(label))
    sampler = local_sampler(rho)
    rng = np.random.default_rng(label.index)
    for k, element in enumerate(STABILIZERS):
        assert set(sampler(k, 200, rng)) == {element.eigenvalue(label)}


def test_local_parity_mean_equals_expectation():
    rng = np.random.default_rng(29)
    for _ in range(20):
        rho = DensityMatrix(oracles.random_density(rng))
        for element, s in zip(STABILIZERS, oracles.stabilizer_matrices()):
            dist = local_outcome_distribution(rho, element)
            parity = [
                element.sign * (-1) ** (sum(b for b, c in zip(oracles.bits_of(k, 3), element.paulis) if c != "I") % 2)
                for k in range(8)
            ]
            assert float(np.dot(dist, parity)) == pytest.approx(np.trace(rho.matrix @ s).real, abs=1e-10)


def test_estimate_rates_accepts_sampler_and_validates():
    def always_flipped(element, shots, rng):
        return -np.ones(shots, dtype=int)

    est = estimate_rates(always_flipped, 10, np.random.default_rng(0))
    assert est.rates == (1.0,) * 7
    with pytest.raises(SecurityError):
        estimate_rates(always_flipped, 0, np.random.default_rng(0))
