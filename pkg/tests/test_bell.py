import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diqpq import bell
from diqpq.bell import AttackRegion, AttackRegionParams, ChshBases
from diqpq.errors import DomainError
from diqpq.quantum import make_biased_state, make_honest_state

import oracles

Q = math.pi / 4
TQ = 3 * math.pi / 4
R2 = math.sqrt(2)

thetas = st.floats(1e-3, math.pi / 2)
psi1s = st.floats(1e-3, math.pi / 2 - 1e-3)
biases = st.floats(-0.499, 0.499)
etas = st.floats(bell.ETA_LOOPHOLE + 1e-9, 1.0)


@pytest.mark.parametrize("a,b,x,y,want", [(0, 0, 0, 0, 1), (1, 0, 1, 1, 1), (1, 1, 1, 1, 0), (0, 1, 0, 1, 0)])
def test_game_score(a, b, x, y, want):
    assert bell.game_score(a, b, x, y) == want


def test_game_threshold_optimum():
    assert bell.game_threshold(math.pi / 2, Q, TQ) == pytest.approx(0.5 + R2 / 4, abs=1e-12)
    assert bell.game_threshold(math.pi / 2, Q, TQ) == pytest.approx(0.853553, abs=1e-6)


@given(thetas, psi1s)
def test_game_and_test_related(theta, psi1):
    psi2 = math.pi - psi1
    assert bell.game_threshold(theta, psi1, psi2) == pytest.approx(0.5 + bell.chsh_ideal(theta, psi1, psi2) / 8, abs=1e-14)


def test_biased_game_value_example():
    for eps in (0.3, -0.3):
        assert bell.biased_game_value(math.pi / 2, Q, TQ, eps) == pytest.approx(R2 / 8 + 0.1 * R2 + 0.5, abs=1e-12)
    # exact value 0.818198; the quoted figure 0.81816 is rounded loosely
    assert bell.biased_game_value(math.pi / 2, Q, TQ, 0.3) == pytest.approx(0.81816, abs=1e-4)
    assert bell.biased_game_value(1.0, Q, TQ, 0.0) == pytest.approx(bell.game_threshold(1.0, Q, TQ), abs=1e-15)


def test_chsh_ideal_examples():
    assert bell.chsh_ideal(math.pi / 2, Q, TQ) == pytest.approx(2 * R2, abs=1e-12)
    assert bell.chsh_ideal(math.pi / 6, Q, TQ) == pytest.approx(1.5 * R2, abs=1e-12)


def test_biased_chsh_examples():
    assert bell.biased_chsh_value(math.pi / 2, Q, TQ, 0.3) == pytest.approx(1.8 * R2, abs=1e-12)
    assert bell.biased_chsh_value(math.pi / 2, Q, TQ, 0.3) == pytest.approx(2.5456, abs=1e-4)
    A = math.sin(1.0) * (math.sin(Q) + math.sin(TQ))
    v = bell.biased_chsh_value(1.0, Q, TQ, 0.49)
    assert A < v < A + 0.45


def test_correlator_examples():
    bases = ChshBases.standard(Q, TQ)
    h = make_honest_state(math.pi / 2)
    assert bell.correlator(h, 0, 0, bases) == pytest.approx(R2 / 2, abs=1e-12)
    for theta in (0.4, 1.2):
        assert bell.correlator(make_honest_state(theta), 1, 0, bases) == pytest.approx(math.cos(Q), abs=1e-12)
        assert bell.correlator(make_biased_state(theta, 0.3), 1, 0, bases) == pytest.approx(
            2 * math.sqrt(0.25 - 0.09) * math.cos(Q), abs=1e-12
        )


@given(thetas, psi1s, biases)
def test_chsh_from_state_matches_closed_forms(theta, psi1, eps):
    psi2 = math.pi - psi1
    s = make_biased_state(theta, eps)
    bases = ChshBases.standard(psi1, psi2)
    born = bell.chsh_from_state(s, bases)
    assert born == pytest.approx(bell.biased_chsh_value(theta, psi1, psi2, eps), abs=1e-10)
    assert born == pytest.approx(oracles.closed_form_chsh(theta, eps, psi1, psi2), abs=1e-10)
    for x in (0, 1):
        for y, psi in enumerate((psi1, psi2)):
            assert bell.correlator(s, x, y, bases) == pytest.approx(
                oracles.closed_form_correlator(theta, eps, x, psi), abs=1e-10
            )


@given(thetas, psi1s)
def test_honest_ideal_in_range(theta, psi1):
    v = bell.chsh_ideal(theta, psi1, math.pi - psi1)
    assert v <= 2 * R2 + 1e-12
    assert v > 0


@given(thetas, psi1s, biases.filter(lambda e: abs(e) > 1e-6))
def test_bias_never_helps(theta, psi1, eps):
    psi2 = math.pi - psi1
    assert bell.biased_chsh_value(theta, psi1, psi2, eps) < bell.chsh_ideal(theta, psi1, psi2)
    assert bell.biased_game_value(theta, psi1, psi2, eps) < bell.game_threshold(theta, psi1, psi2)


@pytest.mark.parametrize(
    "theta,psi1,psi2,field",
    [(0.0, Q, TQ, "theta"), (2.0, Q, TQ, "theta"), (1.0, 0.0, math.pi, "psi1"), (1.0, Q, 2.0, "psi2"), (1.0, 0.5, 2.0, "psi2")],
)
def test_angle_validation(theta, psi1, psi2, field):
    with pytest.raises(DomainError) as e:
        bell.chsh_ideal(theta, psi1, psi2)
    assert e.value.field == field


def test_threshold_examples():
    assert bell.threshold_with_eta(math.pi / 2, Q, TQ, 1.0) == pytest.approx(2 * R2, abs=1e-12)
    v = -8 + 6 * R2 + (8 - 4 * R2) / 0.83
    assert bell.threshold_with_eta(math.pi / 2, Q, TQ, 0.83) == pytest.approx(v, abs=1e-12)
    assert v == pytest.approx(3.3084, abs=5e-4)


@pytest.mark.parametrize("eta", [bell.ETA_LOOPHOLE, 0.8, 0.5])
def test_threshold_rejects_open_loophole(eta):
    with pytest.raises(DomainError):
        bell.threshold_with_eta(1.0, Q, TQ, eta)


@given(thetas, psi1s, etas, etas)
def test_threshold_decreasing_in_eta(theta, psi1, e1, e2):
    lo, hi = sorted((e1, e2))
    psi2 = math.pi - psi1
    assert bell.threshold_with_eta(theta, psi1, psi2, lo) >= bell.threshold_with_eta(theta, psi1, psi2, hi) - 1e-12


def test_attack_value_example():
    # 2.99695; rounding S' before substituting drifts to about 2.986
    S = R2 + 2 * math.sqrt(0.21) * R2
    want = (8 - 2 * S) / 0.9 + 3 * S - 8
    assert bell.attack_chsh_value(math.pi / 2, Q, TQ, 0.2, 0.9) == pytest.approx(want, abs=1e-12)
    assert want == pytest.approx(2.99695, abs=1e-5)


@given(thetas, psi1s, etas)
def test_threshold_reductions(theta, psi1, eta):
    psi2 = math.pi - psi1
    assert bell.attack_chsh_value(theta, psi1, psi2, 0.0, eta) == pytest.approx(
        bell.threshold_with_eta(theta, psi1, psi2, eta), abs=1e-12
    )
    assert bell.threshold_with_eta(theta, psi1, psi2, 1.0) == pytest.approx(bell.chsh_ideal(theta, psi1, psi2), abs=1e-12)
    assert bell.attack_chsh_value(theta, psi1, psi2, 0.0, 1.0) == pytest.approx(bell.chsh_ideal(theta, psi1, psi2), abs=1e-12)


def test_delta_examples():
    assert bell.delta_lower_bound(1.0) == 1.0
    assert bell.delta_lower_bound(2 / 3) == pytest.approx(0.0, abs=1e-15)
    assert bell.delta_lower_bound(0.9) == pytest.approx(0.7778, abs=1e-4)
    assert bell.chsh_bound_given_delta(2.5, 1.0) == 2.5
    assert bell.chsh_bound_given_delta(2.5, 0.0) == 4.0
    assert bell.chsh_bound_given_delta(2 * R2, 7 / 9) == pytest.approx(3.0888, abs=1e-4)


@given(thetas, psi1s, biases, etas)
def test_delta_bound_is_attack_value(theta, psi1, eps, eta):
    psi2 = math.pi - psi1
    S = bell.biased_chsh_value(theta, psi1, psi2, eps)
    assert bell.chsh_bound_given_delta(S, bell.delta_lower_bound(eta)) == pytest.approx(
        bell.attack_chsh_value(theta, psi1, psi2, eps, eta), abs=1e-12
    )


@given(thetas, psi1s, st.floats(0.5, 1.0))
def test_region_params_recompute(theta, psi1, eta):
    psi2 = math.pi - psi1
    p = AttackRegionParams.from_angles(theta, psi1, psi2, eta)
    A = math.sin(theta) * (math.sin(psi1) + math.sin(psi2))
    B = math.cos(psi1) - math.cos(psi2)
    assert (p.A, p.B) == (A, B)
    assert p.C == pytest.approx((8 - 2 * A + B) * eta - 8 + 2 * A, abs=1e-15)


@given(thetas, psi1s, biases, etas)
def test_eta_corrected_comparison_never_attackable(theta, psi1, eps, eta):
    # Against the efficiency-corrected threshold a biased source never wins:
    # the difference is (S' - S)(3 - 2/eta) <= 0.
    psi2 = math.pi - psi1
    diff = bell.attack_chsh_value(theta, psi1, psi2, eps, eta) - bell.threshold_with_eta(theta, psi1, psi2, eta)
    assert diff <= 1e-12
    S = bell.chsh_ideal(theta, psi1, psi2)
    Sp = bell.biased_chsh_value(theta, psi1, psi2, eps)
    assert diff == pytest.approx((Sp - S) * (3 - 2 / eta), abs=1e-12)


@given(thetas, psi1s, st.floats(0.67, 1.0))
def test_case2_upper_limit_lemma(theta, psi1, eta):
    p = AttackRegionParams.from_angles(theta, psi1, math.pi - psi1, eta)
    lhs = (3 * eta - 2) * p.B - p.C
    assert lhs == pytest.approx((8 - 2 * p.A - 2 * p.B) * (1 - eta), abs=1e-12)


@given(thetas, psi1s, biases, st.floats(0.5, 1.0))
def test_classifier_matches_oracle(theta, psi1, eps, eta):
    psi2 = math.pi - psi1
    got = bell.classify_attack_region(theta, psi1, psi2, eps, eta) != AttackRegion.NO_ATTACK
    # skip measure-zero numerical boundary
    if abs(oracles.attack_gap_to_ideal(theta, psi1, psi2, eps, eta)) > 1e-9:
        assert got == oracles.attack_oracle(theta, psi1, psi2, eps, eta)


def test_region_examples():
    assert bell.classify_attack_region(math.pi / 2, Q, TQ, 0.3, 1.0) == AttackRegion.NO_ATTACK
    assert bell.classify_attack_region(math.pi / 2, Q, TQ, 0.0, 0.9) == AttackRegion.NO_ATTACK
    # below the loophole bound nothing is certified, hence nothing to attack
    assert bell.classify_attack_region(math.pi / 2, Q, TQ, 0.3, 0.80) == AttackRegion.NO_ATTACK
    p = (math.pi / 2, 3 * math.pi / 8, 5 * math.pi / 8)
    assert bell.classify_attack_region(*p, 0.3, 0.84) == AttackRegion.CASE1
    assert bell.classify_attack_region(*p, -0.3, 0.84) == AttackRegion.CASE1
    assert bell.classify_attack_region(math.pi / 2, Q, TQ, 0.05, 0.95) == AttackRegion.CASE2
    assert bell.classify_attack_region(math.pi / 2, Q, TQ, 0.45, 0.95) == AttackRegion.NO_ATTACK


def test_region_boundary_is_no_attack():
    p = (math.pi / 2, 3 * math.pi / 8, 5 * math.pi / 8)
    split = bell.case1_eta_limit(*p)
    assert bell.classify_attack_region(*p, 0.1, split) == AttackRegion.NO_ATTACK


def test_case1_empty_for_canonical_angles():
    assert bell.case1_eta_limit(math.pi / 2, Q, TQ) < bell.ETA_LOOPHOLE
    assert bell.case2_epsilon_limit(math.pi / 2, Q, TQ, 0.95) > 0


def test_stats_containers():
    g = bell.GameStats.from_scores(np.array([1, 0, 1, 1]), 0.85)
    assert g.Y == 0.75 and g.standard_error == pytest.approx(math.sqrt(0.75 * 0.25 / 4))
    t = bell.TestStats(2.8, 2.82, 2.82)
    assert abs(t.I) <= 4
