import numpy as np
import pytest

from core.qoe import QoEParams, accuracy_score, group_qoe, meets_threshold, rate_score, user_qoe


@pytest.fixture
def params():
    return QoEParams(w=0.3, beta=0.2, lam=55.0, phi_req=60.0, xi_req=0.85)


def test_scores_are_one_half_at_requirement(params):
    assert rate_score(params, 60_000.0) == 0.5
    assert accuracy_score(params, 0.85) == 0.5


def test_rate_score_uses_ksuts(params):
    # 10 ksuts/s above the requirement with beta=0.2 -> logistic(2)
    assert rate_score(params, 70_000.0) == pytest.approx(1.0 / (1.0 + np.exp(-2.0)), abs=1e-15)


def test_scores_vectorize(params):
    scores = rate_score(params, np.array([30_000.0, 60_000.0, 90_000.0]))
    assert scores.shape == (3,)
    assert np.all(np.diff(scores) > 0)


def test_group_qoe_sums_members(params):
    other = QoEParams(w=0.9, beta=0.1, lam=50.0, phi_req=90.0, xi_req=0.8)
    xi = 0.9
    expected = (user_qoe(params, rate_score(params, 72_000.0), accuracy_score(params, xi))
                + user_qoe(other, rate_score(other, 100_000.0), accuracy_score(other, xi)))
    assert group_qoe([params, other], [72_000.0, 100_000.0], xi) == pytest.approx(expected, abs=1e-15)
    assert group_qoe([params], [72_000.0], xi) <= 1.0


def test_threshold_is_inclusive(params):
    assert meets_threshold(params, 0.5, 0.5)
    assert not meets_threshold(params, 0.49, 0.9)
    assert not meets_threshold(params, 0.9, 0.49)


def test_violations():
    bad = QoEParams(w=1.2, beta=0.0, lam=-1.0, phi_req=50.0, xi_req=1.0)
    assert set(bad.violations()) == {'w', 'beta', 'lam', 'xi_req'}
    assert QoEParams(w=0.5, beta=0.2, lam=55.0, phi_req=50.0, xi_req=0.8).violations() == {}
