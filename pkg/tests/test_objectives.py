import math

import numpy as np
import pytest

from ease import diffcore as dc
from ease.diffcore import Tensor
from ease.objectives import combine, kl_sparsity, lasso_loss, supervision_bce


def test_kl_values():
    assert float(kl_sparsity([0.3, 0.3, 0.3], 0.3).data) == pytest.approx(0.0, abs=1e-15)
    assert float(kl_sparsity([0.5], 0.3).data) == pytest.approx(0.08718, abs=1e-5)
    assert float(kl_sparsity([1 - 1e-6], 0.5).data) == pytest.approx(math.log(2), abs=1e-4)


def test_kl_sums_over_units_and_averages_over_rows():
    single = float(kl_sparsity([0.5], 0.3).data)
    assert float(kl_sparsity([0.5, 0.5], 0.3).data) == pytest.approx(2 * single)
    batched = kl_sparsity(np.array([[0.5, 0.5], [0.5, 0.3]]), 0.3, np.array([[True, True], [True, False]]))
    assert float(batched.data) == pytest.approx(1.5 * single)


@pytest.mark.parametrize("pi", [0.0, 1.0])
def test_kl_rejects_degenerate_prior(pi):
    with pytest.raises(ValueError):
        kl_sparsity([0.5], pi)


def test_lasso_values():
    assert float(lasso_loss([1, 1, 1]).data) == 0
    assert float(lasso_loss([1, 0, 1, 0]).data) == 3
    assert float(lasso_loss([1, 1, 0, 0, 1]).data) == 2
    assert float(lasso_loss([0.5]).data) == 0


def test_lasso_ignores_padding_pairs():
    m = np.array([[1, 0, 1, 0], [1, 1, 0, 0]], dtype=float)
    valid = np.array([[True, True, True, True], [True, True, True, False]])
    assert float(lasso_loss(m, valid).data) == pytest.approx((3 + 1) / 2)


def test_bce_values():
    assert float(supervision_bce([1 - 1e-6, 1e-6], [1, 0]).data) == pytest.approx(0.0, abs=1e-5)
    assert float(supervision_bce([0.5, 0.5, 0.5], [1, 0, 1]).data) == pytest.approx(math.log(2))
    assert float(supervision_bce([0.9, 0.2], [1, 0]).data) == pytest.approx(0.1643, abs=1e-4)
    with pytest.raises(ValueError):
        supervision_bce([0.5, 0.5], [1])


def test_combine():
    b = combine(2.0, kl=0.1, beta=5.0)
    assert float(b.total.data) == pytest.approx(2.5)
    assert float(combine(2.0, kl=0.7, beta=0.0).total.data) == 2.0
    full = combine(1.0, 0.2, 0.3, 0.4, beta=1.0, lasso_weight=0.5, bce_weight=0.25)
    assert float(full.total.data) > 1.0
    assert full.values()["total"] == pytest.approx(1.0 + 0.2 + 0.15 + 0.1)
    with pytest.raises(ValueError):
        combine(1.0, beta=-1.0)


def test_loss_terms_have_finite_difference_gradients():
    p = Tensor(np.array([[0.2, 0.7, 0.4]]), requires_grad=True)

    def loss():
        return combine(Tensor(0.0), kl_sparsity(p, 0.3), lasso_loss(p), supervision_bce(p, [[0, 1, 1]]),
                       beta=2.0, lasso_weight=0.5, bce_weight=1.5).total

    assert dc.finite_difference_check(loss, [p]) < 1e-6
