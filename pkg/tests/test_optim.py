import numpy as np
import pytest

from msformer.autodiff import Parameter
from msformer.errors import ContractError
from msformer.optim import AdamState, adam_step, zero_grad


def test_zero_grad_leaves_params_unchanged():
    p = Parameter(np.array([1.0, -2.0, 3.0]), "p")
    before = p.data.copy()
    p.grad = np.zeros(3)
    adam_step([p], AdamState(lr=0.1))
    np.testing.assert_array_equal(p.data, before)


def test_first_step_hand_value():
    # bias correction makes the first step exactly lr * g / (|g| + eps)
    p = Parameter(np.array([1.0]), "p")
    p.grad = np.array([1.0])
    adam_step([p], AdamState(lr=0.1))
    assert p.data[0] == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8), abs=1e-15)
    assert p.data[0] == pytest.approx(0.9, abs=1e-8)


def test_second_step_hand_value():
    p = Parameter(np.array([0.0]), "p")
    st = AdamState(lr=0.01)
    for g in (2.0, -1.0):
        p.grad = np.array([g])
        adam_step([p], st)
    m = 0.9 * 0.1 * 2.0 + 0.1 * -1.0
    v = 0.999 * 0.001 * 4.0 + 0.001 * 1.0
    step2 = 0.01 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999**2)) + 1e-8)
    step1 = 0.01 * 2.0 / (2.0 + 1e-8)
    assert p.data[0] == pytest.approx(-step1 - step2, rel=1e-12)


def test_missing_grad_names_parameter():
    p = Parameter(np.ones(2), "stage1.block0.weight")
    with pytest.raises(ContractError, match="stage1.block0.weight"):
        adam_step([p], AdamState())


def test_zero_grad_clears():
    ps = [Parameter(np.ones(2), "a"), Parameter(np.ones(2), "b")]
    for p in ps:
        p.grad = np.ones(2)
    zero_grad(ps)
    assert all(p.grad is None for p in ps)


def test_deterministic_runs():
    def run():
        rng = np.random.default_rng(5)
        p = Parameter(rng.normal(size=(3, 4)), "w")
        st = AdamState(lr=1e-2)
        for _ in range(20):
            p.grad = np.sin(p.data) * 3.0
            adam_step([p], st)
        return p.data.tobytes()

    assert run() == run()
