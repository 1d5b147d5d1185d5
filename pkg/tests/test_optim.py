"""Optimizer update rules against hand-evaluated steps."""

import numpy as np
import pytest

from fundusdl.engine import Adam, SgdNesterov
from fundusdl.errors import TrainingError


def one_param(value):
    p = np.array([value], dtype=np.float64)
    return [("w", p)], p


class TestSgdNesterov:
    def test_zero_gradient_leaves_params(self):
        params, p = one_param(1.0)
        opt = SgdNesterov(params, momentum=0.9, weight_decay=0.0)
        opt.step([("w", np.zeros(1))], lr=0.1)
        assert p[0] == 1.0

    def test_hand_evaluated_step(self):
        # w=1, g=1, v=0, lr=0.1, m=0.9:
        #   v <- 0.9*0 - 0.1*1 = -0.1
        #   w <- 1 + 0.9*(-0.1) - 0.1*1 = 0.81
        params, p = one_param(1.0)
        opt = SgdNesterov(params, momentum=0.9, weight_decay=0.0)
        opt.step([("w", np.ones(1))], lr=0.1)
        assert opt.velocity["w"][0] == pytest.approx(-0.1)
        assert p[0] == pytest.approx(0.81)

    def test_decay_shrinks_weight_without_data_gradient(self):
        params, p = one_param(1.0)
        opt = SgdNesterov(params, momentum=0.9, weight_decay=0.0005)
        opt.step([("w", np.zeros(1))], lr=0.1)
        assert p[0] < 1.0

    def test_every_parameter_shrinks_under_pure_decay(self):
        rng = np.random.default_rng(0)
        arrs = [("a", rng.standard_normal(5) + 2.0),
                ("b", -(rng.standard_normal(3) + 2.0))]
        params = [(n, a.copy()) for n, a in arrs]
        opt = SgdNesterov(params, momentum=0.9, weight_decay=0.01)
        zeros = [(n, np.zeros_like(a)) for n, a in arrs]
        opt.step(zeros, lr=0.01)
        for (_, before), (_, after) in zip(arrs, params):
            assert (np.abs(after) < np.abs(before)).all()

    def test_non_finite_gradient_raises(self):
        params, _ = one_param(1.0)
        opt = SgdNesterov(params)
        with pytest.raises(TrainingError):
            opt.step([("w", np.array([np.nan]))], lr=0.1)

    def test_resume_state_roundtrip(self):
        params, _ = one_param(1.0)
        opt = SgdNesterov(params, momentum=0.9)
        opt.step([("w", np.ones(1))], lr=0.1)
        saved = {name: arr.copy() for name, arr in opt.state_arrays()}

        params2, p2 = one_param(float(params[0][1][0]))
        opt2 = SgdNesterov(params2, momentum=0.9)
        opt2.load_state(saved)
        opt.step([("w", np.ones(1))], lr=0.1)
        opt2.step([("w", np.ones(1))], lr=0.1)
        assert params[0][1][0] == p2[0]


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        params, p = one_param(2.0)
        opt = Adam(params)
        opt.step([("w", np.zeros(1))], lr=0.001)
        assert p[0] == 2.0

    def test_first_step_magnitude_is_lr(self):
        # Bias correction makes the first update -lr*sign(g) up to eps.
        params, p = one_param(5.0)
        opt = Adam(params)
        opt.step([("w", np.array([7.3]))], lr=0.001)
        assert p[0] == pytest.approx(5.0 - 0.001, abs=1e-8)

    def test_converges_on_scalar_quadratic(self):
        # f(w) = (w-3)^2, gradient 2(w-3).
        params, p = one_param(0.0)
        opt = Adam(params)
        for _ in range(200):
            g = 2.0 * (p - 3.0)
            opt.step([("w", g)], lr=0.1)
        assert abs(p[0] - 3.0) < 0.1

    def test_non_finite_gradient_raises(self):
        params, _ = one_param(1.0)
        opt = Adam(params)
        with pytest.raises(TrainingError):
            opt.step([("w", np.array([np.inf]))], lr=0.001)

    def test_resume_state_roundtrip(self):
        params, p = one_param(1.0)
        opt = Adam(params, weight_decay=0.001)
        for _ in range(3):
            opt.step([("w", np.ones(1))], lr=0.01)
        saved = {name: arr.copy() for name, arr in opt.state_arrays()}

        params2, p2 = one_param(float(p[0]))
        opt2 = Adam(params2, weight_decay=0.001)
        opt2.load_state(saved)
        opt.step([("w", np.ones(1))], lr=0.01)
        opt2.step([("w", np.ones(1))], lr=0.01)
        assert p[0] == p2[0]
