import math

import numpy as np
import pytest

from regret_tune.lti import (
    Dataset,
    TransferFunction,
    cancel_common_roots,
    closed_loop,
    converged_impulse_response,
    h2_norm_sq,
    impulse_response,
    is_stable,
    simulate,
    tf_add,
    tf_from_dict,
    tf_mul,
    tf_one_minus,
    tf_sub,
    tf_to_dict,
)

from .oracles import convolve_filter, random_stable_tf


class TestTransferFunction:
    def test_normalizes_leading_den(self):
        tf = TransferFunction([2.0, 4.0], [2.0, 1.0])
        assert np.allclose(tf.num, [1.0, 2.0])
        assert np.allclose(tf.den, [1.0, 0.5])

    def test_proportional_vectors_compare_equal(self):
        a = TransferFunction([0.1, 0.3], [1.0, -0.5])
        b = TransferFunction([0.3, 0.9], [3.0, -1.5])
        assert a == b

    def test_trailing_zeros_trimmed(self):
        tf = TransferFunction([1.0, 2.0, 0.0, 0.0], [1.0, 0.0])
        assert tf.num.size == 2
        assert tf.den.size == 1

    def test_rejects_zero_leading_den(self):
        with pytest.raises(ValueError, match="leading denominator"):
            TransferFunction([1.0], [0.0, 1.0])

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            TransferFunction([np.nan], [1.0])

    def test_dc_gain_evaluation(self):
        tf = TransferFunction([1.0], [1.0, -0.5])
        assert tf(1.0).real == pytest.approx(2.0)

    def test_json_round_trip(self):
        tf = TransferFunction([0.5, 0.25], [1.0, -0.9, 0.2])
        back = tf_from_dict(tf_to_dict(tf))
        assert back == tf

    def test_forward_variable_parsing(self):
        # 0.28261 q + 0.50666 over a quartic: three leading delay taps
        obj = {
            "num": [0.28261, 0.50666],
            "den": [1.0, -1.41833, 1.58939, -1.31608, 0.88642],
            "var": "q",
        }
        tf = tf_from_dict(obj)
        assert np.allclose(tf.num, [0, 0, 0, 0.28261, 0.50666])
        assert tf.den.size == 5

    def test_forward_improper_rejected(self):
        with pytest.raises(ValueError, match="improper"):
            tf_from_dict({"num": [1.0, 0.0, 0.0], "den": [1.0, 0.5], "var": "q"})


class TestImpulseResponse:
    def test_geometric_series(self):
        ir = impulse_response(TransferFunction([1.0], [1.0, -0.5]), 4)
        assert np.allclose(ir.taps, [1.0, 0.5, 0.25, 0.125])

    def test_fir_passthrough(self):
        ir = impulse_response(TransferFunction([3.0, 4.0], [1.0]), 4)
        assert np.array_equal(ir.taps, [3.0, 4.0, 0.0, 0.0])
        assert ir.tail_energy_bound == 0.0

    def test_lowpass_dc_gain_from_step_sum(self, lowpass_plant):
        # printed-coefficient variant of the same filter carries a gain of 5
        tf = TransferFunction([0.1004, 0.2008, 0.1004], [1.0, -1.561, 0.6414])
        ir = impulse_response(tf, 100)
        dc = (tf.num.sum()) / (tf.den.sum())
        assert dc == pytest.approx(5.0, abs=0.01)
        assert ir.taps.sum() == pytest.approx(dc, rel=1e-6)

    def test_geometric_tail_bound_is_tight(self):
        ir = impulse_response(TransferFunction([1.0], [1.0, -0.5]), 4)
        true_tail = 0.25**4 / (1 - 0.25)
        assert ir.tail_energy_bound == pytest.approx(true_tail, rel=1e-12)

    def test_non_decaying_tail_is_infinite(self):
        ir = impulse_response(TransferFunction([1.0], [1.0, -1.0]), 50)
        assert math.isinf(ir.tail_energy_bound)

    def test_converged_doubles_until_negligible(self):
        tf = TransferFunction([1.0], [1.0, -0.995])
        ir = converged_impulse_response(tf, L=250)
        assert ir.L > 250
        assert ir.tail_energy_bound <= 1e-12 * ir.energy()

    def test_converged_rejects_marginal(self):
        with pytest.raises(ValueError, match="does not converge"):
            converged_impulse_response(TransferFunction([1.0], [1.0, -1.0]), L=64)


class TestH2Norm:
    def test_fir_energy(self):
        assert h2_norm_sq(impulse_response(TransferFunction([3.0, 4.0]), 2)) == 25.0

    def test_zero(self):
        assert h2_norm_sq(impulse_response(TransferFunction([0.0]), 8)) == 0.0

    def test_geometric_closed_form(self):
        ir = converged_impulse_response(TransferFunction([1.0], [1.0, -0.5]))
        assert h2_norm_sq(ir) == pytest.approx(4.0 / 3.0, abs=1e-9)

    def test_rejects_unbounded_tail(self):
        ir = impulse_response(TransferFunction([1.0], [1.0, -1.0]), 40)
        with pytest.raises(ValueError, match="not decaying"):
            h2_norm_sq(ir)

    def test_monotone_and_cauchy_in_length(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            tf = random_stable_tf(rng)
            norms = [
                h2_norm_sq(impulse_response(tf, L)) for L in (250, 500, 1000, 2000)
            ]
            assert all(b >= a - 1e-15 for a, b in zip(norms, norms[1:]))
            assert norms[-1] - norms[-2] <= 1e-10 * max(1.0, norms[-1])


class TestAlgebra:
    def test_unity_loop(self):
        one = TransferFunction([1.0])
        assert closed_loop(one, one) == TransferFunction([0.5])

    def test_zero_controller_gives_zero_loop(self, lowpass_plant):
        loop = closed_loop(lowpass_plant, TransferFunction([0.0]))
        assert not np.any(loop.num)

    def test_degenerate_loop_rejected(self):
        # G*C = -1 at order zero makes the loop denominator vanish
        with pytest.raises(ValueError, match="degenerate"):
            closed_loop(TransferFunction([-1.0]), TransferFunction([1.0]))

    def test_sub_self_is_zero(self, lowpass_plant):
        z = tf_sub(lowpass_plant, lowpass_plant)
        assert not np.any(z.num)

    def test_mul_identity(self, lowpass_plant):
        assert tf_mul(lowpass_plant, TransferFunction([1.0])) == lowpass_plant

    def test_one_minus_loop_identity(self, lowpass_plant, lowpass_reference):
        # (1 - GC/(1+GC)) * (1 + GC) must be the constant 1: numerator and
        # denominator polynomials agree coefficient-wise after padding
        gc = tf_mul(lowpass_plant, TransferFunction([0.5]))
        prod = tf_mul(
            tf_one_minus(lowpass_reference), tf_add(TransferFunction([1.0]), gc)
        )
        size = max(prod.num.size, prod.den.size)
        num = np.pad(prod.num, (0, size - prod.num.size))
        den = np.pad(prod.den, (0, size - prod.den.size))
        assert np.allclose(num, den, atol=1e-14)

    def test_shared_denominator_addition_stays_first_order(self):
        a = TransferFunction([1.0], [1.0, -1.0])
        b = TransferFunction([0.0, 2.0], [1.0, -1.0])
        s = tf_add(a, b)
        assert np.allclose(s.den, [1.0, -1.0])
        assert np.allclose(s.num, [1.0, 2.0])

    def test_convolution_linearity(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            a, b = random_stable_tf(rng), random_stable_tf(rng)
            L = 400
            direct = impulse_response(tf_mul(a, b), L).taps
            ia, ib = impulse_response(a, L).taps, impulse_response(b, L).taps
            assert np.allclose(direct, np.convolve(ia, ib)[:L], atol=1e-10)

    def test_cancel_common_roots_removes_marginal_pair(self):
        # (1 - q^-1) present in both numerator and denominator
        num = np.convolve([1.0, -1.0], [1.0, 0.3])
        den = np.convolve([1.0, -1.0], [1.0, -0.5])
        tf = cancel_common_roots(TransferFunction(num, den))
        assert is_stable(tf)
        assert tf == TransferFunction([1.0, 0.3], [1.0, -0.5])

    def test_cancel_leaves_distinct_roots_alone(self, lowpass_plant):
        assert cancel_common_roots(lowpass_plant) is lowpass_plant


class TestStability:
    def test_simple_stable(self):
        assert is_stable(TransferFunction([1.0], [1.0, -0.5]))

    def test_integrator_unstable(self):
        assert not is_stable(TransferFunction([1.0], [1.0, -1.0]))

    def test_quartic_plant_stable_against_independent_roots(self):
        den = [1.0, -1.41833, 1.58939, -1.31608, 0.88642]
        assert is_stable(TransferFunction([1.0], den))
        import mpmath

        roots = mpmath.polyroots(den, maxsteps=200)
        assert max(abs(complex(r)) for r in roots) < 1.0

    def test_margin_is_respected(self):
        tf = TransferFunction([1.0], [1.0, -(1.0 - 1e-12)])
        assert not is_stable(tf)
        assert is_stable(tf, margin=1e-15)


class TestSimulate:
    def test_identity_no_noise(self):
        u = np.arange(5.0)
        data = simulate(TransferFunction([1.0]), u, 0.0, seed=0)
        assert np.array_equal(data.y, u)

    def test_fir_matches_direct_convolution(self):
        rng = np.random.default_rng(3)
        taps = np.array([0.5, 0.3, -0.2, 0.1])
        u = rng.standard_normal(64)
        data = simulate(TransferFunction(taps), u, 0.0, seed=0)
        assert np.allclose(data.y, convolve_filter(taps, u), atol=1e-12)

    def test_seeded_noise_is_bitwise_reproducible(self, lowpass_plant):
        u = np.random.default_rng(1).standard_normal(128)
        a = simulate(lowpass_plant, u, 0.5, seed=42)
        b = simulate(lowpass_plant, u, 0.5, seed=42)
        assert np.array_equal(a.y, b.y)
        c = simulate(lowpass_plant, u, 0.5, seed=43)
        assert not np.array_equal(a.y, c.y)

    def test_rejects_unstable(self):
        with pytest.raises(ValueError, match="unstable"):
            simulate(TransferFunction([1.0], [1.0, -1.0]), np.ones(4), 0.0, seed=0)

    def test_dataset_validation(self):
        with pytest.raises(ValueError, match="equal length"):
            Dataset(u=np.ones(3), y=np.ones(4))
