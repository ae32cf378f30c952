import numpy as np
import pytest

import oracles
from graphdiff.ops import (ACTIVE_CORE, ValidityError, execute_node,
                           infer_output, validate)
from graphdiff.tensors import TensorValue, from_numpy

TOL = {"f32": 1e-5, "f64": 1e-12}


def tv(arr):
    return from_numpy(np.ascontiguousarray(arr))


def run(api, precision="f64", **bindings):
    wrapped = {k: (tv(v) if isinstance(v, np.ndarray) else v)
               for k, v in bindings.items()}
    return execute_node(api, wrapped, precision).data


def rand(rng, *shape, lo=-1.0, hi=1.0):
    return (lo + (hi - lo) * rng.random(shape)).astype(np.float64)


class TestConv2d:
    @pytest.mark.parametrize("precision", ["f32", "f64"])
    def test_matches_nested_loop_oracle(self, precision):
        rng = np.random.default_rng(101)
        for trial in range(50):
            groups = int(rng.choice([1, 2]))
            cig = int(rng.integers(1, 3))
            cin = cig * groups
            cout = groups * int(rng.integers(1, 3))
            kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            h = int(rng.integers(kh, kh + 5))
            w = int(rng.integers(kw, kw + 5))
            stride = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
            padding = (int(rng.integers(0, 2)), int(rng.integers(0, 2)))
            dilation = (1, 1) if min(h - kh, w - kw) < 2 else \
                (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
            oh = (h + 2 * padding[0] - dilation[0] * (kh - 1) - 1) // stride[0] + 1
            ow = (w + 2 * padding[1] - dilation[1] * (kw - 1) - 1) // stride[1] + 1
            if oh < 1 or ow < 1:
                continue
            x = rand(rng, 2, cin, h, w)
            wt = rand(rng, cout, cig, kh, kw)
            b = rand(rng, cout)
            got = run("conv2d", precision, input=x, weight=wt, bias=b,
                      stride=list(stride), padding=list(padding),
                      dilation=list(dilation), groups=groups)
            want = oracles.conv2d_naive(x, wt, b, stride, padding, dilation, groups)
            np.testing.assert_allclose(got, want, atol=TOL[precision], rtol=0)

    def test_example_shape_inference(self):
        # (224 + 2*3 - 1*(7-1) - 1)//1 + 1 = 224 on both spatial dims
        dtype, shape = infer_output("conv2d", {
            "input": tv(np.zeros((16, 3, 224, 224), dtype=np.float32)),
            "weight": tv(np.zeros((64, 3, 7, 7), dtype=np.float32)),
            "bias": tv(np.zeros(64, dtype=np.float32)),
            "stride": 1, "padding": 3, "dilation": 1, "groups": 1})
        assert (dtype, shape) == ("f32", (16, 64, 224, 224))

    def test_inferred_equals_executed(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            cin = int(rng.integers(1, 4))
            cout = int(rng.integers(1, 4))
            k = int(rng.integers(1, 4))
            h = int(rng.integers(k, k + 6))
            stride = int(rng.integers(1, 3))
            padding = int(rng.integers(0, 2))
            x = rand(rng, 1, cin, h, h)
            wt = rand(rng, cout, cin, k, k)
            bindings = {"input": tv(x), "weight": tv(wt), "stride": stride,
                        "padding": padding}
            dtype, shape = infer_output("conv2d", bindings)
            out = execute_node("conv2d", bindings, "f64")
            assert out.shape == shape

    def test_channel_group_divisibility(self):
        with pytest.raises(ValidityError, match="divisible by groups"):
            validate("conv2d", {
                "input": tv(np.zeros((1, 3, 8, 8))),
                "weight": tv(np.zeros((4, 1, 3, 3))), "groups": 2})


class TestMaxPool2d:
    @pytest.mark.parametrize("precision", ["f32", "f64"])
    def test_matches_oracle(self, precision):
        rng = np.random.default_rng(55)
        for _ in range(50):
            k = (int(rng.integers(1, 4)), int(rng.integers(1, 4)))
            s = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
            p = (int(rng.integers(0, k[0] // 2 + 1)), int(rng.integers(0, k[1] // 2 + 1)))
            h = int(rng.integers(k[0] + 1, k[0] + 6))
            w = int(rng.integers(k[1] + 1, k[1] + 6))
            x = rand(rng, 2, 3, h, w)
            got = run("max_pool2d", precision, input=x, kernel_size=list(k),
                      stride=list(s), padding=list(p))
            want = oracles.max_pool2d_naive(x, k, s, p, (1, 1))
            np.testing.assert_allclose(got, want, atol=TOL[precision], rtol=0)

    def test_ceil_mode_adds_partial_window(self):
        x = np.arange(25, dtype=np.float64).reshape(1, 1, 5, 5)
        floor_out = run("max_pool2d", input=x, kernel_size=2, stride=2)
        ceil_out = run("max_pool2d", input=x, kernel_size=2, stride=2,
                       ceil_mode=True)
        assert floor_out.shape == (1, 1, 2, 2)
        assert ceil_out.shape == (1, 1, 3, 3)
        assert ceil_out[0, 0, 2, 2] == 24.0

    def test_padding_cap(self):
        with pytest.raises(ValidityError, match="at most half"):
            validate("max_pool2d", {"input": tv(np.zeros((1, 1, 8, 8))),
                                    "kernel_size": 3, "padding": 2})

    def test_inferred_equals_executed(self):
        rng = np.random.default_rng(14)
        for _ in range(50):
            k = int(rng.integers(1, 4))
            h = int(rng.integers(k, k + 7))
            bindings = {"input": tv(rand(rng, 1, 2, h, h)),
                        "kernel_size": k,
                        "stride": int(rng.integers(1, 3)),
                        "padding": int(rng.integers(0, k // 2 + 1)),
                        "ceil_mode": bool(rng.integers(0, 2))}
            dtype, shape = infer_output("max_pool2d", bindings)
            out = execute_node("max_pool2d", bindings, "f64")
            assert out.shape == shape
            assert out.dtype == "f64"


class TestAdaptiveAvgPool2d:
    @pytest.mark.parametrize("precision", ["f32", "f64"])
    def test_matches_oracle(self, precision):
        rng = np.random.default_rng(66)
        for _ in range(50):
            h = int(rng.integers(1, 10))
            w = int(rng.integers(1, 10))
            oh = int(rng.integers(1, 10))
            ow = int(rng.integers(1, 10))
            x = rand(rng, 2, 2, h, w)
            got = run("adaptive_avg_pool2d", precision, input=x, output_size=[oh, ow])
            want = oracles.adaptive_avg_pool2d_naive(x, (oh, ow))
            np.testing.assert_allclose(got, want, atol=TOL[precision], rtol=0)

    def test_identity_when_sizes_match(self):
        x = np.random.default_rng(1).random((1, 2, 4, 4))
        got = run("adaptive_avg_pool2d", input=x, output_size=[4, 4])
        np.testing.assert_array_equal(got, x)


class TestMatmulLinear:
    @pytest.mark.parametrize("precision", ["f32", "f64"])
    def test_matmul_matches_oracle(self, precision):
        rng = np.random.default_rng(77)
        for _ in range(50):
            m, k, n = (int(rng.integers(1, 6)) for _ in range(3))
            if rng.random() < 0.5:
                a = rand(rng, m, k)
                b = rand(rng, k, n)
            else:
                batch = int(rng.integers(1, 4))
                a = rand(rng, batch, m, k)
                b = rand(rng, batch, k, n) if rng.random() < 0.5 else rand(rng, k, n)
            got = run("matmul", precision, input=a, other=b)
            want = oracles.matmul_naive(a, b)
            np.testing.assert_allclose(got, want, atol=TOL[precision], rtol=0)

    def test_inner_dim_rule(self):
        validate("matmul", {"input": tv(np.zeros((2, 3))), "other": tv(np.zeros((3, 4)))})
        with pytest.raises(ValidityError, match="inner dimensions"):
            validate("matmul", {"input": tv(np.zeros((2, 3))),
                                "other": tv(np.zeros((4, 4)))})

    @pytest.mark.parametrize("precision", ["f32", "f64"])
    def test_linear_matches_oracle(self, precision):
        rng = np.random.default_rng(88)
        for _ in range(50):
            lead = tuple(int(rng.integers(1, 4)) for _ in range(int(rng.integers(1, 3))))
            cin, cout = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            x = rand(rng, *lead, cin)
            w = rand(rng, cout, cin)
            b = rand(rng, cout)
            got = run("linear", precision, input=x, weight=w, bias=b)
            want = oracles.linear_naive(x, w, b)
            np.testing.assert_allclose(got, want, atol=TOL[precision], rtol=0)

    def test_linear_equals_matmul_plus_bias(self):
        rng = np.random.default_rng(3)
        x = rand(rng, 5, 7)
        w = rand(rng, 4, 7)
        b = rand(rng, 4)
        lin = run("linear", "f32", input=x, weight=w, bias=b)
        mm = run("matmul", "f32", input=x, other=w.T.copy())
        np.testing.assert_allclose(lin, mm + b.astype(np.float32), atol=1e-6, rtol=0)


class TestNormalizers:
    @pytest.mark.parametrize("precision", ["f32", "f64"])
    def test_softmax_matches_oracle(self, precision):
        rng = np.random.default_rng(99)
        for _ in range(50):
            nd = int(rng.integers(1, 4))
            shape = tuple(int(rng.integers(1, 6)) for _ in range(nd))
            dim = int(rng.integers(-nd, nd))
            x = rand(rng, *shape, lo=-5, hi=5)
            got = run("softmax", precision, input=x, dim=dim)
            want = oracles.softmax_naive(x, dim)
            np.testing.assert_allclose(got, want, atol=TOL[precision], rtol=0)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(4)
        x = rand(rng, 20, 31, lo=-30, hi=30)
        got = run("softmax", "f32", input=x, dim=-1)
        assert np.all(got >= 0)
        np.testing.assert_allclose(got.sum(axis=-1), 1.0, atol=1e-6, rtol=0)

    @pytest.mark.parametrize("precision", ["f32", "f64"])
    def test_layer_norm_matches_oracle(self, precision):
        rng = np.random.default_rng(111)
        for _ in range(50):
            lead = int(rng.integers(1, 5))
            ns = tuple(int(rng.integers(1, 5)) for _ in range(int(rng.integers(1, 3))))
            x = rand(rng, lead, *ns, lo=-3, hi=3)
            w = rand(rng, *ns, lo=0.5, hi=1.5)
            b = rand(rng, *ns)
            got = run("layer_norm", precision, input=x, normalized_shape=list(ns),
                      weight=w, bias=b)
            want = oracles.layer_norm_naive(x, ns, w, b)
            np.testing.assert_allclose(got, want, atol=max(TOL[precision], 1e-11), rtol=0)

    def test_layer_norm_moments_identity_affine(self):
        rng = np.random.default_rng(5)
        x = rand(rng, 64, 256, lo=-4, hi=4)
        got = run("layer_norm", "f64", input=x, normalized_shape=[256])
        mu = got.mean(axis=-1)
        var = got.var(axis=-1)
        assert np.abs(mu).max() <= 1e-5
        assert np.abs(var - 1.0).max() <= 1e-3

    @pytest.mark.parametrize("precision", ["f32", "f64"])
    def test_batch_norm_matches_oracle(self, precision):
        rng = np.random.default_rng(222)
        for _ in range(50):
            c = int(rng.integers(1, 5))
            x = rand(rng, 2, c, 3, 3)
            mean = rand(rng, c)
            var = rand(rng, c, lo=0.2, hi=2.0)
            w = rand(rng, c, lo=0.5, hi=1.5)
            b = rand(rng, c)
            got = run("batch_norm", precision, input=x, running_mean=mean,
                      running_var=var, weight=w, bias=b, training=False)
            want = oracles.batch_norm_naive(x, mean, var, w, b)
            np.testing.assert_allclose(got, want, atol=TOL[precision], rtol=0)

    def test_batch_norm_training_rejected(self):
        with pytest.raises(ValidityError, match="training-mode"):
            validate("batch_norm", {
                "input": tv(np.zeros((2, 3, 4, 4))),
                "running_mean": tv(np.zeros(3)), "running_var": tv(np.ones(3)),
                "training": True})


class TestElementwise:
    def test_relu_example(self):
        got = run("relu", input=np.array([-1.0, 0.0, 2.0]))
        assert got.tolist() == [0.0, 0.0, 2.0]

    @pytest.mark.parametrize("precision", ["f32", "f64"])
    def test_gelu_matches_oracle(self, precision):
        rng = np.random.default_rng(333)
        for _ in range(50):
            x = rand(rng, int(rng.integers(1, 5)), int(rng.integers(1, 9)),
                     lo=-6, hi=6)
            got = run("gelu", precision, input=x)
            want = oracles.gelu_naive(x)
            np.testing.assert_allclose(got, want, atol=TOL[precision], rtol=0)

    @pytest.mark.parametrize("api", ["__add__", "__mul__", "div"])
    @pytest.mark.parametrize("precision", ["f32", "f64"])
    def test_broadcast_matches_oracle(self, api, precision):
        rng = np.random.default_rng(444)
        shapes = [((2, 3, 4), (2, 3, 4)), ((2, 3, 4), (3, 4)), ((2, 1, 4), (3, 1)),
                  ((5,), (2, 5)), ((1,), (4, 4))]
        for sa, sb in shapes:
            a = rand(rng, *sa, lo=0.5, hi=2.0)
            b = rand(rng, *sb, lo=0.5, hi=2.0)
            got = run(api, precision, input=a, other=b)
            want = oracles.elementwise_naive(api, a, b)
            assert got.shape == want.shape
            np.testing.assert_allclose(got, want, atol=TOL[precision], rtol=0)

    def test_incompatible_broadcast_rejected(self):
        with pytest.raises(ValidityError, match="not broadcastable"):
            validate("__add__", {"input": tv(np.zeros((2, 3))),
                                 "other": tv(np.zeros((4, 5)))})

    def test_div_by_zero_propagates(self):
        got = run("div", input=np.array([1.0, 0.0]), other=np.array([0.0, 0.0]))
        assert np.isinf(got[0])
        assert np.isnan(got[1])


class TestDropoutFlatten:
    def test_dropout_eval_identity_bit_exact(self):
        rng = np.random.default_rng(6)
        x = rng.random((4, 4)).astype(np.float32)
        got = run("dropout", "f32", input=x, p=0.5, training=False)
        assert got.tobytes() == x.tobytes()

    def test_dropout_train_scales_and_zeroes(self):
        rng = np.random.default_rng(8)
        x = (rng.random((100, 100)) + 0.5).astype(np.float64)
        got = run("dropout", input=x, p=0.25, training=True)
        dropped = got == 0.0
        kept = ~dropped
        assert 0.15 < dropped.mean() < 0.35
        np.testing.assert_allclose(got[kept], x[kept] / 0.75, atol=1e-12, rtol=0)

    def test_dropout_p_one_all_zero(self):
        x = np.ones((3, 3))
        assert np.all(run("dropout", input=x, p=1.0, training=True) == 0.0)

    def test_dropout_probability_check(self):
        with pytest.raises(ValidityError,
                           match="dropout probability has to be between 0 and 1"):
            validate("dropout", {"input": tv(np.zeros(1)), "p": -6.04427e16,
                                 "training": True})

    def test_flatten_default_from_dim_one(self):
        x = np.zeros((16, 64, 24, 24), dtype=np.float32)
        dtype, shape = infer_output("flatten", {"input": tv(x)})
        assert (dtype, shape) == ("f32", (16, 64 * 24 * 24))
        got = run("flatten", "f32", input=x)
        assert got.shape == (16, 64 * 24 * 24)

    def test_flatten_conserves_size_and_values(self):
        rng = np.random.default_rng(9)
        x = rng.random((2, 3, 4, 5))
        got = run("flatten", input=x, start_dim=1, end_dim=2)
        assert got.shape == (2, 12, 5)
        np.testing.assert_array_equal(got.reshape(-1), x.reshape(-1))

    def test_flatten_range_check(self):
        with pytest.raises(ValidityError, match="out of range"):
            validate("flatten", {"input": tv(np.zeros((2, 2))), "start_dim": 5,
                                 "end_dim": -1})


class TestExecutionContract:
    def test_validate_ok_implies_execute_and_shape_agree(self, desk_store):
        rng = np.random.default_rng(10)
        apis = ["relu", "gelu", "softmax", "flatten", "__add__", "__mul__", "div"]
        for api in apis:
            for _ in range(10):
                shape = tuple(int(rng.integers(1, 5)) for _ in range(2))
                bindings = {"input": tv(rand(rng, *shape))}
                if api in ("__add__", "__mul__", "div"):
                    bindings["other"] = tv(rand(rng, *shape, lo=0.5, hi=1.5))
                validate(api, bindings)
                dtype, shape_i = infer_output(api, bindings)
                out = execute_node(api, bindings, "f64")
                assert out.shape == shape_i

    def test_bit_reproducible(self):
        rng = np.random.default_rng(12)
        x = rand(rng, 3, 5, 7, lo=-4, hi=4)
        for api in ("gelu", "softmax", "relu"):
            kwargs = {"dim": -1} if api == "softmax" else {}
            a = run(api, "f32", input=x, **kwargs)
            b = run(api, "f32", input=x, **kwargs)
            assert a.tobytes() == b.tobytes()

    def test_missing_required_param(self):
        with pytest.raises(ValidityError, match="required parameter 'weight'"):
            validate("conv2d", {"input": tv(np.zeros((1, 1, 4, 4)))})


@pytest.mark.skipif(ACTIVE_CORE != "fast",
                    reason="compiled core not built; nothing to cross-check")
class TestCoreParity:
    """The compiled and pure-Python cores must produce identical values."""

    def test_values_identical_across_cores(self):
        from graphdiff.ops import _fastkernels as fast
        from graphdiff.ops import _slowcore as slow
        rng = np.random.default_rng(20)
        for dt in (np.float32, np.float64):
            x4 = rng.standard_normal((2, 4, 9, 9)).astype(dt)
            w4 = rng.standard_normal((6, 2, 3, 3)).astype(dt)
            pairs = [
                ("conv2d_core", (x4, w4, (2, 1), (1, 2), (1, 1), 2, (2, 6, 5, 11))),
                ("max_pool2d_core", (x4, (3, 3), (2, 2), (1, 1), (1, 1), (2, 4, 5, 5))),
                ("adaptive_avg_pool2d_core", (x4, (2, 4, 4, 6))),
                ("matmul3_core", (rng.standard_normal((3, 4, 5)).astype(dt),
                                  rng.standard_normal((3, 5, 6)).astype(dt))),
                ("linear_core", (rng.standard_normal((7, 5)).astype(dt),
                                 rng.standard_normal((4, 5)).astype(dt))),
                ("softmax_rows_core", (rng.standard_normal((7, 5)).astype(dt),)),
                ("layer_norm_rows_core", (rng.standard_normal((7, 5)).astype(dt), 1e-5)),
                ("gelu_core", (x4,)),
            ]
            for name, args in pairs:
                a = getattr(fast, name)(*args)
                b = getattr(slow, name)(*args)
                assert np.array_equal(a, b, equal_nan=True), (name, dt)
