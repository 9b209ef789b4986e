import numpy as np
import pytest

from pigan.exceptions import ConsistencyError, DimensionError, DomainError, FormatError, NumericError, VersionError
from pigan.nn import (
    Network,
    OptimizerState,
    adam_step,
    backward,
    bilinear_upsample,
    conv_discriminator,
    conv_generator,
    KINDS,
    LAYER_PROBES,
    check_layer_kind,
    check_preset,
    finite_difference_gradcheck,
    forward,
    gradcheck_report,
    load_checkpoint,
    mlp_discriminator,
    mlp_generator,
    quadratic_loss,
    save_checkpoint,
    weighted_sum_loss,
)
from pigan.nn.layers import (
    LayerSpec,
    batchnorm,
    conv,
    conv_stride2,
    dense,
    leaky_relu,
    reshape,
    sigmoid,
    tanh,
)


def _bilinear_oracle(img, out_h, out_w):
    # corner-aligned: output pixel i samples source row i * (H - 1) / (out_h - 1)
    h, w = img.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        for j in range(out_w):
            y = i * (h - 1) / (out_h - 1) if h > 1 else 0.0
            x = j * (w - 1) / (out_w - 1) if w > 1 else 0.0
            y0, x0 = min(int(y), max(h - 2, 0)), min(int(x), max(w - 2, 0))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            dy, dx = y - y0, x - x0
            out[i, j] = (
                img[y0, x0] * (1 - dy) * (1 - dx)
                + img[y0, x1] * (1 - dy) * dx
                + img[y1, x0] * dy * (1 - dx)
                + img[y1, x1] * dy * dx
            )
    return out


class TestLayerSpec:
    def test_even_kernel_rejected(self):
        with pytest.raises(DomainError):
            conv(1, 1, 4)

    def test_slope_range(self):
        with pytest.raises(DomainError):
            leaky_relu(1.5)

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            LayerSpec("dropout")

    def test_round_trip(self):
        for spec in (dense(3, 4), conv_stride2(1, 2, 3), reshape(2, 2), leaky_relu(0.1), batchnorm(5)):
            assert LayerSpec.from_dict(spec.to_dict()) == spec

    def test_incompatible_shapes(self):
        with pytest.raises(DimensionError):
            Network([dense(3, 4), dense(5, 1)], (3,))


class TestForward:
    def test_sigmoid_zero(self):
        net = Network([sigmoid()], (1,))
        out, _ = forward(net, np.zeros((1, 1)))
        assert out[0, 0] == 0.5

    def test_identity_dense(self):
        net = Network([dense(3, 3)], (3,), params=[{"weight": np.eye(3), "bias": np.zeros(3)}])
        x = np.array([[1.0, -2.0, 3.5]])
        np.testing.assert_array_equal(forward(net, x)[0], x)

    def test_conv_stride2_window_sums(self):
        params = [{"weight": np.ones((1, 1, 3, 3)), "bias": np.zeros(1)}]
        net = Network([conv_stride2(1, 1, 3)], (1, 4, 4), params=params)
        out, _ = forward(net, np.ones((1, 1, 4, 4)))
        # zero padding 1: windows centred on (0,0), (0,2), (2,0), (2,2)
        np.testing.assert_array_equal(out[0, 0], [[4, 6], [6, 9]])

    def test_wrong_input_shape(self):
        net = Network([dense(3, 1)], (3,))
        with pytest.raises(DimensionError):
            forward(net, np.zeros((2, 4)))

    def test_non_finite_names_layer(self):
        net = Network([dense(1, 1), tanh()], (1,), params=[{"weight": np.array([[1e308]]), "bias": np.zeros(1)}, {}])
        with pytest.raises(NumericError, match="layer 0"):
            forward(net, np.array([[10.0]]))

    def test_deterministic(self):
        g1, g2 = conv_generator(seed=4), conv_generator(seed=4)
        z = np.random.default_rng(0).uniform(size=(3, g1.input_shape[0]))
        a, ta = g1.forward(z, "train")
        b, tb = g2.forward(z, "train")
        assert np.array_equal(a, b)
        ga, _ = g1.backward(ta, np.ones_like(a))
        gb, _ = g2.backward(tb, np.ones_like(b))
        for pa, pb in zip(ga, gb):
            for k in pa:
                assert np.array_equal(pa[k], pb[k])


class TestUpsample:
    def test_constant(self):
        x = np.full((2, 3, 4, 5), 1.7)
        np.testing.assert_allclose(bilinear_upsample(x), 1.7, rtol=0, atol=1e-15)

    def test_single_pixel(self):
        out = bilinear_upsample(np.full((1, 1, 1, 1), 3.0))
        np.testing.assert_array_equal(out, np.full((1, 1, 2, 2), 3.0))

    def test_two_by_two(self):
        img = np.array([[0.0, 1.0], [2.0, 3.0]])
        out = bilinear_upsample(img[None, None])[0, 0]
        assert out.shape == (4, 4)
        assert (out[0, 0], out[0, 3], out[3, 0], out[3, 3]) == (0.0, 1.0, 2.0, 3.0)
        np.testing.assert_allclose(out, _bilinear_oracle(img, 4, 4), atol=1e-14)

    def test_random_matches_oracle(self):
        img = np.random.default_rng(1).normal(size=(3, 5))
        np.testing.assert_allclose(bilinear_upsample(img[None, None])[0, 0], _bilinear_oracle(img, 6, 10), atol=1e-13)

    def test_factor(self):
        with pytest.raises(DomainError):
            bilinear_upsample(np.zeros((1, 1, 2, 2)), factor=3)

    def test_rank(self):
        with pytest.raises(DimensionError):
            bilinear_upsample(np.zeros((2, 2)))


class TestBackward:
    def test_zero_gradient(self):
        net = mlp_discriminator(seed=0)
        out, tape = forward(net, np.ones((4, 2)), "train")
        grads, gx = backward(net, tape, np.zeros_like(out))
        assert all(not a.any() for g in grads for a in g.values())
        assert not gx.any()

    def test_scalar_product_rule(self):
        w = 1.5
        net = Network([dense(1, 1)], (1,), params=[{"weight": np.array([[w]]), "bias": np.zeros(1)}])
        out, tape = forward(net, np.array([[3.0]]))
        grads, gx = backward(net, tape, np.ones_like(out))
        assert grads[0]["weight"][0, 0] == 3.0
        assert gx[0, 0] == w

    def test_two_layer_matches_fd(self):
        net = Network([dense(4, 5), sigmoid(), dense(5, 2), sigmoid()], (4,), seed=11)
        for p in net.params:
            if "weight" in p:
                p["weight"] *= 50
        x = np.random.default_rng(2).normal(size=(3, 4))
        assert finite_difference_gradcheck(net, x, weighted_sum_loss((3, 2), seed=7), h=1e-5) < 1e-6

    def test_stale_tape(self):
        net = mlp_discriminator(seed=0)
        out, tape = forward(net, np.ones((2, 2)))
        grads, _ = backward(net, tape, np.ones_like(out))
        adam_step(net, grads, OptimizerState.for_network(net))
        with pytest.raises(ConsistencyError):
            backward(net, tape, np.ones_like(out))

    def test_foreign_tape(self):
        a, b = mlp_discriminator(seed=0), mlp_discriminator(seed=0)
        out, tape = forward(a, np.ones((2, 2)))
        with pytest.raises(ConsistencyError):
            backward(b, tape, np.ones_like(out))




class TestGradcheck:
    @pytest.mark.parametrize("name", sorted(LAYER_PROBES))
    def test_each_layer_kind(self, name):
        rep = check_layer_kind(name)
        assert rep.max_error < 1e-5 and rep.checked > 0

    def test_probes_cover_every_kind(self):
        covered = {s.kind for specs, _ in LAYER_PROBES.values() for s in specs}
        assert covered == set(KINDS)

    @pytest.mark.parametrize("name", ["mlp_generator", "mlp_discriminator"])
    def test_mlp_presets(self, name):
        assert check_preset(name).max_error < 1e-5

    @pytest.mark.parametrize("bump", [lambda g: g * (1 + 1e-3), lambda g: g + 1e-9])
    def test_detects_injected_error(self, monkeypatch, bump):
        from pigan.nn import layers

        fwd, bwd = layers.KERNELS["dense"]

        def wrong(cache, g, params, spec):
            dx, grads = bwd(cache, g, params, spec)
            grads = dict(grads)
            grads["weight"] = bump(grads["weight"])
            return dx, grads

        monkeypatch.setitem(layers.KERNELS, "dense", (fwd, wrong))
        net = mlp_discriminator(seed=0)
        x = np.random.default_rng(1).normal(0, 3, (4, 2))
        assert finite_difference_gradcheck(net, x, weighted_sum_loss((4, 1), seed=7), check_input=False) > 1e-5

    def test_linear_quadratic(self):
        net = Network([dense(3, 2)], (3,), seed=1)
        x = np.random.default_rng(1).normal(size=(4, 3))
        assert finite_difference_gradcheck(net, x, quadratic_loss()) < 1e-9

    def test_batchnorm_train_mode_network(self):
        net = Network([dense(3, 4), batchnorm(4), leaky_relu(), dense(4, 1)], (3,), seed=2)
        x = np.random.default_rng(2).normal(size=(6, 3))
        assert finite_difference_gradcheck(net, x, weighted_sum_loss((6, 1), seed=7), mode="train") < 1e-4

    def test_h_range(self):
        net = Network([dense(1, 1)], (1,), seed=0)
        with pytest.raises(DomainError):
            finite_difference_gradcheck(net, np.ones((1, 1)), quadratic_loss(), h=1e-2)

    def test_subsampling(self):
        net = Network([dense(10, 20)], (10,), seed=0)
        rep = gradcheck_report(net, np.ones((2, 10)), quadratic_loss(), max_params=50, sample_size=30, check_input=False)
        assert rep.checked + rep.skipped == 30


class TestAdam:
    def _scalar_net(self, value=1.0):
        return Network([dense(1, 1)], (1,), params=[{"weight": np.array([[value]]), "bias": np.zeros(1)}])

    def _grads(self, g):
        return [{"weight": np.array([[g]]), "bias": np.zeros(1)}]

    def test_zero_gradient(self):
        net = self._scalar_net()
        state = OptimizerState.for_network(net)
        adam_step(net, self._grads(0.0), state)
        assert net.params[0]["weight"][0, 0] == 1.0
        assert state.step == 1

    def test_first_step(self):
        net = self._scalar_net()
        state = OptimizerState.for_network(net, learning_rate=0.002)
        adam_step(net, self._grads(1.0), state)
        # bias correction gives m_hat = v_hat = 1, so delta = -lr / (1 + eps)
        assert net.params[0]["weight"][0, 0] - 1.0 == pytest.approx(-0.002 / (1 + 1e-8), abs=1e-15)

    def test_second_step_not_larger(self):
        net = self._scalar_net()
        state = OptimizerState.for_network(net)
        adam_step(net, self._grads(1.0), state)
        w1 = net.params[0]["weight"][0, 0]
        adam_step(net, self._grads(1.0), state)
        w2 = net.params[0]["weight"][0, 0]
        assert abs(w2 - w1) <= abs(w1 - 1.0) + 1e-9

    def test_sign_normalised_limit(self):
        net = self._scalar_net(0.0)
        state = OptimizerState.for_network(net, beta1=0.0, beta2=0.0, learning_rate=0.1)
        adam_step(net, self._grads(-4.0), state)
        assert net.params[0]["weight"][0, 0] == pytest.approx(0.1, rel=1e-8)

    def test_non_finite(self):
        net = self._scalar_net()
        with pytest.raises(NumericError):
            adam_step(net, self._grads(np.nan), OptimizerState.for_network(net))


class TestPresets:
    def test_shape_algebra(self):
        g, d = conv_generator(seed=0), conv_discriminator(seed=1)
        assert g.output_shape == d.input_shape == (1, 16, 16)
        z = np.random.default_rng(0).uniform(size=(4, g.input_shape[0]))
        p = d.predict(g.predict(z))
        assert p.shape == (4, 1) and np.all((p > 0) & (p < 1))

    def test_mlp_shapes(self):
        g, d = mlp_generator(seed=0), mlp_discriminator(seed=1)
        assert g.output_shape == d.input_shape == (2,)

    def test_penultimate_width(self):
        d = conv_discriminator()
        assert d.encode(np.zeros((2, 1, 16, 16))).shape == (2, 32 * 4 * 4)

    def test_infer_batchnorm_permutation(self):
        net = conv_discriminator(seed=3)
        x = np.random.default_rng(3).uniform(size=(6, 1, 16, 16))
        out, tape = net.forward(x, "train")
        net.commit_statistics(tape)
        perm = np.random.default_rng(4).permutation(6)
        a = net.forward(x, "infer")[0]
        b = net.forward(x[perm], "infer")[0]
        np.testing.assert_allclose(a[perm], b, rtol=0, atol=1e-15)

    def test_commit_statistics_only_from_train(self):
        net = conv_discriminator(seed=3)
        before = [dict(b) for b in net.buffers]
        _, tape = net.forward(np.ones((2, 1, 16, 16)), "infer")
        net.commit_statistics(tape)
        assert all(np.array_equal(before[i][k], net.buffers[i][k]) for i in range(len(before)) for k in before[i])


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        g, d = mlp_generator(seed=0), conv_discriminator(seed=1)
        state = OptimizerState.for_network(g)
        out, tape = g.forward(np.ones((2, g.input_shape[0])), "train")
        grads, _ = g.backward(tape, np.ones_like(out))
        adam_step(g, grads, state)
        path = save_checkpoint(tmp_path / "c.ckpt", {"generator": g, "discriminator": d}, {"generator": state}, {"pi": 0.3})
        assert path.read_bytes()[:9] == b"PIGANCKPT"
        ck = load_checkpoint(path)
        assert ck.meta == {"pi": 0.3}
        for name, net in (("generator", g), ("discriminator", d)):
            other = ck.networks[name]
            assert other.specs == net.specs
            for pa, pb in zip(net.params + net.buffers, other.params + other.buffers):
                assert all(np.array_equal(pa[k], pb[k]) for k in pa)
        st = ck.optimizers["generator"]
        assert st.step == 1 and st.beta1 == 0.5
        assert all(np.array_equal(state.m[i][k], st.m[i][k]) for i in range(len(st.m)) for k in st.m[i])

    def test_truncated(self, tmp_path):
        path = save_checkpoint(tmp_path / "c.ckpt", {"d": mlp_discriminator(seed=0)})
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x"
        p.write_bytes(b"NOTACKPT" + bytes(40))
        with pytest.raises(FormatError):
            load_checkpoint(p)

    def test_version(self, tmp_path):
        path = save_checkpoint(tmp_path / "c.ckpt", {"d": mlp_discriminator(seed=0)})
        data = bytearray(path.read_bytes())
        data[9] = 99
        path.write_bytes(bytes(data))
        with pytest.raises(VersionError):
            load_checkpoint(path)
