import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import e
from manidrift import losses, sphere, verify
from manidrift.errors import EmptyClass, LabelOutOfRange, NotNormalized, ShapeMismatch, ZeroNorm
from manidrift.prompt import PromptParams, prompt_branch

R2 = 1 / math.sqrt(2)


def test_build_prototypes_normalized_sum():
    bank = losses.build_prototypes([[e(0, 4), e(1, 4)], [e(2, 4)]])
    np.testing.assert_allclose(bank.prototypes[0], [R2, R2, 0, 0], atol=1e-15)
    np.testing.assert_allclose(bank.prototypes[1], e(2, 4))
    assert bank.num_classes == 2 and bank.dim == 4


def test_build_prototypes_errors():
    with pytest.raises(EmptyClass):
        losses.build_prototypes([[e(0, 3)], np.zeros((0, 3))])
    with pytest.raises(ZeroNorm):
        losses.build_prototypes([[e(0, 3), -e(0, 3)]])


def test_consistency_img_examples():
    assert losses.consistency_img([e(0, 3)], [e(1, 3)]) == pytest.approx(1.0)
    assert losses.consistency_img([e(0, 3)], [-e(0, 3)]) == pytest.approx(2.0)
    with pytest.raises(NotNormalized):
        losses.consistency_img([[2.0, 0, 0]], [e(0, 3)])
    with pytest.raises(ShapeMismatch):
        losses.consistency_img([e(0, 3)], [e(0, 3), e(1, 3)])


def test_consistency_txt_examples():
    assert losses.consistency_txt([e(0, 3), e(1, 3)], [e(1, 3), e(0, 3)]) == pytest.approx(1.0)
    assert losses.consistency_txt([e(0, 3)], [-e(0, 3)]) == pytest.approx(2.0)


def test_logits_and_cross_entropy():
    v = (e(0, 3) + e(1, 3)) * R2
    np.testing.assert_allclose(losses.logits(v, [e(0, 3), e(1, 3)], 1.0), [R2, R2])
    assert losses.cross_entropy([1.0, -1.0], 0) == pytest.approx(math.log1p(math.exp(-2)), abs=1e-12)
    assert losses.cross_entropy([1.0, -1.0], 0) == pytest.approx(0.126928, abs=5e-7)
    with pytest.raises(LabelOutOfRange):
        losses.cross_entropy([1.0, 2.0], 2)


def test_cross_entropy_large_logits_are_stable():
    assert losses.cross_entropy([1000.0, 0.0], 0) == pytest.approx(0.0, abs=1e-12)
    assert losses.cross_entropy([1000.0, 0.0], 1) == pytest.approx(1000.0)


def _instance(seed, N=6, C=3, d=5):
    rng = np.random.Generator(np.random.Philox(seed))
    return verify.random_instance(rng, N, C, d)


def test_total_recomposes():
    Z, Zt, W, labels, params, tau = _instance(3)
    Hv = np.vstack([prompt_branch(z, params.vis_map, params.vis_bias) for z in Z])
    Ht = np.vstack([prompt_branch(z, params.txt_map, params.txt_bias) for z in Zt])
    out = losses.total_loss(Z, Hv, Zt, Ht, labels, W, 12.0, tau)
    assert out.con == pytest.approx(out.img + out.txt, abs=1e-15)
    assert out.total == pytest.approx(out.ce + 12.0 * (out.img + out.txt), abs=1e-12)
    # independent recomputation of each part
    Fv = sphere.fuse_rows(Z, Hv)
    Ft = sphere.fuse_rows(Zt, Ht)
    ce = np.mean([losses.cross_entropy(losses.logits(Fv[i], Ft, tau), labels[i]) for i in range(len(Z))])
    assert out.ce == pytest.approx(ce, abs=1e-12)
    assert out.img == pytest.approx(losses.consistency_img(Fv, Z), abs=1e-15)
    assert out.txt == pytest.approx(losses.consistency_txt(Ft, W), abs=1e-15)


def test_forward_matches_total_loss():
    Z, Zt, W, labels, params, tau = _instance(4)
    fw = losses.forward(params, Z, Zt, labels, W, 1.0, tau)
    ref = losses.total_loss(Z, fw.h_vis, Zt, fw.h_txt, labels, W, 1.0, tau)
    assert fw.loss.total == pytest.approx(ref.total, abs=1e-12)


def test_img_consistency_matches_chord_form():
    Z, Zt, W, labels, params, tau = _instance(5)
    fw = losses.forward(params, Z, Zt, labels, W, 0.0, tau)
    chord = np.sum((fw.f_vis - Z) ** 2) / (2 * len(Z))
    assert fw.loss.img == pytest.approx(chord, abs=1e-10)


@pytest.mark.parametrize("lam", [0.0, 1.0, 12.0])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_grad_matches_finite_differences(lam, seed):
    Z, Zt, W, labels, params, tau = _instance(seed, N=4, C=3, d=8)
    assert verify.gradient_relative_error(Z, Zt, W, labels, params, lam, tau) < 1e-5


def test_img_term_stationary_at_identity():
    Z, Zt, W, labels, _, tau = _instance(6, N=4, C=3, d=8)
    params = PromptParams.zeros(8)

    def img(vec):
        return losses.forward(PromptParams.from_flat(vec, 8), Z, Zt, labels, W, 100.0, tau).loss.img

    g = verify.finite_difference_grad(img, params.flat())
    assert np.abs(g).max() < 1e-8


def test_label_out_of_range_in_batch():
    Z, Zt, W, labels, params, tau = _instance(7)
    with pytest.raises(LabelOutOfRange):
        losses.grad_total(params, Z, Zt, labels + 10, W, 1.0, tau)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 20.0))
def test_losses_non_negative(seed, lam):
    Z, Zt, W, labels, params, tau = _instance(seed)
    out = losses.forward(params, Z, Zt, labels, W, lam, tau).loss
    assert out.ce >= 0 and 0 <= out.img <= 2 and 0 <= out.txt <= 2
    assert out.total >= out.ce - 1e-15


class TestPrompt:
    def test_identity_at_zero(self):
        z = sphere.normalize([1.0, -2.0, 0.5])
        np.testing.assert_allclose(prompt_branch(z, np.zeros((3, 3)), np.zeros(3)), z, atol=1e-15)

    def test_bias_example(self):
        np.testing.assert_allclose(prompt_branch(e(0, 2), np.zeros((2, 2)), e(1, 2)), [R2, R2], atol=1e-15)

    def test_exact_cancellation(self):
        with pytest.raises(ZeroNorm):
            prompt_branch(e(0, 3), -np.eye(3), np.zeros(3))

    def test_flat_round_trip(self, rng):
        p = PromptParams.random(5, 0.1, rng)
        q = PromptParams.from_flat(p.flat(), 5)
        for a, b in zip(p.arrays(), q.arrays()):
            np.testing.assert_array_equal(a, b)
