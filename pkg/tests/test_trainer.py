import numpy as np
import pytest

from manidrift import drift, losses, trainer
from manidrift.errors import InvalidParameter, NearOpposition, RankConflict
from manidrift.losses import PrototypeBank
from manidrift.trainer import TaskSpec, TrainerConfig

SMALL = TaskSpec(num_classes=4, dim=16, transferable_rank=4, shortcut_rank=4, train_per_class=8, test_per_class=16)


@pytest.fixture(scope="module")
def task():
    return trainer.generate_task(TaskSpec(), seed=0)


def test_generator_deterministic():
    a = trainer.generate_task(SMALL, 5)
    b = trainer.generate_task(SMALL, 5)
    for name in ("train_features", "test_features", "text_features"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    np.testing.assert_array_equal(a.prototypes.prototypes, b.prototypes.prototypes)


def test_generator_degenerate_case():
    spec = TaskSpec(num_classes=3, dim=8, transferable_rank=3, shortcut_rank=2, shortcut_strength=0.0, noise_std=0.0)
    t = trainer.generate_task(spec, 1)
    dirs = t.class_directions / np.linalg.norm(t.class_directions, axis=1, keepdims=True)
    np.testing.assert_allclose(t.train_features, dirs[t.train_labels], atol=1e-15)
    np.testing.assert_allclose(t.test_features, dirs[t.test_labels], atol=1e-15)


def test_rows_are_unit(task):
    for X in (task.train_features, task.test_features, task.text_features, task.prototypes.prototypes):
        np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-12)


def test_shortcut_energy_train_exceeds_test():
    t = trainer.generate_task(TaskSpec(shortcut_strength=0.5), 2)
    tr = drift.decompose_shift(t.train_features, t.shortcut_basis).in_subspace
    te = drift.decompose_shift(t.test_features, t.shortcut_basis).in_subspace
    assert np.mean(np.sum(tr**2, axis=1)) > np.mean(np.sum(te**2, axis=1))


def test_spec_validation():
    with pytest.raises(RankConflict):
        TaskSpec(dim=10, transferable_rank=6, shortcut_rank=6).validate()
    with pytest.raises(InvalidParameter):
        TaskSpec(shortcut_strength=1.0).validate()
    with pytest.raises(InvalidParameter):
        TrainerConfig(tau=0).validate()


def test_zero_learning_rate_constant(task):
    rep = trainer.train(task, TrainerConfig(learning_rate=0.0, epochs=5))
    assert all(h == rep.history[0] for h in rep.history)


def test_large_lambda_dominates(task):
    rep = trainer.train(task, TrainerConfig(lam=100.0, seed=0))
    assert rep.history[-1].con < rep.history[0].con
    assert rep.mean_alignment >= 0.99


def test_training_deterministic():
    t = trainer.generate_task(SMALL, 3)
    cfg = TrainerConfig(epochs=20, d_pca_report=4)
    a, b = trainer.train(t, cfg), trainer.train(t, cfg)
    assert a.history == b.history
    assert a.drift == b.drift and a.test_accuracy == b.test_accuracy
    np.testing.assert_array_equal(a.params.flat(), b.params.flat())


def test_monotone_descent_small_lr(task):
    rep = trainer.train(task, TrainerConfig(learning_rate=1e-3, epochs=60))
    totals = np.array([h.total for h in rep.history])
    assert np.all(np.diff(totals) <= 1e-6)


def test_contraction_during_training():
    t = trainer.generate_task(SMALL, 4)
    cfg = TrainerConfig(epochs=1, d_pca_report=4)
    params = trainer.PromptParams.random(16, 0.5, trainer.make_rng(0))
    for _ in range(30):
        fw = losses.forward(params, t.train_features, t.text_features, t.train_labels, t.prototypes, 0.0, cfg.tau)
        Z = t.train_features
        lhs = np.mean(np.sum((fw.f_vis - Z) ** 2, axis=1))
        rhs = 0.5 * np.mean(np.sum((fw.h_vis - Z) ** 2, axis=1))
        assert lhs <= rhs + 1e-9
        _, g = losses.grad_total(params, Z, t.text_features, t.train_labels, t.prototypes, 0.0, cfg.tau)
        params = params.axpy(-0.5, g)


def test_kappa_margin_stays_clear(task):
    for lam in (0.0, 12.0):
        rep = trainer.train(task, TrainerConfig(lam=lam))
        assert rep.kappa_min > 2 * TrainerConfig().kappa


def test_near_opposition_reports_epoch():
    t = trainer.generate_task(SMALL, 0)
    cfg = TrainerConfig(epochs=3, d_pca_report=4, init_std=0.01)
    # prompt maps that send every feature to its antipode
    orig = trainer.PromptParams.random

    def antipodal(d, std, rng):
        p = orig(d, std, rng)
        return trainer.PromptParams(-2 * np.eye(d), p.vis_bias * 0, p.txt_map, p.txt_bias)

    trainer.PromptParams.random = staticmethod(antipodal)
    try:
        with pytest.raises(NearOpposition) as info:
            trainer.train(t, cfg)
    finally:
        trainer.PromptParams.random = orig
    assert info.value.epoch == 0


def test_with_prototypes_shape_check(task):
    bad = PrototypeBank((), np.ones((2, 3)) / np.sqrt(3))
    with pytest.raises(InvalidParameter):
        trainer.with_prototypes(task, bad)


def test_compare_lambda_ordering(task):
    rows = trainer.compare_lambda(task, TrainerConfig(), [0.0, 12.0])
    assert [r.lam for r in rows] == [0.0, 12.0]
    assert rows[0].delta > rows[1].delta
    assert rows[1].mean_alignment > rows[0].mean_alignment
    single = trainer.compare_lambda(task, TrainerConfig(epochs=5), [0.0])
    assert len(single) == 1
