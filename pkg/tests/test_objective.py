import math

import numpy as np
import pytest

from xmc.clustering import PrototypeBank
from xmc.objective import (
    ModalityBatch,
    batch_objective,
    encode,
    gradient,
    hard_inter_loss,
    hard_intra_loss,
    soft_loss,
    soft_losses,
)

from conftest import random_unit
from oracles import central_difference, softmax_ce_reference


def test_hard_loss_matches_reference(rng):
    bank = PrototypeBank(random_unit(rng, 5, 8), temperature=0.05)
    q = random_unit(rng, 1, 8)[0]
    logits = list(bank.prototypes @ q / 0.05)
    for c in range(5):
        assert hard_intra_loss(q, bank, c) == pytest.approx(softmax_ce_reference(logits, c), abs=1e-10)
        assert hard_inter_loss(q, bank, c) == hard_intra_loss(q, bank, c)


def test_two_prototype_example():
    bank = PrototypeBank([[1.0, 0.0], [0.0, 1.0]], temperature=0.05)
    # logits (20, 0): loss = log(1 + e^-20)
    assert hard_intra_loss([1.0, 0.0], bank, 0) == pytest.approx(math.log1p(math.exp(-20)), rel=1e-12)
    assert soft_loss([1.0, 0.0], bank, [0.5, 0.5]) == pytest.approx(
        0.5 * math.log1p(math.exp(-20)) + 0.5 * (20 + math.log1p(math.exp(-20))), rel=1e-12)


def test_stable_for_large_logits():
    bank = PrototypeBank([[1.0, 0.0], [-1.0, 0.0]], temperature=1e-4)
    loss = hard_intra_loss([-1.0, 0.0], bank, 0)
    assert math.isfinite(loss) and loss == pytest.approx(2e4, rel=1e-12)


def test_soft_losses_rowwise(rng):
    bank = PrototypeBank(random_unit(rng, 4, 6))
    qs = random_unit(rng, 7, 6)
    soft = rng.dirichlet(np.ones(4), 7)
    got = soft_losses(qs, bank, soft)
    for r in range(7):
        assert got[r] == pytest.approx(soft_loss(qs[r], bank, soft[r]), abs=1e-12)


def test_soft_loss_rejects_wrong_length(rng):
    with pytest.raises(ValueError):
        soft_loss([1.0, 0.0], PrototypeBank(random_unit(rng, 3, 2)), [1.0, 0.0])


def test_hard_loss_rejects_bad_index(rng):
    with pytest.raises(IndexError):
        hard_intra_loss([1.0, 0.0], PrototypeBank(random_unit(rng, 3, 2)), 3)


def random_batch(rng, n, dim, k, l, onehot=False):
    if onehot:
        intra = np.eye(k)[rng.integers(0, k, n)]
        inter = np.eye(l)[rng.integers(0, l, n)]
    else:
        intra, inter = rng.dirichlet(np.ones(k), n), rng.dirichlet(np.ones(l), n)
    return ModalityBatch(random_unit(rng, n, dim), intra, inter,
                         rng.uniform(0.1, 1, n), rng.uniform(0.1, 1, n))


def test_objective_is_weighted_mean(rng):
    bv, bi = random_batch(rng, 5, 6, 3, 4), random_batch(rng, 4, 6, 4, 3)
    banks = (PrototypeBank(random_unit(rng, 3, 6)), PrototypeBank(random_unit(rng, 4, 6)))
    rep = batch_objective(bv, bi, banks, lam=2.0, per_sample=True)
    homo = np.mean(bv.intra_weight * soft_losses(bv.inputs, banks[0], bv.intra_soft)) \
        + np.mean(bi.intra_weight * soft_losses(bi.inputs, banks[1], bi.intra_soft))
    heter = np.mean(bv.inter_weight * soft_losses(bv.inputs, banks[1], bv.inter_soft)) \
        + np.mean(bi.inter_weight * soft_losses(bi.inputs, banks[0], bi.inter_soft))
    assert rep.homo == pytest.approx(homo, abs=1e-12)
    assert rep.heter == pytest.approx(heter, abs=1e-12)
    assert rep.total == pytest.approx(homo + 2.0 * heter, abs=1e-12)
    assert len(rep.per_sample) == 9


def test_encode_identity_and_normalized(rng):
    x = random_unit(rng, 3, 4)
    assert encode(x, None) is not None
    np.testing.assert_allclose(encode(x, np.eye(4)), x, atol=1e-15)
    out = encode(x, rng.standard_normal((4, 4)))
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-12)


def test_gradient_small_instance(rng):
    bv, bi = random_batch(rng, 3, 4, 2, 3), random_batch(rng, 3, 4, 3, 2)
    banks = (PrototypeBank(random_unit(rng, 2, 4), temperature=0.5),
             PrototypeBank(random_unit(rng, 3, 4), temperature=0.5))
    w = np.eye(4) + 0.1 * rng.standard_normal((4, 4))
    _, g = gradient(bv, bi, banks, 1.5, w)
    fd = central_difference(lambda m: batch_objective(bv, bi, banks, 1.5, m).total, w)
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)


def test_empty_batch_rejected(rng):
    empty = ModalityBatch(np.zeros((0, 2)), np.zeros((0, 1)), np.zeros((0, 1)), np.zeros(0), np.zeros(0))
    full = random_batch(rng, 2, 2, 1, 1)
    banks = (PrototypeBank([[1.0, 0.0]]), PrototypeBank([[0.0, 1.0]]))
    with pytest.raises(ValueError):
        batch_objective(empty, full, banks, 1.0)


def test_single_cluster_loss_is_zero(rng):
    bank = PrototypeBank(random_unit(rng, 1, 3))
    assert hard_intra_loss(random_unit(rng, 1, 3)[0], bank, 0) == 0.0


def test_lambda_zero_total_is_homo(rng):
    bv, bi = random_batch(rng, 3, 4, 2, 3), random_batch(rng, 2, 4, 3, 2)
    banks = (PrototypeBank(random_unit(rng, 2, 4)), PrototypeBank(random_unit(rng, 3, 4)))
    rep = batch_objective(bv, bi, banks, lam=0.0)
    assert rep.total == rep.homo


def test_two_sample_hand_example():
    # one visible and one infrared sample, prototypes on the axes, tau = 0.5
    bank_v = PrototypeBank([[1.0, 0.0], [0.0, 1.0]], temperature=0.5)
    bank_i = PrototypeBank([[0.0, 1.0], [1.0, 0.0]], temperature=0.5)
    bv = ModalityBatch(np.array([[1.0, 0.0]]), np.array([[0.85, 0.15]]), np.array([[0.0, 1.0]]),
                       np.array([0.5]), np.array([1.0]))
    bi = ModalityBatch(np.array([[0.0, 1.0]]), np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]),
                       np.array([1.0]), np.array([0.25]))
    ce = math.log1p(math.exp(-2.0))        # loss when the target logit leads by 2
    wrong = 2.0 + ce                       # loss when it trails by 2
    homo = 0.5 * (0.85 * ce + 0.15 * wrong) + 1.0 * ce
    heter = 1.0 * ce + 0.25 * ce
    rep = batch_objective(bv, bi, (bank_v, bank_i), lam=3.0)
    assert rep.homo == pytest.approx(homo, abs=1e-12)
    assert rep.heter == pytest.approx(heter, abs=1e-12)
    assert rep.total == pytest.approx(homo + 3.0 * heter, abs=1e-12)
