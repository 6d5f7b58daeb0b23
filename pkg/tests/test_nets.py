import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vfllab import (
    NonFiniteError,
    ParameterError,
    ShapeError,
    backprop,
    ce_softmax_grad,
    cross_entropy_soft,
    finite_difference_grads,
    fit_classifier,
    forward,
    glorot_net,
    kd_loss,
    make_optimizer,
    optimizer_step,
    softmax,
    softmax_temperature,
    top1_accuracy,
    topk_accuracy,
)

logit_rows = arrays(
    np.float64,
    st.tuples(st.integers(1, 6), st.integers(2, 8)),
    elements=st.floats(-30, 30, allow_nan=False),
)


# --- softmax -----------------------------------------------------------------


@given(logit_rows)
def test_softmax_rows_are_distributions(z):
    p = softmax(z)
    assert (p >= 0).all()
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)


@given(logit_rows, st.floats(-20, 20, allow_nan=False))
def test_softmax_shift_invariance(z, c):
    assert np.allclose(softmax(z), softmax(z + c), atol=1e-12)


def test_softmax_temperature_one_is_softmax_bitwise():
    z = np.random.default_rng(0).normal(size=(5, 7))
    assert np.array_equal(softmax_temperature(z, 1.0), softmax(z))


def test_softmax_temperature_flattens():
    z = np.array([[3.0, 0.0, -3.0]])
    hot = softmax_temperature(z, 100.0)
    assert np.ptp(hot) < 0.02  # near-uniform at high temperature
    cold = softmax_temperature(z, 0.05)
    assert cold[0, 0] > 0.999


def test_softmax_temperature_rejects_nonpositive():
    with pytest.raises(ParameterError):
        softmax_temperature(np.ones((1, 3)), 0.0)


# --- losses and their gradient -----------------------------------------------


def test_kd_loss_matches_hand_computed_value():
    # frozen oracle: computed with plain python math over the same formula
    student = np.array([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3]])
    teacher = np.array([[0.5, 0.25, 0.25], [0.1, 0.7, 0.2]])
    hard = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    value = kd_loss(student, teacher, hard, alpha=0.3, tau=2.0)
    assert value == pytest.approx(3.0838108948127587, rel=1e-12)


def test_kd_loss_alpha_one_ignores_teacher():
    student = softmax(np.random.default_rng(1).normal(size=(4, 5)))
    hard = np.eye(5)[[0, 2, 4, 1]]
    garbage = np.full((4, 5), np.nan)  # must not be touched at alpha=1
    assert kd_loss(student, garbage, hard, alpha=1.0, tau=3.0) == pytest.approx(
        cross_entropy_soft(student, hard)
    )


def test_cross_entropy_rejects_non_distributions():
    from vfllab import DistributionError

    with pytest.raises(DistributionError):
        cross_entropy_soft(np.array([[0.9, 0.9]]), np.array([[1.0, 0.0]]))


@given(logit_rows)
def test_ce_softmax_grad_formula(z):
    t = softmax(np.zeros_like(z))  # uniform targets
    g = ce_softmax_grad(z, t)
    assert np.allclose(g, (softmax(z) - t) / z.shape[0], atol=1e-15)
    # gradient rows sum to zero: softmax and targets both sum to one
    assert np.allclose(g.sum(axis=1), 0.0, atol=1e-12)


def test_ce_softmax_grad_is_loss_gradient():
    rng = np.random.default_rng(5)
    z = rng.normal(size=(3, 4))
    t = softmax(rng.normal(size=(3, 4)))
    analytic = ce_softmax_grad(z, t)
    eps = 1e-6
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            zp, zm = z.copy(), z.copy()
            zp[i, j] += eps
            zm[i, j] -= eps
            fd = (cross_entropy_soft(softmax(zp), t) - cross_entropy_soft(softmax(zm), t)) / (
                2 * eps
            )
            assert analytic[i, j] == pytest.approx(fd, abs=1e-8)


# --- backprop vs finite differences -------------------------------------------


def test_backprop_matches_finite_differences():
    rng = np.random.default_rng(42)
    for dims in ([3, 4, 2], [5, 2], [2, 6, 5, 3]):
        net = glorot_net(dims, rng)
        x = rng.normal(size=(4, dims[0]))
        t = softmax(rng.normal(size=(4, dims[-1])))

        def loss_fn():
            return cross_entropy_soft(softmax(forward(net, x)[-1]), t)

        record = forward(net, x)
        analytic, _ = backprop(net, record, ce_softmax_grad(record[-1], t))
        numeric = finite_difference_grads(loss_fn, net.parameters(), step=1e-5)
        for a, n in zip(analytic, numeric):
            denom = max(np.abs(n).max(), 1e-8)
            assert np.abs(a - n).max() / denom < 1e-4


def test_backprop_rejects_wrong_upstream_shape():
    net = glorot_net([3, 2], np.random.default_rng(0))
    record = forward(net, np.zeros((4, 3)))
    with pytest.raises(ShapeError):
        backprop(net, record, np.zeros((4, 3)))


@pytest.mark.filterwarnings("ignore:invalid value encountered")
def test_backprop_flags_non_finite():
    net = glorot_net([3, 2], np.random.default_rng(0))
    record = forward(net, np.zeros((2, 3)))
    with pytest.raises(NonFiniteError):
        backprop(net, record, np.full((2, 2), np.inf))


# --- optimizers ----------------------------------------------------------------


def test_sgd_step_exact():
    p = [np.array([[1.0, 2.0]]), np.array([0.5])]
    g = [np.array([[10.0, -10.0]]), np.array([2.0])]
    optimizer_step(make_optimizer("sgd", 0.1), p, g)
    assert np.allclose(p[0], [[0.0, 3.0]])
    assert np.allclose(p[1], [0.3])


def test_malicious_gamma_one_is_sgd_bitwise():
    rng = np.random.default_rng(3)
    p1 = [rng.normal(size=(4, 3)), rng.normal(size=4)]
    p2 = [a.copy() for a in p1]
    sgd = make_optimizer("sgd", 0.05)
    mal = make_optimizer("malicious", 0.05, gamma=1.0, r_max=8.0)
    for _ in range(7):
        g = [rng.normal(size=a.shape) for a in p1]
        optimizer_step(sgd, p1, [a.copy() for a in g])
        optimizer_step(mal, p2, [a.copy() for a in g])
    for a, b in zip(p1, p2):
        assert np.array_equal(a, b)


def test_malicious_amplifies_persistent_signs_up_to_cap():
    p = [np.zeros(1)]
    opt = make_optimizer("malicious", 1.0, gamma=2.0, r_max=8.0)
    g = [np.ones(1)]
    deltas = []
    prev = p[0].copy()
    for _ in range(6):
        optimizer_step(opt, p, [a.copy() for a in g])
        deltas.append(float(prev[0] - p[0][0]))
        prev = p[0].copy()
    # first step r=1, then doubles to the cap: 1, 2, 4, 8, 8, 8
    assert deltas == [1.0, 2.0, 4.0, 8.0, 8.0, 8.0]
    # a sign flip resets the scale
    optimizer_step(opt, p, [-np.ones(1)])
    assert float(p[0][0] - prev[0]) == 1.0


def test_adam_moves_and_stays_finite():
    p = [np.ones((2, 2))]
    opt = make_optimizer("adam", 1e-2)
    for _ in range(5):
        optimizer_step(opt, p, [np.ones((2, 2))])
    assert np.isfinite(p[0]).all() and (p[0] < 1.0).all()


def test_make_optimizer_rejects_unknown_kind_and_bad_lr():
    with pytest.raises(ParameterError):
        make_optimizer("rmsprop", 0.1)
    with pytest.raises(ParameterError):
        make_optimizer("sgd", 0.0)


# --- accuracy helpers ----------------------------------------------------------


@given(
    arrays(
        np.float64,
        st.tuples(st.integers(1, 8), st.integers(2, 6)),
        elements=st.floats(-5, 5, allow_nan=False),
    ),
    st.integers(0, 10),
)
@settings(max_examples=50)
def test_topk_at_least_top1(scores, label_seed):
    labels = np.random.default_rng(label_seed).integers(0, scores.shape[1], scores.shape[0])
    k = min(3, scores.shape[1])
    assert topk_accuracy(scores, labels, k) >= top1_accuracy(scores, labels)


def test_topk_k_equals_classes_is_one():
    scores = np.random.default_rng(0).normal(size=(10, 4))
    labels = np.random.default_rng(1).integers(0, 4, 10)
    assert topk_accuracy(scores, labels, 4) == 1.0


def test_fit_classifier_learns_separable_data():
    rng = np.random.default_rng(9)
    x = np.vstack([rng.normal(-2, 0.3, size=(30, 2)), rng.normal(2, 0.3, size=(30, 2))])
    y = np.repeat([0, 1], 30)
    targets = np.eye(2)[y]
    net = glorot_net([2, 2], rng)
    fit_classifier(net, x, targets, epochs=60, batch_size=16,
                   optimizer=make_optimizer("adam", 1e-2), rng=np.random.default_rng(2))
    assert top1_accuracy(forward(net, x)[-1], y) == 1.0
