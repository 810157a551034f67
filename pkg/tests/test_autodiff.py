import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqsamp import autodiff as ad
from freqsamp import make_grid
from freqsamp.checks import CASES, probe_loss, system_grad_check
from freqsamp.errors import DomainError, IllConditionedError


def grad_of(builder, *values):
    tape = ad.Tape()
    leaves = [tape.leaf(v) for v in values]
    grads = tape.backward(builder(*leaves))
    return [grads[leaf] for leaf in leaves]


def test_abs2_gradient():
    (g,) = grad_of(lambda x: ad.abs2(x), 3.0)
    assert g == pytest.approx(6.0)


def test_sum_gradient_is_ones():
    (g,) = grad_of(lambda x: ad.sum(x), np.arange(4.0))
    np.testing.assert_array_equal(g, np.ones(4))


def test_constant_graph_gives_empty_map():
    loss = ad.sum(ad.abs2(ad.Var(np.array([1.0, 2.0]))))
    assert ad.backward(loss) == {}


def test_backward_rejects_non_scalar():
    tape = ad.Tape()
    x = tape.leaf(np.ones(3))
    with pytest.raises(DomainError):
        tape.backward(x * 2.0)


def test_backward_rejects_complex_loss():
    tape = ad.Tape()
    x = tape.leaf(1.0)
    with pytest.raises(DomainError):
        tape.backward(x * 1j)


def test_inverse_adjoint_against_finite_differences(rng):
    a0 = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    w = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rep = ad.grad_check(lambda p: ad.sum(ad.real(ad.inv(p[0] + 0.5j * p[0].mT) * w)), [a0])
    assert rep.max_rel_error < 1e-6


def test_dft_real_gradient_small_case():
    grid = make_grid(3, 48000)
    rep = ad.grad_check(lambda p: ad.mean(ad.abs2(ad.dft_real(p[0], grid.num_bins))), [np.array([1.0, 0.0])])
    diff = np.abs(rep.entries[0].analytic - rep.entries[0].numeric)
    assert np.max(diff) < 1e-8


def test_dft_real_gradient_long_filter(rng):
    taps = rng.normal(size=40)
    w = rng.normal(size=9) + 1j * rng.normal(size=9)
    rep = ad.grad_check(lambda p: ad.sum(ad.real(ad.dft_real(p[0], 9, 1.1) * w)), [taps])
    assert rep.passed, rep.summary()


COMPLEX_OPS = {
    "multiply": lambda a, b: a * b,
    "divide": lambda a, b: a / (b + 3.0),
    "exp": lambda a, b: ad.exp(a * 0.3j + b * 0.1),
    "magnitude": lambda a, b: ad.magnitude(a + 1j * b + 0.5),
    "conj": lambda a, b: ad.conj(a * 1j + b) * (a + 2j),
    "matmul": lambda a, b: ad.matmul(a * (1 + 1j), b),
    "solve": lambda a, b: ad.solve(a + 4 * np.eye(3), b * 1j + a),
    "prod": lambda a, b: ad.prod(a + 1j * b, axis=0),
    "power": lambda a, b: ad.power(ad.abs2(a) + 1.0, 1.5),
    "getitem-stack": lambda a, b: ad.stack([a[0], b[1]], axis=0),
    "transpose-reshape": lambda a, b: ad.reshape(ad.transpose(a * b), (9,)),
    "concat": lambda a, b: ad.concatenate([a, 1j * b], axis=1),
    "diag-embed": lambda a, b: ad.diag_embed(a[0] * 1j),
    "sigmoid-softplus": lambda a, b: ad.sigmoid(a) * ad.softplus(b),
    "sin-cos-tan": lambda a, b: ad.sin(a) + ad.cos(b) * ad.tan(a * 0.2),
    "sqrt-log": lambda a, b: ad.sqrt(ad.abs2(a) + 1.0) * ad.log(ad.abs2(b) + 2.0),
}


@pytest.mark.parametrize("name", sorted(COMPLEX_OPS))
def test_primitive_gradients(name):
    rng = np.random.default_rng(abs(hash(name)) % 2 ** 32)
    a0, b0 = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    op = COMPLEX_OPS[name]
    probe = None

    def loss(p):
        nonlocal probe
        out = ad.as_var(op(p[0], p[1]))
        if probe is None:
            probe = rng.normal(size=out.shape) + 1j * rng.normal(size=out.shape)
        return ad.sum(ad.real(out * probe)) + ad.sum(ad.abs2(out)) * 0.1

    rep = ad.grad_check(loss, [a0, b0])
    assert rep.passed, rep.summary()


def test_broadcast_gradient_sums():
    (g,) = grad_of(lambda x: ad.sum(x * np.ones((4, 3))), np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(g, [4, 4, 4])


def test_corrupted_adjoint_is_caught():
    def bad_square(x):
        return ad.primitive(x.value ** 2, [x], [lambda g: g * x.value])  # missing factor 2

    rep = ad.grad_check(lambda p: ad.sum(bad_square(p[0])), [np.array([0.7, -1.3])])
    assert not rep.passed
    assert rep.max_rel_error > 0.4


def test_solve_rejects_ill_conditioned():
    a = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-15]])
    with pytest.raises(IllConditionedError):
        ad.solve(ad.Var(a), ad.Var(np.eye(2)))


def test_condition_estimate_matches_numpy(rng):
    mats = rng.normal(size=(5, 4, 4))
    assert ad.check_conditioning(mats) == pytest.approx(max(np.linalg.cond(m, 1) for m in mats), rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=6))
def test_prod_gradient_with_zeros_allowed(values):
    x = np.array(values)
    rep = ad.grad_check(lambda p: ad.sum(ad.prod(p[0][:, None] * np.ones((1, 2)), axis=0)), [x])
    assert rep.passed, rep.summary()


LITERAL_STEP_CASES = [c for c in CASES if not c.startswith("GEQ")]


@pytest.mark.parametrize("case", LITERAL_STEP_CASES)
def test_module_gradients_two_point_small_step(case):
    grid = make_grid(512, 48000.0)
    rng = np.random.default_rng([7, sum(map(ord, case))])
    system = CASES[case][0](grid, rng)
    rep = system_grad_check(system, probe_loss(rng, grid.num_bins), step=1e-6, order=2)
    assert rep.passed, rep.summary()


@pytest.mark.xfail(strict=True, reason="finite differences at step 1e-6 are round-off limited for GEQ losses")
@pytest.mark.parametrize("case", ["GEQ-octave", "GEQ-third-octave"])
def test_geq_gradients_two_point_small_step(case):
    grid = make_grid(4096, 48000.0)
    rng = np.random.default_rng([0, sum(map(ord, case))])
    system = CASES[case][0](grid, rng)
    rep = system_grad_check(system, probe_loss(rng, grid.num_bins), step=1e-6, order=2)
    assert rep.passed


def test_geq_finite_difference_error_is_round_off():
    # Truncation error grows with the step; round-off shrinks. A mismatch that
    # vanishes as the step grows therefore comes from the reference, not the gradient.
    grid = make_grid(4096, 48000.0)
    case = "GEQ-third-octave"
    errs = []
    for step, order in [(1e-6, 2), (1e-4, 4), (1e-2, 4)]:
        rng = np.random.default_rng([0, sum(map(ord, case))])
        system = CASES[case][0](grid, rng)
        errs.append(system_grad_check(system, probe_loss(rng, grid.num_bins), step=step, order=order).max_rel_error)
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-5
