import numpy as np
import pytest

from jobrec import tensor as T


def fd_grad(f, tensor, idx, eps=1e-5):
    orig = tensor.data[idx]
    tensor.data[idx] = orig + eps
    hi = f()
    tensor.data[idx] = orig - eps
    lo = f()
    tensor.data[idx] = orig
    return (hi - lo) / (2 * eps)


def rel_err(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradients(build, tensors, rng, tol=1e-4, samples=None):
    """Full finite-difference audit of `loss = build(tape)` against tape gradients."""
    tape = T.Tape()
    loss = build(tape)
    tape.backward(loss)
    for t in tensors:
        an = tape.grad(t)
        coords = list(np.ndindex(t.data.shape))
        if samples is not None and len(coords) > samples:
            picks = rng.choice(len(coords), size=samples, replace=False)
            coords = [coords[i] for i in picks]
        for idx in coords:
            fd = fd_grad(lambda: build(None).item(), t, idx)
            assert rel_err(an[idx], fd) <= tol, (idx, an[idx], fd)


# -- matmul -----------------------------------------------------------------


def test_matmul_identity():
    a = T.Tensor(np.eye(2))
    b = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(T.matmul(a, b).data, b.data)


def test_matmul_single_cell():
    out = T.matmul(T.Tensor([[1.0, 2.0]]), T.Tensor([[3.0], [4.0]]))
    assert out.data.tolist() == [[11.0]]


def test_matmul_against_triple_loop():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    expect = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expect[i, j] += a[i, k] * b[k, j]
    got = T.matmul(T.Tensor(a), T.Tensor(b)).data
    assert np.max(np.abs(got - expect)) <= 1e-12


def test_matmul_shape_error():
    with pytest.raises(T.TensorError):
        T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((2, 3))))


def test_matmul_backward_formulas():
    rng = np.random.default_rng(2)
    a = T.Tensor(rng.normal(size=(3, 4)))
    b = T.Tensor(rng.normal(size=(4, 2)))
    tape = T.Tape()
    out = T.matmul(a, b, tape)
    loss = T.tsum(out, tape)
    tape.backward(loss)
    g = np.ones((3, 2))
    assert np.allclose(tape.grad(a), g @ b.data.T)
    assert np.allclose(tape.grad(b), a.data.T @ g)


# -- segment_mean -------------------------------------------------------------


def test_segment_mean_pair():
    out = T.segment_mean(T.Tensor([[1.0], [3.0]]), [0, 0], 1)
    assert out.data.tolist() == [[2.0]]


def test_segment_mean_empty_segment_is_zero():
    out = T.segment_mean(T.Tensor([[1.0], [3.0]]), [0, 0], 2)
    assert out.data[1].tolist() == [0.0]


def test_segment_mean_against_loop():
    rng = np.random.default_rng(3)
    vals = rng.normal(size=(6, 3))
    seg = np.array([0, 1, 2, 0, 1, 0])
    expect = np.zeros((3, 3))
    for s in range(3):
        members = vals[seg == s]
        expect[s] = members.mean(axis=0)
    got = T.segment_mean(T.Tensor(vals), seg, 3).data
    assert np.allclose(got, expect, atol=1e-12)


def test_segment_mean_out_of_range():
    with pytest.raises(IndexError):
        T.segment_mean(T.Tensor([[1.0]]), [5], 2)


def test_segment_mean_backward_conserves_mass():
    rng = np.random.default_rng(4)
    vals = T.Tensor(rng.normal(size=(7, 2)))
    seg = np.array([0, 1, 1, 2, 2, 2, 0])
    tape = T.Tape()
    out = T.segment_mean(vals, seg, 3, tape)
    loss = T.tsum(T.matmul(out, T.Tensor(rng.normal(size=(2, 1))), tape), tape)
    tape.backward(loss)
    upstream = tape.grad(out)
    member = tape.grad(vals)
    for s in range(3):
        assert np.allclose(member[seg == s].sum(axis=0), upstream[s])


# -- layer_norm ---------------------------------------------------------------


def test_layer_norm_constant_row_collapses_to_beta():
    out = T.layer_norm(
        T.Tensor([[5.0, 5.0, 5.0]]), T.Tensor(np.ones(3)), T.Tensor(np.zeros(3))
    )
    assert np.allclose(out.data, 0.0)


def test_layer_norm_two_values():
    out = T.layer_norm(T.Tensor([[1.0, 3.0]]), T.Tensor(np.ones(2)), T.Tensor(np.zeros(2)))
    # mean 2, population var 1, eps 1e-5 -> +-(1/sqrt(1+1e-5))
    expect = 1.0 / np.sqrt(1.0 + 1e-5)
    assert np.allclose(out.data, [[-expect, expect]])
    assert abs(out.data[0, 1] - 0.99999) < 1e-4


def test_layer_norm_statistics():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(6, 9)) * 3 + 1
    out = T.layer_norm(T.Tensor(x), T.Tensor(np.ones(9)), T.Tensor(np.zeros(9))).data
    assert np.max(np.abs(out.mean(axis=1))) <= 1e-10
    assert np.allclose(out.var(axis=1), 1.0, atol=1e-4)


def test_layer_norm_gradient():
    rng = np.random.default_rng(6)
    x = T.Tensor(rng.uniform(-2, 2, size=(3, 5)))
    gamma = T.Tensor(rng.uniform(0.5, 1.5, size=5))
    beta = T.Tensor(rng.uniform(-1, 1, size=5))
    w = T.Tensor(rng.normal(size=(5, 1)))

    def build(tape):
        return T.tsum(T.matmul(T.layer_norm(x, gamma, beta, tape), w, tape), tape)

    check_gradients(build, [x, gamma, beta], rng)


# -- gelu ---------------------------------------------------------------------


def test_gelu_values():
    assert T.gelu(T.Tensor([0.0])).data[0] == 0.0
    assert abs(T.gelu(T.Tensor([10.0])).data[0] - 10.0) <= 1e-6
    assert abs(T.gelu(T.Tensor([1.0])).data[0] - 0.84119) <= 1e-4


def test_gelu_gradient():
    rng = np.random.default_rng(7)
    x = T.Tensor(rng.uniform(-2, 2, size=(2, 4)))

    def build(tape):
        return T.tsum(T.gelu(x, tape), tape)

    check_gradients(build, [x], rng)


# -- cosine --------------------------------------------------------------------


def test_cosine_values():
    v = T.Tensor([1.0, 2.0])
    assert T.cosine(v, T.Tensor([1.0, 2.0])).item() == pytest.approx(1.0)
    assert T.cosine(T.Tensor([1.0, 0.0]), T.Tensor([0.0, 1.0])).item() == 0.0
    got = T.cosine(T.Tensor([1.0, 1.0]), T.Tensor([1.0, 0.0])).item()
    assert got == pytest.approx(np.sqrt(2) / 2, abs=1e-9)


def test_cosine_zero_norm_is_zero_with_zero_gradient():
    a = T.Tensor([0.0, 0.0])
    b = T.Tensor([1.0, 2.0])
    tape = T.Tape()
    out = T.cosine(a, b, tape)
    assert out.item() == 0.0
    tape.backward(out)
    assert np.array_equal(tape.grad(a), np.zeros(2))
    assert np.array_equal(tape.grad(b), np.zeros(2))


def test_cosine_gradient():
    rng = np.random.default_rng(8)
    a = T.Tensor(rng.uniform(-2, 2, size=4))
    b = T.Tensor(rng.uniform(-2, 2, size=4))

    def build(tape):
        return T.cosine(a, b, tape)

    check_gradients(build, [a, b], rng)


# -- bce -------------------------------------------------------------------------


def test_bce_values():
    assert T.bce(T.Tensor(0.5), 1.0).item() == pytest.approx(np.log(2), abs=1e-9)
    assert T.bce(T.Tensor(1.0), 1.0).item() <= 1e-6
    assert T.bce(T.Tensor(0.9), 0.0).item() == pytest.approx(-np.log(0.1), abs=1e-9)


def test_bce_gradient():
    rng = np.random.default_rng(9)
    p = T.Tensor(0.37)
    for y in (0.0, 1.0):
        def build(tape, y=y):
            return T.bce(p, y, tape)

        check_gradients(build, [p], rng)


# -- adam ----------------------------------------------------------------------


def test_adam_first_step_is_signed_lr():
    lr = 1e-3
    theta = T.Tensor([2.0, -1.0])
    before = theta.data.copy()
    state = T.AdamState(lr=lr, weight_decay=0.0)
    g = np.array([100.0, -50.0])
    T.adam_step({"p": theta}, {"p": g}, state)
    delta = theta.data - before
    assert np.all(np.abs(delta + lr * np.sign(g)) <= 1e-9 * lr)


def test_adam_zero_grad_no_motion():
    theta = T.Tensor([1.0, 2.0])
    before = theta.data.copy()
    T.adam_step({"p": theta}, {"p": np.zeros(2)}, T.AdamState(lr=0.1, weight_decay=0.0))
    assert np.array_equal(theta.data, before)


def test_adam_two_steps_match_hand_recurrence():
    # f(theta) = theta^2, grad = 2 theta, from theta = 1
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    theta = T.Tensor([1.0])
    state = T.AdamState(lr=lr, weight_decay=0.0, beta1=b1, beta2=b2, eps=eps)

    # independent hand-rolled recurrence
    th, m, v = 1.0, 0.0, 0.0
    for t in (1, 2):
        g = 2 * th
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        th = th - lr * mh / (np.sqrt(vh) + eps)

    for _ in (1, 2):
        T.adam_step({"p": theta}, {"p": 2 * theta.data}, state)
    assert theta.data[0] == pytest.approx(th, abs=1e-15)


def test_adam_weight_decay_added_to_gradient():
    lr, wd = 0.1, 0.5
    theta = T.Tensor([1.0])
    T.adam_step({"p": theta}, {"p": np.zeros(1)}, T.AdamState(lr=lr, weight_decay=wd))
    # g = wd * theta = 0.5; first step moves by ~lr * sign
    assert theta.data[0] < 1.0


def test_adam_shape_mismatch():
    with pytest.raises(T.TensorError):
        T.adam_step({"p": T.Tensor([1.0])}, {"p": np.zeros(2)}, T.AdamState())


# -- tape / backward ---------------------------------------------------------------


def test_backward_sum_gives_ones():
    x = T.Tensor(np.arange(6, dtype=float).reshape(2, 3))
    tape = T.Tape()
    loss = T.tsum(x, tape)
    tape.backward(loss)
    assert np.array_equal(tape.grad(x), np.ones((2, 3)))


def test_backward_composite_chain_gradient():
    rng = np.random.default_rng(10)
    theta = T.Tensor(rng.uniform(-2, 2, size=3))
    c = T.Tensor(rng.uniform(-2, 2, size=3))

    def build(tape):
        s = T.cosine(theta, c, tape)
        p = T.score_to_prob(s, tape)
        return T.bce(p, 1.0, tape)

    check_gradients(build, [theta], rng)


def test_backward_twice_raises():
    x = T.Tensor([1.0])
    tape = T.Tape()
    loss = T.tsum(x, tape)
    tape.backward(loss)
    with pytest.raises(T.TapeError):
        tape.backward(loss)


def test_unreached_leaf_gets_zeros():
    x = T.Tensor([1.0, 2.0])
    unused = T.Tensor([[3.0]])
    tape = T.Tape()
    loss = T.tsum(x, tape)
    tape.backward(loss)
    assert np.array_equal(tape.grad(unused), np.zeros((1, 1)))


def test_gather_and_scatter_ops_gradient():
    rng = np.random.default_rng(11)
    x = T.Tensor(rng.normal(size=(5, 3)))
    rows = T.Tensor(rng.normal(size=(2, 3)))
    idx = np.array([1, 3])

    def build(tape):
        picked = T.gather_rows(x, np.array([0, 1, 1, 4]), tape)
        merged = T.add_rows_at(picked, np.array([0, 2]), rows, tape)
        one = T.take_row(merged, 2, tape)
        return T.tsum(T.add(one, one, tape), tape)

    check_gradients(build, [x, rows], rng)
    _ = idx


def test_ops_are_deterministic():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(8, 5))
    seg = rng.integers(0, 4, size=8)
    a = T.segment_mean(T.Tensor(x), seg, 4).data
    b = T.segment_mean(T.Tensor(x), seg, 4).data
    assert a.tobytes() == b.tobytes()
    g1 = T.gelu(T.Tensor(x)).data
    g2 = T.gelu(T.Tensor(x)).data
    assert g1.tobytes() == g2.tobytes()


def test_finite_difference_sweep_over_ops():
    """Central differences (step 1e-5) vs analytic gradients on random [-2, 2] inputs."""
    rng = np.random.default_rng(13)
    for trial in range(3):
        x = T.Tensor(rng.uniform(-2, 2, size=(4, 3)))
        w = T.Tensor(rng.uniform(-2, 2, size=(3, 3)))
        gamma = T.Tensor(rng.uniform(0.5, 1.5, size=3))
        beta = T.Tensor(rng.uniform(-0.5, 0.5, size=3))
        seg = np.array([0, 1, 0, 2])

        def build(tape):
            h = T.matmul(x, w, tape)
            h = T.layer_norm(h, gamma, beta, tape)
            h = T.gelu(h, tape)
            m = T.segment_mean(h, seg, 3, tape)
            s = T.cosine(T.take_row(m, 0, tape), T.take_row(m, 2, tape), tape)
            return T.bce(T.score_to_prob(s, tape), 1.0, tape)

        check_gradients(build, [x, w, gamma, beta], rng)


# -- archive --------------------------------------------------------------------


def test_archive_round_trip(tmp_path):
    rng = np.random.default_rng(14)
    tensors = {
        "alpha": T.Tensor(rng.normal(size=(3, 4))),
        "beta/gamma": T.Tensor(rng.normal(size=7)),
        "scalar": T.Tensor(2.5),
    }
    path = str(tmp_path / "params.tensors")
    T.save_tensors(path, tensors)
    loaded = T.load_tensors(path)
    assert list(loaded) == list(tensors)
    for name, t in tensors.items():
        assert np.array_equal(loaded[name], t.data)


def test_archive_bad_magic(tmp_path):
    path = tmp_path / "bad.tensors"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(T.ArchiveFormatError):
        T.load_tensors(str(path))


def test_archive_truncated(tmp_path):
    rng = np.random.default_rng(15)
    path = str(tmp_path / "params.tensors")
    T.save_tensors(path, {"w": T.Tensor(rng.normal(size=(10, 10)))})
    blob = open(path, "rb").read()
    with open(path, "wb") as f:
        f.write(blob[: len(blob) // 2])
    with pytest.raises(T.ArchiveFormatError):
        T.load_tensors(path)


def test_archive_version_mismatch(tmp_path):
    path = tmp_path / "v9.tensors"
    path.write_bytes(T.ARCHIVE_MAGIC + (9).to_bytes(4, "little") + (0).to_bytes(4, "little"))
    with pytest.raises(T.ArchiveFormatError):
        T.load_tensors(str(path))
