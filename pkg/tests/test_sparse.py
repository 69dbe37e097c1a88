import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from netlod.sparse import (
    SCHUR_MAX_COND,
    NotPositiveDefiniteError,
    SaddleFactor,
    SingularMatrixError,
    assemble,
    extract,
    index_set,
    is_symmetric,
    read_coo,
    solve_saddle,
    solve_spd,
    write_coo,
)


def test_assemble_sums_duplicates():
    A = assemble([(0, 0, 1.0), (0, 0, 2.0)], 1, 1)
    assert A.toarray().tolist() == [[3.0]]
    assert A.nnz == 1


def test_assemble_empty_is_zero():
    A = assemble([], 2, 2)
    assert A.shape == (2, 2)
    assert not A.toarray().any()


def test_assemble_single_entry_not_mirrored():
    A = assemble([(0, 1, 5.0)], 2, 2).toarray()
    assert A[0, 1] == 5.0 and A[1, 0] == 0.0


def test_assemble_out_of_range():
    with pytest.raises(IndexError):
        assemble([(2, 0, 1.0)], 2, 2)
    with pytest.raises(IndexError):
        assemble([(0, -1, 1.0)], 2, 2)


def test_index_set_sorted_and_checked():
    assert index_set([3, 1, 2, 1]).tolist() == [1, 2, 3]
    with pytest.raises(IndexError):
        index_set([0, 5], 5)


def test_extract_examples():
    I3 = sp.identity(3, format="csr")
    assert np.array_equal(extract(I3, [0, 2], [0, 2]).toarray(), np.eye(2))
    A = sp.csr_matrix(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert extract(A, [1], [0]).toarray().tolist() == [[3.0]]
    assert np.array_equal(extract(A, [0, 1], [0, 1]).toarray(), A.toarray())
    with pytest.raises(IndexError):
        extract(A, [2], [0])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**31 - 1))
def test_extract_matches_dense_and_is_idempotent(n, seed):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((n, n)) * (rng.random((n, n)) < 0.4)
    rows = np.flatnonzero(rng.random(n) < 0.6)
    cols = np.flatnonzero(rng.random(n) < 0.6)
    sub = extract(sp.csr_matrix(D), rows, cols)
    assert np.array_equal(sub.toarray(), D[np.ix_(rows, cols)])
    again = extract(sub, np.arange(rows.size), np.arange(cols.size))
    assert np.array_equal(again.toarray(), sub.toarray())


def test_solve_spd_examples():
    assert np.allclose(solve_spd(sp.csr_matrix(2 * np.eye(2)), [2.0, 4.0]), [1.0, 2.0])
    A = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(solve_spd(A, [3.0, 3.0]), [1.0, 1.0], atol=1e-14)
    assert np.array_equal(solve_spd(sp.identity(2), np.zeros(2)), np.zeros(2))


def _random_spd(n, rng):
    M = rng.standard_normal((n, n)) * (rng.random((n, n)) < 0.3)
    return M @ M.T + n * np.eye(n)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 50), st.integers(0, 2**31 - 1))
def test_solve_spd_matches_dense_oracle(n, seed):
    rng = np.random.default_rng(seed)
    A = _random_spd(n, rng)
    b = rng.standard_normal(n)
    x = solve_spd(sp.csr_matrix(A), b)
    ref = np.linalg.solve(A, b)
    assert np.max(np.abs(x - ref)) <= 1e-8 * max(1.0, np.max(np.abs(ref)))


def test_solve_spd_distinguishes_indefinite_from_singular():
    with pytest.raises(NotPositiveDefiniteError):
        solve_spd(sp.csr_matrix(np.diag([1.0, -1.0])), [1.0, 1.0])
    with pytest.raises(SingularMatrixError):
        solve_spd(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])), [1.0, 0.0])


def test_solve_spd_rejects_zero_diagonal():
    with pytest.raises(NotPositiveDefiniteError):
        solve_spd(sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]])), [1.0, 1.0])


def test_solve_saddle_hand_examples():
    phi, eta = solve_saddle(sp.identity(2), sp.csr_matrix([[1.0, 0.0]]), np.array([1.0, 1.0]))
    assert np.allclose(phi, [0.0, 1.0]) and np.allclose(eta, [1.0])
    phi, eta = solve_saddle(2 * sp.identity(2), sp.csr_matrix([[1.0, 1.0]]), np.array([2.0, 0.0]))
    assert np.allclose(phi, [0.5, -0.5]) and np.allclose(eta, [1.0])


def test_solve_saddle_without_constraints_is_spd_solve():
    K = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    phi, eta = solve_saddle(K, sp.csr_matrix((0, 2)), np.array([3.0, 3.0]))
    assert np.allclose(phi, [1.0, 1.0]) and eta.size == 0


def _kkt_oracle(K, C, r):
    n, p = K.shape[0], C.shape[0]
    M = np.block([[K, C.T], [C, np.zeros((p, p))]])
    x = np.linalg.solve(M, np.concatenate([r, np.zeros(p)]))
    return x[:n], x[n:]


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**31 - 1), st.booleans())
def test_saddle_matches_dense_kkt_and_satisfies_constraints(n, seed, singular_block):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, n))
    C = rng.standard_normal((p, n))
    if singular_block:
        # K only semi-definite: its null space is fixed by the constraints
        V = rng.standard_normal((n, n - p))
        K = V @ V.T
    else:
        K = _random_spd(n, rng)
    M = np.block([[K, C.T], [C, np.zeros((p, p))]])
    if np.linalg.cond(M) > 1e8:
        return
    r = rng.standard_normal(n)
    fac = SaddleFactor(sp.csr_matrix(K), sp.csr_matrix(C))
    phi, eta = fac.solve(r)
    ref_phi, ref_eta = _kkt_oracle(K, C, r)
    assert np.max(np.abs(C @ phi)) <= 1e-9
    assert np.allclose(phi, ref_phi, atol=1e-7 * max(1, np.abs(ref_phi).max()))
    assert np.allclose(eta, ref_eta, atol=1e-7 * max(1, np.abs(ref_eta).max()))
    if singular_block:
        assert fac.method == "lu"
    else:
        S = C @ np.linalg.solve(K, C.T)
        assert fac.method == ("schur" if np.linalg.cond(S) <= SCHUR_MAX_COND else "lu")


def test_saddle_ill_conditioned_constraints_use_block_factorization():
    rng = np.random.default_rng(2)
    K = _random_spd(8, rng)
    C = rng.standard_normal((3, 8))
    C[2] = C[1] + 1e-4 * rng.standard_normal(8)
    r = rng.standard_normal(8)
    fac = SaddleFactor(sp.csr_matrix(K), sp.csr_matrix(C))
    assert fac.method == "lu" and not fac.regularized
    phi, _ = fac.solve(r)
    N = la.null_space(C)
    ref = N @ np.linalg.solve(N.T @ K @ N, N.T @ r)
    assert np.allclose(phi, ref, rtol=0, atol=1e-8 * np.abs(ref).max())


def test_saddle_shares_factorization_across_columns():
    rng = np.random.default_rng(3)
    K = _random_spd(10, rng)
    C = rng.standard_normal((3, 10))
    R = rng.standard_normal((10, 4))
    fac = SaddleFactor(sp.csr_matrix(K), sp.csr_matrix(C))
    phi, eta = fac.solve(R)
    for k in range(4):
        ref, _ = _kkt_oracle(K, C, R[:, k])
        assert np.allclose(phi[:, k], ref)


def test_saddle_zero_rhs_gives_zero():
    fac = SaddleFactor(sp.identity(3), sp.csr_matrix([[1.0, 1.0, 1.0]]))
    phi, eta = fac.solve(np.zeros(3))
    assert not phi.any() and not eta.any()


def test_saddle_dependent_constraints_fall_back_to_regularized():
    # duplicated constraint row makes the block matrix exactly singular
    K = sp.csr_matrix(np.array([[2.0, 0.0], [0.0, 2.0]]))
    C = sp.csr_matrix(np.array([[1.0, 0.0], [1.0, 0.0]]))
    fac = SaddleFactor(K, C, context="dup")
    assert fac.regularized
    phi, _ = fac.solve(np.array([1.0, 4.0]), rtol=1e-6)
    assert np.allclose(phi, [0.0, 2.0], atol=1e-8)


def test_saddle_singular_block_reports_context():
    K = sp.csr_matrix((2, 2))
    with pytest.raises(SingularMatrixError) as info:
        SaddleFactor(K, sp.csr_matrix((0, 2)), context=("element", 7)).solve(np.ones(2))
    assert info.value.context == ("element", 7)


def test_is_symmetric():
    assert is_symmetric(sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]])))
    assert not is_symmetric(sp.csr_matrix(np.array([[1.0, 2.0], [2.5, 1.0]])))


def test_coordinate_text_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    D = rng.standard_normal((5, 4)) * (rng.random((5, 4)) < 0.5)
    path = tmp_path / "m.coo"
    write_coo(path, sp.csr_matrix(D), header="test")
    assert np.array_equal(read_coo(path).toarray(), D)
    lines = path.read_text().splitlines()
    assert lines[1] == "# 5 4"


def test_coordinate_text_errors(tmp_path):
    bad = tmp_path / "bad.coo"
    bad.write_text("# 2 2\n0 1\n")
    with pytest.raises(ValueError, match=":2:"):
        read_coo(bad)
    noshape = tmp_path / "noshape.coo"
    noshape.write_text("0 0 1.0\n")
    with pytest.raises(ValueError, match="shape"):
        read_coo(noshape)
