import numpy as np
import pytest
from conftest import A, B, K
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from consensus_margins.errors import NearPoleError
from consensus_margins.freqresp import (
    eval_loop,
    eval_loop_batch,
    hermitian_split,
    loop_matrix,
    networked_determinant,
    product_determinant,
)
from consensus_margins.model import AgentModel, TransformedLoop, build_laplacian, transformed_loops

finite = st.floats(-2, 2, allow_nan=False, allow_infinity=False)


def test_loop_matrix_closed_form():
    m = AgentModel(A, B, K, 0.15)
    lp = TransformedLoop(3, 2.618, m)
    w = 0.7
    H = np.linalg.inv(1j * w * np.eye(2) - A) @ B @ K
    np.testing.assert_allclose(loop_matrix(lp, w), 0.15 * 2.618 * H, rtol=1e-13)
    r = eval_loop(lp, w)
    assert r.sigma_max >= r.sigma_min
    np.testing.assert_allclose(r.X + 1j * r.Y, r.G, atol=1e-15)


def test_hermitian_split_parts():
    G = np.array([[1 + 2j, 3], [1j, -1]])
    X, Y = hermitian_split(G)
    np.testing.assert_allclose(X, X.conj().T)
    np.testing.assert_allclose(Y, Y.conj().T)
    np.testing.assert_allclose(X + 1j * Y, G)


def test_near_pole():
    # A has an eigenvalue at zero, so omega = 0 is a pole of every loop.
    lp = TransformedLoop(2, 1.0, AgentModel(A, B, K, 0.15))
    with pytest.raises(NearPoleError):
        loop_matrix(lp, 0.0)
    _, sv, near = eval_loop_batch(lp, [0.0, 1.0])
    assert near.tolist() == [True, False]
    assert np.isinf(sv[0, 0])


def test_batch_matches_pointwise():
    lp = TransformedLoop(2, 0.38, AgentModel(A, B, K, 0.15))
    w = np.logspace(-2, 2, 17)
    G, sv, _ = eval_loop_batch(lp, w)
    for k, om in enumerate(w):
        np.testing.assert_allclose(G[k], loop_matrix(lp, om), rtol=1e-12)
        np.testing.assert_allclose(sv[k], np.linalg.svd(G[k], compute_uv=False), rtol=1e-12)


def test_three_agent_determinant(three):
    w = 1.0
    d1 = networked_determinant(three.model, three.graph, w)
    d2 = product_determinant(three.model, three.graph, w)
    assert abs(d1 - d2) <= 1e-8 * abs(d1)


@settings(max_examples=150, deadline=None)
@given(
    arrays(float, (3, 3), elements=finite),
    arrays(float, (3, 2), elements=finite),
    arrays(float, (2, 3), elements=finite),
    arrays(float, (4, 4), elements=st.floats(0, 2)),
    st.floats(0.05, 5.0),
    st.floats(0.1, 10.0),
)
def test_determinant_identity(Am, Bm, Km, adj, c, w):
    np.fill_diagonal(adj, 0)
    Am = Am - 7 * np.eye(3)  # Gershgorin keeps the spectrum of A off the imaginary axis
    m = AgentModel(Am, Bm, Km, c)
    g = build_laplacian(adj)
    d1 = networked_determinant(m, g, w)
    d2 = product_determinant(m, g, w)
    assert abs(d1 - d2) <= 1e-8 * max(abs(d1), abs(d2), 1.0)


def test_transformed_loop_product_matches_loops(five):
    # The product form is the product over all loops including the zero eigenvalue.
    loops = transformed_loops(five.model, five.graph)
    w = 0.9
    prod = np.prod([np.linalg.det(np.eye(2) + loop_matrix(lp, w)) for lp in loops])
    assert product_determinant(five.model, five.graph, w) == pytest.approx(prod, rel=1e-10)
