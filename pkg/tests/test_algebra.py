import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cheeger.algebra import (
    AlgebraError,
    LieAlgebra,
    MetricOperator,
    algebra_from_json,
    builtin,
    chain_blocks,
    check_bi_invariance,
    commutant_basis,
    make_chain,
    named_subalgebra,
    random_invariant_metric,
    subalgebra,
)

# su(3) structure constants for e_a = -i λ_a / 2, entered by hand from the
# standard Gell-Mann table (f_123 = 1, f_458 = f_678 = √3/2, the rest ½).
SU3_TABLE = {
    (1, 2, 3): 1.0,
    (1, 4, 7): 0.5,
    (1, 6, 5): 0.5,
    (2, 4, 6): 0.5,
    (2, 5, 7): 0.5,
    (3, 4, 5): 0.5,
    (3, 7, 6): 0.5,
    (4, 5, 8): np.sqrt(3) / 2,
    (6, 7, 8): np.sqrt(3) / 2,
}


def su3_from_table():
    c = np.zeros((8, 8, 8))
    for (a, b, d), v in SU3_TABLE.items():
        for (i, j, k), sign in zip(itertools.permutations((a - 1, b - 1, d - 1)),
                                   (1, -1, -1, 1, 1, -1)):
            c[i, j, k] = sign * v
    return c


def vectors(dim):
    return st.lists(st.floats(-3, 3), min_size=dim, max_size=dim).map(np.array)


def test_so3_basis_bracket():
    so3 = builtin("so3")
    assert so3.dim == 3
    assert np.allclose(so3.bracket([1, 0, 0], [0, 1, 0]), [0, 0, 1], atol=0)
    assert so3.structure[0, 1, 2] == 1.0


def test_su3_matches_hand_table():
    su3 = builtin("su3")
    assert np.allclose(su3.structure, su3_from_table(), atol=1e-14)


@pytest.mark.parametrize("name", ["so3", "su2", "su3", "so4", "torus(3)"])
def test_builtin_invariants(name):
    alg = builtin(name)
    assert alg.jacobi_residual() <= 1e-10
    assert check_bi_invariance(alg) <= 1e-12
    assert alg.is_orthonormal


def test_unknown_builtin():
    with pytest.raises(AlgebraError):
        builtin("g2")


@given(vectors(8), vectors(8), vectors(8))
@settings(max_examples=60, deadline=None)
def test_jacobi_and_antisymmetry_random(x, y, z):
    alg = builtin("su3")
    assert np.allclose(alg.bracket(x, x), 0, atol=1e-12)
    jac = (alg.bracket(alg.bracket(x, y), z) + alg.bracket(alg.bracket(y, z), x)
           + alg.bracket(alg.bracket(z, x), y))
    scale = max(1.0, np.linalg.norm(x) * np.linalg.norm(y) * np.linalg.norm(z))
    assert np.linalg.norm(jac) <= 1e-10 * scale


def test_bi_invariance_detects_bad_gram():
    so3 = builtin("so3")
    bad = LieAlgebra(so3.structure, np.diag([1.0, 1.0, 2.0]))
    assert check_bi_invariance(bad) > 0.1


def test_su3_trace_form_is_invariant():
    # Q proportional to -tr(XY) in the defining representation
    su3 = builtin("su3")
    assert check_bi_invariance(LieAlgebra(su3.structure, 2.0 * np.eye(8))) <= 1e-10


def test_structure_must_be_antisymmetric():
    c = np.zeros((2, 2, 2))
    c[0, 1, 0] = 1.0
    with pytest.raises(AlgebraError):
        LieAlgebra(c, np.eye(2))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        builtin("so3").bracket([1, 0], [0, 1])


def test_orthonormalized_basis_has_identity_gram():
    so3 = builtin("so3")
    skew = LieAlgebra(so3.structure, np.array([[2.0, 0.5, 0], [0.5, 1.0, 0], [0, 0, 3.0]]))
    ortho, M = skew.orthonormalized()
    assert np.allclose(ortho.gram, np.eye(3), atol=1e-12)
    assert np.allclose(M.T @ skew.gram @ M, np.eye(3), atol=1e-12)


def test_json_round_trip(tmp_path):
    su3 = builtin("su3")
    path = tmp_path / "su3.json"
    path.write_text(json.dumps(su3.to_json()))
    again = algebra_from_json(path)
    assert np.array_equal(again.structure, su3.structure)


def test_json_rejects_contradiction():
    doc = {"dim": 3, "structure": [[0, 1, 2, 1.0], [1, 0, 2, 1.0]]}
    with pytest.raises(AlgebraError):
        algebra_from_json(doc)


def test_so4_splits_into_commuting_ideals():
    so4 = builtin("so4")
    plus = named_subalgebra(so4, "so3_plus")
    minus = named_subalgebra(so4, "so3_minus")
    for a in range(3):
        for b in range(3):
            assert np.allclose(so4.bracket(plus.basis[:, a], minus.basis[:, b]), 0, atol=1e-14)
    # ideals: brackets with anything stay inside
    for x in np.eye(6):
        for a in range(3):
            assert plus.contains(so4.bracket(x, plus.basis[:, a]))


def test_subalgebra_closure_is_checked():
    su3 = builtin("su3")
    with pytest.raises(AlgebraError):
        subalgebra(su3, np.eye(8)[[0, 3]])


def test_chain_blocks_so3():
    so3 = builtin("so3")
    chain = make_chain(so3, [[[0, 0, 1]]])
    bases, projectors = chain_blocks(so3, chain)
    assert [b.shape[1] for b in bases] == [1, 2]
    assert np.allclose(sum(projectors), np.eye(3), atol=1e-12)


def test_chain_blocks_su3_torus():
    su3 = builtin("su3")
    chain = make_chain(su3, [named_subalgebra(su3, "torus")])
    assert [b.shape[1] for b in chain_blocks(su3, chain)[0]] == [2, 6]


def test_chain_blocks_su3_three_levels():
    su3 = builtin("su3")
    chain = make_chain(su3, [named_subalgebra(su3, "u1"), named_subalgebra(su3, "su2")])
    bases, projectors = chain_blocks(su3, chain)
    assert [b.shape[1] for b in bases] == [1, 2, 5]
    assert np.allclose(sum(projectors), np.eye(8), atol=1e-12)
    for i, j in itertools.combinations(range(3), 2):
        assert np.allclose(projectors[i] @ projectors[j], 0, atol=1e-12)


def test_chain_must_nest():
    su3 = builtin("su3")
    with pytest.raises(AlgebraError):
        make_chain(su3, [named_subalgebra(su3, "u1_8"), named_subalgebra(su3, "su2")])


def test_metric_operator_flags():
    m = MetricOperator(np.diag([1.0, 2.0, -1.0]))
    assert not m.positive
    assert np.allclose(m.eigenvalues, [-1, 1, 2])
    with pytest.raises(AlgebraError):
        MetricOperator(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_metric_from_blocks():
    so3 = builtin("so3")
    chain = make_chain(so3, [[[0, 0, 1]]])
    m = MetricOperator.from_blocks(so3, chain, [0.5, 1.0])
    assert np.allclose(m.phi, np.diag([1.0, 1.0, 0.5]))


@pytest.mark.parametrize("name,sub", [("so3", "u1"), ("su3", "torus"), ("su3", "su2"), ("so4", "so3_plus")])
def test_random_invariant_metric_commutes(name, sub):
    alg = builtin(name)
    k = named_subalgebra(alg, sub)
    m = random_invariant_metric(alg, k, np.random.default_rng(0))
    assert m.positive
    for a in range(k.dim):
        ad = alg.ad(k.basis[:, a])
        assert np.abs(m.phi @ ad - ad @ m.phi).max() < 1e-10
    assert len(commutant_basis(alg, k)) >= 1
