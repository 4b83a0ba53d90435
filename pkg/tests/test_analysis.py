import numpy as np
import pytest

from cheeger.algebra import builtin, named_subalgebra, random_invariant_metric
from cheeger.analysis import (
    SearchConfig,
    ZeroPlaneRecord,
    classify_record,
    count_distinct,
    deformed_plane,
    fd_curvature,
    find_zero_planes,
    grassmannian_grid,
    grid_census,
    is_closed_chain,
    milnor_curvature,
    milnor_sectional,
    moving_plane_oracle,
    submersion_metric,
    zero_set_dimension,
)
from cheeger.engine import PlaneTag, apply_Ct_inv, gs_curvature, kappa_c
from cheeger.geometry import GeometryError, GroupBackend, SphereBackend, SpherePoint, shape_operator

GENERIC = SpherePoint.normalized([1, 0, 0], [0, 0, 1])
DIAGONAL = SpherePoint.normalized([0, 0, 1], [0, 0, 1])
ANTIDIAGONAL = SpherePoint.normalized([0, 0, 1], [0, 0, -1])
MIXED = (np.array([1.0, 0, 0, 0]), np.array([0, 0, 1.0, 0]))


def group(name, sub, rng=None):
    alg = builtin(name)
    k = named_subalgebra(alg, sub)
    phi = random_invariant_metric(alg, k, rng) if rng is not None else None
    return GroupBackend(alg, k, phi)


# --- Milnor and submersion oracles ----------------------------------------------------


def test_milnor_bi_invariant_bracket_formula():
    su3 = builtin("su3")
    rng = np.random.default_rng(1)
    for _ in range(10):
        x, y = rng.normal(size=(2, 8))
        expected = 0.25 * np.sum(su3.bracket(x, y) ** 2)
        assert milnor_curvature(su3, np.eye(8), x, y) == pytest.approx(expected, rel=1e-12)


def test_milnor_berger_sphere():
    # SU(2) with the fiber shrunk by λ²: the horizontal plane has 4 - 3λ² after scaling
    so3 = builtin("so3")
    lam2 = 0.25
    phi = np.diag([1.0, 1.0, lam2])
    # normalized so the round metric (λ = 1) gives 1/4
    assert milnor_sectional(so3, np.eye(3), [1, 0, 0], [0, 1, 0]) == pytest.approx(0.25)
    assert milnor_sectional(so3, phi, [1, 0, 0], [0, 1, 0]) == pytest.approx(0.25 * (4 - 3 * lam2))
    assert milnor_sectional(so3, phi, [1, 0, 0], [0, 0, 1]) == pytest.approx(0.25 * lam2)


def test_milnor_scaled_fiber_matches_closed_form():
    so3 = builtin("so3")
    k = named_subalgebra(so3, "u1")
    for s in (0.25, 0.5, 1.5):
        m = milnor_curvature(so3, np.diag([1.0, 1.0, s]), [0, 0, 1], [1, 0, 0])
        assert m == pytest.approx(s ** 2 / 4, abs=1e-14)
        assert m == pytest.approx(gs_curvature(so3, k, [0, 0, 1], [1, 0, 0], s), abs=1e-14)


def test_milnor_symmetry_and_bilinearity():
    su3 = builtin("su3")
    rng = np.random.default_rng(12)
    phi = random_invariant_metric(su3, named_subalgebra(su3, "su2"), rng).phi
    for _ in range(10):
        A, B = rng.normal(size=(2, 8))
        base = milnor_curvature(su3, phi, A, B)
        assert milnor_curvature(su3, phi, B, A) == pytest.approx(base, rel=1e-11)
        assert milnor_curvature(su3, phi, 2 * A, -3 * B) == pytest.approx(36 * base, rel=1e-11)
        assert milnor_curvature(su3, phi, A, B + 0.7 * A) == pytest.approx(base, rel=1e-11)


def test_submersion_metric_bi_invariant_closed_form():
    so3 = builtin("so3")
    k = named_subalgebra(so3, "u1")
    for t in (0.0, 0.5, 3.0):
        g = submersion_metric(np.eye(3), k.basis, t)
        assert np.allclose(g, np.diag([1.0, 1.0, 1.0 / (1.0 + t)]), atol=1e-12)


@pytest.mark.parametrize("name,sub", [("so3", "u1"), ("su3", "torus"), ("su3", "su2"), ("so4", "so3_plus")])
def test_moving_plane_oracle_matches_engine(name, sub):
    rng = np.random.default_rng(3)
    b = group(name, sub, rng)
    f = b.frame()
    for t in (0.2, 1.0, 4.0):
        phi_t = submersion_metric(b.phi, b.k.basis, t)
        for _ in range(5):
            V, W = rng.normal(size=(2, b.group.dim))
            oracle = moving_plane_oracle(b.phi, phi_t, V)
            assert np.allclose(oracle, apply_Ct_inv(f, V, t), atol=1e-10)
            A, B = apply_Ct_inv(f, V, t), apply_Ct_inv(f, W, t)
            engine = kappa_c(b, f, V, W, t, orthonormalize=False)
            ref = milnor_curvature(b.group, phi_t, A, B)
            assert engine.total == pytest.approx(ref, rel=1e-9, abs=1e-12)


# --- chart oracle ---------------------------------------------------------------------


def test_fd_unit_sphere_factor():
    b = SphereBackend()
    assert fd_curvature(b, 0.0, GENERIC, [1, 0, 0, 0], [0, 1, 0, 0]) == pytest.approx(1.0, abs=5e-5)
    assert fd_curvature(b, 0.0, GENERIC, *MIXED) == pytest.approx(0.0, abs=5e-5)


@pytest.mark.parametrize("t,sec", [(0.5, 1 / 24), (1.0, 5 / 32)])
def test_fd_mixed_plane_becomes_positive(t, sec):
    b = SphereBackend()
    f = b.frame(GENERIC)
    A, B = (apply_Ct_inv(f, v, t) for v in MIXED)
    assert fd_curvature(b, t, GENERIC, A, B) == pytest.approx(sec, abs=5e-5)


def test_fd_random_planes_match_engine():
    b = SphereBackend()
    rng = np.random.default_rng(8)
    for _ in range(20):
        p = b.random_point(rng)
        f = b.frame(p)
        t = float(rng.uniform(0.1, 3.0))
        V, W = rng.normal(size=(2, 4))
        A, B = apply_Ct_inv(f, V, t), apply_Ct_inv(f, W, t)
        engine = kappa_c(b, f, V, W, t, orthonormalize=False)
        fd = fd_curvature(b, t, f, A, B)
        assert fd == pytest.approx(engine.sec, abs=5e-5)


def test_fd_group_matches_milnor():
    rng = np.random.default_rng(4)
    b = group("so3", "u1", rng)
    t = 0.7
    phi_t = submersion_metric(b.phi, b.k.basis, t)
    A, B = rng.normal(size=(2, 3))
    assert fd_curvature(b, t, None, A, B) == pytest.approx(milnor_sectional(b.group, phi_t, A, B), abs=5e-5)


# --- zero-plane search ----------------------------------------------------------------


def test_find_generic_point_single_mixed_plane():
    b = SphereBackend()
    recs = find_zero_planes(b, GENERIC, 1.0)
    assert count_distinct(recs) == 1
    (r,) = recs
    assert r.family_dim == 0
    assert r.plane_class.tag is PlaneTag.FLAT_ALL_T
    assert kappa_c(b, GENERIC, r.V, r.W, 1.0).total <= 1e-9
    A, B = deformed_plane(b.frame(GENERIC), r, 1.0)
    assert abs(fd_curvature(b, 1.0, GENERIC, A, B)) <= 5e-5


def test_find_diagonal_closed_family():
    b = SphereBackend()
    cfg = SearchConfig()
    recs = find_zero_planes(b, DIAGONAL, 1.0, cfg)
    assert count_distinct(recs) == 1
    assert len(recs) >= 20
    assert all(r.family_dim == 1 for r in recs)
    f = b.frame(DIAGONAL)
    assert is_closed_chain(f, [(r.V, r.W) for r in recs], 2 * cfg.trace_step)
    assert max(r.residual for r in recs) <= cfg.zero_threshold
    for r in recs:
        assert kappa_c(b, f, r.V, r.W, 1.0).total <= 1e-9
        assert "CONTRADICTION" not in classify_record(b, r, 1.0).subtags


@pytest.mark.parametrize("seed", range(10))
def test_doubling_multistarts_finds_nothing_new(seed):
    b = SphereBackend()
    p = b.random_point(np.random.default_rng(100 + seed))
    base = count_distinct(find_zero_planes(b, p, 1.0, SearchConfig(seed=seed)))
    more = count_distinct(find_zero_planes(b, p, 1.0, SearchConfig(seed=seed, multistarts=96)))
    assert more <= base == 1


def test_find_bi_invariant_full_group_has_no_zeros():
    assert find_zero_planes(group("so3", "all"), None, 1.0, SearchConfig(multistarts=12)) == []


def test_search_is_seed_stable():
    b = SphereBackend()
    p = b.random_point(np.random.default_rng(5))
    a = find_zero_planes(b, p, 1.0, SearchConfig(seed=7))
    c = find_zero_planes(b, p, 1.0, SearchConfig(seed=7))
    assert [r.to_dict() for r in a] == [r.to_dict() for r in c]


def test_classify_never_contradicts():
    b = SphereBackend()
    recs = find_zero_planes(b, GENERIC, 1.0) + find_zero_planes(b, ANTIDIAGONAL, 1.0)[:5]
    for r in recs:
        classify_record(b, r, 1.0)
        assert "CONTRADICTION" not in r.subtags


def test_classify_torus_plane_has_no_subtag():
    b = group("su3", "torus")
    e = np.eye(8)
    r = classify_record(b, ZeroPlaneRecord("e", e[2], e[7], 0.0), 1.0)
    assert r.plane_class.tag is PlaneTag.FLAT_ALL_T
    assert r.subtags == {"kind": "vertical"}


def test_vertizontal_shape_operator_vanishes_bi_invariant():
    b = group("so3", "u1")
    f = b.frame()
    for U in ([1.0, 0, 0], [0, 1.0, 0], [0.6, 0.8, 0]):
        assert np.linalg.norm(shape_operator(b, f, U, [1.0])) <= 1e-12


def test_zero_set_dimension_examples():
    b = SphereBackend()
    f = b.frame(GENERIC)
    (rec,) = find_zero_planes(b, GENERIC, 1.0, SearchConfig(multistarts=8))
    assert zero_set_dimension(b, f, 1.0, rec.V, rec.W)[0] == 0
    fd = b.frame(DIAGONAL)
    rec = find_zero_planes(b, DIAGONAL, 1.0, SearchConfig(multistarts=8))[0]
    assert zero_set_dimension(b, fd, 1.0, rec.V, rec.W)[0] == 1


def test_search_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(multistarts=0)
    with pytest.raises(ValueError):
        SearchConfig(seed=-1)


# --- grid census ----------------------------------------------------------------------


def test_grassmannian_grid_is_orthonormal():
    g = grassmannian_grid(8)
    assert g.shape == (8 ** 4, 4, 2)
    gram = np.einsum("nia,nib->nab", g, g)
    assert np.allclose(gram, np.eye(2), atol=1e-12)


@pytest.mark.parametrize("p,dim", [(GENERIC, 0), (DIAGONAL, 1), (ANTIDIAGONAL, 1)])
def test_grid_census_examples(p, dim):
    out = grid_census(SphereBackend(), p, 1.0, resolution=16)
    assert out["count"] == 1
    zeros = [c for c in out["components"] if c["is_zero"]]
    assert zeros[0]["dimension"] == dim


def test_grid_census_rejects_group_and_coarse_grid():
    with pytest.raises(GeometryError):
        grid_census(group("su3", "torus"), None, 1.0, resolution=8)
    with pytest.raises(ValueError):
        grid_census(SphereBackend(), GENERIC, 1.0, resolution=4)
