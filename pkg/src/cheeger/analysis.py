"""Zero-curvature plane search and independent curvature oracles.

The oracles deliberately avoid the engine's formulas:

* :func:`milnor_curvature` evaluates left-invariant curvature from the Koszul
  connection ``∇_x y = ½([x,y] - ad*_x y - ad*_y x)``.
* :func:`submersion_metric` builds the deformed left-invariant metric as the
  submersion metric of ``g + Q/t`` by minimizing over fiber directions.
* :func:`fd_curvature` differentiates metric components in a chart.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, sparse, spatial
from scipy.sparse import csgraph

from .algebra import LieAlgebra, MetricOperator, Subalgebra
from .engine import (
    DeformationParam,
    PlaneClass,
    PlaneTag,
    apply_Ct_inv,
    classify_zero_plane,
    kappa_terms,
)
from .geometry import (
    GeometryBackend,
    GeometryError,
    GroupBackend,
    PointFrame,
    SphereBackend,
    SpherePoint,
    oneill_A,
    shape_operator,
)


# --- left-invariant oracle ----------------------------------------------------------

def _phi(metric) -> np.ndarray:
    phi = metric.phi if isinstance(metric, MetricOperator) else np.asarray(metric, float)
    if np.linalg.eigvalsh(phi).min() <= 0:
        raise ValueError("metric operator is not positive definite")
    return phi


def milnor_connection(alg: LieAlgebra, metric, x, y) -> np.ndarray:
    phi = _phi(metric)
    phi_inv = np.linalg.inv(phi)

    def ad_star(a, b):
        # <ad*_a b, c> = <b, [a, c]>
        return phi_inv @ (alg.ad(a).T @ (phi @ b))

    return 0.5 * (alg.bracket(x, y) - ad_star(x, y) - ad_star(y, x))


def milnor_curvature(alg: LieAlgebra, metric, A, B) -> float:
    """``<R(A,B)B, A>`` for the left-invariant metric ``<x,y> = Q(Φx, y)``."""
    phi = _phi(metric)
    A = np.asarray(A, float)
    B = np.asarray(B, float)

    def nabla(x, y):
        return milnor_connection(alg, phi, x, y)

    RABB = nabla(A, nabla(B, B)) - nabla(B, nabla(A, B)) - nabla(alg.bracket(A, B), B)
    return float(A @ phi @ RABB)


def milnor_sectional(alg: LieAlgebra, metric, A, B) -> float:
    phi = _phi(metric)
    area = (A @ phi @ A) * (B @ phi @ B) - (A @ phi @ B) ** 2
    return milnor_curvature(alg, phi, A, B) / area


def submersion_metric(phi, k_basis, t: float) -> np.ndarray:
    """Metric on G induced from ``<,>_Φ + Q/t`` on ``G x K`` (left-invariant form).

    ``|x|_t² = min_Z |x + Z|²_Φ + |Z|²_Q / t`` over Z in k; the minimum of the
    quadratic is a Schur complement, which continues analytically to ``t < 0``.
    """
    phi = np.asarray(getattr(phi, "phi", phi), float)
    E = np.asarray(k_basis, float)
    if t == 0:
        return phi.copy()
    inner = E.T @ phi @ E + np.eye(E.shape[1]) / t
    out = phi - phi @ E @ np.linalg.solve(inner, E.T @ phi)
    return 0.5 * (out + out.T)


def moving_plane_oracle(phi, phi_t, V):
    """``C_t^{-1} V`` recovered from ``g_t(C_t^{-1}V, ·) = g(V, ·)``."""
    return np.linalg.solve(phi_t, np.asarray(phi, float) @ V)


# --- finite-difference coordinate oracle -----------------------------------------------

def _riemann_from_chart(metric_fn, dim: int, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Riemann tensor ``R_ijkl`` and metric at the chart origin from central differences."""
    h = step
    e = np.eye(dim)
    g0 = metric_fn(np.zeros(dim))
    d1 = np.zeros((dim, dim, dim))  # d1[c] = ∂_c g
    d2 = np.zeros((dim, dim, dim, dim))  # d2[c, d] = ∂_c ∂_d g
    plus = [metric_fn(h * e[c]) for c in range(dim)]
    minus = [metric_fn(-h * e[c]) for c in range(dim)]
    for c in range(dim):
        d1[c] = (plus[c] - minus[c]) / (2 * h)
        d2[c, c] = (plus[c] - 2 * g0 + minus[c]) / h ** 2
    for c, d in itertools.combinations(range(dim), 2):
        val = (metric_fn(h * (e[c] + e[d])) - metric_fn(h * (e[c] - e[d]))
               - metric_fn(h * (e[d] - e[c])) + metric_fn(-h * (e[c] + e[d]))) / (4 * h * h)
        d2[c, d] = d2[d, c] = val
    ginv = np.linalg.inv(g0)
    # Christoffel symbols of the first kind Γ_{k,ij} = ½(∂_i g_jk + ∂_j g_ik - ∂_k g_ij)
    first = 0.5 * (np.einsum("ijk->kij", d1) + np.einsum("jik->kij", d1) - d1)
    gamma = np.einsum("mk,kij->mij", ginv, first)
    # R_ijkl = <R(∂_k, ∂_l) ∂_j, ∂_i> with second derivatives of g
    R = 0.5 * (np.einsum("jkil->ijkl", d2) + np.einsum("iljk->ijkl", d2)
               - np.einsum("ikjl->ijkl", d2) - np.einsum("jlik->ijkl", d2))
    R += (np.einsum("mn,mjk,nil->ijkl", g0, gamma, gamma)
          - np.einsum("mn,mjl,nik->ijkl", g0, gamma, gamma))
    return R, g0


def _sectional_from_tensor(R, g, A, B) -> float:
    num = np.einsum("ijkl,i,j,k,l->", R, A, B, A, B)
    area = (A @ g @ A) * (B @ g @ B) - (A @ g @ B) ** 2
    return float(num / area)


def sphere_metric_t(point: SpherePoint, t: float) -> np.ndarray:
    """Ambient (6x6) quadratic form of the deformed metric on tangent vectors at a point."""
    A = SphereBackend.ambient_action(point)
    return submersion_metric(np.eye(6), A, t) if t != 0 else np.eye(6)


def _sphere_chart(p: np.ndarray, basis: np.ndarray):
    """Chart u -> (p + basis u)/|p + basis u| and its Jacobian."""

    def phi(u):
        x = p + basis @ u
        r = np.linalg.norm(x)
        y = x / r
        J = (np.eye(3) - np.outer(y, y)) @ basis / r
        return y, J

    return phi


def fd_curvature(backend: GeometryBackend, t: float, p, A, B, *, step: float = 1e-3) -> float:
    """Sectional curvature of ``g_t`` at the plane (A, B) by differentiating a chart.

    A, B are tangent coordinates of the *actual* plane (for a moving plane pass
    ``C_t^{-1}V, C_t^{-1}W``).  Sphere backend: per-factor tangent-plane charts;
    group backend: exponential coordinates.
    """
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    if isinstance(backend, SphereBackend):
        pt = p.point if isinstance(p, PointFrame) else p
        T = SphereBackend.tangent_basis(pt)
        c1 = _sphere_chart(pt.p1, T[:3, :2])
        c2 = _sphere_chart(pt.p2, T[3:, 2:])

        def metric_fn(u):
            y1, J1 = c1(u[:2])
            y2, J2 = c2(u[2:])
            if y1 @ pt.p1 < 0.1 or y2 @ pt.p2 < 0.1:
                raise GeometryError("chart singularity")
            J = np.zeros((6, 4))
            J[:3, :2] = J1
            J[3:, 2:] = J2
            G = sphere_metric_t(SpherePoint(y1, y2), t)
            return J.T @ G @ J

        R, g = _riemann_from_chart(metric_fn, 4, step)
        return _sectional_from_tensor(R, g, A, B)
    if isinstance(backend, GroupBackend):
        alg = backend.group
        phi_t = submersion_metric(backend.phi, backend.k.basis, t)

        def metric_fn(u):
            psi = _dexp_left(alg, u)
            return psi.T @ phi_t @ psi

        R, g = _riemann_from_chart(metric_fn, alg.dim, step)
        return _sectional_from_tensor(R, g, A, B)
    raise GeometryError(f"no chart for backend {type(backend).__name__}")


def _dexp_left(alg: LieAlgebra, u, terms: int = 30) -> np.ndarray:
    """Left-trivialized differential of exp: ``Σ (-ad_u)^k / (k+1)!``."""
    ad = alg.ad(u)
    out = np.zeros_like(ad)
    term = np.eye(len(ad))
    for k in range(terms):
        out += term / math.factorial(k + 1)
        term = -ad @ term
    return out


# --- zero-plane search ---------------------------------------------------------------

@dataclass(frozen=True)
class SearchConfig:
    multistarts: int = 48
    descent_tol: float = 1e-10
    dedup_angle: float = 1e-4
    zero_threshold: float = 1e-9
    seed: int = 0
    grid_per_axis: int = 4
    trace_step: float = 0.05
    hessian_rank_tol: float = 1e-5

    def __post_init__(self):
        for name in ("multistarts", "descent_tol", "dedup_angle", "zero_threshold",
                     "grid_per_axis", "trace_step", "hessian_rank_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class ZeroPlaneRecord:
    point: object
    V: np.ndarray
    W: np.ndarray
    residual: float
    plane_class: PlaneClass | None = None
    family: int = -1
    family_dim: int = 0
    subtags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        pt = self.point.to_list() if hasattr(self.point, "to_list") else str(self.point)
        return {
            "point": pt,
            "plane": [self.V.tolist(), self.W.tolist()],
            "residual": self.residual,
            "class": self.plane_class.to_dict() if self.plane_class else None,
            "family": self.family,
            "family_dim": self.family_dim,
            "subtags": self.subtags,
        }


def plane_distance(frame: PointFrame, a, b) -> float:
    """Largest principal angle between span(a) and span(b), measured in g_0."""
    L = np.linalg.cholesky(frame.metric0)
    Xa = L.T @ np.stack(a, axis=1)
    Xb = L.T @ np.stack(b, axis=1)
    return float(linalg.subspace_angles(Xa, Xb).max())


def _orthonormal_pair(frame: PointFrame, x: np.ndarray):
    """g_0-orthonormal basis of span of the two halves of x (QR in g_0 coordinates)."""
    n = frame.tangent_dim
    L = np.linalg.cholesky(frame.metric0)
    Y = L.T @ np.stack([x[:n], x[n:]], axis=1)
    Qm, R = np.linalg.qr(Y)
    Qm = Qm * np.sign(np.diag(R))
    out = np.linalg.solve(L.T, Qm)
    return out[:, 0], out[:, 1]


def _batched_objective(backend, frame, t):
    def f(X):
        X = np.atleast_2d(X)
        n = frame.tangent_dim
        L = np.linalg.cholesky(frame.metric0)
        Y = np.einsum("ij,bjk->bik", L.T, np.stack([X[:, :n], X[:, n:]], axis=2))
        Qm, _ = np.linalg.qr(Y)
        O = np.linalg.solve(L.T, Qm)
        V, W = O[:, :, 0], O[:, :, 1]
        base, br, z, _ = kappa_terms(backend, frame, V, W, t)
        return base + br + z

    return f


def _descend(f_batch, x0, tol, h=1e-6, maxiter=2000):
    d = len(x0)
    E = np.eye(d) * h

    def fun(x):
        return float(f_batch(x[None])[0])

    def jac(x):
        vals = f_batch(np.concatenate([x + E, x - E]))
        return (vals[:d] - vals[d:]) / (2 * h)

    res = optimize.minimize(fun, x0, jac=jac, method="BFGS",
                            options={"gtol": tol, "maxiter": maxiter})
    return res.x, res.fun


def _local_chart(frame: PointFrame, V, W):
    """g_0-orthonormal complement N of span(V, W) (columns)."""
    L = np.linalg.cholesky(frame.metric0)
    Y = L.T @ np.stack([V, W], axis=1)
    U, _, _ = np.linalg.svd(Y, full_matrices=True)
    return np.linalg.solve(L.T, U[:, 2:])


def plane_hessian(backend, frame, t, V, W, h: float = 1e-4) -> np.ndarray:
    """Hessian of κ_c on the Grassmannian in normal coordinates around span(V, W)."""
    N = _local_chart(frame, V, W)
    k = N.shape[1]
    d = 2 * k
    f = _batched_objective(backend, frame, t)

    def pts(c):
        c = np.atleast_2d(c)
        return np.concatenate([V + c[:, :k] @ N.T, W + c[:, k:] @ N.T], axis=1)

    E = np.eye(d) * h
    H = np.zeros((d, d))
    f0 = f(pts(np.zeros(d)))[0]
    for i in range(d):
        for j in range(i, d):
            if i == j:
                v = f(pts(np.stack([E[i], -E[i]])))
                H[i, i] = (v[0] - 2 * f0 + v[1]) / h ** 2
            else:
                v = f(pts(np.stack([E[i] + E[j], E[i] - E[j], -E[i] + E[j], -E[i] - E[j]])))
                H[i, j] = H[j, i] = (v[0] - v[1] - v[2] + v[3]) / (4 * h * h)
    return H, N


def zero_set_dimension(backend, frame, t, V, W, rank_tol: float = 1e-5):
    """Local dimension of the zero set from the rank of the Hessian; also returns null directions."""
    H, N = plane_hessian(backend, frame, t, V, W)
    vals, vecs = np.linalg.eigh(H)
    top = max(np.abs(vals).max(), 1e-300)
    null = np.abs(vals) <= rank_tol * top
    return int(null.sum()), vecs[:, null], N


def _grid_starts(n: int, per_axis: int) -> np.ndarray:
    """Deterministic coarse starting pairs: angle grids on pairs of coordinate planes."""
    angles = np.linspace(0, np.pi, per_axis, endpoint=False) + np.pi / (2 * per_axis)
    e = np.eye(n)
    out = []
    for (i, j), (k, l) in itertools.combinations(itertools.combinations(range(n), 2), 2):
        if len(out) >= 64:
            break
        for a, b in itertools.product(angles, repeat=2):
            out.append(np.concatenate([np.cos(a) * e[i] + np.sin(a) * e[j],
                                       np.cos(b) * e[k] + np.sin(b) * e[l]]))
    return np.array(out)


def _trace_family(backend, frame, t, V, W, cfg: SearchConfig, f_batch, max_steps: int = 400):
    """Follow a one-dimensional zero family by predictor-corrector continuation."""
    start = (V, W)
    path = [start]
    prev_dir = None
    cur = start
    for _ in range(max_steps):
        dim, null, N = zero_set_dimension(backend, frame, t, *cur, cfg.hessian_rank_tol)
        if dim != 1:
            break
        k = N.shape[1]
        d = null[:, 0]
        step_V = cur[0] + cfg.trace_step * (N @ d[:k])
        step_W = cur[1] + cfg.trace_step * (N @ d[k:])
        cand = _orthonormal_pair(frame, np.concatenate([step_V, step_W]))
        if prev_dir is not None:
            # keep moving away from the previous point
            if plane_distance(frame, cand, path[-2] if len(path) > 1 else start) < plane_distance(frame, cur, path[-2] if len(path) > 1 else start):
                step_V = cur[0] - cfg.trace_step * (N @ d[:k])
                step_W = cur[1] - cfg.trace_step * (N @ d[k:])
        x, fx = _descend(f_batch, np.concatenate([step_V, step_W]), cfg.descent_tol)
        if fx > cfg.zero_threshold:
            break
        nxt = _orthonormal_pair(frame, x)
        prev_dir = True
        if len(path) > 3 and plane_distance(frame, nxt, start) < 0.75 * cfg.trace_step:
            return path, True
        path.append(nxt)
        cur = nxt
    return path, False


def find_zero_planes(backend: GeometryBackend, p, t: float, config: SearchConfig | None = None):
    """Locate the zero-curvature planes of ``g_t`` at p.

    Planes are reported by their moving-plane parameters (V, W): the actual
    zero plane of ``g_t`` is ``span(C_t^{-1}V, C_t^{-1}W)``.  One-dimensional
    families are traced and returned as an ordered closed chain of records
    sharing a ``family`` index.
    """
    cfg = config or SearchConfig()
    frame = backend._frame(p)
    DeformationParam.at(frame, t)
    n = frame.tangent_dim
    f_batch = _batched_objective(backend, frame, t)
    rng = np.random.default_rng(cfg.seed)
    starts = list(rng.normal(size=(cfg.multistarts, 2 * n))) + list(_grid_starts(n, cfg.grid_per_axis))
    hits = []
    for x0 in starts:
        x, fx = _descend(f_batch, x0, cfg.descent_tol)
        if fx <= cfg.zero_threshold:
            hits.append((_orthonormal_pair(frame, x), float(fx)))
    distinct = _dedup(frame, hits, cfg.dedup_angle)

    records: list[ZeroPlaneRecord] = []
    covered: list = []
    family = 0
    for (V, W), res in distinct:
        if any(_near_chain(frame, (V, W), chain, cfg) for chain in covered):
            continue
        dim, _, _ = zero_set_dimension(backend, frame, t, V, W, cfg.hessian_rank_tol)
        if dim == 1:
            path, closed = _trace_family(backend, frame, t, V, W, cfg, f_batch)
            covered.append(path)
            for pv, pw in path:
                val = float(f_batch(np.concatenate([pv, pw])[None])[0])
                records.append(ZeroPlaneRecord(frame.point, pv, pw, val, family=family,
                                               family_dim=1, subtags={"closed_chain": closed}))
            family += 1
        else:
            records.append(ZeroPlaneRecord(frame.point, V, W, res, family=-1, family_dim=dim))
    for r in records:
        r.plane_class = classify_zero_plane(backend, frame, r.V, r.W)
    return records


def _near_chain(frame, plane, chain, cfg) -> bool:
    return min(plane_distance(frame, plane, q) for q in chain) < 1.5 * cfg.trace_step


def _dedup(frame, hits, angle):
    out = []
    for plane, res in sorted(hits, key=lambda h: h[1]):
        if all(plane_distance(frame, plane, q) > angle for q, _ in out):
            out.append((plane, res))
    return out


def is_closed_chain(frame, planes, max_gap: float) -> bool:
    """Consecutive planes (cyclically) are within ``max_gap`` and all are distinct."""
    if len(planes) < 3:
        return False
    gaps = [plane_distance(frame, planes[i], planes[(i + 1) % len(planes)]) for i in range(len(planes))]
    return max(gaps) <= max_gap and min(gaps) > 0


def count_distinct(records) -> int:
    """Isolated planes count once each, traced families once per family."""
    fams = {r.family for r in records if r.family >= 0}
    return len(fams) + sum(1 for r in records if r.family < 0)


def classify_record(backend: GeometryBackend, record: ZeroPlaneRecord, t: float,
                    tol: float = 1e-8) -> ZeroPlaneRecord:
    """Attach the horizontal / vertizontal sub-tags for a zero plane.

    A horizontal zero plane must have ``A_U V = 0``; a vertizontal one spanned by
    ``X*`` and horizontal U must have ``S_U X* = 0``.  A zero plane violating this
    is tagged ``CONTRADICTION``.
    """
    frame = backend._frame(record.point if not isinstance(record.point, str) else None)
    V, W = record.V, record.W
    plane = np.stack([V, W], axis=1)
    L = np.linalg.cholesky(frame.metric0)

    def intersect(basis):
        # vectors of the plane lying in span(basis), as g_0-orthonormal tangent vectors
        if basis.shape[1] == 0:
            return np.zeros((frame.tangent_dim, 0))
        Pb = basis @ np.linalg.pinv(L.T @ basis) @ L.T
        resid = L.T @ (plane - Pb @ plane)
        _, s, vt = np.linalg.svd(resid)
        s = np.concatenate([s, np.zeros(2 - len(s))])
        coeffs = vt[s <= 1e-7]
        return plane @ coeffs.T

    hor = intersect(frame.horizontal)
    # plane vectors found by descent carry residue of the descent tolerance
    hor = np.stack([frame.horizontal_part(h) for h in hor.T], axis=1) if hor.size else hor
    ver = intersect(frame.vertical)
    base = float(backend.curvature0(frame, V, W))
    tags = dict(record.subtags)
    if hor.shape[1] == 2:
        U1, U2 = hor[:, 0], hor[:, 1]
        a = oneill_A(backend, frame, U1, U2)
        an = float(np.sqrt(frame.g0(a, a)))
        tags.update(kind="horizontal", A_norm=an)
        ok = base <= tol and an <= tol
    elif hor.shape[1] == 1 and ver.shape[1] >= 1:
        U = hor[:, 0]
        U = U / np.sqrt(frame.g0(U, U))
        X = frame.m_component(ver[:, 0])
        X = X / np.sqrt(frame.g0(frame.star(X), frame.star(X)))
        s = shape_operator(backend, frame, U, X)
        sn = float(np.sqrt(frame.g0(s, s)))
        tags.update(kind="vertizontal", S_norm=sn)
        ok = base <= tol and sn <= tol
    else:
        tags.update(kind="mixed" if ver.shape[1] < 2 else "vertical")
        ok = True
    if not ok:
        tags["CONTRADICTION"] = True
    record.subtags = tags
    if record.plane_class is None:
        record.plane_class = classify_zero_plane(backend, frame, V, W)
    return record


def deformed_plane(frame: PointFrame, record: ZeroPlaneRecord, t: float):
    """The actual ``g_t`` plane ``(C_t^{-1}V, C_t^{-1}W)`` of a record."""
    return apply_Ct_inv(frame, record.V, t), apply_Ct_inv(frame, record.W, t)


# --- brute-force census ------------------------------------------------------------

def grassmannian_grid(resolution: int) -> np.ndarray:
    """Planes of R^4 from a grid on ``S^2 x S^2`` (self-dual / anti-self-dual parts).

    Every unit simple bivector is ``(α + β)/√2`` with unit self-dual α and
    anti-self-dual β, so the grid covers Gr(2, 4) (twice).
    Returns an array of shape (resolution**4, 4, 2) of orthonormal pairs.
    """
    if resolution < 8:
        raise ValueError("grid resolution below 8 points per axis")
    th = (np.arange(resolution) + 0.5) * np.pi / resolution
    ph = np.arange(resolution) * 2 * np.pi / resolution
    s2 = np.array([[np.sin(a) * np.cos(b), np.sin(a) * np.sin(b), np.cos(a)] for a in th for b in ph])
    # basis of bivectors e_ij ordered (01, 02, 03, 12, 13, 23)
    plus = np.array([[1, 0, 0, 0, 0, 1], [0, 1, 0, 0, -1, 0], [0, 0, 1, 1, 0, 0]]) / np.sqrt(2)
    minus = np.array([[1, 0, 0, 0, 0, -1], [0, 1, 0, 0, 1, 0], [0, 0, 1, -1, 0, 0]]) / np.sqrt(2)
    a = s2 @ plus
    b = s2 @ minus
    biv = (a[:, None, :] + b[None, :, :]).reshape(-1, 6) / np.sqrt(2)
    idx = list(itertools.combinations(range(4), 2))
    M = np.zeros((len(biv), 4, 4))
    for c, (i, j) in enumerate(idx):
        M[:, i, j] = biv[:, c]
        M[:, j, i] = -biv[:, c]
    U, _, _ = np.linalg.svd(M)
    return U[:, :, :2]


def grid_census(backend: GeometryBackend, p, t: float, resolution: int = 24, *,
                threshold: float | None = None, link_angle: float | None = None,
                config: SearchConfig | None = None):
    """Brute-force count of zero-curvature components on a Grassmannian grid.

    The sublevel set ``{sec < threshold}`` of the normalized moving-plane
    curvature is split into components by single-linkage on plane projectors.
    Each component is refined from its lowest grid cell by local descent;
    components that refine to the same plane are merged, and the dimension of
    the zero set at the refined plane comes from the Hessian-rank criterion.
    The default threshold scales with the grid spacing and the largest value on
    the grid, and is never below four times the grid minimum.
    """
    cfg = config or SearchConfig()
    frame = backend._frame(p)
    if frame.tangent_dim != 4:
        raise GeometryError("grid census supports tangent dimension 4 only")
    DeformationParam.at(frame, t)
    spacing = np.pi / resolution
    pairs = grassmannian_grid(resolution)
    V, W = pairs[:, :, 0], pairs[:, :, 1]
    base, br, z, wedge = kappa_terms(backend, frame, V, W, t)
    sec = (base + br + z) / wedge
    if threshold is None:
        threshold = max(0.5 * spacing ** 2 * float(sec.max()), 4.0 * float(sec.min()))
    if link_angle is None:
        link_angle = 2.5 * spacing
    keep = np.nonzero(sec < threshold)[0]
    f_batch = _batched_objective(backend, frame, t)
    refined = []
    for members in _single_linkage(pairs[keep], link_angle):
        idx = keep[members]
        seed = idx[np.argmin(sec[idx])]
        x, fx = _descend(f_batch, np.concatenate([V[seed], W[seed]]), cfg.descent_tol)
        refined.append((_orthonormal_pair(frame, x), float(fx), len(idx)))
    merged = []
    for plane, res, size in sorted(refined, key=lambda r: r[1]):
        for m in merged:
            if plane_distance(frame, plane, m["plane"]) < 1e-3:
                m["size"] += size
                m["cells"] += 1
                break
        else:
            merged.append({"plane": plane, "residual": res, "size": size, "cells": 1})
    out = []
    for m in merged:
        dim = 0
        if m["residual"] <= cfg.zero_threshold:
            dim, _, _ = zero_set_dimension(backend, frame, t, *m["plane"], cfg.hessian_rank_tol)
        out.append({"size": int(m["size"]), "grid_components": m["cells"],
                    "residual": m["residual"], "is_zero": m["residual"] <= cfg.zero_threshold,
                    "dimension": int(dim),
                    "plane": [m["plane"][0].tolist(), m["plane"][1].tolist()]})
    zeros = [c for c in out if c["is_zero"]]
    return {"count": len(zeros), "threshold": threshold, "resolution": resolution, "t": t,
            "components": sorted(out, key=lambda c: -c["size"])}


def _projectors(planes):
    return np.einsum("nia,nja->nij", planes, planes)


def _single_linkage(planes, link_angle):
    n = len(planes)
    if n == 0:
        return []
    P = _projectors(planes).reshape(n, -1)
    # ‖P_a - P_b‖_F = √2 ‖sin θ‖; link when the chordal distance is small
    radius = np.sqrt(2) * np.sin(min(link_angle, np.pi / 2))
    pairs = spatial.cKDTree(P).query_pairs(radius, output_type="ndarray")
    adj = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = csgraph.connected_components(adj, directed=False)
    return [np.nonzero(labels == r)[0] for r in np.unique(labels)]


def _diameter(planes) -> float:
    if len(planes) > 400:
        planes = planes[:: len(planes) // 400 + 1]
    P = _projectors(planes)
    best = 0.0
    for i in range(len(P)):
        d = np.linalg.norm(P - P[i], axis=(1, 2)) / np.sqrt(2)
        best = max(best, float(d.max()))
    # chordal distance sqrt(sum sin^2) bounds the largest principal angle from below
    return float(np.arcsin(min(best, 1.0)))
