"""Base spaces carrying an isometric action: point frames, g_0 curvature, dw_Z, S and A.

Two backends are provided:

* :class:`GroupBackend` -- a compact Lie group with a left-invariant metric
  ``Q(Φ·,·)`` acted on by a subgroup ``K`` through right translations.  Everything
  lives in the left-invariant trivialization, so frames do not depend on the point.
* :class:`SphereBackend` -- ``S^2 x S^2`` with the product of unit round metrics and
  ``SO(3)`` acting diagonally.

Tangent vectors are coordinate arrays in a frame-specific basis; the metric
``g_0`` in those coordinates is ``PointFrame.metric0``.  Everything accepts
leading batch dimensions.
"""

from __future__ import annotations

import functools
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .algebra import (
    AlgebraError,
    LieAlgebra,
    MetricOperator,
    Subalgebra,
    builtin,
)

# dw_Z = DW_SCALE * (V w(W) - W w(V) - w([V, W])) with w = g(Z*, .).  The half is what
# makes the deformed curvature agree with the independent left-invariant and
# finite-difference oracles; see tests/test_geometry.py::test_calibration_constants.
DW_SCALE = 0.5
# Action fields of right translations, written as the left action k.p = p k^{-1}:
# X*(p) = -X (left-invariant field).  Paired with DW_SCALE by the same test.
GROUP_ACTION_SIGN = -1.0

ISOTROPY_RTOL = 1e-10
DIAGONAL_TOL = 1e-8


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class PointFrame:
    """Orbit data at one point.

    ``action`` has the action fields of the acting algebra's orthonormal basis
    as columns.  ``B = action^T g_0 action`` represents ``Z -> P(Z_m)`` on the whole
    acting algebra; ``P`` is its restriction to ``m_p`` in ``m_basis`` coordinates.
    """

    point: object
    metric0: np.ndarray
    action: np.ndarray
    isotropy: np.ndarray
    m_basis: np.ndarray
    P: np.ndarray
    B: np.ndarray
    vertical: np.ndarray
    horizontal: np.ndarray
    flags: tuple = ()

    @property
    def tangent_dim(self) -> int:
        return self.metric0.shape[0]

    @property
    def algebra_dim(self) -> int:
        return self.action.shape[1]

    def g0(self, V, W):
        return np.einsum("...i,ij,...j->...", V, self.metric0, W)

    def m_component(self, V):
        """``V_m``: the element of m_p whose action field is the vertical part of V."""
        M = self.m_basis
        rhs = np.einsum("...i,ij,jk,ka->...a", V, self.metric0, self.action, M)
        return np.linalg.solve(self.P, rhs[..., None])[..., 0] @ M.T

    def vertical_part(self, V):
        return self.m_component(V) @ self.action.T

    def horizontal_part(self, V):
        return V - self.vertical_part(V)

    def P_apply(self, X):
        """``P`` applied to algebra vectors (zero on the isotropy)."""
        return X @ self.B.T

    def PV(self, V):
        """``P(V_m)`` for tangent vectors V."""
        return self.P_apply(self.m_component(V))

    def star(self, X):
        """Action field ``X*`` at this point for algebra vectors X."""
        return X @ self.action.T

    @property
    def t_min(self) -> float:
        """Lower end of the deformation parameter range where ``g_t`` is a metric."""
        lam = np.linalg.eigvalsh(self.P).max() if self.P.size else 0.0
        return -1.0 / lam if lam > 0 else -np.inf


def build_frame(point, metric0, action, *, isotropy_rank=None) -> PointFrame:
    """Split the acting algebra into isotropy and m_p and the tangent space into 𝒱 ⊕ ℋ."""
    G0 = np.asarray(metric0, dtype=float)
    A = np.asarray(action, dtype=float)
    m = A.shape[1]
    # kernel of X -> X*_p in the g_0 norm
    L = np.linalg.cholesky(G0)
    _, s, vt = np.linalg.svd(L.T @ A)
    s = np.concatenate([s, np.zeros(m - len(s))])
    if isotropy_rank is None:
        isotropy_rank = int(np.sum(s <= ISOTROPY_RTOL * max(s.max(), 1e-300)))
    r = isotropy_rank
    iso = vt[m - r:].T if r else np.zeros((m, 0))
    M = vt[:m - r].T
    B = A.T @ G0 @ A
    if r:
        # project the forced kernel out so B vanishes exactly on it
        Pm = M @ M.T
        B = Pm @ B @ Pm
    P = M.T @ B @ M
    vert = A @ M
    # horizontal = g_0-orthogonal complement of the vertical space
    n = G0.shape[0]
    if vert.shape[1]:
        _, _, wt = np.linalg.svd((G0 @ vert).T)
        hor = wt[vert.shape[1]:].T
    else:
        hor = np.eye(n)
    return PointFrame(point, G0, A, iso, M, 0.5 * (P + P.T), 0.5 * (B + B.T), vert, hor)


class GeometryBackend(ABC):
    """Capabilities every backend supplies."""

    algebra: LieAlgebra  # the acting algebra, Q-orthonormal

    @abstractmethod
    def frame(self, p=None) -> PointFrame: ...

    @abstractmethod
    def curvature0(self, p, V, W):
        """Unnormalized ``g(R(V,W)W, V)``; the bi-invariant case gives ¼‖[V,W]‖²."""

    @abstractmethod
    def dw_functional(self, p, V, W):
        """Array whose j-th entry is ``dw_{e_j}(V, W)`` for the acting algebra basis."""

    @abstractmethod
    def covariant_action(self, p, X, Y):
        """``∇_{X*} Y*`` at p as a tangent vector, for acting algebra vectors X, Y."""

    @abstractmethod
    def random_point(self, rng): ...

    def _frame(self, p) -> PointFrame:
        return p if isinstance(p, PointFrame) else self.frame(p)

    def describe(self) -> dict:
        return {"backend": type(self).__name__}


# --- Lie group with left-invariant metric -------------------------------------

class GroupBackend(GeometryBackend):
    """``(G, Q(Φ·,·))`` with ``K`` acting by right translations.

    The right action is isometric only when Φ commutes with ``ad_k``; this is
    checked on construction.
    """

    def __init__(self, algebra: LieAlgebra, k: Subalgebra, metric=None, *,
                 action_sign: float = GROUP_ACTION_SIGN, dw_scale: float = DW_SCALE,
                 tol: float = 1e-9):
        if not algebra.is_orthonormal:
            raise AlgebraError("group backend needs a Q-orthonormal basis")
        self.group = algebra
        self.k = k
        phi = np.eye(algebra.dim) if metric is None else (
            metric.phi if isinstance(metric, MetricOperator) else np.asarray(metric, float))
        self.metric = MetricOperator(phi)
        if not self.metric.positive:
            raise GeometryError("metric operator is not positive definite")
        for a in range(k.dim):
            ad = algebra.ad(k.basis[:, a])
            if np.abs(self.metric.phi @ ad - ad @ self.metric.phi).max() > tol:
                raise GeometryError("metric is not Ad_K-invariant; right K-action is not isometric")
        self.phi = self.metric.phi
        self.phi_inv = np.linalg.inv(self.phi)
        self.algebra = algebra.restrict(k.basis)
        self.action_sign = action_sign
        self.dw_scale = dw_scale
        self._frame_cache = build_frame("e", self.phi, action_sign * k.basis)

    def frame(self, p=None) -> PointFrame:
        if isinstance(p, PointFrame):
            return p
        return self._frame_cache

    def describe(self) -> dict:
        return {"backend": "group", "algebra": self.group.name, "k_dim": self.k.dim,
                "phi": self.phi.tolist()}

    def _curv_B(self, X, Y):
        br = self.group.bracket
        return 0.5 * (br(X, Y @ self.phi) + br(Y, X @ self.phi))

    def curvature0(self, p, V, W):
        # Püttmann's formula for left-invariant metrics
        br = self.group.bracket
        phi = self.phi
        XY = br(V, W)
        t1 = 0.5 * np.einsum("...i,...i->...", br(V @ phi, W) + br(V, W @ phi), XY)
        t2 = -0.75 * np.einsum("...i,ij,...j->...", XY, phi, XY)
        bxy = self._curv_B(V, W)
        bxx = self._curv_B(V, V)
        byy = self._curv_B(W, W)
        t3 = np.einsum("...i,ij,...j->...", bxy, self.phi_inv, bxy)
        t4 = -np.einsum("...i,ij,...j->...", bxx, self.phi_inv, byy)
        return t1 + t2 + t3 + t4

    def dw_functional(self, p, V, W):
        # V, W left-invariant: d w_Z (V, W) = -w_Z([V, W]) = -g(Z*, [V, W])
        br = self.group.bracket(V, W)
        Zstar = self.action_sign * self.k.basis
        return -self.dw_scale * np.einsum("...i,ij,ja->...a", br, self.phi, Zstar)

    def levi_civita(self, x, y):
        """Levi-Civita connection on left-invariant fields."""
        br = self.group.bracket
        ad_star = lambda a, b: self.phi_inv @ (self.group.ad(a).T @ (self.phi @ b))
        return 0.5 * (br(x, y) - ad_star(x, y) - ad_star(y, x))

    def covariant_action(self, p, X, Y):
        E = self.action_sign * self.k.basis
        return self.levi_civita(E @ X, E @ Y)

    def random_point(self, rng):
        return "e"


# --- S^2 x S^2 with diagonal SO(3) ----------------------------------------------

@dataclass(frozen=True)
class SpherePoint:
    p1: np.ndarray
    p2: np.ndarray

    def __post_init__(self):
        p1 = np.asarray(self.p1, dtype=float)
        p2 = np.asarray(self.p2, dtype=float)
        if p1.shape != (3,) or p2.shape != (3,):
            raise GeometryError("sphere points are pairs of 3-vectors")
        if abs(np.linalg.norm(p1) - 1) > 1e-12 or abs(np.linalg.norm(p2) - 1) > 1e-12:
            raise GeometryError("sphere point coordinates must be unit vectors")
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "p2", p2)

    @classmethod
    def normalized(cls, p1, p2) -> "SpherePoint":
        p1 = np.asarray(p1, float)
        p2 = np.asarray(p2, float)
        return cls(p1 / np.linalg.norm(p1), p2 / np.linalg.norm(p2))

    @property
    def diagonal(self) -> bool:
        return bool(np.linalg.norm(self.p1 - self.p2) <= DIAGONAL_TOL)

    @property
    def antidiagonal(self) -> bool:
        return bool(np.linalg.norm(self.p1 + self.p2) <= DIAGONAL_TOL)

    def to_list(self) -> list:
        return [*map(float, self.p1), *map(float, self.p2)]


def sphere_tangent_basis(p) -> np.ndarray:
    """Deterministic orthonormal basis (columns) of the tangent plane at a unit vector."""
    p = np.asarray(p, dtype=float)
    axis = np.eye(3)[np.argmin(np.abs(p))]
    a = np.cross(p, axis)
    a /= np.linalg.norm(a)
    return np.stack([a, np.cross(p, a)], axis=1)


@functools.lru_cache(maxsize=256)
def _tangent_basis_cached(p1: tuple, p2: tuple) -> np.ndarray:
    T = np.zeros((6, 4))
    T[:3, :2] = sphere_tangent_basis(p1)
    T[3:, 2:] = sphere_tangent_basis(p2)
    T.setflags(write=False)
    return T


def _cross_matrix(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]], dtype=float)


class SphereBackend(GeometryBackend):
    """Unit ``S^2 x S^2`` with ``SO(3)`` acting diagonally; ``X*(p) = (X × p1, X × p2)``."""

    def __init__(self, *, dw_scale: float = DW_SCALE):
        self.algebra = builtin("so3")
        self.dw_scale = dw_scale

    def describe(self) -> dict:
        return {"backend": "sphere"}

    @staticmethod
    def tangent_basis(p: SpherePoint) -> np.ndarray:
        """6x4 matrix mapping tangent coordinates to ambient ``R^3 x R^3`` vectors."""
        return _tangent_basis_cached(tuple(p.p1), tuple(p.p2))

    @staticmethod
    def ambient_action(p: SpherePoint) -> np.ndarray:
        """6x3: columns are the ambient action fields of e_1, e_2, e_3."""
        # X × p = -[p]_x X
        return np.vstack([-_cross_matrix(p.p1), -_cross_matrix(p.p2)])

    def frame(self, p=None) -> PointFrame:
        if isinstance(p, PointFrame):
            return p
        if p is None:
            raise GeometryError("sphere backend needs a point")
        if not isinstance(p, SpherePoint):
            p = SpherePoint(*np.reshape(np.asarray(p, float), (2, 3)))
        T = self.tangent_basis(p)
        A = T.T @ self.ambient_action(p)
        forced = 1 if (p.diagonal or p.antidiagonal) else None
        f = build_frame(p, np.eye(4), A, isotropy_rank=forced)
        flags = tuple(name for name, on in (("diagonal", p.diagonal), ("antidiagonal", p.antidiagonal)) if on)
        return PointFrame(**{**f.__dict__, "flags": flags})

    def split(self, p, V):
        """Ambient factor components ``(v1, v2)`` of tangent coordinates V."""
        T = self.tangent_basis(self._frame(p).point)
        amb = V @ T.T
        return amb[..., :3], amb[..., 3:]

    def curvature0(self, p, V, W):
        v1, v2 = self.split(p, V)
        w1, w2 = self.split(p, W)

        def piece(a, b):
            return (np.einsum("...i,...i->...", a, a) * np.einsum("...i,...i->...", b, b)
                    - np.einsum("...i,...i->...", a, b) ** 2)

        return piece(v1, w1) + piece(v2, w2)

    def dw_functional(self, p, V, W):
        # Z* is Killing, so d w_Z (V, W) = 2 g(∇_V Z*, W) = 2 Z·(v1 × w1 + v2 × w2)
        v1, v2 = self.split(p, V)
        w1, w2 = self.split(p, W)
        return self.dw_scale * 2.0 * (np.cross(v1, w1) + np.cross(v2, w2))

    def covariant_action(self, p, X, Y):
        f = self._frame(p)
        pt = f.point
        # flat derivative of q -> Y × q along X × q, then tangential projection
        amb = np.concatenate([np.cross(Y, np.cross(X, pt.p1)), np.cross(Y, np.cross(X, pt.p2))])
        return self.tangent_basis(pt).T @ amb

    def random_point(self, rng) -> SpherePoint:
        return SpherePoint.normalized(rng.normal(size=3), rng.normal(size=3))


# --- operations on top of a backend --------------------------------------------

def point_frame(backend: GeometryBackend, p=None) -> PointFrame:
    return backend.frame(p)


def curvature0(backend: GeometryBackend, p, V, W):
    return backend.curvature0(backend._frame(p), np.asarray(V, float), np.asarray(W, float))


def dw_eval(backend: GeometryBackend, p, Z, V, W):
    """``dw_Z(V, W)`` for an acting algebra vector Z."""
    ell = backend.dw_functional(backend._frame(p), np.asarray(V, float), np.asarray(W, float))
    return np.einsum("...a,...a->...", ell, np.asarray(Z, float))


def dw_vertical_formula(frame: PointFrame, algebra: LieAlgebra, X, Y, Z):
    """``½ Q([PX, Y] + [X, PY] - P[X, Y], Z)`` for X, Y in m_p."""
    br = algebra.bracket
    P = frame.P_apply
    return 0.5 * np.dot(br(P(X), Y) + br(X, P(Y)) - P(br(X, Y)), Z)


def _require_horizontal(frame: PointFrame, U, tol=1e-9):
    U = np.asarray(U, float)
    scale = max(1.0, float(np.sqrt(frame.g0(U, U))))
    vert = frame.vertical_part(U)
    if np.sqrt(max(frame.g0(vert, vert), 0.0)) > tol * scale:
        raise GeometryError("argument is not horizontal")
    return U


def shape_operator(backend: GeometryBackend, p, U, X) -> np.ndarray:
    """``S_U(X*)``: the vertical vector with ``g(S_U X*, Y*) = g(∇_{X*} Y*, U)`` for Y in m_p."""
    f = backend._frame(p)
    U = _require_horizontal(f, U)
    X = np.asarray(X, float)
    M = f.m_basis
    c = np.array([f.g0(backend.covariant_action(f, X, M[:, a]), U) for a in range(M.shape[1])])
    y = M @ np.linalg.solve(f.P, c)
    return f.star(y)


def oneill_A(backend: GeometryBackend, p, U, V) -> np.ndarray:
    """``A_U V``: the vertical vector with ``g(A_U V, X*) = -dw_X(U, V)`` for X in m_p."""
    f = backend._frame(p)
    U = _require_horizontal(f, U)
    V = _require_horizontal(f, V)
    M = f.m_basis
    ell = backend.dw_functional(f, U, V) @ M
    y = -M @ np.linalg.solve(f.P, ell)
    return f.star(y)
