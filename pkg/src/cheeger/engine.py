"""Cheeger deformation of a metric along an isometric group action.

The deformed metric ``g_t`` is induced from ``g + Q/t`` on ``M x G``.  On the orbit
directions it is described by the orbit tensor ``P_t = P (I + tP)^{-1}``; the
curvature of the moving plane spanned by ``C_t^{-1}V, C_t^{-1}W`` splits as

    κ_c(t) = g(R(V,W)W,V) + t³/4 ‖[PV_m, PW_m]‖² + z(V, W, t)

with the O'Neill contribution ``z = 3t ℓᵀ(I + tB)^{-1} ℓ`` where
``ℓ(Z) = dw_Z(V,W) + t/2 Q([PV_m, PW_m], Z)``.

The second half of the module holds closed forms for left-invariant metrics on a
group: ``g_s = sQ|_k + Q|_m`` and metrics built by iterated deformations along a
chain of subalgebras.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize

from .algebra import (
    AlgebraError,
    LieAlgebra,
    MetricOperator,
    Subalgebra,
    SubalgebraChain,
    chain_blocks,
)
from .geometry import GeometryBackend, PointFrame


class DeformationError(ValueError):
    """Deformation parameter outside the range where ``g_t`` is positive definite."""


@dataclass(frozen=True)
class DeformationParam:
    t: float
    t_min: float

    def __post_init__(self):
        if not self.t > self.t_min:
            raise DeformationError(f"t = {self.t} is outside the validity range ({self.t_min}, inf)")

    @classmethod
    def at(cls, frame: PointFrame, t: float) -> "DeformationParam":
        return cls(float(t), frame.t_min)


def validity_bound(P) -> float:
    lam = np.linalg.eigvalsh(np.atleast_2d(P)).max()
    return -1.0 / lam if lam > 0 else -math.inf


def orbit_tensor_t(P, t: float) -> np.ndarray:
    """``P_t = P (I + tP)^{-1}``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    DeformationParam(float(t), validity_bound(P))
    Pt = P @ np.linalg.inv(np.eye(len(P)) + t * P)
    return 0.5 * (Pt + Pt.T)


def apply_Ct(frame: PointFrame, V, t: float):
    """``C_t V = (I + tP)^{-1} V^𝒱 + V^ℋ``."""
    DeformationParam.at(frame, t)
    V = np.asarray(V, dtype=float)
    Vm = frame.m_component(V)
    shrunk = np.linalg.solve(np.eye(frame.algebra_dim) + t * frame.B, Vm[..., None])[..., 0]
    return V - frame.star(Vm) + frame.star(shrunk)


def apply_Ct_inv(frame: PointFrame, V, t: float):
    """``C_t^{-1} V = (I + tP) V^𝒱 + V^ℋ``."""
    DeformationParam.at(frame, t)
    V = np.asarray(V, dtype=float)
    return V + t * frame.star(frame.PV(V))


def g_t(frame: PointFrame, V, W, t: float):
    return frame.g0(apply_Ct(frame, V, t), W)


def horizontal_lift(frame: PointFrame, X, t: float):
    """Horizontal lift of ``C_t^{-1} X`` to ``T_pM x g``: the pair ``(X, -t P X_m)``."""
    DeformationParam.at(frame, t)
    X = np.asarray(X, dtype=float)
    return X, -t * frame.PV(X)


def lift_pushforward(frame: PointFrame, lift):
    """Differential of ``(p, k) -> k^{-1} p`` at ``(p, e)``: ``(v, Z) -> v - Z*``."""
    v, Z = lift
    return v - frame.star(Z)


def lift_fiber_residual(frame: PointFrame, lift, t: float) -> float:
    """Largest ``|<lift, (Z*, Z)>|`` in ``g + Q/t`` over the acting algebra basis."""
    if t == 0:
        raise DeformationError("the product metric g + Q/t is undefined at t = 0")
    v, Z = lift
    pairing = np.einsum("i,ij,ja->a", v, frame.metric0, frame.action) + Z / t
    return float(np.abs(pairing).max())


# --- curvature of the moving plane ---------------------------------------------

@dataclass(frozen=True)
class CurvatureBreakdown:
    base: float
    bracket_term: float
    z: float
    total: float
    wedge_sq: float
    sec: float
    t: float
    orthonormalized: bool = False
    plane_id: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def gram_schmidt(frame: PointFrame, V, W, pivot_tol: float = 1e-12):
    """g_0-orthonormalize the pair (V, W)."""
    V = np.asarray(V, float)
    W = np.asarray(W, float)
    nv = np.sqrt(frame.g0(V, V))
    if nv <= pivot_tol:
        raise DeformationError("degenerate plane")
    e1 = V / nv
    w = W - frame.g0(e1, W) * e1
    nw = np.sqrt(max(frame.g0(w, w), 0.0))
    if nw <= pivot_tol * max(1.0, np.sqrt(frame.g0(W, W))):
        raise DeformationError("degenerate plane")
    return e1, w / nw


def kappa_terms(backend: GeometryBackend, frame: PointFrame, V, W, t: float):
    """Batched ``(base, bracket_term, z, wedge_sq)`` for planes given by V, W.

    ``wedge_sq`` is the g_t Gram determinant of ``C_t^{-1}V, C_t^{-1}W`` and is
    valid for arbitrary (not necessarily orthonormal) pairs.
    """
    alg = backend.algebra
    PV = frame.PV(V)
    PW = frame.PV(W)
    b = alg.bracket(PV, PW)
    base = backend.curvature0(frame, V, W)
    bracket_term = t ** 3 / 4 * np.einsum("...i,...i->...", b, b)
    ell = backend.dw_functional(frame, V, W) + 0.5 * t * b
    Mt = np.eye(frame.algebra_dim) + t * frame.B
    z = 3 * t * np.einsum("...i,...i->...", ell, np.linalg.solve(Mt, ell[..., None])[..., 0])
    vv = frame.g0(V, V) + t * np.einsum("...i,...i->...", PV, PV)
    ww = frame.g0(W, W) + t * np.einsum("...i,...i->...", PW, PW)
    vw = frame.g0(V, W) + t * np.einsum("...i,...i->...", PV, PW)
    return base, bracket_term, z, vv * ww - vw ** 2


def kappa_c(backend: GeometryBackend, p, V, W, t: float, *, orthonormalize: bool = True,
            plane_id: str = "") -> CurvatureBreakdown:
    """Curvature of the moving plane at deformation parameter t."""
    frame = backend._frame(p)
    DeformationParam.at(frame, t)
    V = np.asarray(V, float)
    W = np.asarray(W, float)
    changed = False
    if orthonormalize:
        V2, W2 = gram_schmidt(frame, V, W)
        changed = not (np.allclose(V2, V, atol=1e-14) and np.allclose(W2, W, atol=1e-14))
        V, W = V2, W2
    base, br, z, wedge = (float(x) for x in kappa_terms(backend, frame, V, W, t))
    total = base + br + z
    return CurvatureBreakdown(base, br, z, total, wedge, total / wedge if wedge > 0 else math.nan,
                              float(t), changed, plane_id)


def z_term(backend: GeometryBackend, p, V, W, t: float) -> float:
    """Closed form of ``3t max_{|Z|=1} ℓ(Z)² / (t g(Z*,Z*) + 1)``.

    The quotient is a rank-one generalized Rayleigh quotient, whose maximum is
    ``ℓᵀ(I + tB)^{-1}ℓ``.
    """
    frame = backend._frame(p)
    DeformationParam.at(frame, t)
    return float(kappa_terms(backend, frame, np.asarray(V, float), np.asarray(W, float), t)[2])


def z_functional(backend: GeometryBackend, frame: PointFrame, V, W, t: float) -> np.ndarray:
    b = backend.algebra.bracket(frame.PV(V), frame.PV(W))
    return backend.dw_functional(frame, V, W) + 0.5 * t * b


def z_quotient(backend: GeometryBackend, frame: PointFrame, V, W, t: float, Z) -> np.ndarray:
    """``3t ℓ(Z)² / (t g(Z*,Z*) + 1)`` for unit Z (batched over Z)."""
    ell = z_functional(backend, frame, V, W, t)
    Z = np.asarray(Z, float)
    num = (Z @ ell) ** 2
    den = t * np.einsum("...i,ij,...j->...", Z, frame.B, Z) + 1.0
    return 3 * t * num / den


def z_term_sampled(backend: GeometryBackend, p, V, W, t: float, n: int = 20000,
                   rng=None, refine: bool = False):
    """Brute-force maximum of the z quotient over ``n`` random unit Z.

    Returns ``(best value, all sampled values)``; with ``refine`` the best sample
    is polished by a local maximization on the unit sphere.
    """
    frame = backend._frame(p)
    DeformationParam.at(frame, t)
    rng = np.random.default_rng(rng)
    Z = rng.normal(size=(n, frame.algebra_dim))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    vals = z_quotient(backend, frame, V, W, t, Z)
    best = float(vals.max())
    if refine:
        z0 = Z[np.argmax(vals)]

        def neg(x):
            return -float(z_quotient(backend, frame, V, W, t, x / np.linalg.norm(x)))

        res = optimize.minimize(neg, z0, method="BFGS", options={"gtol": 1e-12})
        best = max(best, -res.fun)
    return best, vals


def wedge_sq(frame: PointFrame, V, W, t: float) -> float:
    """``‖C_t^{-1}V ∧ C_t^{-1}W‖²`` in ``g_t`` for the g_0-orthonormalized pair.

    Equals ``t² ‖PV_m ∧ PW_m‖² + t(‖PV_m‖² + ‖PW_m‖²) + 1``.  For three-dimensional
    acting algebras with the cross-product normalization ``‖PV ∧ PW‖ = ‖[PV, PW]‖``.
    """
    DeformationParam.at(frame, t)
    V, W = gram_schmidt(frame, V, W)
    a = frame.PV(V)
    b = frame.PV(W)
    aa, bb, ab = a @ a, b @ b, a @ b
    return float(t ** 2 * (aa * bb - ab ** 2) + t * (aa + bb) + 1.0)


def wedge_sq_bracket_form(backend: GeometryBackend, frame: PointFrame, V, W, t: float) -> float:
    """``t² ‖[PV_m, PW_m]‖² + t(‖PV_m‖² + ‖PW_m‖²) + 1`` for a g_0-orthonormal pair."""
    V, W = gram_schmidt(frame, V, W)
    a = frame.PV(V)
    b = frame.PV(W)
    br = backend.algebra.bracket(a, b)
    return float(t ** 2 * (br @ br) + t * (a @ a + b @ b) + 1.0)


# --- zero planes -----------------------------------------------------------------

class PlaneTag(enum.Enum):
    POSITIVE_FIRST_ORDER = "POSITIVE_FIRST_ORDER"
    POSITIVE_ALL_T = "POSITIVE_ALL_T"
    FLAT_ALL_T = "FLAT_ALL_T"
    NOT_A_ZERO_PLANE = "NOT_A_ZERO_PLANE"


@dataclass(frozen=True)
class PlaneClass:
    tag: PlaneTag
    dw_norm: float
    bracket_norm: float

    def to_dict(self) -> dict:
        return {"tag": self.tag.value, "dw_norm": self.dw_norm, "bracket_norm": self.bracket_norm}


def classify_zero_plane(backend: GeometryBackend, p, V, W, *, zero_tol: float = 1e-10,
                        dw_tol: float = 1e-8, bracket_tol: float = 1e-8) -> PlaneClass:
    """Sort a plane of ``g_0`` by how its curvature evolves under the deformation.

    A zero plane becomes positive to first order when the functional
    ``Z -> dw_Z(V, W)`` is nonzero; otherwise it becomes positive for every
    ``t > 0`` when ``[PV_m, PW_m] ≠ 0`` and stays flat when it vanishes.
    """
    frame = backend._frame(p)
    V, W = gram_schmidt(frame, V, W)
    dw = float(np.linalg.norm(backend.dw_functional(frame, V, W)))
    br = float(np.linalg.norm(backend.algebra.bracket(frame.PV(V), frame.PV(W))))
    if backend.curvature0(frame, V, W) > zero_tol:
        tag = PlaneTag.NOT_A_ZERO_PLANE
    elif dw > dw_tol:
        tag = PlaneTag.POSITIVE_FIRST_ORDER
    elif br > bracket_tol:
        tag = PlaneTag.POSITIVE_ALL_T
    else:
        tag = PlaneTag.FLAT_ALL_T
    return PlaneClass(tag, dw, br)


# 7-point central stencils (offsets -3..3) for the first three derivatives
_STENCILS = {
    1: np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0,
    2: np.array([2, -27, 270, -490, 270, -27, 2]) / 180.0,
    3: np.array([1, -8, 13, 0, -13, 8, -1]) / 8.0,
}
# leading error orders of those stencils, used for Richardson extrapolation
_ORDERS = {1: 6, 2: 6, 3: 4}


def derivative_probe(backend: GeometryBackend, p, V, W, *, h: float = 1e-2,
                     fallback_h: float = 1e-3):
    """Finite-difference ``(κ'_c(0), κ''_c(0), κ'''_c(0))``, Richardson-extrapolated."""
    frame = backend._frame(p)
    V, W = gram_schmidt(frame, V, W)
    for step in (h, fallback_h):
        if -3 * step > frame.t_min:
            break
    else:
        raise DeformationError("derivative stencil leaves the validity range")

    def kappa(t):
        return float(sum(kappa_terms(backend, frame, V, W, t)[:3]))

    def estimate(hh):
        vals = np.array([kappa(k * hh) for k in range(-3, 4)])
        return {d: float(_STENCILS[d] @ vals / hh ** d) for d in (1, 2, 3)}

    coarse = estimate(step)
    fine = estimate(step / 2)
    out = []
    for d in (1, 2, 3):
        r = 2.0 ** _ORDERS[d]
        out.append((r * fine[d] - coarse[d]) / (r - 1))
    return tuple(out)


# --- left-invariant closed forms --------------------------------------------------

def gs_curvature(alg: LieAlgebra, k: Subalgebra, A, B, s: float, *, final_sign: float = 1.0):
    """Unnormalized curvature of ``g_s = sQ|_k + Q|_m`` at the plane (A, B).

    ``final_sign`` flips the sign of the ``(4-3s)/4 ‖[A,B]_k‖²`` term; it exists so
    that the verification suite can demonstrate that only ``+1`` is consistent.
    """
    if not s > 0:
        raise AlgebraError("s must be positive")
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    Pk = k.projector
    Ak, Bk = A @ Pk.T, B @ Pk.T
    Am, Bm = A - Ak, B - Bk
    br = alg.bracket
    AB = br(A, B)
    ABk = AB @ Pk.T
    ABm = AB - ABk
    mm = br(Am, Bm)
    mm_m = mm - mm @ Pk.T
    kk = br(Ak, Bk)

    def sq(x):
        return np.einsum("...i,...i->...", x, x)

    first = 0.25 * sq(s * ABm + (1 - s) * mm_m)
    second = (1 - s) ** 2 * sq(kk)
    third = -(1 - s) * (2 - s) * np.einsum("...i,...i->...", kk, ABk)
    fourth = final_sign * (4 - 3 * s) / 4 * sq(ABk)
    return first + second + third + fourth


def gs_metric(k: Subalgebra, s: float) -> MetricOperator:
    Pk = k.projector
    return MetricOperator(s * Pk + (np.eye(len(Pk)) - Pk))


def deformed_metric(phi, k: Subalgebra, t: float) -> MetricOperator:
    """Left-invariant metric obtained by deforming ``Q(Φ·,·)`` along right translations by K.

    Returns ``Φ C_t`` where ``C_t`` shrinks the k-component (Φ-orthogonal split)
    by ``P^{-1} P_t = (I + tP)^{-1}``.
    """
    phi = phi.phi if isinstance(phi, MetricOperator) else np.asarray(phi, float)
    E = k.basis
    P = E.T @ phi @ E
    Pt = orbit_tensor_t(P, t)
    # x = E a + h with h Φ-orthogonal to k, a = P^{-1} E^T Φ x
    coef = np.linalg.solve(P, E.T @ phi)
    Ct = np.eye(len(phi)) - E @ (np.eye(len(P)) - np.linalg.solve(P, Pt)) @ coef
    new = phi @ Ct
    return MetricOperator(0.5 * (new + new.T))


def chain_metric(alg: LieAlgebra, chain: SubalgebraChain, ts, *, largest_first: bool = True,
                 phi=None) -> MetricOperator:
    """Iterate deformations along the chain, one level per entry of ``ts``.

    With ``largest_first`` (default) ``ts[0]`` deforms the largest level ``k_n``,
    ``ts[1]`` the next one down, and so on; block ``k_{n+1-i} ∩ k_{n-i}^⊥`` then ends
    with coefficient ``(1 + ts[0] + ... + ts[i-1])^{-1}``.  Otherwise ``ts[i]``
    deforms ``k_{i+1}``, innermost first.
    """
    levels = list(chain.levels)
    ts = [float(t) for t in ts]
    if len(ts) != len(levels):
        raise AlgebraError(f"need one parameter per chain level ({len(levels)})")
    order = list(reversed(levels)) if largest_first else levels
    current = np.eye(alg.dim) if phi is None else np.asarray(getattr(phi, "phi", phi), float)
    for level, t in zip(order, ts):
        current = deformed_metric(current, level, t).phi
        if np.linalg.eigvalsh(current).min() <= 0:
            raise DeformationError("metric lost positivity along the chain")
    bases, _ = chain_blocks(alg, chain)
    coeffs = []
    for b in bases:
        if b.shape[1] == 0:
            continue
        block = b.T @ current @ b
        c = float(np.trace(block) / b.shape[1])
        coeffs.append(c)
    return MetricOperator(current, tuple(coeffs))


def chain_coefficients(ts, *, largest_first: bool = True) -> list[float]:
    """Block coefficients of the chain metric, innermost block first, outer block last."""
    ts = [float(t) for t in ts]
    n = len(ts)
    if largest_first:
        # block of k_j (j = 1..n, innermost first) is last touched by step n+1-j
        return [1.0 / (1.0 + sum(ts[: n + 1 - j])) for j in range(1, n + 1)] + [1.0]
    return [1.0 / (1.0 + sum(ts[j - 1:])) for j in range(1, n + 1)] + [1.0]


# --- non-negativity scans for g_s -------------------------------------------------

@dataclass(frozen=True)
class ScanResult:
    s: float
    min_sec: float
    witness: tuple
    negative: bool
    n_samples: int

    def to_dict(self) -> dict:
        return {"s": self.s, "min_sec": self.min_sec, "negative": self.negative,
                "n_samples": self.n_samples,
                "witness": [np.asarray(w).tolist() for w in self.witness]}


def gs_sectional(alg: LieAlgebra, k: Subalgebra, A, B, s: float):
    """Normalized sectional curvature of ``g_s`` at (A, B) (batched)."""
    phi = gs_metric(k, s).phi

    def ip(x, y):
        return np.einsum("...i,ij,...j->...", x, phi, y)

    area = ip(A, A) * ip(B, B) - ip(A, B) ** 2
    return gs_curvature(alg, k, A, B, s) / area


def nonneg_scan(alg: LieAlgebra, k: Subalgebra, s: float, n_samples: int = 10_000, *,
                rng=None, n_descent: int = 10, witness_tol: float = 1e-8) -> ScanResult:
    """Search for negatively curved planes of ``g_s`` by sampling plus local descent."""
    rng = np.random.default_rng(rng)
    n = alg.dim
    A = rng.normal(size=(n_samples, n))
    B = rng.normal(size=(n_samples, n))
    secs = gs_sectional(alg, k, A, B, s)
    best = np.argsort(secs)[:max(0, n_descent)]
    min_sec = float(secs[best[0]]) if len(best) else float(secs.min())
    witness = (A[np.argmin(secs)], B[np.argmin(secs)])

    def f(x):
        return float(gs_sectional(alg, k, x[:n], x[n:], s))

    for i in best:
        res = optimize.minimize(f, np.concatenate([A[i], B[i]]), method="BFGS",
                                options={"gtol": 1e-10, "maxiter": 400})
        if res.fun < min_sec:
            min_sec = float(res.fun)
            witness = (res.x[:n], res.x[n:])
    return ScanResult(float(s), min_sec, witness, min_sec < -witness_tol, n_samples)


def nonneg_frontier(alg: LieAlgebra, k: Subalgebra, s_lo: float, s_hi: float, *,
                    width: float = 1e-3, n_samples: int = 2000, rng=0, n_descent: int = 10):
    """Bracket the smallest s in ``[s_lo, s_hi]`` at which a negative plane appears.

    Assumes the negative set is an upward-closed interval in s (true for these
    metrics).  Returns ``(lo, hi, scans)`` with ``hi - lo <= width``, or ``None``
    for the bracket when ``s_hi`` is still non-negative.
    """
    scans = []

    def negative(s):
        r = nonneg_scan(alg, k, s, n_samples, rng=rng, n_descent=n_descent)
        scans.append(r)
        return r.negative

    if negative(s_lo):
        return (s_lo, s_lo), scans
    if not negative(s_hi):
        return None, scans
    lo, hi = s_lo, s_hi
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if negative(mid):
            hi = mid
        else:
            lo = mid
    return (lo, hi), scans
