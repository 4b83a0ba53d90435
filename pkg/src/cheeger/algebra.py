"""Compact Lie algebras given by structure constants and a bi-invariant inner product.

Vectors are plain numpy arrays of coordinates in the algebra's basis.  Most of
the package works in a Q-orthonormal basis; :meth:`LieAlgebra.orthonormalized`
produces one from an arbitrary positive definite gram matrix.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_TOL = 1e-10


class AlgebraError(ValueError):
    """Raised for malformed algebras, subalgebras and chains."""


@dataclass(frozen=True)
class LieAlgebra:
    """Structure constants ``structure[i, j, k]`` with ``[e_i, e_j] = sum_k c_ijk e_k``."""

    structure: np.ndarray
    gram: np.ndarray
    name: str = ""

    def __post_init__(self):
        c = np.asarray(self.structure, dtype=float)
        q = np.asarray(self.gram, dtype=float)
        n = c.shape[0]
        if c.shape != (n, n, n) or n == 0:
            raise AlgebraError(f"structure tensor must be (n, n, n), got {c.shape}")
        if q.shape != (n, n):
            raise AlgebraError(f"gram must be {n}x{n}, got {q.shape}")
        if not np.array_equal(c, -c.transpose(1, 0, 2)):
            raise AlgebraError("structure constants are not antisymmetric")
        if not np.allclose(q, q.T, atol=1e-14, rtol=0):
            raise AlgebraError("gram matrix is not symmetric")
        if np.linalg.eigvalsh(q).min() <= 0:
            raise AlgebraError("gram matrix is not positive definite")
        c.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "structure", c)
        object.__setattr__(self, "gram", q)

    @property
    def dim(self) -> int:
        return self.structure.shape[0]

    @property
    def is_orthonormal(self) -> bool:
        return bool(np.allclose(self.gram, np.eye(self.dim), atol=1e-12, rtol=0))

    def bracket(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape[-1] != self.dim or y.shape[-1] != self.dim:
            raise AlgebraError(
                f"vectors must have length {self.dim}, got {x.shape[-1]} and {y.shape[-1]}")
        return np.einsum("...i,...j,ijk->...k", x, y, self.structure)

    def ad(self, x) -> np.ndarray:
        """Matrix of ``ad_x`` acting on coordinate columns."""
        return np.einsum("i,ijk->kj", np.asarray(x, dtype=float), self.structure)

    def inner(self, x, y) -> np.ndarray:
        return np.einsum("...i,ij,...j->...", x, self.gram, y)

    def norm(self, x) -> np.ndarray:
        return np.sqrt(np.maximum(self.inner(x, x), 0.0))

    def jacobi_residual(self) -> float:
        """Largest Jacobi-identity defect over basis triples."""
        e = np.eye(self.dim)
        worst = 0.0
        for i, j, k in itertools.product(range(self.dim), repeat=3):
            x, y, z = e[i], e[j], e[k]
            r = (self.bracket(self.bracket(x, y), z)
                 + self.bracket(self.bracket(y, z), x)
                 + self.bracket(self.bracket(z, x), y))
            worst = max(worst, float(np.abs(r).max()))
        return worst

    def orthonormalized(self) -> tuple["LieAlgebra", np.ndarray]:
        """Return an isomorphic algebra with identity gram and the basis change.

        The second value ``M`` has the new basis vectors as columns in old
        coordinates, so ``x_old = M @ x_new``.
        """
        if self.is_orthonormal:
            return self, np.eye(self.dim)
        L = np.linalg.cholesky(self.gram)
        M = np.linalg.inv(L).T
        Minv = np.linalg.inv(M)
        c = np.einsum("ia,jb,ijk,ck->abc", M, M, self.structure, Minv)
        c = 0.5 * (c - c.transpose(1, 0, 2))
        return LieAlgebra(c, np.eye(self.dim), self.name), M

    def restrict(self, basis) -> "LieAlgebra":
        """Structure constants of the subalgebra spanned by Q-orthonormal columns of ``basis``.

        Only valid for orthonormal algebras; closure is checked by the caller.
        """
        E = np.asarray(basis, dtype=float)
        c = np.einsum("ia,jb,ijk,kl,lc->abc", E, E, self.structure, self.gram, E)
        c = 0.5 * (c - c.transpose(1, 0, 2))
        return LieAlgebra(c, E.T @ self.gram @ E, self.name + "|sub")

    def to_json(self) -> dict:
        entries = [[int(i), int(j), int(k), float(self.structure[i, j, k])]
                   for i, j, k in zip(*np.nonzero(self.structure)) if i < j]
        return {"dim": self.dim, "structure": entries, "gram": self.gram.tolist()}


def check_bi_invariance(alg: LieAlgebra) -> float:
    """max over basis triples of |Q([z,x],y) + Q(x,[z,y])|."""
    ads = np.stack([alg.ad(z) for z in np.eye(alg.dim)])
    # Q(ad_z x, y) + Q(x, ad_z y) for every basis x, y is the matrix ad_z^T Q + Q ad_z
    defect = np.einsum("zki,kj->zij", ads, alg.gram) + np.einsum("ik,zkj->zij", alg.gram, ads)
    return float(np.abs(defect).max())


def algebra_from_json(doc) -> LieAlgebra:
    """Build an algebra from ``{"dim": n, "structure": [[i,j,k,v],...], "gram": [[...]]}``.

    Entries may list either ``(i, j)`` or ``(j, i)``; the antisymmetric partner is
    filled in, and contradicting duplicates are rejected.
    """
    if isinstance(doc, (str, Path)):
        doc = json.loads(Path(doc).read_text())
    n = int(doc["dim"])
    c = np.zeros((n, n, n))
    seen = np.zeros((n, n, n), dtype=bool)
    for i, j, k, v in doc["structure"]:
        i, j, k, v = int(i), int(j), int(k), float(v)
        if i == j and v != 0.0:
            raise AlgebraError(f"[e_{i}, e_{i}] must vanish")
        for a, b, s in ((i, j, v), (j, i, -v)):
            if seen[a, b, k] and c[a, b, k] != s:
                raise AlgebraError(f"inconsistent entries for [e_{i}, e_{j}] component {k}")
            c[a, b, k] = s
            seen[a, b, k] = True
    gram = np.asarray(doc.get("gram", np.eye(n)), dtype=float)
    return LieAlgebra(c, gram, doc.get("name", "custom"))


# --- builtins -----------------------------------------------------------------

def _from_matrices(mats, name) -> LieAlgebra:
    """Structure constants of a matrix Lie algebra whose basis is orthonormal
    for ``Q(X, Y) = -tr(XY) / -tr(X_0 X_0)`` (all basis matrices share one norm)."""
    mats = np.asarray(mats)
    n = len(mats)
    flat = mats.reshape(n, -1)
    scale = -np.trace(mats[0] @ mats[0]).real
    gram = np.array([[-np.trace(a @ b).real / scale for b in mats] for a in mats])
    if not np.allclose(gram, np.eye(n), atol=1e-14):
        raise AlgebraError("basis matrices are not orthonormal")
    c = np.zeros((n, n, n))
    for i, j in itertools.combinations(range(n), 2):
        comm = mats[i] @ mats[j] - mats[j] @ mats[i]
        coef, *_ = np.linalg.lstsq(flat.T, comm.reshape(-1), rcond=None)
        c[i, j] = coef.real
        c[j, i] = -coef.real
    c[np.abs(c) < 1e-15] = 0.0
    return LieAlgebra(c, np.eye(n), name)


def _so3() -> LieAlgebra:
    c = np.zeros((3, 3, 3))
    for i, j, k in itertools.permutations(range(3)):
        c[i, j, k] = np.linalg.det(np.eye(3)[[i, j, k]])
    return LieAlgebra(c, np.eye(3), "so3")


def _gell_mann() -> np.ndarray:
    lam = np.zeros((8, 3, 3), dtype=complex)
    lam[0][0, 1] = lam[0][1, 0] = 1
    lam[1][0, 1], lam[1][1, 0] = -1j, 1j
    lam[2][0, 0], lam[2][1, 1] = 1, -1
    lam[3][0, 2] = lam[3][2, 0] = 1
    lam[4][0, 2], lam[4][2, 0] = -1j, 1j
    lam[5][1, 2] = lam[5][2, 1] = 1
    lam[6][1, 2], lam[6][2, 1] = -1j, 1j
    lam[7] = np.diag([1, 1, -2]) / np.sqrt(3)
    return lam


def _su3() -> LieAlgebra:
    # e_a = -i lambda_a / 2, so [e_a, e_b] = f_abc e_c with the usual f
    return _from_matrices(-0.5j * _gell_mann(), "su3")


def _so4() -> LieAlgebra:
    mats = []
    for i, j in itertools.combinations(range(4), 2):
        m = np.zeros((4, 4))
        m[i, j], m[j, i] = -1.0, 1.0
        mats.append(m)
    return _from_matrices(mats, "so4")


def _torus(k: int) -> LieAlgebra:
    if k < 1:
        raise AlgebraError("torus dimension must be positive")
    return LieAlgebra(np.zeros((k, k, k)), np.eye(k), f"torus({k})")


def builtin(name: str) -> LieAlgebra:
    """Builtin algebras: ``so3``, ``su2``, ``su3``, ``so4`` and ``torus(k)``."""
    key = name.strip().lower().replace(" ", "")
    if key == "so3":
        return _so3()
    if key == "su2":
        alg = _so3()
        return LieAlgebra(alg.structure, alg.gram, "su2")
    if key == "su3":
        return _su3()
    if key == "so4":
        return _so4()
    if key.startswith("torus(") and key.endswith(")"):
        try:
            k = int(key[6:-1])
        except ValueError:
            raise AlgebraError(f"bad torus dimension in {name!r}") from None
        return _torus(k)
    raise AlgebraError(f"unknown builtin algebra {name!r}")


# Named subalgebras of the builtins, as spanning sets in builtin coordinates.
NAMED_SUBALGEBRAS = {
    ("so3", "u1"): [[0, 0, 1]],
    ("su2", "u1"): [[0, 0, 1]],
    ("su3", "u1"): [np.eye(8)[2]],
    ("su3", "su2"): np.eye(8)[[0, 1, 2]],
    ("su3", "torus"): np.eye(8)[[2, 7]],
    ("su3", "so3"): np.eye(8)[[1, 4, 6]],
    ("su3", "u1_8"): [np.eye(8)[7]],
    ("so4", "diag_so3"): None,  # filled below
    ("so4", "u1"): [np.eye(6)[0]],
}


def _so4_ideals() -> tuple[np.ndarray, np.ndarray]:
    # basis order: E01 E02 E03 E12 E13 E23; self-dual / anti-self-dual combinations
    e = np.eye(6)
    plus = np.stack([e[0] + e[5], e[1] - e[4], e[2] + e[3]]) / np.sqrt(2)
    minus = np.stack([e[0] - e[5], e[1] + e[4], e[2] - e[3]]) / np.sqrt(2)
    return plus, minus


NAMED_SUBALGEBRAS[("so4", "so3_plus")] = _so4_ideals()[0]
NAMED_SUBALGEBRAS[("so4", "so3_minus")] = _so4_ideals()[1]
# the block so(3) acting on the first three coordinates
NAMED_SUBALGEBRAS[("so4", "diag_so3")] = np.eye(6)[[0, 1, 3]]


# --- subalgebras, chains, metrics ----------------------------------------------

def _orthonormal_span(alg: LieAlgebra, vectors, tol: float) -> np.ndarray:
    """Q-orthonormal basis (columns) of the span of ``vectors``."""
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    if V.shape[-1] != alg.dim:
        raise AlgebraError(f"spanning vectors must have length {alg.dim}")
    L = np.linalg.cholesky(alg.gram)
    # orthonormalize in coordinates where Q is Euclidean: y = L^T x
    Y = L.T @ V.T
    if Y.shape[1] == 0:
        return np.zeros((alg.dim, 0))
    U, s, _ = np.linalg.svd(Y, full_matrices=False)
    rank = int(np.sum(s > tol * max(1.0, s.max())))
    return np.linalg.solve(L.T, U[:, :rank])


@dataclass(frozen=True)
class Subalgebra:
    """A bracket-closed subspace stored as Q-orthonormal basis columns."""

    algebra: LieAlgebra
    basis: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        """Q-orthogonal projection onto the subalgebra (acts on coordinate columns)."""
        return self.basis @ self.basis.T @ self.algebra.gram

    def contains(self, x, tol=DEFAULT_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(self.algebra.norm(x - self.projector @ x) <= tol * max(1.0, self.algebra.norm(x)))


def subalgebra(alg: LieAlgebra, vectors, tol: float = DEFAULT_TOL) -> Subalgebra:
    """Span ``vectors`` and verify bracket closure."""
    E = _orthonormal_span(alg, vectors, tol)
    sub = Subalgebra(alg, E)
    Pi = sub.projector
    for a, b in itertools.combinations(range(E.shape[1]), 2):
        br = alg.bracket(E[:, a], E[:, b])
        if alg.norm(br - Pi @ br) > tol:
            raise AlgebraError("spanning set is not closed under the bracket")
    return sub


def named_subalgebra(alg: LieAlgebra, name: str) -> Subalgebra:
    key = name.strip().lower()
    if key in ("all", "g", "full"):
        return subalgebra(alg, np.eye(alg.dim))
    base = alg.name.split("|")[0]
    try:
        vecs = NAMED_SUBALGEBRAS[(base, key)]
    except KeyError:
        raise AlgebraError(f"no subalgebra {name!r} registered for {base!r}") from None
    return subalgebra(alg, vecs)


@dataclass(frozen=True)
class SubalgebraChain:
    """Nested subalgebras ``k_1 < k_2 < ... < k_n`` and their Q-orthogonal blocks.

    ``blocks[i]`` is ``k_{i+1} ∩ k_i^⊥`` (with ``k_0 = 0``); the last entry is
    the outer block ``g ∩ k_n^⊥``, which is empty when ``k_n = g``.
    """

    algebra: LieAlgebra
    levels: tuple
    blocks: tuple = field(default=())


def make_chain(alg: LieAlgebra, levels, tol: float = DEFAULT_TOL) -> SubalgebraChain:
    subs = [lv if isinstance(lv, Subalgebra) else subalgebra(alg, lv, tol) for lv in levels]
    if not subs:
        raise AlgebraError("a chain needs at least one level")
    for inner, outer in zip(subs, subs[1:]):
        if inner.dim >= outer.dim:
            raise AlgebraError("chain levels must be strictly increasing in dimension")
        if not all(outer.contains(inner.basis[:, a], tol) for a in range(inner.dim)):
            raise AlgebraError("chain levels are not nested")
    blocks = []
    prev = np.zeros((alg.dim, 0))
    for sub in subs + [subalgebra(alg, np.eye(alg.dim))]:
        Pi_prev = prev @ prev.T @ alg.gram
        rest = sub.basis - Pi_prev @ sub.basis
        blocks.append(_orthonormal_span(alg, rest.T, 1e-8) if rest.size else np.zeros((alg.dim, 0)))
        prev = sub.basis
    return SubalgebraChain(alg, tuple(subs), tuple(blocks))


def chain_blocks(alg: LieAlgebra, chain: SubalgebraChain):
    """Orthonormal block bases and their Q-orthogonal projectors."""
    if chain.algebra is not alg and not np.array_equal(chain.algebra.structure, alg.structure):
        raise AlgebraError("chain belongs to a different algebra")
    bases = [b for b in chain.blocks]
    projectors = [b @ b.T @ alg.gram for b in bases]
    return bases, projectors


@dataclass(frozen=True)
class MetricOperator:
    """Operator Φ on g (Q-symmetric) encoding the inner product ``Q(Φx, y)``."""

    phi: np.ndarray
    block_coefficients: tuple = ()

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
            raise AlgebraError(f"metric operator must be square, got {phi.shape}")
        if not np.allclose(phi, phi.T, atol=1e-12, rtol=0):
            raise AlgebraError("metric operator is not Q-symmetric")
        phi = 0.5 * (phi + phi.T)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.phi)

    @property
    def positive(self) -> bool:
        return bool(self.eigenvalues.min() > 0)

    @classmethod
    def from_blocks(cls, alg: LieAlgebra, chain: SubalgebraChain, coefficients) -> "MetricOperator":
        if len(coefficients) != len(chain.blocks):
            raise AlgebraError(f"need {len(chain.blocks)} block coefficients")
        _, projectors = chain_blocks(alg, chain)
        phi = sum(c * P for c, P in zip(coefficients, projectors))
        return cls(phi, tuple(float(c) for c in coefficients))


def commutant_basis(alg: LieAlgebra, sub: Subalgebra, tol: float = 1e-9) -> list[np.ndarray]:
    """Symmetric matrices commuting with ``ad_x`` for every ``x`` in ``sub``.

    These are exactly the left-invariant metrics that are also right-invariant
    under the connected subgroup with Lie algebra ``sub`` (orthonormal algebras only).
    """
    n = alg.dim
    sym = []
    for i in range(n):
        for j in range(i, n):
            S = np.zeros((n, n))
            S[i, j] = S[j, i] = 1.0 if i == j else 1 / np.sqrt(2)
            sym.append(S)
    ads = [alg.ad(sub.basis[:, a]) for a in range(sub.dim)]
    rows = np.stack([np.concatenate([(S @ A - A @ S).ravel() for A in ads]) for S in sym], axis=1)
    if rows.shape[0] == 0:
        return sym
    _, s, vt = np.linalg.svd(rows)
    s = np.concatenate([s, np.zeros(len(sym) - len(s))])
    null = vt[s <= tol * max(1.0, s.max())]
    return [np.einsum("k,kij->ij", v, np.stack(sym)) for v in null]


def random_invariant_metric(alg: LieAlgebra, sub: Subalgebra, rng, spread: float = 1.5) -> MetricOperator:
    """Random positive definite Φ that commutes with ad of ``sub``."""
    basis = commutant_basis(alg, sub)
    S = sum(rng.normal() * B for B in basis)
    S = spread * S / max(np.abs(np.linalg.eigvalsh(S)).max(), 1e-12)
    lo = np.linalg.eigvalsh(S).min()
    return MetricOperator(S + (rng.uniform(0.3, 1.0) - lo) * np.eye(alg.dim))
