"""Small dense linear algebra over R, C and H.

Quaternionic matrices are carried exclusively through the complex 2x2-block
embedding: the entry ``z1 + z2 j`` (with ``z1, z2`` complex) becomes the block

    [[ z1,        z2      ],
     [-conj(z2),  conj(z1)]]

so a ``r x c`` quaternion matrix is a ``2r x 2c`` complex array.  All
decompositions run on that image.  Arrays handled by the batched helpers have
shape ``(..., rows, cols)`` in embedded form.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceFailure,
    IndexOutOfRange,
    NonPositiveMinor,
    NonSquare,
    NotHermitian,
    NotInBall,
    NotUnitary,
)

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-10
BALL_TOL = 1e-12


class ScalarField(enum.Enum):
    REAL = 1
    COMPLEX = 2
    QUATERNION = 4

    @property
    def d(self) -> int:
        """Real dimension of the field."""
        return self.value

    @property
    def block(self) -> int:
        """Size of the complex block representing one scalar."""
        return 2 if self is ScalarField.QUATERNION else 1

    @property
    def dtype(self):
        return np.float64 if self is ScalarField.REAL else np.complex128

    @classmethod
    def parse(cls, value) -> "ScalarField":
        if isinstance(value, ScalarField):
            return value
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            return cls(int(value))
        key = str(value).strip().lower()
        aliases = {
            "r": cls.REAL, "real": cls.REAL, "reals": cls.REAL,
            "c": cls.COMPLEX, "complex": cls.COMPLEX,
            "h": cls.QUATERNION, "quaternion": cls.QUATERNION, "quaternions": cls.QUATERNION,
        }
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown scalar field {value!r}")


# ----------------------------------------------------------------------------
# embedding helpers (batched)


def quaternion_embed(z1, z2):
    """Embed the quaternion matrix ``z1 + z2 j`` as a complex array."""
    z1 = np.asarray(z1, dtype=np.complex128)
    z2 = np.asarray(z2, dtype=np.complex128)
    *lead, r, c = z1.shape
    out = np.empty((*lead, 2 * r, 2 * c), dtype=np.complex128)
    out[..., 0::2, 0::2] = z1
    out[..., 0::2, 1::2] = z2
    out[..., 1::2, 0::2] = -np.conj(z2)
    out[..., 1::2, 1::2] = np.conj(z1)
    return out


def quaternion_parts(emb):
    """Inverse of :func:`quaternion_embed`, returns ``(z1, z2)``."""
    emb = np.asarray(emb)
    return emb[..., 0::2, 0::2].copy(), emb[..., 0::2, 1::2].copy()


def symplectic_defect(emb) -> float:
    """Max entrywise violation of ``J conj(M) J^{-1} = M`` for an embedded array."""
    emb = np.asarray(emb)
    d1 = np.abs(emb[..., 0::2, 0::2] - np.conj(emb[..., 1::2, 1::2]))
    d2 = np.abs(emb[..., 0::2, 1::2] + np.conj(emb[..., 1::2, 0::2]))
    if d1.size == 0:
        return 0.0
    return float(max(d1.max(), d2.max()))


def gaussian(field: ScalarField, shape, rng):
    """Standard Gaussian matrices over ``field`` in embedded form.

    Every real component is N(0, 1), so a scalar entry has E|z|^2 = d.
    ``shape`` is the logical shape ``(..., rows, cols)``.
    """
    shape = tuple(shape)
    if field is ScalarField.REAL:
        return rng.standard_normal(shape)
    if field is ScalarField.COMPLEX:
        g = rng.standard_normal(shape + (2,))
        return g[..., 0] + 1j * g[..., 1]
    g = rng.standard_normal(shape + (4,))
    return quaternion_embed(g[..., 0] + 1j * g[..., 1], g[..., 2] + 1j * g[..., 3])


def expand_diag(field: ScalarField, values):
    """Repeat a real diagonal so that it acts on the embedded representation."""
    values = np.asarray(values, dtype=np.float64)
    if field.block == 1:
        return values
    return np.repeat(values, 2, axis=-1)


def adjoint(a):
    return np.conj(np.swapaxes(a, -1, -2))


def _scaled_tol(a, tol):
    a = np.asarray(a)
    if a.size == 0:
        return tol
    return tol * max(1.0, float(np.abs(a).max()))


# ----------------------------------------------------------------------------
# FMatrix


@dataclass(frozen=True, eq=False)
class FMatrix:
    """A matrix over R, C or H, stored in embedded form."""

    field: ScalarField
    data: np.ndarray

    def __post_init__(self):
        field = ScalarField.parse(self.field)
        data = np.array(self.data, dtype=field.dtype, copy=True)
        if data.ndim != 2:
            raise ValueError("FMatrix data must be two-dimensional")
        if field is ScalarField.QUATERNION:
            if data.shape[0] % 2 or data.shape[1] % 2:
                raise ValueError("quaternion embedding needs even dimensions")
            if symplectic_defect(data) > _scaled_tol(data, HERMITIAN_TOL):
                raise ValueError("array is not the embedding of a quaternion matrix")
        data.setflags(write=False)
        object.__setattr__(self, "field", field)
        object.__setattr__(self, "data", data)

    # construction ------------------------------------------------------------
    @classmethod
    def from_real(cls, a) -> "FMatrix":
        return cls(ScalarField.REAL, np.asarray(a, dtype=np.float64))

    @classmethod
    def from_complex(cls, a) -> "FMatrix":
        return cls(ScalarField.COMPLEX, np.asarray(a, dtype=np.complex128))

    @classmethod
    def from_quaternion(cls, components) -> "FMatrix":
        """Build from a real ``(r, c, 4)`` array of components ``a + bi + cj + dk``."""
        comp = np.asarray(components, dtype=np.float64)
        if comp.ndim != 3 or comp.shape[-1] != 4:
            raise ValueError("quaternion components must have shape (r, c, 4)")
        z1 = comp[..., 0] + 1j * comp[..., 1]
        z2 = comp[..., 2] + 1j * comp[..., 3]
        return cls(ScalarField.QUATERNION, quaternion_embed(z1, z2))

    @classmethod
    def identity(cls, q: int, field) -> "FMatrix":
        field = ScalarField.parse(field)
        return cls(field, np.eye(q * field.block, dtype=field.dtype))

    @classmethod
    def diagonal(cls, values, field) -> "FMatrix":
        """Diagonal matrix with real diagonal ``values``."""
        field = ScalarField.parse(field)
        return cls(field, np.diag(expand_diag(field, values)).astype(field.dtype))

    # views ----------------------------------------------------------------------
    @property
    def rows(self) -> int:
        return self.data.shape[0] // self.field.block

    @property
    def cols(self) -> int:
        return self.data.shape[1] // self.field.block

    @property
    def shape(self):
        return (self.rows, self.cols)

    def quaternion_components(self):
        if self.field is not ScalarField.QUATERNION:
            raise TypeError("not a quaternion matrix")
        z1, z2 = quaternion_parts(self.data)
        return np.stack([z1.real, z1.imag, z2.real, z2.imag], axis=-1)

    def block(self, r: int, c: int | None = None) -> "FMatrix":
        """Top-left ``r x c`` submatrix."""
        c = r if c is None else c
        b = self.field.block
        return FMatrix(self.field, self.data[: b * r, : b * c])

    # arithmetic -------------------------------------------------------------------
    def adjoint(self) -> "FMatrix":
        return FMatrix(self.field, adjoint(self.data))

    def __matmul__(self, other: "FMatrix") -> "FMatrix":
        if other.field is not self.field:
            raise TypeError("field mismatch")
        return FMatrix(self.field, self.data @ other.data)

    def __add__(self, other: "FMatrix") -> "FMatrix":
        if other.field is not self.field:
            raise TypeError("field mismatch")
        return FMatrix(self.field, self.data + other.data)

    def __sub__(self, other: "FMatrix") -> "FMatrix":
        if other.field is not self.field:
            raise TypeError("field mismatch")
        return FMatrix(self.field, self.data - other.data)

    def scaled(self, s: float) -> "FMatrix":
        return FMatrix(self.field, float(s) * self.data)

    def allclose(self, other: "FMatrix", atol=1e-10) -> bool:
        return self.field is other.field and np.allclose(self.data, other.data, atol=atol, rtol=0)

    def is_hermitian(self, tol=HERMITIAN_TOL) -> bool:
        if self.rows != self.cols:
            return False
        return float(np.abs(self.data - adjoint(self.data)).max()) <= _scaled_tol(self.data, tol)

    def is_unitary(self, tol=UNITARY_TOL) -> bool:
        if self.rows != self.cols:
            return False
        eye = np.eye(self.data.shape[0])
        return float(np.abs(adjoint(self.data) @ self.data - eye).max()) <= tol

    def __repr__(self):
        return f"FMatrix({self.field.name}, {self.rows}x{self.cols})"


def _require_square(m: FMatrix):
    if m.rows != m.cols:
        raise NonSquare(f"expected a square matrix, got {m.rows}x{m.cols}")


def _require_hermitian(m: FMatrix):
    _require_square(m)
    if not m.is_hermitian():
        raise NotHermitian("matrix is not Hermitian within tolerance")


# ----------------------------------------------------------------------------
# exact kernel


def dieudonne_det(m: FMatrix) -> float:
    """Determinant of a Hermitian positive semidefinite matrix.

    For H this is the Dieudonne determinant ``det_C(embedding)^(1/2)``.
    Eigenvalues are clamped at zero, so the result is never negative.
    """
    _require_hermitian(m)
    herm = 0.5 * (m.data + adjoint(m.data))
    try:
        ev = np.linalg.eigvalsh(herm)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    ev = np.clip(ev, 0.0, None)
    if m.field.block == 2:
        # eigenvalues of the embedding come in equal pairs
        ev = np.sort(ev)[::2]
    return float(np.prod(ev))


def principal_minor(m: FMatrix, r: int) -> float:
    """``r``-th leading principal minor, with the convention minor_0 = 1."""
    _require_hermitian(m)
    if r == 0:
        return 1.0
    if not 1 <= r <= m.rows:
        raise IndexOutOfRange(f"minor index {r} outside 0..{m.rows}")
    return dieudonne_det(m.block(r))


def log_principal_minors(data, field: ScalarField):
    """``ln minor_r`` for r = 1..q of a batch of Hermitian positive definite arrays.

    Uses the Cholesky factor: ``minor_r = prod_{k<=r} L_kk^2`` (for H the product
    runs over the ``2r`` embedded pivots and is square-rooted).
    """
    data = np.asarray(data)
    herm = 0.5 * (data + adjoint(data))
    try:
        chol = np.linalg.cholesky(herm)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveMinor("matrix is not positive definite") from exc
    logdiag = np.log(np.abs(np.diagonal(chol, axis1=-2, axis2=-1)))
    cums = np.cumsum(logdiag, axis=-1)
    b = field.block
    return (2.0 / b) * cums[..., b - 1 :: b]


def power_function(m: FMatrix, lam) -> complex:
    """Generalised power ``minor_1^(l1-l2) ... minor_{q-1}^(l_{q-1}-l_q) minor_q^(l_q)``.

    Complex exponents use the real logarithm of the positive minors.
    """
    _require_hermitian(m)
    lam = np.asarray(lam, dtype=np.complex128).reshape(-1)
    if lam.shape[0] != m.rows:
        raise ValueError(f"spectral parameter has length {lam.shape[0]}, expected {m.rows}")
    if not np.all(np.isfinite(lam)):
        raise ValueError("spectral parameter must be finite")
    logs = log_principal_minors(m.data, m.field)
    coeff = lam - np.append(lam[1:], 0.0)
    return complex(np.exp(np.sum(coeff * logs)))


def singular_values(m: FMatrix):
    """Singular values in descending order (duplicated H pairs folded)."""
    _require_square(m)
    try:
        s = np.linalg.svd(m.data, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    s = np.clip(np.sort(s)[::-1], 0.0, None)
    if m.field.block == 2:
        s = s[::2]
    return s


def g_matrix(x, u: FMatrix, w: FMatrix) -> FMatrix:
    """``u^* (cosh x + sinh x w)(cosh x + sinh x w)^* u`` for x in the B chamber."""
    x = np.asarray(getattr(x, "coords", x), dtype=np.float64).reshape(-1)
    q = x.shape[0]
    if u.shape != (q, q) or w.shape != (q, q) or u.field is not w.field:
        raise ValueError("u and w must be q x q matrices over the same field")
    if not u.is_unitary():
        raise NotUnitary("u^* u deviates from the identity")
    sig = singular_values(w)
    if sig.size and sig[0] > 1.0 + BALL_TOL:
        raise NotInBall(f"largest singular value {sig[0]:.3g} exceeds 1")
    field = u.field
    c = expand_diag(field, np.cosh(x))
    s = expand_diag(field, np.sinh(x))
    a = np.diag(c) + s[:, None] * w.data
    g = adjoint(u.data) @ a @ adjoint(a) @ u.data
    return FMatrix(field, 0.5 * (g + adjoint(g)))


# ----------------------------------------------------------------------------
# batched log-minor increments used by the Monte Carlo integrands


def _abs_scalar(a, field: ScalarField):
    """|a| for 1x1 matrices (embedded 2x2 blocks for H), batched."""
    if field.block == 1:
        return np.abs(a[..., 0, 0])
    return np.sqrt(np.abs(a[..., 0, 0]) ** 2 + np.abs(a[..., 0, 1]) ** 2)


def log_minor_increments(field: ScalarField, log_scale, u, k=None):
    """Increments ``ln minor_r(A^*A) - ln minor_{r-1}(A^*A)``, r = 1..q, batched.

    ``A = K diag(exp(log_scale)) u`` where ``K`` defaults to the identity.
    ``log_scale`` must be sorted in descending order along the last axis.
    The graded middle factor is handled by a QR factorisation of the row-scaled
    unitary, so wide spreads in ``log_scale`` do not lose the small minors.

    Parameters
    ----------
    log_scale : array (..., q)
    u : array (..., bq, bq), unitary in embedded form
    k : array (..., bq, bq) or None
    """
    log_scale = np.asarray(log_scale, dtype=np.float64)
    q = log_scale.shape[-1]
    if q == 1:
        f = 2.0 * log_scale
        if k is not None:
            f = f + 2.0 * np.log(_abs_scalar(k, field))[..., None]
        return np.broadcast_to(f, np.broadcast_shapes(f.shape, np.shape(u)[:-2] + (1,))).copy()
    top = log_scale.max(axis=-1, keepdims=True)
    scale = expand_diag(field, np.exp(log_scale - top))
    graded = scale[..., :, None] * u
    if k is None:
        r1 = np.linalg.qr(graded, mode="r")
        logdiag = np.log(np.abs(np.diagonal(r1, axis1=-2, axis2=-1)))
    else:
        q1, r1 = np.linalg.qr(graded)
        r2 = np.linalg.qr(k @ q1, mode="r")
        logdiag = np.log(np.abs(np.diagonal(r1, axis1=-2, axis2=-1))) + np.log(
            np.abs(np.diagonal(r2, axis1=-2, axis2=-1))
        )
    if field.block == 1:
        return 2.0 * (top + logdiag)
    return 2.0 * top + logdiag[..., 0::2] + logdiag[..., 1::2]
