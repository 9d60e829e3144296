"""Weyl chamber geometry and the parameter bookkeeping of one BC hypergroup."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .algebra import ScalarField
from .errors import NotInChamber, UnsupportedExponent

SNAP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ChamberPoint:
    """A point of the type A or type B Weyl chamber.

    Orderings violated by less than ``SNAP_TOL`` are snapped (sorted, tiny
    negatives clamped for kind B); larger violations raise ``NotInChamber``.
    """

    coords: np.ndarray
    kind: str = "B"

    def __post_init__(self):
        if self.kind not in ("A", "B"):
            raise ValueError(f"chamber kind must be 'A' or 'B', got {self.kind!r}")
        x = np.array(self.coords, dtype=np.float64).reshape(-1)
        if x.size == 0 or not np.all(np.isfinite(x)):
            raise NotInChamber("chamber points need finite coordinates")
        x = snap_to_chamber(x, self.kind)
        x.setflags(write=False)
        object.__setattr__(self, "coords", x)

    @property
    def q(self) -> int:
        return self.coords.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, ChamberPoint):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash((self.kind, self.coords.tobytes()))

    def __repr__(self):
        return f"ChamberPoint({self.kind}, {np.array2string(self.coords, precision=6)})"


def snap_to_chamber(x, kind: str = "B"):
    """Validate and snap an array of points (last axis = coordinates)."""
    x = np.array(x, dtype=np.float64)
    gaps = x[..., :-1] - x[..., 1:]
    if gaps.size and gaps.min() < -SNAP_TOL:
        raise NotInChamber("coordinates are not in descending order")
    if kind == "B" and x.size and x.min() < -SNAP_TOL:
        raise NotInChamber("type B chamber points must be nonnegative")
    x = -np.sort(-x, axis=-1)
    if kind == "B":
        x = np.maximum(x, 0.0)
    return x


def in_chamber(x, kind: str = "B") -> bool:
    x = np.asarray(x, dtype=np.float64)
    ok = bool(np.all(x[..., :-1] >= x[..., 1:]))
    if kind == "B":
        ok = ok and bool(np.all(x >= 0))
    return ok


def coords_of(x):
    """Plain float array from a ChamberPoint or array-like."""
    return np.asarray(getattr(x, "coords", x), dtype=np.float64)


@dataclass(frozen=True)
class ModelParams:
    """Rank ``q``, field (giving ``d``) and dimension parameter ``p >= 2q``."""

    q: int
    field: ScalarField
    p: float

    def __post_init__(self):
        object.__setattr__(self, "field", ScalarField.parse(self.field))
        q = int(self.q)
        if q != self.q or q < 1:
            raise ValueError(f"rank q must be a positive integer, got {self.q!r}")
        object.__setattr__(self, "q", q)
        p = float(self.p)
        if not np.isfinite(p) or p < 2 * q:
            raise UnsupportedExponent(
                f"p = {p:g} is below 2q = {2 * q}; the boundary case p = 2q-1 "
                "(singular m_p) and smaller p are not supported"
            )
        object.__setattr__(self, "p", p)

    @property
    def d(self) -> int:
        return self.field.d

    def with_p(self, p: float) -> "ModelParams":
        return replace(self, p=p)

    @property
    def rho(self):
        return rho_bc(self)

    @property
    def rho_a(self):
        return rho_a(self.q, self.d)

    @property
    def multiplicities(self):
        """``(k1, k2, k3)`` attached to the roots 2e_i, 4e_i and 2(+-e_i +- e_j)."""
        d, p, q = self.d, self.p, self.q
        return (d * (p - q) / 2.0, (d - 1) / 2.0, d / 2.0)

    @property
    def mp_exponent(self) -> float:
        """Exponent of det(I - w^*w) in the density of m_p."""
        return self.d * (self.p / 2.0 + 0.5 - self.q) - 1.0

    @property
    def laplace_const_paper(self) -> float:
        """``pqd``: the second-derivative-at-zero constant as stated."""
        return self.p * self.q * self.d

    @property
    def laplace_const_multiplicity(self) -> float:
        """``q + 2q k1 + 4q k2 + 2q(q-1) k3 = q(d(p+1) - 1)``."""
        k1, k2, k3 = self.multiplicities
        q = self.q
        return q + 2 * q * k1 + 4 * q * k2 + 2 * q * (q - 1) * k3

    def to_dict(self):
        return {"q": self.q, "field": self.field.name.lower(), "p": self.p}


def rho_bc(params: ModelParams):
    """Half sum of positive roots of type BC: ``(d/2)(p + q + 2 - 2i) - 1``."""
    i = np.arange(1, params.q + 1)
    return params.d / 2.0 * (params.p + params.q + 2 - 2 * i) - 1.0


def rho_a(q: int, d: int):
    """Half sum of positive roots of type A: ``(d/2)(q + 1 - 2l)``."""
    idx = np.arange(1, q + 1)
    return d / 2.0 * (q + 1 - 2 * idx)


def project_A(x):
    """Orthogonal projection onto the sum-zero hyperplane."""
    x = coords_of(x)
    return x - x.mean(axis=-1, keepdims=True)


def _log_cosh(x):
    ax = np.abs(x)
    large = ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)
    # cosh x - 1 = 2 sinh^2(x/2) avoids the cancellation near 0
    small = np.log1p(2.0 * np.sinh(np.minimum(ax, 1.0) / 2.0) ** 2)
    return np.where(ax < 1.0, small, large)


def log_cosh_map(x):
    """Coordinate-wise ``ln cosh``; maps the B chamber into itself.

    Returns a ChamberPoint when given one, else an array.
    """
    if isinstance(x, ChamberPoint):
        return ChamberPoint(_log_cosh(x.coords), "B")
    return _log_cosh(np.asarray(x, dtype=np.float64))


def inverse_log_cosh(y):
    """Coordinate-wise ``arcosh(exp(y))`` for ``y >= 0``."""
    if isinstance(y, ChamberPoint):
        return ChamberPoint(inverse_log_cosh(y.coords), "B")
    y = np.asarray(y, dtype=np.float64)
    if np.any(y < 0):
        raise NotInChamber("inverse_log_cosh needs y >= 0")
    # arcosh(e^y) = y + ln(1 + sqrt(1 - e^{-2y}))
    return y + np.log1p(np.sqrt(-np.expm1(-2.0 * y)))
