"""Step distributions nu on the B chamber and their compressions D_c(nu)."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace

import numpy as np
from scipy import stats

from ..chamber import ChamberPoint, snap_to_chamber
from ..errors import InsufficientMoments, InvalidSpec
from .rng import as_generator


@dataclass(frozen=True)
class DiracMixture:
    """Finitely many atoms in the chamber with probability weights."""

    points: tuple
    weights: tuple

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise InvalidSpec("a Dirac mixture needs at least one atom")
        try:
            pts = snap_to_chamber(pts, "B")
        except Exception as exc:
            raise InvalidSpec(f"atom outside the chamber: {exc}") from exc
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise InvalidSpec(f"{pts.shape[0]} atoms but {w.shape[0]} weights")
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-12):
            raise InvalidSpec("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "points", tuple(map(tuple, pts.tolist())))
        object.__setattr__(self, "weights", tuple(w.tolist()))

    @property
    def q(self) -> int:
        return len(self.points[0])

    @property
    def atoms(self):
        return np.asarray(self.points, dtype=np.float64)

    def to_dict(self):
        return {"type": "dirac", "points": [list(p) for p in self.points], "weights": list(self.weights)}


@dataclass(frozen=True)
class CoordinateLaw:
    """A named scipy.stats law on [0, inf) with keyword parameters."""

    name: str
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        dist = getattr(stats, self.name, None)
        if not isinstance(dist, stats.rv_continuous):
            raise InvalidSpec(f"unknown continuous law {self.name!r}")
        try:
            frozen = dist(**self.params)
            lo, _ = frozen.support()
        except TypeError as exc:
            raise InvalidSpec(f"bad parameters for {self.name}: {exc}") from exc
        if not lo >= 0:
            raise InvalidSpec(f"law {self.name} has support below 0; the chamber needs x >= 0")
        object.__setattr__(self, "params", dict(self.params))

    def frozen(self):
        return getattr(stats, self.name)(**self.params)

    def raw_moment(self, k: int) -> float:
        return float(self.frozen().moment(k))

    def __hash__(self):
        return hash((self.name, tuple(sorted(self.params.items()))))

    def to_dict(self):
        return {"name": self.name, "params": dict(self.params)}


@dataclass(frozen=True)
class ProductPushforward:
    """Independent coordinates drawn from ``laws``, then sorted into the chamber."""

    laws: tuple

    def __post_init__(self):
        laws = tuple(law if isinstance(law, CoordinateLaw) else CoordinateLaw(**law) for law in self.laws)
        if not laws:
            raise InvalidSpec("pushforward needs at least one coordinate law")
        object.__setattr__(self, "laws", laws)

    @property
    def q(self) -> int:
        return len(self.laws)

    def to_dict(self):
        return {"type": "pushforward", "laws": [law.to_dict() for law in self.laws]}


@dataclass(frozen=True)
class MeasureSpec:
    """A step law ``nu`` together with the compression ``c`` in (0, 1]."""

    variant: object
    compression: float = 1.0

    def __post_init__(self):
        if not isinstance(self.variant, (DiracMixture, ProductPushforward)):
            raise InvalidSpec(f"unsupported measure variant {type(self.variant).__name__}")
        c = float(self.compression)
        if not 0.0 < c <= 1.0:
            raise InvalidSpec(f"compression must lie in (0, 1], got {c:g}")
        object.__setattr__(self, "compression", c)

    @classmethod
    def dirac(cls, points, weights=None, compression=1.0) -> "MeasureSpec":
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if weights is None:
            weights = np.full(pts.shape[0], 1.0 / pts.shape[0])
        return cls(DiracMixture(pts, weights), compression)

    @classmethod
    def pushforward(cls, laws, compression=1.0) -> "MeasureSpec":
        return cls(ProductPushforward(tuple(laws)), compression)

    @classmethod
    def from_dict(cls, data) -> "MeasureSpec":
        allowed = {
            "dirac": {"type", "compression", "points", "weights"},
            "pushforward": {"type", "compression", "laws"},
        }
        kind = data.get("type")
        if kind not in allowed:
            raise InvalidSpec(f"measure type must be 'dirac' or 'pushforward', got {kind!r}")
        unknown = sorted(set(data) - allowed[kind])
        if unknown:
            raise InvalidSpec(f"unknown measure keys: {unknown}")
        compression = data.get("compression", 1.0)
        try:
            if kind == "dirac":
                return cls.dirac(data["points"], data.get("weights"), compression)
            return cls.pushforward([CoordinateLaw(**law) for law in data["laws"]], compression)
        except KeyError as exc:
            raise InvalidSpec(f"measure spec is missing key {exc}") from exc
        except TypeError as exc:
            raise InvalidSpec(f"malformed measure spec: {exc}") from exc

    def to_dict(self):
        out = self.variant.to_dict()
        out["compression"] = self.compression
        return out

    @property
    def q(self) -> int:
        return self.variant.q

    def compressed(self, c: float) -> "MeasureSpec":
        """``D_c`` applied on top of the current compression."""
        return replace(self, compression=self.compression * c)

    @property
    def is_dirac_at_zero(self) -> bool:
        v = self.variant
        if isinstance(v, DiracMixture):
            return bool(np.all(v.atoms[np.asarray(v.weights) > 0] == 0.0))
        return False

    def _raw_moment_sum(self, k: int) -> float:
        """``E sum_i x_i^k`` before compression (sorting does not change it)."""
        v = self.variant
        if isinstance(v, DiracMixture):
            return float(np.dot(v.weights, np.sum(v.atoms**k, axis=1)))
        return float(sum(law.raw_moment(k) for law in v.laws))

    def second_moment(self) -> float:
        """``int |x|^2 d nu_c``."""
        return self.compression**2 * self._raw_moment_sum(2)

    def require_moments(self, order: int):
        """Raise InsufficientMoments unless every classical moment up to ``order`` is finite."""
        if isinstance(self.variant, DiracMixture):
            return
        for law in self.variant.laws:
            m = law.raw_moment(order)
            if not np.isfinite(m):
                raise InsufficientMoments(f"law {law.name} has no finite moment of order {order}")

    def strata(self):
        """Atoms and weights for a Dirac mixture, None otherwise."""
        if isinstance(self.variant, DiracMixture):
            return self.compression * self.variant.atoms, np.asarray(self.variant.weights)
        return None


def sample_nu_batch(spec: MeasureSpec, n: int, rng):
    """``n`` draws from ``D_c(nu)`` as an (n, q) array."""
    gen = as_generator(rng)
    v = spec.variant
    if isinstance(v, DiracMixture):
        cum = np.cumsum(v.weights)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, gen.random(n), side="right")
        x = v.atoms[np.minimum(idx, len(v.weights) - 1)]
    else:
        cols = [law.frozen().rvs(size=n, random_state=gen) for law in v.laws]
        x = -np.sort(-np.column_stack(cols), axis=1)
    return spec.compression * x


def sample_nu(spec: MeasureSpec, rng) -> ChamberPoint:
    return ChamberPoint(sample_nu_batch(spec, 1, rng)[0], "B")
