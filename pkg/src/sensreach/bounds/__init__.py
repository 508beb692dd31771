"""Sensitivity bounds and the two ways of estimating them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..interval import IntervalMatrix

__all__ = ["SensitivityBounds"]


@dataclass(frozen=True, eq=False)
class SensitivityBounds:
    """Interval enclosures of ``s^x(T)`` (n x n) and ``s^p(T)`` (n x q).

    ``guaranteed`` is True only for bounds derived by interval arithmetic;
    sampled bounds carry no formal guarantee.
    """

    sx: IntervalMatrix
    sp: IntervalMatrix
    guaranteed: bool
    horizon: tuple[float, float]

    def __post_init__(self):
        n = self.sx.n_rows
        if self.sx.shape != (n, n):
            raise ValueError(f"sx must be square, got {self.sx.shape}")
        if self.sp.n_rows != n:
            raise ValueError(f"sp has {self.sp.n_rows} rows, expected {n}")
        object.__setattr__(self, "horizon", (float(self.horizon[0]), float(self.horizon[1])))

    @classmethod
    def from_samples(cls, sx, sp, horizon, guaranteed=False) -> "SensitivityBounds":
        """Elementwise min/max over stacked samples ``(N, n, n)``, ``(N, n, q)``."""
        sx = np.asarray(sx, dtype=float)
        sp = np.asarray(sp, dtype=float)
        return cls(
            IntervalMatrix(sx.min(axis=0), sx.max(axis=0)),
            IntervalMatrix(sp.min(axis=0), sp.max(axis=0)),
            guaranteed,
            horizon,
        )

    @property
    def n(self) -> int:
        return self.sx.n_rows

    @property
    def q(self) -> int:
        return self.sp.n_cols

    @property
    def sx_center(self) -> np.ndarray:
        return self.sx.mid

    @property
    def sp_center(self) -> np.ndarray:
        return self.sp.mid

    def sign_stable(self) -> tuple[np.ndarray, np.ndarray]:
        return self.sx.sign_stable(), self.sp.sign_stable()

    def all_sign_stable(self) -> bool:
        mx, mp = self.sign_stable()
        return bool(mx.all() and mp.all())

    def n_unstable(self) -> int:
        mx, mp = self.sign_stable()
        return int((~mx).sum() + (~mp).sum())

    def contains(self, sx, sp) -> bool:
        return self.sx.contains(sx) and self.sp.contains(sp)

    def enlarge(self, sx=None, sp=None) -> "SensitivityBounds":
        """Elementwise min/max against one more sample."""
        X, P = self.sx, self.sp
        if sx is not None:
            sx = np.asarray(sx, dtype=float)
            X = IntervalMatrix(np.minimum(X.lo, sx), np.maximum(X.hi, sx))
        if sp is not None:
            sp = np.asarray(sp, dtype=float)
            P = IntervalMatrix(np.minimum(P.lo, sp), np.maximum(P.hi, sp))
        return SensitivityBounds(X, P, self.guaranteed, self.horizon)

    def contains_bounds(self, other: "SensitivityBounds") -> bool:
        return other.sx.subset(self.sx) and other.sp.subset(self.sp)

    def to_dict(self) -> dict:
        mx, mp = self.sign_stable()
        return {
            "sx": self.sx.to_pairs(),
            "sp": self.sp.to_pairs(),
            "sign_stable": {"sx": mx.tolist(), "sp": mp.tolist(), "all": self.all_sign_stable()},
            "n_unstable": self.n_unstable(),
            "guaranteed": self.guaranteed,
            "horizon": list(self.horizon),
        }
