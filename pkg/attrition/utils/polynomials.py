from typing import Any, Dict, Iterable, Sequence, Tuple, Union

import numpy as np  # type: ignore
from numpy.polynomial import Polynomial  # type: ignore

from attrition.errors import ErrMsg, InputError

ArrayLike = Union[float, Sequence[float], np.ndarray]


class PiecewisePolynomial(object):
    """
    Real function given by one power-basis polynomial per knot interval.

    Points left of the first knot use the first piece, points right of the
    last knot use the last piece.
    """

    def __init__(self, knots: Iterable[float], pieces: Iterable[Polynomial]) -> None:
        self.knots = np.asarray(list(knots), dtype=float)
        self.pieces: Tuple[Polynomial, ...] = tuple(pieces)
        if len(self.pieces) == 0 or len(self.knots) != len(self.pieces) + 1:
            raise InputError(
                ErrMsg.SCENARIO_INVALID.value.format(
                    reason="piecewise polynomial needs len(knots) == len(pieces) + 1"
                )
            )
        if np.any(np.diff(self.knots) <= 0):
            raise InputError(
                ErrMsg.SCENARIO_INVALID.value.format(
                    reason="piecewise polynomial knots must be strictly increasing"
                )
            )

    @classmethod
    def constant(cls, value: float) -> "PiecewisePolynomial":
        return cls([-np.inf, np.inf], [Polynomial([value])])

    @classmethod
    def single(cls, coef: Sequence[float]) -> "PiecewisePolynomial":
        return cls([-np.inf, np.inf], [Polynomial(coef)])

    def __call__(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        idx = np.searchsorted(self.knots, x, side="right") - 1
        idx = np.clip(idx, 0, len(self.pieces) - 1)
        out = np.empty_like(x)
        for k, piece in enumerate(self.pieces):
            mask = idx == k
            if np.any(mask):
                out[mask] = piece(x[mask])
        return out[0] if scalar else out

    def deriv(self, m: int = 1) -> "PiecewisePolynomial":
        return PiecewisePolynomial(self.knots, [p.deriv(m) for p in self.pieces])

    def shifted(self, c: float) -> "PiecewisePolynomial":
        return PiecewisePolynomial(self.knots, [p + c for p in self.pieces])

    def to_dict(self) -> Dict[str, Any]:
        if len(self.pieces) == 1 and np.all(np.isinf(self.knots)):
            coef = self.pieces[0].coef.tolist()
            if len(coef) == 1:
                return {"constant": coef[0]}
            return {"poly": coef}
        return {
            "knots": self.knots.tolist(),
            "pieces": [p.coef.tolist() for p in self.pieces],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PiecewisePolynomial":
        if "constant" in data:
            return cls.constant(float(data["constant"]))
        if "poly" in data:
            return cls.single([float(c) for c in data["poly"]])
        try:
            knots = [float(k) for k in data["knots"]]
            pieces = [Polynomial([float(c) for c in coef]) for coef in data["pieces"]]
        except (KeyError, TypeError) as exc:
            raise InputError(ErrMsg.SCENARIO_INVALID.value.format(reason=exc))
        return cls(knots, pieces)

    def __repr__(self) -> str:
        return f"PiecewisePolynomial(knots={self.knots.tolist()}, n={len(self.pieces)})"


def in_scaled_variable(poly_u: Polynomial, scale: float) -> Polynomial:
    """Rewrite a polynomial in u = scale * x as a polynomial in x."""
    return poly_u(Polynomial([0.0, scale]))


def polynomial_from_coefficients(coef: Sequence[float]) -> Polynomial:
    return Polynomial([float(c) for c in coef])
