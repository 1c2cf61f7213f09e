"""
Closed subsets of the state space, locally finite measures (atoms plus
polynomial densities), extended [0, inf]-valued measures with an explosion
set, the mollification homotopy and a convergence criterion for sequences of
extended measures.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np  # type: ignore
from numpy.polynomial import Polynomial  # type: ignore
from scipy import integrate, special  # type: ignore

import attrition.constants as ac
from attrition.diffusion import Interval
from attrition.errors import ErrMsg, InputError

Component = Tuple[float, float]


@dataclass(frozen=True)
class ClosedSet:
    """
    Finite union of disjoint closed intervals, sorted. A component [a, a] is
    a point. A component may start at I.lower or end at I.upper, which
    encodes sets such as (0, x] that are closed relative to I.
    """

    components: Tuple[Component, ...] = ()

    def __post_init__(self) -> None:
        comps = tuple((float(a), float(b)) for a, b in self.components)
        for a, b in comps:
            if math.isnan(a) or math.isnan(b) or a > b:
                raise InputError(ErrMsg.BAD_COMPONENT.value.format(a=a, b=b))
        for (a, b), (c, d) in zip(comps, comps[1:]):
            if c <= b:
                raise InputError(
                    ErrMsg.OVERLAPPING_COMPONENTS.value.format(a=a, b=b, c=c, d=d)
                )
        object.__setattr__(self, "components", comps)

    @classmethod
    def empty(cls) -> "ClosedSet":
        return cls(())

    @classmethod
    def point(cls, x: float) -> "ClosedSet":
        return cls(((x, x),))

    @classmethod
    def of(cls, components: Iterable[Sequence[float]]) -> "ClosedSet":
        """Build from arbitrary intervals, merging overlapping or touching ones."""
        comps = sorted((float(c[0]), float(c[1])) for c in components)
        merged: List[List[float]] = []
        for a, b in comps:
            if a > b:
                raise InputError(ErrMsg.BAD_COMPONENT.value.format(a=a, b=b))
            if merged and a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        return cls(tuple((a, b) for a, b in merged))

    @classmethod
    def from_mask(
        cls,
        nodes: np.ndarray,
        mask: np.ndarray,
        interval: Optional[Interval] = None,
    ) -> "ClosedSet":
        """
        Runs of True nodes as components. Runs touching the first or last
        node are extended to the endpoint of `interval` when one is given.
        """
        mask = np.asarray(mask, dtype=bool)
        comps = []
        k = 0
        n = len(nodes)
        while k < n:
            if not mask[k]:
                k += 1
                continue
            start = k
            while k + 1 < n and mask[k + 1]:
                k += 1
            a, b = float(nodes[start]), float(nodes[k])
            if interval is not None and start == 0:
                a = interval.lower
            if interval is not None and k == n - 1:
                b = interval.upper
            comps.append((a, b))
            k += 1
        return cls(tuple(comps))

    @classmethod
    def from_list(cls, data: Iterable[Sequence[float]]) -> "ClosedSet":
        try:
            return cls.of([(float(c[0]), float(c[1])) for c in data])
        except (TypeError, IndexError) as exc:
            raise InputError(ErrMsg.SCENARIO_INVALID.value.format(reason=exc))

    def to_list(self) -> List[List[float]]:
        return [[a, b] for a, b in self.components]

    @property
    def is_empty(self) -> bool:
        return len(self.components) == 0

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for a, b in self.components:
            out |= (x >= a) & (x <= b)
        return out

    def distance(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_empty:
            return np.full(x.shape, math.inf)
        out = np.full(x.shape, math.inf)
        for a, b in self.components:
            out = np.minimum(out, np.maximum(np.maximum(a - x, x - b), 0.0))
        return out

    def complement(self, interval: Interval) -> List[Component]:
        """I minus the set, as a list of open intervals."""
        gaps = []
        left = interval.lower
        for a, b in self.components:
            if a > left:
                gaps.append((left, a))
            left = max(left, b)
        if left < interval.upper:
            gaps.append((left, interval.upper))
        return gaps

    def intersection(self, other: "ClosedSet") -> "ClosedSet":
        comps = []
        for a, b in self.components:
            for c, d in other.components:
                lo, hi = max(a, c), min(b, d)
                if lo <= hi:
                    comps.append((lo, hi))
        return ClosedSet.of(comps)

    def union(self, other: "ClosedSet") -> "ClosedSet":
        return ClosedSet.of(self.components + other.components)

    def clipped(self, lo: float, hi: float) -> "ClosedSet":
        return self.intersection(ClosedSet(((lo, hi),)))

    def endpoints(self) -> List[float]:
        pts = []
        for a, b in self.components:
            pts.extend([a] if a == b else [a, b])
        return [p for p in pts if math.isfinite(p)]

    def meets_interval(self, lo: float, hi: float, closed: bool = True) -> bool:
        for a, b in self.components:
            if closed and a <= hi and b >= lo:
                return True
            if not closed and a < hi and b > lo:
                return True
        return False

    def first_entry(self, prev: np.ndarray, nxt: np.ndarray) -> np.ndarray:
        """
        Per path, the first point of the set met when moving linearly from
        prev to nxt; NaN where the segment misses the set.
        """
        prev = np.asarray(prev, dtype=float)
        nxt = np.asarray(nxt, dtype=float)
        entry = np.full(prev.shape, np.nan)
        if self.is_empty:
            return entry
        up = nxt >= prev
        lo = np.minimum(prev, nxt)
        hi = np.maximum(prev, nxt)
        for a, b in self.components:
            meets = (a <= hi) & (b >= lo)
            cand = np.where(up, np.maximum(a, prev), np.minimum(b, prev))
            fresh = meets & np.isnan(entry)
            entry = np.where(fresh, cand, entry)
            better_up = meets & up & (cand < entry)
            better_down = meets & ~up & (cand > entry)
            entry = np.where(better_up | better_down, cand, entry)
        return entry

    def hausdorff(self, other: "ClosedSet", lo: float, hi: float) -> float:
        """Hausdorff distance of the two sets restricted to [lo, hi]."""
        a = self.clipped(lo, hi)
        b = other.clipped(lo, hi)
        if a.is_empty and b.is_empty:
            return 0.0
        if a.is_empty or b.is_empty:
            return math.inf
        return max(_directed_hausdorff(a, b), _directed_hausdorff(b, a))

    def excess(self, other: "ClosedSet") -> float:
        """sup over x in self of d(x, other); 0 when self is empty."""
        if self.is_empty:
            return 0.0
        if other.is_empty:
            return math.inf
        return _directed_hausdorff(self, other)

    def __str__(self) -> str:
        if self.is_empty:
            return "{}"
        parts = []
        for a, b in self.components:
            parts.append(f"{{{a:.6g}}}" if a == b else f"[{a:.6g}, {b:.6g}]")
        return " u ".join(parts)


def _directed_hausdorff(a: ClosedSet, b: ClosedSet) -> float:
    # d(., b) restricted to a peaks at endpoints of a or at gap midpoints of b.
    candidates = [p for comp in a.components for p in comp]
    for (_, left), (right, _) in zip(b.components, b.components[1:]):
        mid = 0.5 * (left + right)
        if bool(a.contains(mid)):
            candidates.append(mid)
    return float(np.max(b.distance(np.asarray(candidates))))


@dataclass(frozen=True)
class DensityPiece:
    lower: float
    upper: float
    poly: Polynomial

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)) or not (
            self.lower < self.upper
        ):
            raise InputError(
                ErrMsg.BAD_DENSITY_PIECE.value.format(a=self.lower, b=self.upper)
            )
        probe = np.linspace(self.lower, self.upper, 65)
        if np.min(self.poly(probe)) < -1e-12:
            raise InputError(
                ErrMsg.NEGATIVE_DENSITY.value.format(a=self.lower, b=self.upper)
            )

    def mass_between(self, lo, hi) -> np.ndarray:
        """Integral over [max(lo, lower), min(hi, upper)], zero if empty."""
        antideriv = self.poly.integ()
        lo = np.maximum(np.asarray(lo, dtype=float), self.lower)
        hi = np.minimum(np.asarray(hi, dtype=float), self.upper)
        return np.where(hi > lo, antideriv(hi) - antideriv(lo), 0.0)


@dataclass(frozen=True)
class LocallyFiniteMeasure:
    atoms: Tuple[Tuple[float, float], ...] = ()
    densities: Tuple[DensityPiece, ...] = ()

    def __post_init__(self) -> None:
        atoms = tuple(sorted((float(x), float(a)) for x, a in self.atoms))
        for (x, _), (y, _) in zip(atoms, atoms[1:]):
            if x == y:
                raise InputError(ErrMsg.DUPLICATE_ATOM.value.format(x=x))
        for x, a in atoms:
            if not a > 0 or not math.isfinite(a):
                raise InputError(ErrMsg.BAD_ATOM_MASS.value.format(x=x, mass=a))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "densities", tuple(self.densities))

    @classmethod
    def zero(cls) -> "LocallyFiniteMeasure":
        return cls()

    @classmethod
    def dirac(cls, x: float, mass: float = 1.0) -> "LocallyFiniteMeasure":
        return cls(atoms=((x, mass),))

    @classmethod
    def uniform(cls, lower: float, upper: float, level: float = 1.0) -> "LocallyFiniteMeasure":
        return cls(densities=(DensityPiece(lower, upper, Polynomial([level])),))

    @property
    def is_zero(self) -> bool:
        return not self.atoms and not self.densities

    @property
    def atom_locations(self) -> np.ndarray:
        return np.asarray([x for x, _ in self.atoms], dtype=float)

    @property
    def atom_masses(self) -> np.ndarray:
        return np.asarray([a for _, a in self.atoms], dtype=float)

    def carrier_bounds(self) -> Optional[Tuple[float, float]]:
        pts = [x for x, _ in self.atoms]
        for p in self.densities:
            pts.extend([p.lower, p.upper])
        if not pts:
            return None
        return min(pts), max(pts)

    def total_mass(self) -> float:
        return float(
            sum(a for _, a in self.atoms)
            + sum(float(p.mass_between(p.lower, p.upper)) for p in self.densities)
        )

    def mass_in(self, lo: float, hi: float, closed: bool = False) -> float:
        total = 0.0
        for x, a in self.atoms:
            inside = (lo <= x <= hi) if closed else (lo < x < hi)
            if inside:
                total += a
        for p in self.densities:
            total += float(p.mass_between(lo, hi))
        return total

    def density_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        starts = {p.lower for p in self.densities}
        for p in self.densities:
            mask = (x >= p.lower) & (x < p.upper)
            if p.upper not in starts:
                mask |= x == p.upper
            if np.any(mask):
                out = np.where(mask, out + p.poly(x), out)
        return out

    def window_average(self, x, eps: float) -> np.ndarray:
        """mu((x - eps, x + eps)) / (2 eps): local time intensity per unit occupation."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for y, a in self.atoms:
            out += a * (np.abs(x - y) < eps)
        for p in self.densities:
            out += p.mass_between(x - eps, x + eps)
        return out / (2.0 * eps)

    def integrate(self, probe: "PiecewiseLinearProbe") -> float:
        total = 0.0
        for x, a in self.atoms:
            total += a * float(probe(x))
        for p in self.densities:
            for (k0, k1), (f0, f1) in zip(
                zip(probe.knots[:-1], probe.knots[1:]),
                zip(probe.values[:-1], probe.values[1:]),
            ):
                lo, hi = max(k0, p.lower), min(k1, p.upper)
                if hi <= lo:
                    continue
                slope = (f1 - f0) / (k1 - k0)
                phi = Polynomial([f0 - slope * k0, slope])
                anti = (phi * p.poly).integ()
                total += float(anti(hi) - anti(lo))
        return total

    def meets(self, closed_set: ClosedSet) -> Optional[float]:
        """A point where the carrier meets the set, or None."""
        for x, _ in self.atoms:
            if bool(closed_set.contains(x)):
                return x
        for p in self.densities:
            for a, b in closed_set.components:
                if a < p.upper and b > p.lower:
                    return max(a, p.lower)
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "atoms": [{"x": x, "mass": a} for x, a in self.atoms],
            "densities": [
                {"interval": [p.lower, p.upper], "poly": p.poly.coef.tolist()}
                for p in self.densities
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LocallyFiniteMeasure":
        try:
            atoms = tuple(
                (float(a["x"]), float(a["mass"])) for a in data.get("atoms", [])
            )
            densities = tuple(
                DensityPiece(
                    float(d["interval"][0]),
                    float(d["interval"][1]),
                    Polynomial([float(c) for c in d["poly"]]),
                )
                for d in data.get("densities", [])
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise InputError(ErrMsg.SCENARIO_INVALID.value.format(reason=exc))
        return cls(atoms=atoms, densities=densities)


@dataclass(frozen=True)
class ExtendedMeasure:
    finite_part: LocallyFiniteMeasure = field(default_factory=LocallyFiniteMeasure)
    explosion: ClosedSet = field(default_factory=ClosedSet)

    def __post_init__(self) -> None:
        x = self.finite_part.meets(self.explosion)
        if x is not None:
            raise InputError(ErrMsg.CARRIER_OVERLAP.value.format(x=x))

    @classmethod
    def zero(cls) -> "ExtendedMeasure":
        return cls()

    def to_dict(self) -> Dict[str, Any]:
        data = self.finite_part.to_dict()
        data["explosion"] = self.explosion.to_list()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExtendedMeasure":
        return cls(
            LocallyFiniteMeasure.from_dict(data),
            ClosedSet.from_list(data.get("explosion", [])),
        )


def to_extended(mu: LocallyFiniteMeasure, S: ClosedSet) -> ExtendedMeasure:
    """The measure equal to mu off S and +inf on every set meeting S."""
    return ExtendedMeasure(finite_part=mu, explosion=S)


def explosion_set(m: ExtendedMeasure) -> ClosedSet:
    return m.explosion


def restrict_off_explosion(m: ExtendedMeasure) -> LocallyFiniteMeasure:
    return m.finite_part


def measure_of(m: ExtendedMeasure, lo: float, hi: float, kind: str = "open") -> float:
    """m((lo, hi)) or m([lo, hi]); +inf as soon as the set meets e(m)."""
    closed = kind == "closed"
    if m.explosion.meets_interval(lo, hi, closed=closed):
        return ac.INFINITE_MASS
    if not closed and hi <= lo:
        return 0.0
    return m.finite_part.mass_in(lo, hi, closed=closed)


@dataclass(frozen=True)
class PiecewiseLinearProbe:
    """Continuous test function, linear between knots and zero outside them."""

    knots: Tuple[float, ...]
    values: Tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.knots) < 2 or len(self.knots) != len(self.values):
            raise InputError(ErrMsg.SCENARIO_INVALID.value.format(reason="probe knots"))
        if self.values[0] != 0 or self.values[-1] != 0:
            raise InputError(
                ErrMsg.SCENARIO_INVALID.value.format(reason="probe must vanish at its ends")
            )

    @classmethod
    def tent(cls, left: float, peak: float, right: float, height: float = 1.0) -> "PiecewiseLinearProbe":
        return cls((left, peak, right), (0.0, height, 0.0))

    @property
    def support(self) -> Tuple[float, float]:
        return self.knots[0], self.knots[-1]

    def __call__(self, x) -> np.ndarray:
        return np.interp(x, self.knots, self.values, left=0.0, right=0.0)


def integrate_probe(m: ExtendedMeasure, probe: PiecewiseLinearProbe) -> float:
    lo, hi = probe.support
    if m.explosion.meets_interval(lo, hi, closed=False):
        return ac.INFINITE_MASS
    return m.finite_part.integrate(probe)


@dataclass(frozen=True)
class Chart:
    """
    C1 diffeomorphism from I onto the real line used by the mollification:
    identity on R, log on half lines, logit on bounded intervals.
    """

    interval: Interval

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.interval.lower, self.interval.upper
        with np.errstate(divide="ignore"):
            if math.isinf(lo) and math.isinf(hi):
                return x.copy()
            if math.isinf(hi):
                return np.log(x - lo)
            if math.isinf(lo):
                return -np.log(hi - x)
            return np.log(x - lo) - np.log(hi - x)

    def inverse(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        lo, hi = self.interval.lower, self.interval.upper
        if math.isinf(lo) and math.isinf(hi):
            return z.copy()
        if math.isinf(hi):
            return lo + np.exp(z)
        if math.isinf(lo):
            return hi - np.exp(-z)
        return lo + (hi - lo) * special.expit(z)

    def derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.interval.lower, self.interval.upper
        if math.isinf(lo) and math.isinf(hi):
            return np.ones(x.shape)
        if math.isinf(hi):
            return 1.0 / (x - lo)
        if math.isinf(lo):
            return 1.0 / (hi - x)
        return 1.0 / (x - lo) + 1.0 / (hi - x)


def hat_kernel(x, eps: float) -> np.ndarray:
    """rho_eps(x) = max(1 - |x|/eps, 0) / eps."""
    return np.maximum(1.0 - np.abs(np.asarray(x, dtype=float)) / eps, 0.0) / eps


class Mollifier(object):
    """
    H(m, eps) = (1 - eps) * min(rho_eps * m, 1/eps^2) * Lebesgue, computed in
    the chart coordinate z = psi(x) and pulled back to I.
    """

    def __init__(
        self,
        m: ExtendedMeasure,
        eps: float,
        interval: Interval,
        support_bound: float = 30.0,
        quad_tol: float = 1e-9,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        if not 0.0 < eps < 1.0:
            raise InputError(ErrMsg.BAD_EPS.value.format(value=eps))
        self.m = m
        self.eps = eps
        self.cap = 1.0 / eps ** 2
        self.interval = interval
        self.chart = Chart(interval)
        self.support_bound = support_bound
        self.quad_tol = quad_tol
        self.logger = logger or logging.getLogger(ac.DEFAULT_LOGGER_NAME)

        mu = m.finite_part
        self._atoms_z = self.chart.forward(mu.atom_locations)
        self._masses = mu.atom_masses
        self._explosion_z = [
            (float(self.chart.forward(a)) if a > interval.lower else -math.inf,
             float(self.chart.forward(b)) if b < interval.upper else math.inf)
            for a, b in m.explosion.components
        ]

    def _density_convolution(self, z: float) -> float:
        total = 0.0
        for p in self.m.finite_part.densities:
            # y-range whose image lies within eps of z
            y_lo = max(p.lower, float(self.chart.inverse(z - self.eps)))
            y_hi = min(p.upper, float(self.chart.inverse(z + self.eps)))
            if y_hi <= y_lo:
                continue
            val, _ = integrate.quad(
                lambda y: float(hat_kernel(z - self.chart.forward(y), self.eps))
                * float(p.poly(y)),
                y_lo,
                y_hi,
                epsabs=self.quad_tol,
                epsrel=self.quad_tol,
                limit=200,
            )
            total += val
        return total

    def chart_density(self, z) -> np.ndarray:
        """(1 - eps) * h(z) on the real line."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        conv = np.zeros(z.shape)
        for zy, a in zip(self._atoms_z, self._masses):
            conv += a * hat_kernel(z - zy, self.eps)
        if self.m.finite_part.densities:
            conv += np.asarray([self._density_convolution(float(v)) for v in z])
        for a, b in self._explosion_z:
            dist = np.maximum(np.maximum(a - z, z - b), 0.0)
            conv = np.where(dist < self.eps, math.inf, conv)
        return (1.0 - self.eps) * np.minimum(conv, self.cap)

    def density(self, x) -> np.ndarray:
        """Density of the pulled-back measure on I."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.chart_density(self.chart.forward(x)) * self.chart.derivative(x)

    def _chart_breakpoints(self) -> np.ndarray:
        eps = self.eps
        pts: List[float] = []
        for zy in self._atoms_z:
            pts.extend([zy - eps, zy, zy + eps])
        for a, b in self._explosion_z:
            pts.extend([a - eps, a, b, b + eps])
        for p in self.m.finite_part.densities:
            za, zb = self.chart.forward([p.lower, p.upper])
            pts.extend([za - eps, za, za + eps, zb - eps, zb, zb + eps])
        bound = self.support_bound
        if any(math.isinf(p) for p in pts):
            pts.extend([-bound, bound])
        pts_arr = np.asarray([p for p in pts if math.isfinite(p)])
        pts_arr = np.clip(pts_arr, -bound, bound)
        lo, hi = float(np.min(pts_arr)), float(np.max(pts_arr))
        n_uniform = int(math.ceil((hi - lo) / (eps / 4.0))) + 1
        grid = np.linspace(lo, hi, max(n_uniform, 2))
        return np.unique(np.concatenate([pts_arr, grid]))

    def measure(self, knot_tol: float = 1e-6, max_rounds: int = 20) -> ExtendedMeasure:
        """Piecewise-linear density approximation of H(m, eps) on I."""
        if self.m.finite_part.is_zero and self.m.explosion.is_empty:
            return ExtendedMeasure.zero()
        xs = self.chart.inverse(self._chart_breakpoints())
        xs = np.unique(xs[self.interval.contains(xs)])
        fs = self.density(xs)
        active = np.ones(len(xs) - 1, dtype=bool)
        for _ in range(max_rounds):
            idx = np.flatnonzero(active)
            mids = 0.5 * (xs[idx] + xs[idx + 1])
            fm = self.density(mids)
            err = np.abs(fm - 0.5 * (fs[idx] + fs[idx + 1]))
            bad = err > knot_tol * np.maximum(1.0, np.abs(fm))
            if not np.any(bad):
                break
            fresh = np.concatenate([np.zeros(len(xs), dtype=bool), np.ones(int(bad.sum()), dtype=bool)])
            xs = np.concatenate([xs, mids[bad]])
            fs = np.concatenate([fs, fm[bad]])
            order = np.argsort(xs, kind="stable")
            xs, fs, fresh = xs[order], fs[order], fresh[order]
            active = fresh[:-1] | fresh[1:]
        else:
            # jumps of the capped convolution at explosion edges end up here
            self.logger.debug(
                f"Mollification knot refinement stopped after {max_rounds} rounds"
            )
        pieces = []
        for x0, x1, f0, f1 in zip(xs[:-1], xs[1:], fs[:-1], fs[1:]):
            if f0 == 0.0 and f1 == 0.0:
                continue
            slope = (f1 - f0) / (x1 - x0)
            pieces.append(DensityPiece(float(x0), float(x1), Polynomial([f0 - slope * x0, slope])))
        return ExtendedMeasure(LocallyFiniteMeasure(densities=tuple(pieces)), ClosedSet.empty())


def mollify(
    m: ExtendedMeasure,
    eps: float,
    interval: Interval = Interval(),
    knot_tol: float = 1e-6,
    support_bound: float = 30.0,
) -> ExtendedMeasure:
    """The homotopy H(m, eps): H(m, 0) = m and H(m, 1) = 0."""
    if not 0.0 <= eps <= 1.0 or math.isnan(eps):
        raise InputError(ErrMsg.BAD_EPS.value.format(value=eps))
    if eps == 0.0:
        return m
    if eps == 1.0:
        return ExtendedMeasure.zero()
    return Mollifier(m, eps, interval, support_bound=support_bound).measure(knot_tol)


@dataclass(frozen=True)
class ConvergenceReport:
    # residuals[n, p] = |int phi_p dm_n - int phi_p dm|
    residuals: np.ndarray
    # escape_masses[n, q] = m_n(O_q) for open O_q meeting e(m)
    escape_masses: np.ndarray
    escape_intervals: Tuple[Component, ...]
    escape_flags: Tuple[bool, ...]
    threshold: float

    def final_residual(self) -> float:
        if self.residuals.size == 0:
            return 0.0
        return float(np.max(self.residuals[-1]))

    def converged(self, tol: float) -> bool:
        return self.final_residual() <= tol and all(self.escape_flags)


def check_convergence(
    sequence: Sequence[ExtendedMeasure],
    limit: ExtendedMeasure,
    probes: Sequence[PiecewiseLinearProbe],
    threshold: float,
    escape_intervals: Optional[Sequence[Component]] = None,
    escape_width: float = 0.05,
) -> ConvergenceReport:
    """
    Criterion for m_n -> m in the extended vague sense: masses of open sets
    meeting e(m) escape above the threshold, and integrals of test functions
    carried off e(m) converge.
    """
    for probe in probes:
        lo, hi = probe.support
        if limit.explosion.meets_interval(lo, hi, closed=True):
            raise InputError(ErrMsg.PROBE_ON_EXPLOSION.value.format(a=lo, b=hi))
    if escape_intervals is None:
        escape_intervals = [
            (a - escape_width, b + escape_width) for a, b in limit.explosion.components
        ]
    targets = np.asarray([integrate_probe(limit, p) for p in probes])
    residuals = np.zeros((len(sequence), len(probes)))
    escape = np.zeros((len(sequence), len(escape_intervals)))
    for n, m_n in enumerate(sequence):
        for k, p in enumerate(probes):
            residuals[n, k] = abs(integrate_probe(m_n, p) - targets[k])
        for q, (a, b) in enumerate(escape_intervals):
            escape[n, q] = measure_of(m_n, a, b, kind="open")
    flags = []
    for q in range(len(escape_intervals)):
        trace = escape[:, q]
        prev, nxt = trace[:-1], trace[1:]
        with np.errstate(invalid="ignore"):
            step_ok = np.where(
                np.isinf(prev), np.isinf(nxt), nxt >= prev - 1e-9 * np.maximum(1.0, prev)
            )
        monotone = bool(np.all(step_ok))
        flags.append(monotone and len(trace) > 0 and bool(trace[-1] > threshold))
    return ConvergenceReport(
        residuals=residuals,
        escape_masses=escape,
        escape_intervals=tuple((float(a), float(b)) for a, b in escape_intervals),
        escape_flags=tuple(flags),
        threshold=threshold,
    )
