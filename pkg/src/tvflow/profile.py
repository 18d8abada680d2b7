"""Exact calculus on continuous piecewise-polynomial functions.

A profile is a continuous function on a closed interval [a, b] given as
finitely many polynomial pieces in global coordinates, together with its
Dirichlet boundary values.  Everything downstream (facet detection, the
TV resolvent, the event-driven flow) is built on the operations here:
evaluation, exact integration, monotone-arc decomposition, one-sided
derivatives, and level solving on monotone regions.

All tolerances are relative to ``scale(p) = max(1, |boundary|, sup|p|, b-a)``.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, Sequence

from scipy.optimize import brentq

from .errors import (
    ContinuityViolation,
    DegreeOverflow,
    EmptyDomain,
    InvariantViolation,
    LevelOutOfRange,
    OutOfDomain,
    SchemaError,
)

#: maximum polynomial degree accepted from scenario files
MAX_DEGREE = 8

#: relative continuity tolerance at shared breakpoints
EPS_CONT = 1e-9

#: relative tolerance for "same level" comparisons
EPS_LEVEL = 1e-11

_BRENTQ_KW = dict(xtol=1e-15, rtol=8.9e-16, maxiter=200)


class Direction(Enum):
    INCREASING = 1
    DECREASING = -1
    FLAT = 0


class Side(Enum):
    """Extreme-preimage selection across internal flats."""

    FIRST_FROM_LEFT = "first_from_left"
    LAST_FROM_RIGHT = "last_from_right"


# ---------------------------------------------------------------------------
# polynomials (coefficients in ascending degree order, global coordinates)
# ---------------------------------------------------------------------------


def _trim(coeffs: Sequence[float]) -> tuple[float, ...]:
    c = [float(v) for v in coeffs]
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    return tuple(c)


def poly_eval(coeffs: Sequence[float], x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def poly_derivative(coeffs: Sequence[float]) -> tuple[float, ...]:
    if len(coeffs) <= 1:
        return (0.0,)
    return _trim([k * coeffs[k] for k in range(1, len(coeffs))])


def poly_antiderivative(coeffs: Sequence[float]) -> tuple[float, ...]:
    return (0.0,) + tuple(c / (k + 1) for k, c in enumerate(coeffs))


def poly_integral(coeffs: Sequence[float], x0: float, x1: float) -> float:
    anti = poly_antiderivative(coeffs)
    return poly_eval(anti, x1) - poly_eval(anti, x0)


def poly_add(a: Sequence[float], b: Sequence[float], alpha: float = 1.0, beta: float = 1.0) -> tuple[float, ...]:
    n = max(len(a), len(b))
    out = [0.0] * n
    for k, c in enumerate(a):
        out[k] += alpha * c
    for k, c in enumerate(b):
        out[k] += beta * c
    return _trim(out)


def poly_mul(a: Sequence[float], b: Sequence[float]) -> tuple[float, ...]:
    out = [0.0] * (len(a) + len(b) - 1)
    for i, ca in enumerate(a):
        for j, cb in enumerate(b):
            out[i + j] += ca * cb
    return _trim(out)


def _real_roots(coeffs: Sequence[float], lo: float, hi: float) -> list[float]:
    """All real roots of the polynomial in [lo, hi], sorted.

    Recursive critical-point subdivision: roots of the derivative split
    [lo, hi] into intervals where the polynomial is monotone; each sign
    change is refined by Brent's method.  Touch points (|value| below the
    local magnitude tolerance) are reported as roots too.
    """
    c = _trim(coeffs)
    deg = len(c) - 1
    if deg == 0:
        return []
    if deg == 1:
        r = -c[0] / c[1]
        return [r] if lo <= r <= hi else []
    if deg == 2:
        c0, c1, c2 = c
        disc = c1 * c1 - 4.0 * c0 * c2
        if disc < 0.0:
            return []
        q = -(c1 + math.copysign(math.sqrt(disc), c1)) / 2.0
        roots = {q / c2}
        if q != 0.0:
            roots.add(c0 / q)
        elif disc == 0.0:
            roots = {-c1 / (2.0 * c2)}
        return sorted(r for r in roots if lo <= r <= hi)

    cuts = [lo] + _real_roots(poly_derivative(c), lo, hi) + [hi]
    cuts = sorted(set(cuts))
    vals = [poly_eval(c, x) for x in cuts]
    fscale = max(1.0, max(abs(v) for v in vals))
    atol = 1e-13 * fscale
    roots: list[float] = []
    for k in range(len(cuts) - 1):
        x0, x1, f0, f1 = cuts[k], cuts[k + 1], vals[k], vals[k + 1]
        if abs(f0) <= atol:
            roots.append(x0)
            continue
        if f0 * f1 < 0.0:
            roots.append(brentq(lambda x: poly_eval(c, x), x0, x1, **_BRENTQ_KW))
    if abs(vals[-1]) <= atol:
        roots.append(hi)
    merged: list[float] = []
    span_tol = 1e-13 * max(1.0, abs(lo), abs(hi))
    for r in sorted(roots):
        if not merged or r - merged[-1] > span_tol:
            merged.append(r)
    return merged


# ---------------------------------------------------------------------------
# profile data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Piece:
    """One polynomial piece on [x0, x1] (global coordinates)."""

    x0: float
    x1: float
    coeffs: tuple[float, ...]

    def __post_init__(self):
        if not self.x0 < self.x1:
            raise EmptyDomain(f"piece interval [{self.x0}, {self.x1}] is empty")
        object.__setattr__(self, "coeffs", _trim(self.coeffs))

    def eval(self, x: float) -> float:
        return poly_eval(self.coeffs, x)

    def derivative_at(self, x: float) -> float:
        return poly_eval(poly_derivative(self.coeffs), x)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_flat(self, scale: float) -> bool:
        span = max(abs(self.x0), abs(self.x1), 1.0)
        return all(abs(c) * span**k <= 1e-13 * scale for k, c in enumerate(self.coeffs) if k >= 1)


@dataclass(frozen=True)
class MonotoneArc:
    """Maximal interval on which the profile is strictly monotone or flat."""

    x0: float
    x1: float
    direction: Direction


@dataclass(frozen=True)
class PiecewiseProfile:
    """Continuous piecewise polynomial with Dirichlet boundary values."""

    pieces: tuple[Piece, ...]
    boundary_left: float
    boundary_right: float

    @property
    def a(self) -> float:
        return self.pieces[0].x0

    @property
    def b(self) -> float:
        return self.pieces[-1].x1

    @property
    def domain(self) -> tuple[float, float]:
        return (self.a, self.b)

    @property
    def span(self) -> float:
        return self.b - self.a

    @classmethod
    def build(
        cls,
        pieces: Iterable[Piece | tuple],
        boundary_left: float | None = None,
        boundary_right: float | None = None,
    ) -> "PiecewiseProfile":
        """Validate tiling and continuity, normalize shared breakpoints."""
        plist = [p if isinstance(p, Piece) else Piece(*p) for p in pieces]
        if not plist:
            raise EmptyDomain("profile needs at least one piece")
        span = plist[-1].x1 - plist[0].x0
        if span <= 0:
            raise EmptyDomain("profile domain is empty")
        gap_tol = 1e-9 * max(1.0, span)
        normalized = [plist[0]]
        for p in plist[1:]:
            prev = normalized[-1]
            if abs(p.x0 - prev.x1) > gap_tol:
                raise SchemaError(f"pieces do not tile the domain near x={p.x0!r}")
            if p.x0 != prev.x1:
                p = Piece(prev.x1, p.x1, p.coeffs)
            normalized.append(p)
        prof = cls(tuple(normalized), 0.0, 0.0)
        sc = _raw_scale(prof)
        for left, right in zip(normalized, normalized[1:]):
            jump = abs(left.eval(left.x1) - right.eval(right.x0))
            if jump > EPS_CONT * sc:
                raise ContinuityViolation(
                    f"pieces disagree by {jump:.3e} at x={left.x1!r}"
                )
        va = normalized[0].eval(normalized[0].x0)
        vb = normalized[-1].eval(normalized[-1].x1)
        if boundary_left is None:
            boundary_left = va
        if boundary_right is None:
            boundary_right = vb
        if abs(boundary_left - va) > EPS_CONT * sc or abs(boundary_right - vb) > EPS_CONT * sc:
            raise SchemaError("boundary values disagree with the endpoint values")
        return cls(tuple(normalized), float(boundary_left), float(boundary_right))

    @classmethod
    def from_samples(cls, xs: Sequence[float], values: Sequence[float]) -> "PiecewiseProfile":
        """Piecewise-linear interpolant through the samples."""
        if len(xs) != len(values) or len(xs) < 2:
            raise SchemaError("need matching xs/values with at least two samples")
        pieces = []
        for x0, x1, v0, v1 in zip(xs, xs[1:], values, values[1:]):
            slope = (v1 - v0) / (x1 - x0)
            pieces.append(Piece(x0, x1, (v0 - slope * x0, slope)))
        return cls.build(pieces)

    def _piece_index(self, x: float) -> int:
        i = bisect_right(_piece_bounds(self), x) - 1
        return min(max(i, 0), len(self.pieces) - 1)

    def eval(self, x: float) -> float:
        a, b = self.domain
        tol = 1e-12 * max(1.0, self.span)
        if x < a - tol or x > b + tol:
            raise OutOfDomain(f"x={x!r} outside [{a!r}, {b!r}]")
        x = min(max(x, a), b)
        return self.pieces[self._piece_index(x)].eval(x)

    def __call__(self, x: float) -> float:
        return self.eval(x)

    def integrate(self, x0: float, x1: float) -> float:
        a, b = self.domain
        tol = 1e-12 * max(1.0, self.span)
        if x0 < a - tol or x1 > b + tol or x1 < x0 - tol:
            raise OutOfDomain(f"[{x0!r}, {x1!r}] not inside [{a!r}, {b!r}]")
        x0 = min(max(x0, a), b)
        x1 = min(max(x1, a), b)
        if x1 <= x0:
            return 0.0
        parts = []
        for p in self.pieces:
            lo = max(p.x0, x0)
            hi = min(p.x1, x1)
            if hi > lo:
                parts.append(poly_integral(p.coeffs, lo, hi))
        return math.fsum(parts)

    def scale(self) -> float:
        return _raw_scale(self, with_boundary=True)

    def sup_norm(self) -> float:
        return max(abs(v) for v in _extreme_values(self))

    def min_value(self) -> float:
        return min(_extreme_values(self))

    def max_value(self) -> float:
        return max(_extreme_values(self))

    def breakpoints(self) -> list[float]:
        return [p.x0 for p in self.pieces] + [self.b]

    def shifted(self, dy: float) -> "PiecewiseProfile":
        pieces = [Piece(p.x0, p.x1, (p.coeffs[0] + dy,) + p.coeffs[1:]) for p in self.pieces]
        return PiecewiseProfile(tuple(pieces), self.boundary_left + dy, self.boundary_right + dy)


@lru_cache(maxsize=8192)
def _piece_bounds(p: PiecewiseProfile) -> tuple[float, ...]:
    return tuple(piece.x0 for piece in p.pieces)


def _extreme_values(p: PiecewiseProfile) -> list[float]:
    vals = []
    for piece in p.pieces:
        vals.append(piece.eval(piece.x0))
        vals.append(piece.eval(piece.x1))
        for r in _real_roots(poly_derivative(piece.coeffs), piece.x0, piece.x1):
            vals.append(piece.eval(r))
    return vals


def _raw_scale(p: PiecewiseProfile, with_boundary: bool = False) -> float:
    vals = [abs(v) for v in _extreme_values(p)]
    sc = max(1.0, p.span, max(vals))
    if with_boundary:
        sc = max(sc, abs(p.boundary_left), abs(p.boundary_right))
    return sc


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4096)
def monotone_arcs(p: PiecewiseProfile) -> tuple[MonotoneArc, ...]:
    """Ordered maximal arcs tiling [a, b].

    Flat arcs are exactly the closures of interior components of {p' = 0};
    isolated derivative zeros without sign change stay inside a monotone
    arc, those with a sign change become arc boundaries.
    """
    sc = p.scale()
    atoms: list[tuple[float, float, int]] = []
    for piece in p.pieces:
        if piece.is_flat(sc):
            atoms.append((piece.x0, piece.x1, 0))
            continue
        d = poly_derivative(piece.coeffs)
        crits = [r for r in _real_roots(d, piece.x0, piece.x1) if piece.x0 < r < piece.x1]
        cuts = [piece.x0] + crits + [piece.x1]
        for x0, x1 in zip(cuts, cuts[1:]):
            s = poly_eval(d, 0.5 * (x0 + x1))
            atoms.append((x0, x1, 1 if s > 0 else -1))
    merged: list[list] = []
    for x0, x1, s in atoms:
        if merged and merged[-1][2] == s:
            merged[-1][1] = x1
        else:
            merged.append([x0, x1, s])
    return tuple(MonotoneArc(x0, x1, Direction(s)) for x0, x1, s in merged)


def clarke_interval(p: PiecewiseProfile, x: float) -> tuple[float, float]:
    """Ordered interval spanned by the one-sided derivatives at x."""
    a, b = p.domain
    tol = 1e-12 * max(1.0, p.span)
    if x < a - tol or x > b + tol:
        raise OutOfDomain(f"x={x!r} outside [{a!r}, {b!r}]")
    x = min(max(x, a), b)
    ders = []
    if x > a:
        i = p._piece_index(x)
        if p.pieces[i].x0 == x and i > 0:
            i -= 1
        ders.append(p.pieces[i].derivative_at(x))
    if x < b:
        i = p._piece_index(x)
        ders.append(p.pieces[i].derivative_at(x))
    return (min(ders), max(ders))


def solve_level(p: PiecewiseProfile, arc: MonotoneArc, y: float, side: Side) -> float:
    """Abscissa in the arc with ``p(x) = y``.

    The arc must have an increasing or decreasing trend; its interval may
    contain internal flat stretches (zero-curvature facets), in which case
    the extreme preimage selected by ``side`` is returned: the left edge of
    a flat at level y for FIRST_FROM_LEFT, the right edge for
    LAST_FROM_RIGHT.
    """
    if arc.direction is Direction.FLAT:
        raise LevelOutOfRange("solve_level needs a monotone trend, not a flat arc")
    sc = p.scale()
    tol_edge = 1e-12 * sc
    tol_flat = EPS_LEVEL * sc
    sub: list[tuple[float, float, Piece]] = []
    for piece in p.pieces:
        lo = max(piece.x0, arc.x0)
        hi = min(piece.x1, arc.x1)
        if hi > lo:
            sub.append((lo, hi, piece))
    if side is Side.LAST_FROM_RIGHT:
        sub = sub[::-1]
    for lo, hi, piece in sub:
        if piece.is_flat(sc):
            if abs(piece.eval(lo) - y) <= tol_flat:
                return lo if side is Side.FIRST_FROM_LEFT else hi
            continue
        v0 = piece.eval(lo)
        v1 = piece.eval(hi)
        f0 = v0 - y
        f1 = v1 - y
        if f0 == 0.0:
            return lo
        if f1 == 0.0:
            return hi
        if f0 * f1 < 0.0:
            return brentq(lambda x: piece.eval(x) - y, lo, hi, **_BRENTQ_KW)
        if min(abs(f0), abs(f1)) <= tol_edge:
            return lo if abs(f0) <= abs(f1) else hi
    raise LevelOutOfRange(f"level {y!r} not attained on [{arc.x0!r}, {arc.x1!r}]")


# ---------------------------------------------------------------------------
# profile construction helpers
# ---------------------------------------------------------------------------


def add_profiles(p: PiecewiseProfile, q: PiecewiseProfile, alpha: float = 1.0, beta: float = 1.0) -> PiecewiseProfile:
    """alpha*p + beta*q on the common breakpoint refinement."""
    tol = 1e-9 * max(1.0, p.span)
    if abs(p.a - q.a) > tol or abs(p.b - q.b) > tol:
        raise OutOfDomain("profiles live on different domains")
    cuts = sorted(set(p.breakpoints()) | set(q.breakpoints()))
    dedup = [cuts[0]]
    for x in cuts[1:]:
        if x - dedup[-1] > 1e-12 * max(1.0, p.span):
            dedup.append(x)
    dedup[0], dedup[-1] = p.a, p.b
    pieces = []
    for x0, x1 in zip(dedup, dedup[1:]):
        mid = 0.5 * (x0 + x1)
        cp = p.pieces[p._piece_index(mid)].coeffs
        cq = q.pieces[q._piece_index(mid)].coeffs
        pieces.append(Piece(x0, x1, poly_add(cp, cq, alpha, beta)))
    return PiecewiseProfile.build(
        pieces,
        alpha * p.boundary_left + beta * q.boundary_left,
        alpha * p.boundary_right + beta * q.boundary_right,
    )


def replace_with_flats(p: PiecewiseProfile, reps: Sequence[tuple[float, float, float]]) -> PiecewiseProfile:
    """Rebuild the profile with each (lo, hi, level) region flattened.

    Touching or overlapping regions are merged (their levels must agree);
    region edges are snapped to nearby breakpoints so no sliver pieces
    survive.
    """
    if not reps:
        return p
    a, b = p.domain
    sc = p.scale()
    snap = 1e-10 * max(1.0, p.span)
    items = sorted((max(a, lo), min(b, hi), level) for lo, hi, level in reps)
    merged: list[list[float]] = []
    for lo, hi, level in items:
        if merged and lo <= merged[-1][1] + snap:
            if abs(level - merged[-1][2]) > 1e-7 * sc:
                raise InvariantViolation("touching flat regions at different levels")
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi, level])
    bps = p.breakpoints()
    def snapped(x: float) -> float:
        for bp in bps:
            if abs(x - bp) <= snap:
                return bp
        return x
    pieces: list[Piece] = []

    def add_base(range_lo: float, range_hi: float) -> None:
        for piece in p.pieces:
            lo = max(piece.x0, range_lo)
            hi = min(piece.x1, range_hi)
            if hi - lo > snap:
                pieces.append(Piece(lo, hi, piece.coeffs))

    cursor = a
    for lo, hi, level in merged:
        lo, hi = snapped(lo), snapped(hi)
        if lo - cursor > snap:
            add_base(cursor, lo)
        start = pieces[-1].x1 if pieces else a
        if hi - start > snap:
            pieces.append(Piece(start, hi, (level,)))
        cursor = pieces[-1].x1
    if b - cursor > snap:
        add_base(cursor, b)
    if pieces and pieces[-1].x1 < b:
        last = pieces.pop()
        pieces.append(Piece(last.x0, b, last.coeffs))
    return PiecewiseProfile.build(pieces, p.boundary_left, p.boundary_right)


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------


def load_scenario(doc: str | dict) -> PiecewiseProfile:
    """Build a validated profile from a scenario document.

    Schema::

        {"domain": [a, b],
         "pieces": [{"interval": [x0, x1], "coeffs": [c0, c1, ...]}, ...],
         "boundary": {"left": ..., "right": ...},          # optional
         "options": {"auto_shift": false,                   # optional
                     "normalize_min": <number>}}            # optional

    Coefficients are in ascending degree order.  With ``auto_shift`` each
    piece after the first is translated vertically to match the previous
    piece at the shared breakpoint; ``normalize_min`` then shifts the whole
    profile so its minimum equals the given value.
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("scenario document must be a JSON object")
    try:
        domain = [float(v) for v in doc["domain"]]
        raw_pieces = list(doc["pieces"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"missing or malformed field: {exc}") from exc
    if len(domain) != 2:
        raise SchemaError("domain must be [a, b]")
    a, b = domain
    if not a < b:
        raise EmptyDomain(f"domain [{a!r}, {b!r}] is empty")
    if not raw_pieces:
        raise SchemaError("pieces must be a non-empty list")
    options = doc.get("options", {}) or {}
    auto_shift = bool(options.get("auto_shift", False))
    normalize_min = options.get("normalize_min")

    parsed: list[tuple[float, float, tuple[float, ...]]] = []
    for k, item in enumerate(raw_pieces):
        try:
            x0, x1 = (float(v) for v in item["interval"])
            coeffs = tuple(float(c) for c in item["coeffs"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"piece {k} malformed: {exc}") from exc
        if not coeffs:
            raise SchemaError(f"piece {k} has no coefficients")
        if len(_trim(coeffs)) - 1 > MAX_DEGREE:
            raise DegreeOverflow(f"piece {k} degree {len(coeffs) - 1} > {MAX_DEGREE}")
        if not x0 < x1:
            raise EmptyDomain(f"piece {k} interval [{x0!r}, {x1!r}] is empty")
        parsed.append((x0, x1, coeffs))

    span = b - a
    gap_tol = 1e-9 * max(1.0, span)
    if abs(parsed[0][0] - a) > gap_tol or abs(parsed[-1][1] - b) > gap_tol:
        raise SchemaError("pieces do not cover the domain")
    for (x0, x1, _), (y0, y1, _) in zip(parsed, parsed[1:]):
        if abs(y0 - x1) > gap_tol:
            raise SchemaError(f"gap or overlap between pieces at x={x1!r}")

    shifted: list[tuple[float, float, tuple[float, ...]]] = []
    prev_end: float | None = None
    for x0, x1, coeffs in parsed:
        if auto_shift and prev_end is not None:
            delta = prev_end - poly_eval(coeffs, x0)
            coeffs = (coeffs[0] + delta,) + coeffs[1:]
        prev_end = poly_eval(coeffs, x1)
        shifted.append((x0, x1, coeffs))

    pieces = [Piece(x0, x1, coeffs) for x0, x1, coeffs in shifted]
    profile = PiecewiseProfile.build(pieces)
    if normalize_min is not None:
        profile = profile.shifted(float(normalize_min) - profile.min_value())

    boundary = doc.get("boundary")
    if boundary:
        want_left = float(boundary.get("left", profile.boundary_left))
        want_right = float(boundary.get("right", profile.boundary_right))
        sc = profile.scale()
        if abs(want_left - profile.boundary_left) > EPS_CONT * sc or abs(
            want_right - profile.boundary_right
        ) > EPS_CONT * sc:
            raise SchemaError("declared boundary values disagree with endpoint values")
    return profile


def dump_scenario(p: PiecewiseProfile) -> dict:
    """Scenario document (schema above) describing the profile."""
    return {
        "domain": [p.a, p.b],
        "pieces": [
            {"interval": [piece.x0, piece.x1], "coeffs": list(piece.coeffs)}
            for piece in p.pieces
        ],
        "boundary": {"left": p.boundary_left, "right": p.boundary_right},
        "options": {"auto_shift": False},
    }
