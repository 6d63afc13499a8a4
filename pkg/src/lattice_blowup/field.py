"""Finitely supported scalar fields on the integer lattice Z^d.

A :class:`Field` stores its values in a dense box of side ``2*radius + 1``
centred on the origin.  Only points inside the l1 ball of the declared
radius may be nonzero; everything else in the box (and outside it) reads
as zero.  Two arithmetic modes exist: float64 arrays, and object arrays of
:class:`fractions.Fraction` for exact oracles.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

Point = tuple[int, ...]


class FieldError(ValueError):
    """Invalid field construction or incompatible field operands."""


def l1_norm(n: Sequence[int]) -> int:
    return sum(abs(c) for c in n)


@lru_cache(maxsize=64)
def _l1_grid(d: int, radius: int) -> np.ndarray:
    # l1 norm of every box point, C order == lexicographic point order
    axis = np.abs(np.arange(-radius, radius + 1))
    grid = np.zeros((2 * radius + 1,) * d, dtype=np.int64)
    for k in range(d):
        shape = [1] * d
        shape[k] = -1
        grid = grid + axis.reshape(shape)
    grid.setflags(write=False)
    return grid


def _zeros(d: int, radius: int, exact: bool) -> np.ndarray:
    shape = (2 * radius + 1,) * d
    if exact:
        return np.full(shape, Fraction(0), dtype=object)
    return np.zeros(shape, dtype=np.float64)


def _to_exact_value(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise FieldError(f"cannot represent {x!r} exactly")
        return Fraction(float(x))
    raise FieldError(f"unsupported value type {type(x).__name__}")


class Field:
    """Real field on Z^d vanishing outside an l1 ball.

    Instances are immutable.  ``radius`` is the declared radius R: every
    nonzero value sits at a point with ``l1_norm(n) <= R``.  Use
    :func:`make_field` or :meth:`zeros` to build one.
    """

    __slots__ = ("dim", "radius", "_data")

    def __init__(self, dim: int, radius: int, data: np.ndarray):
        if dim < 1:
            raise FieldError("dimension must be at least 1")
        if radius < 0:
            raise FieldError("radius must be nonnegative")
        if data.shape != (2 * radius + 1,) * dim:
            raise FieldError(f"data shape {data.shape} does not match d={dim}, radius={radius}")
        data = np.array(data, copy=True)
        outside = _l1_grid(dim, radius) > radius
        if data.dtype == object:
            data[outside] = Fraction(0)
        else:
            data = data.astype(np.float64, copy=False)
            data[outside] = 0.0
        data.setflags(write=False)
        self.dim = dim
        self.radius = radius
        self._data = data

    @classmethod
    def zeros(cls, dim: int, radius: int = 0, exact: bool = False) -> "Field":
        return cls(dim, radius, _zeros(dim, radius, exact))

    @property
    def exact(self) -> bool:
        return self._data.dtype == object

    @property
    def data(self) -> np.ndarray:
        """Read-only dense box, index ``n + radius`` along every axis."""
        return self._data

    def __getitem__(self, n: Sequence[int]):
        n = tuple(n)
        if len(n) != self.dim:
            raise FieldError(f"point {n} has arity {len(n)}, expected {self.dim}")
        if l1_norm(n) > self.radius:
            return Fraction(0) if self.exact else 0.0
        return self._data[tuple(c + self.radius for c in n)]

    def items(self) -> Iterator[tuple[Point, object]]:
        """Nonzero entries in lexicographic point order."""
        idx = np.argwhere(self._data != 0)
        for row in idx:
            yield tuple(int(c) - self.radius for c in row), self._data[tuple(row)]

    def expand(self, radius: int) -> "Field":
        """Same field with a larger declared radius."""
        if radius < self.radius:
            raise FieldError("cannot shrink the declared radius")
        if radius == self.radius:
            return self
        pad = radius - self.radius
        fill = Fraction(0) if self.exact else 0.0
        data = np.pad(self._data, pad, mode="constant", constant_values=fill)
        return Field(self.dim, radius, data)

    def trim(self) -> "Field":
        """Same field with the declared radius reduced to its support radius."""
        r = support_radius(self)
        if r == self.radius:
            return self
        cut = self.radius - r
        sl = tuple(slice(cut, cut + 2 * r + 1) for _ in range(self.dim))
        return Field(self.dim, r, self._data[sl])

    def to_exact(self) -> "Field":
        if self.exact:
            return self
        vals = np.empty(self._data.shape, dtype=object)
        flat = vals.reshape(-1)
        for i, x in enumerate(self._data.reshape(-1)):
            flat[i] = _to_exact_value(x)
        return Field(self.dim, self.radius, vals)

    def to_float(self) -> "Field":
        if not self.exact:
            return self
        return Field(self.dim, self.radius, self._data.astype(np.float64))

    def scale(self, c) -> "Field":
        if self.exact:
            c = _to_exact_value(c)
        return Field(self.dim, self.radius, self._data * c)

    def _aligned(self, other: "Field") -> tuple[np.ndarray, np.ndarray, int]:
        if not isinstance(other, Field):
            return NotImplemented
        if other.dim != self.dim:
            raise FieldError("dimension mismatch")
        if other.exact != self.exact:
            raise FieldError("cannot mix exact and float fields")
        r = max(self.radius, other.radius)
        return self.expand(r)._data, other.expand(r)._data, r

    def __add__(self, other: "Field") -> "Field":
        a, b, r = self._aligned(other)
        return Field(self.dim, r, a + b)

    def __sub__(self, other: "Field") -> "Field":
        a, b, r = self._aligned(other)
        return Field(self.dim, r, a - b)

    def __neg__(self) -> "Field":
        return Field(self.dim, self.radius, -self._data)

    def __mul__(self, c) -> "Field":
        return self.scale(c)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, Field) or other.dim != self.dim:
            return NotImplemented
        if self.exact != other.exact:
            return False
        a, b, _ = self._aligned(other)
        return bool(np.all(a == b))

    __hash__ = None

    def __repr__(self) -> str:
        mode = "exact" if self.exact else "float64"
        nnz = int(np.count_nonzero(self._data != 0))
        return f"Field(d={self.dim}, radius={self.radius}, nonzero={nnz}, {mode})"


def make_field(d: int, entries: Iterable[tuple[Sequence[int], object]], exact: bool | None = None) -> Field:
    """Build a field from ``(point, value)`` pairs.

    The declared radius is the largest l1 norm among nonzero entries (0 for
    an empty field).  With ``exact=None`` the field is exact when every value
    is an int or Fraction and at least one is a Fraction.
    """
    if d < 1:
        raise FieldError("dimension must be at least 1")
    entries = [(tuple(int(c) for c in n), v) for n, v in entries]
    seen: set[Point] = set()
    for n, _ in entries:
        if len(n) != d:
            raise FieldError(f"point {n} has arity {len(n)}, expected {d}")
        if n in seen:
            raise FieldError(f"duplicate point {n}")
        seen.add(n)
    if exact is None:
        vals = [v for _, v in entries]
        exact = bool(vals) and all(isinstance(v, (int, Fraction)) for v in vals) and any(
            isinstance(v, Fraction) for v in vals
        )
    radius = max((l1_norm(n) for n, v in entries if v != 0), default=0)
    data = _zeros(d, radius, exact)
    for n, v in entries:
        if v == 0:
            continue
        if exact:
            v = _to_exact_value(v)
        else:
            v = float(v)
        data[tuple(c + radius for c in n)] = v
    return Field(d, radius, data)


def neighbor_average(field: Field) -> Field:
    """Mean of the 2d axis neighbours at every lattice point.

    The result has declared radius ``field.radius + 1``.
    """
    d = field.dim
    fill = Fraction(0) if field.exact else 0.0
    b = np.pad(field.data, 2, mode="constant", constant_values=fill)
    core = [slice(1, -1)] * d

    def shifted(axis: int, step: int) -> np.ndarray:
        sl = list(core)
        sl[axis] = slice(1 + step, b.shape[axis] - 1 + step)
        return b[tuple(sl)]

    # axis order and grouping match the compiled kernels bit for bit
    acc = shifted(0, 1) + shifted(0, -1)
    for k in range(1, d):
        acc = acc + (shifted(k, 1) + shifted(k, -1))
    if field.exact:
        out = acc * Fraction(1, 2 * d)
    else:
        out = acc / (2 * d)
    return Field(d, field.radius + 1, out)


def field_sum(field: Field):
    """Total of all values.

    Float fields are summed with :func:`math.fsum`, so the result is the
    correctly rounded exact sum and does not depend on traversal order.
    A sum that leaves the float range comes back as inf or nan.
    """
    flat = field.data.reshape(-1)
    if field.exact:
        return sum(flat, Fraction(0))
    try:
        return math.fsum(flat)
    except (OverflowError, ValueError):
        with np.errstate(all="ignore"):
            return float(np.sum(flat))


def field_max(field: Field) -> tuple[object, Point]:
    """Largest value over the declared l1 ball, implicit zeros included.

    Ties go to the lexicographically smallest point.
    """
    return _extreme(field, np.argmax)


def field_min(field: Field) -> tuple[object, Point]:
    return _extreme(field, np.argmin)


def _extreme(field: Field, pick) -> tuple[object, Point]:
    r = field.radius
    inside = np.flatnonzero(_l1_grid(field.dim, r).reshape(-1) <= r)
    vals = field.data.reshape(-1)[inside]
    j = int(pick(vals))
    idx = np.unravel_index(inside[j], field.data.shape)
    return vals[j], tuple(int(c) - r for c in idx)


def support_radius(field: Field) -> int:
    """Largest l1 norm of a point holding a nonzero value (0 if none)."""
    nz = field.data != 0
    if not np.any(nz):
        return 0
    return int(_l1_grid(field.dim, field.radius)[nz].max())


def l1_ball_count(d: int, radius: int) -> int:
    """Number of points n in Z^d with ``|n_1| + ... + |n_d| <= radius``.

    Closed form: sum over k of 2^k C(d, k) C(radius, k), counting points by
    their number k of nonzero coordinates.  Exact integer arithmetic.
    """
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    return sum((1 << k) * comb(d, k) * comb(radius, k) for k in range(min(d, radius) + 1))


def lattice_points(d: int, radius: int) -> Iterator[Point]:
    """Points of the l1 ball in lexicographic order."""
    if d == 1:
        for i in range(-radius, radius + 1):
            yield (i,)
        return
    for i in range(-radius, radius + 1):
        for rest in lattice_points(d - 1, radius - abs(i)):
            yield (i,) + rest


# -- snapshot format ---------------------------------------------------------


def _json_value(v):
    return float(v)


def write_snapshot(field: Field, fp: IO[str], **header) -> None:
    """Write a JSON-lines snapshot: one header record, then one record per nonzero entry."""
    head = {"d": field.dim, "radius": field.radius}
    head.update(header)
    fp.write(json.dumps(head, sort_keys=True) + "\n")
    for n, v in field.items():
        fp.write(json.dumps({"n": list(n), "v": _json_value(v)}) + "\n")


def read_snapshots(fp: IO[str]) -> list[Field]:
    """Read every snapshot block of a JSON-lines stream, in order."""
    fields: list[Field] = []
    head = None
    entries: list = []

    def flush():
        if head is None:
            return
        f = make_field(head["d"], entries, exact=False)
        fields.append(f.expand(max(f.radius, int(head.get("radius", 0)))))

    for lineno, line in enumerate(fp, 1):
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        if "n" in rec:
            if head is None:
                raise FieldError(f"line {lineno}: entry before header")
            entries.append((rec["n"], rec["v"]))
        elif "d" in rec:
            flush()
            head, entries = rec, []
        else:
            raise FieldError(f"line {lineno}: unrecognised record {rec!r}")
    flush()
    return fields
