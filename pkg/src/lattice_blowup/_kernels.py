"""Compiled stencil kernels for float64 runs of the scaled scheme, d <= 3.

Slices live in dense boxes with the origin at index ``c`` along every axis.
Only the l1 ball is visited, in lexicographic order, so running sums are
deterministic.

The per-point arithmetic mirrors :func:`lattice_blowup.field.neighbor_average`
and :func:`lattice_blowup.scheme.step_proposed` operation for operation.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .field import Field, field_sum, support_radius

# exponent modes for s = sign(v)|v|^(p-1)
_E_ONE, _E_TWO, _E_POW = 0, 1, 2


@numba.njit(inline="always")
def _spow(v, mode, e):
    if mode == 0:
        return v
    a = abs(v)
    if mode == 1:
        m = a * a
    else:
        m = a**e
    if v < 0.0:
        return -m
    if v > 0.0:
        return m
    return 0.0


@numba.njit(inline="always")
def _nadd(tot, comp, x):
    # Neumaier compensated accumulation
    t = tot + x
    if abs(tot) >= abs(x):
        comp += (tot - t) + x
    else:
        comp += (x - t) + tot
    return t, comp


@numba.njit(inline="always")
def _point(v, old, mode, e):
    # next value and h(v) for v < 1, same operation order as the field path
    s = _spow(v, mode, e)
    den = 1.0 - s
    return 2.0 * v / den - old, 2.0 * abs(v) * abs(s) / den


# Each pass visits the l1 ball of radius r in lexicographic order, computes v,
# tracks its extremes, and until the first point with v >= 1 is met writes
# u_next over u_prev while accumulating U and sum h(v) (Neumaier).
# st:  vmax, vmin, found, wval, hsum, hneg, U, radius, finite


@numba.njit(cache=True)
def _pass1(cur, prev, c, r, mode, e, st, wit):
    vmax, vmin, found, wval = -math.inf, math.inf, False, 0.0
    hs, hc, hneg, tot, comp, rad, finite = 0.0, 0.0, 0, 0.0, 0.0, 0, True
    for i in range(-r, r + 1):
        a = i + c
        v = (cur[a + 1] + cur[a - 1]) / 2.0
        vmax = max(vmax, v)
        vmin = min(vmin, v)
        if found:
            continue
        if v >= 1.0:
            found, wval = True, v
            wit[0] = i
            continue
        x, hv = _point(v, prev[a], mode, e)
        prev[a] = x
        if hv < 0.0:
            hneg += 1
        hs, hc = _nadd(hs, hc, hv)
        tot, comp = _nadd(tot, comp, x)
        if x != 0.0:
            rad = max(rad, abs(i))
        if not (x - x == 0.0):
            finite = False
    _store(st, vmax, vmin, found, wval, hs + hc, hneg, tot + comp, rad, finite)


@numba.njit(cache=True)
def _pass2(cur, prev, c, r, mode, e, st, wit):
    vmax, vmin, found, wval = -math.inf, math.inf, False, 0.0
    hs, hc, hneg, tot, comp, rad, finite = 0.0, 0.0, 0, 0.0, 0.0, 0, True
    for i in range(-r, r + 1):
        ri = r - abs(i)
        a = i + c
        for j in range(-ri, ri + 1):
            b = j + c
            acc = cur[a + 1, b] + cur[a - 1, b]
            acc = acc + (cur[a, b + 1] + cur[a, b - 1])
            v = acc / 4.0
            vmax = max(vmax, v)
            vmin = min(vmin, v)
            if found:
                continue
            if v >= 1.0:
                found, wval = True, v
                wit[0] = i
                wit[1] = j
                continue
            x, hv = _point(v, prev[a, b], mode, e)
            prev[a, b] = x
            if hv < 0.0:
                hneg += 1
            hs, hc = _nadd(hs, hc, hv)
            tot, comp = _nadd(tot, comp, x)
            if x != 0.0:
                rad = max(rad, abs(i) + abs(j))
            if not (x - x == 0.0):
                finite = False
    _store(st, vmax, vmin, found, wval, hs + hc, hneg, tot + comp, rad, finite)


@numba.njit(cache=True)
def _pass3(cur, prev, c, r, mode, e, st, wit):
    vmax, vmin, found, wval = -math.inf, math.inf, False, 0.0
    hs, hc, hneg, tot, comp, rad, finite = 0.0, 0.0, 0, 0.0, 0.0, 0, True
    for i in range(-r, r + 1):
        ri = r - abs(i)
        a = i + c
        for j in range(-ri, ri + 1):
            rj = ri - abs(j)
            b = j + c
            nij = abs(i) + abs(j)
            for k in range(-rj, rj + 1):
                q = k + c
                acc = cur[a + 1, b, q] + cur[a - 1, b, q]
                acc = acc + (cur[a, b + 1, q] + cur[a, b - 1, q])
                acc = acc + (cur[a, b, q + 1] + cur[a, b, q - 1])
                v = acc / 6.0
                vmax = max(vmax, v)
                vmin = min(vmin, v)
                if found:
                    continue
                if v >= 1.0:
                    found, wval = True, v
                    wit[0] = i
                    wit[1] = j
                    wit[2] = k
                    continue
                x, hv = _point(v, prev[a, b, q], mode, e)
                prev[a, b, q] = x
                if hv < 0.0:
                    hneg += 1
                hs, hc = _nadd(hs, hc, hv)
                tot, comp = _nadd(tot, comp, x)
                if x != 0.0:
                    rad = max(rad, nij + abs(k))
                if not (x - x == 0.0):
                    finite = False
    _store(st, vmax, vmin, found, wval, hs + hc, hneg, tot + comp, rad, finite)


@numba.njit(inline="always")
def _store(st, vmax, vmin, found, wval, hsum, hneg, U, rad, finite):
    st[0] = vmax
    st[1] = vmin
    st[2] = 1.0 if found else 0.0
    st[3] = wval
    st[4] = hsum
    st[5] = hneg
    st[6] = U
    st[7] = rad
    st[8] = 1.0 if finite else 0.0


_PASS = {1: _pass1, 2: _pass2, 3: _pass3}


def _exponent_mode(p: float) -> tuple[int, float]:
    e = float(p) - 1.0
    if e == 1.0:
        return _E_ONE, e
    if e == 2.0:
        return _E_TWO, e
    return _E_POW, e


class KernelRunner:
    """Drives the compiled passes for scaled float64 slices."""

    def __init__(self, u0: Field, u1: Field, p: float):
        if u0.exact or u1.exact:
            raise ValueError("kernel runs are float64 only")
        if u0.dim != u1.dim or u0.dim not in _PASS:
            raise ValueError("kernel runs need 1 <= d <= 3")
        self.d = u1.dim
        self.mode, self.e = _exponent_mode(p)
        self.r = max(u0.radius, u1.radius)
        self.radius = support_radius(u1)
        self.c = 0
        self.prev = np.zeros((1,) * self.d)
        self.cur = np.zeros((1,) * self.d)
        self._grow(self.r + 2)
        self._load(self.prev, u0)
        self._load(self.cur, u1)
        self.U = field_sum(u1)
        self.r = max(support_radius(u0), self.radius)

    def _load(self, box: np.ndarray, f: Field) -> None:
        f = f.expand(self.r)
        sl = tuple(slice(self.c - self.r, self.c + self.r + 1) for _ in range(self.d))
        box[sl] = f.data

    def _grow(self, need: int) -> None:
        if need <= self.c:
            return
        cap = need + max(4, need // 16)
        side = 2 * cap + 1
        for name in ("prev", "cur"):
            old = getattr(self, name)
            new = np.zeros((side,) * self.d)
            o = old.shape[0] // 2
            sl = tuple(slice(cap - o, cap + o + 1) for _ in range(self.d))
            new[sl] = old
            setattr(self, name, new)
            del old
        self.c = cap

    def field(self) -> Field:
        sl = tuple(slice(self.c - self.r, self.c + self.r + 1) for _ in range(self.d))
        return Field(self.d, self.r, self.cur[sl])

    def run(self, max_steps: int, add, snap):
        """Returns ``(status, final_tau, hit)``; ``hit`` is ``(point, v)`` on blow-up.

        One fused pass per step: v^tau is tested and, while below threshold,
        u^(tau+1) replaces u^(tau-1) in place.  The pass that reaches the
        budget step discards its writes.
        """
        step = _PASS[self.d]
        tau = 1
        if _wants(snap, 1):
            snap(1, self.field())
        st = np.zeros(9)
        wit = np.zeros(3, dtype=np.int64)
        while True:
            self._grow(self.r + 2)
            step(self.cur, self.prev, self.c, self.r + 1, self.mode, self.e, st, wit)
            if st[2] != 0.0:
                add(tau, self.U, float(st[0]), float(st[1]), self.radius, None)
                point = tuple(int(x) for x in wit[: self.d])
                return "blowup", tau, (point, float(st[3]))
            add(tau, self.U, float(st[0]), float(st[1]), self.radius, float(st[4]))
            if tau >= max_steps:
                return "budget", tau, None
            if st[8] == 0.0:
                return "overflow", tau, None
            self.prev, self.cur = self.cur, self.prev
            tau += 1
            self.U = float(st[6])
            # the new previous slice is supported within the old radius
            self.r = max(int(st[7]), self.radius)
            self.radius = int(st[7])
            if _wants(snap, tau):
                snap(tau, self.field())


def _wants(snap, tau: int) -> bool:
    every = getattr(snap, "every", None)
    return bool(every) and tau % every == 0
