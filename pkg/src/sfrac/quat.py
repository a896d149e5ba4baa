"""Quaternion arithmetic and the intrinsic slice functions (log, real powers).

Conventions: Hamilton multiplication table (e1*e2 = e3, e2*e3 = e1,
e3*e1 = e2), components stored as (w, x, y, z) = scalar + e1,e2,e3 parts.
The argument of a quaternion is arccos(w/|q|) in [0, pi], taken in the slice
plane spanned by 1 and the normalized imaginary part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

_REAL_AXIS_EPS = 0.0  # imaginary part exactly zero -> treated as real


@dataclass(frozen=True)
class Quaternion:
    w: float = 0.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    # -- algebra ---------------------------------------------------------
    def __add__(self, other):
        other = _coerce(other)
        return Quaternion(self.w + other.w, self.x + other.x,
                          self.y + other.y, self.z + other.z)

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce(other)
        return Quaternion(self.w - other.w, self.x - other.x,
                          self.y - other.y, self.z - other.z)

    def __rsub__(self, other):
        return _coerce(other) - self

    def __neg__(self):
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Quaternion(self.w * other, self.x * other,
                              self.y * other, self.z * other)
        return qmul(self, _coerce(other))

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return self * other
        return qmul(_coerce(other), self)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return self * (1.0 / other)
        raise TypeError("quaternion division by quaternion is ambiguous; "
                        "multiply by inverse() explicitly")

    # -- structure -------------------------------------------------------
    @property
    def conj(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    @property
    def modulus(self) -> float:
        return math.sqrt(self.w * self.w + self.x * self.x
                         + self.y * self.y + self.z * self.z)

    @property
    def imag_norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    @property
    def is_real(self) -> bool:
        return self.imag_norm == _REAL_AXIS_EPS

    def inverse(self) -> "Quaternion":
        m2 = self.w ** 2 + self.x ** 2 + self.y ** 2 + self.z ** 2
        if m2 == 0.0:
            raise ZeroDivisionError("inverse of zero quaternion")
        return Quaternion(self.w / m2, -self.x / m2, -self.y / m2, -self.z / m2)

    def components(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def __repr__(self):
        return (f"Quaternion({self.w!r}, {self.x!r}, {self.y!r}, {self.z!r})")


def _coerce(v) -> Quaternion:
    if isinstance(v, Quaternion):
        return v
    if isinstance(v, (int, float)):
        return Quaternion(float(v))
    raise TypeError(f"cannot interpret {type(v).__name__} as quaternion")


ONE = Quaternion(1.0)
E1 = Quaternion(0.0, 1.0, 0.0, 0.0)
E2 = Quaternion(0.0, 0.0, 1.0, 0.0)
E3 = Quaternion(0.0, 0.0, 0.0, 1.0)


def qmul(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product a*b."""
    return Quaternion(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )


@dataclass(frozen=True)
class ImaginaryUnit:
    """A point of the unit 2-sphere of imaginary quaternions; squares to -1."""

    direction: Quaternion

    def __post_init__(self):
        d = self.direction
        if d.w != 0.0:
            raise ValueError("imaginary unit must have zero scalar part")
        n = d.imag_norm
        if not math.isclose(n, 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise ValueError(f"imaginary unit must have modulus 1, got {n!r}")
        if n != 1.0:  # renormalize the sub-ulp residue so direction**2 == -1
            object.__setattr__(self, "direction",
                               Quaternion(0.0, d.x / n, d.y / n, d.z / n))

    @property
    def quaternion(self) -> Quaternion:
        return self.direction

    def scale(self, t: float) -> Quaternion:
        d = self.direction
        return Quaternion(0.0, d.x * t, d.y * t, d.z * t)


J_E1 = ImaginaryUnit(E1)
J_E2 = ImaginaryUnit(E2)
J_E3 = ImaginaryUnit(E3)


def unit_from_components(x: float, y: float, z: float) -> ImaginaryUnit:
    n = math.sqrt(x * x + y * y + z * z)
    if n == 0.0:
        raise ValueError("zero vector cannot define an imaginary unit")
    return ImaginaryUnit(Quaternion(0.0, x / n, y / n, z / n))


@dataclass(frozen=True)
class SliceDecomposition:
    """p = p0 + axis*p1 with p1 >= 0."""

    p0: float
    p1: float
    axis: ImaginaryUnit

    def recompose(self) -> Quaternion:
        return Quaternion(self.p0) + self.axis.scale(self.p1)


def slice_decompose(p: Quaternion) -> SliceDecomposition:
    """Split p into real part and modulus/axis of the imaginary part.

    Real quaternions get the default axis e1 (any unit works; a fixed one
    keeps results reproducible).
    """
    p1 = p.imag_norm
    if p1 == 0.0:
        return SliceDecomposition(p.w, 0.0, J_E1)
    axis = ImaginaryUnit(Quaternion(0.0, p.x / p1, p.y / p1, p.z / p1))
    return SliceDecomposition(p.w, p1, axis)


def qexp(q: Quaternion) -> Quaternion:
    """exp(q) = e^{q0} (cos|q_im| + unit(q_im) sin|q_im|)."""
    r = math.exp(q.w)
    v = q.imag_norm
    if v == 0.0:
        return Quaternion(r)
    s = r * math.sin(v) / v
    return Quaternion(r * math.cos(v), s * q.x, s * q.y, s * q.z)


def qlog(s: Quaternion) -> Quaternion:
    """Principal slice logarithm ln|s| + j_s * arccos(s0/|s|).

    Defined on H minus the closed negative real half-line; on each slice
    plane it restricts to the principal complex logarithm.
    """
    m = s.modulus
    if m == 0.0:
        raise DomainError("log undefined at 0")
    d = slice_decompose(s)
    if d.p1 == 0.0:
        if s.w < 0.0:
            raise DomainError("log undefined on the negative real half-line")
        return Quaternion(math.log(s.w))
    arg = math.acos(min(1.0, max(-1.0, s.w / m)))  # clamp absorbs rounding
    return Quaternion(math.log(m)) + d.axis.scale(arg)


def qpow(s: Quaternion, alpha: float) -> Quaternion:
    """s**alpha = exp(alpha * log s) for real alpha; stays in the slice of s."""
    return qexp(qlog(s) * alpha)


def left_mult_table(u) -> np.ndarray:
    """4x4 real matrix M with (u*v) components = M @ (v components).

    Accepts a Quaternion or an ImaginaryUnit; covers 1, e1, e2, e3 and any
    other quaternion alike.
    """
    if isinstance(u, ImaginaryUnit):
        u = u.direction
    u = _coerce(u)
    w, x, y, z = u.w, u.x, u.y, u.z
    return np.array([
        [w, -x, -y, -z],
        [x,  w, -z,  y],
        [y,  z,  w, -x],
        [z, -y,  x,  w],
    ])
