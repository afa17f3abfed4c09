"""Exact arithmetic in cyclotomic fields Q(zeta_n).

Weil representation matrices have entries of the form
rational * i^(j/2) * e(a/b) * sqrt(det)^(-1); sums and products of such
entries live in a cyclotomic field once sqrt(det) is expressed through Gauss
sums.  Elements are sparse exponent->Fraction dictionaries; zero-testing
reduces modulo the n-th cyclotomic polynomial.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import gcd

_ZERO = Fraction(0)


@lru_cache(maxsize=None)
def cyclotomic_poly(n: int):
    """Coefficients of Phi_n, ascending, exact."""
    # x^n - 1 divided by the product of Phi_d over proper divisors d | n
    poly = [Fraction(-1)] + [_ZERO] * (n - 1) + [Fraction(1)]
    for d in range(1, n):
        if n % d == 0:
            poly = _poly_div_exact(poly, cyclotomic_poly(d))
    return tuple(poly)


def _poly_div_exact(num, den):
    num = list(num)
    den = list(den)
    out = [_ZERO] * (len(num) - len(den) + 1)
    for i in range(len(out) - 1, -1, -1):
        c = num[i + len(den) - 1] / den[-1]
        out[i] = c
        if c:
            for j, d in enumerate(den):
                num[i + j] -= c * d
    assert all(c == 0 for c in num[: len(den) - 1]) or all(c == 0 for c in num), "inexact division"
    return out


class Cyclo:
    """Element of Q(zeta_n), stored as a sparse integer-exponent combination."""

    __slots__ = ("n", "coeffs")

    def __init__(self, n: int, coeffs=None):
        self.n = n
        cleaned = {}
        if coeffs:
            for e, c in coeffs.items():
                c = Fraction(c)
                if c:
                    e %= n
                    cleaned[e] = cleaned.get(e, _ZERO) + c
        self.coeffs = {e: c for e, c in cleaned.items() if c}

    @staticmethod
    def rational(n: int, c) -> "Cyclo":
        return Cyclo(n, {0: Fraction(c)})

    @staticmethod
    def root_of_unity(n: int, a: int, b: int) -> "Cyclo":
        """e(a/b) as an element of Q(zeta_n); b must divide n."""
        if n % b:
            raise ValueError(f"order {n} does not contain e(1/{b})")
        return Cyclo(n, {(a * (n // b)) % n: Fraction(1)})

    def promoted(self, n: int) -> "Cyclo":
        if n == self.n:
            return self
        if n % self.n:
            raise ValueError("can only promote to a multiple order")
        k = n // self.n
        return Cyclo(n, {e * k: c for e, c in self.coeffs.items()})

    def _pair(self, other):
        if isinstance(other, (int, Fraction)):
            other = Cyclo.rational(self.n, other)
        n = self.n * other.n // gcd(self.n, other.n)
        return self.promoted(n), other.promoted(n)

    def __add__(self, other):
        a, b = self._pair(other)
        out = dict(a.coeffs)
        for e, c in b.coeffs.items():
            out[e] = out.get(e, _ZERO) + c
        return Cyclo(a.n, out)

    __radd__ = __add__

    def __neg__(self):
        return Cyclo(self.n, {e: -c for e, c in self.coeffs.items()})

    def __sub__(self, other):
        a, b = self._pair(other)
        return a + (-b)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            c = Fraction(other)
            return Cyclo(self.n, {e: c * v for e, v in self.coeffs.items()})
        a, b = self._pair(other)
        out = {}
        for e1, c1 in a.coeffs.items():
            for e2, c2 in b.coeffs.items():
                e = (e1 + e2) % a.n
                out[e] = out.get(e, _ZERO) + c1 * c2
        return Cyclo(a.n, out)

    __rmul__ = __mul__

    def conj(self) -> "Cyclo":
        """Complex conjugation zeta -> zeta^(-1)."""
        return Cyclo(self.n, {(-e) % self.n: c for e, c in self.coeffs.items()})

    def reduced(self):
        """Canonical representative: coefficients of 1, zeta, ..., zeta^(phi(n)-1)."""
        phi = cyclotomic_poly(self.n)
        deg = len(phi) - 1
        poly = [_ZERO] * self.n
        for e, c in self.coeffs.items():
            poly[e] += c
        # reduce modulo Phi_n (monic)
        for i in range(self.n - 1, deg - 1, -1):
            c = poly[i]
            if c:
                poly[i] = _ZERO
                for j in range(deg):
                    poly[i - deg + j] -= c * phi[j]
        return tuple(poly[:deg])

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.reduced())

    def is_rational(self):
        red = self.reduced()
        if all(c == 0 for c in red[1:]):
            return red[0] if red else _ZERO
        return None

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Cyclo.rational(self.n, other)
        if not isinstance(other, Cyclo):
            return NotImplemented
        a, b = self._pair(other)
        return (a - b).is_zero()

    def __hash__(self):
        return hash((self.n, self.reduced()))

    def __repr__(self):
        terms = [f"{c}*e({e}/{self.n})" for e, c in sorted(self.coeffs.items())]
        return f"Cyclo({' + '.join(terms) if terms else '0'})"

    def to_complex(self, ctx=None):
        import mpmath

        ctx = ctx or mpmath.mp
        acc = ctx.mpc(0)
        for e, c in self.coeffs.items():
            acc += ctx.mpf(c.numerator) / c.denominator * mpmath.expjpi(ctx.mpf(2 * e) / self.n)
        return acc


def _squarefree_decompose(m: int):
    """m = s^2 * m0 with m0 squarefree; returns (s, m0)."""
    s, m0 = 1, 1
    d = 2
    mm = m
    while d * d <= mm:
        e = 0
        while mm % d == 0:
            mm //= d
            e += 1
        if e:
            s *= d ** (e // 2)
            if e % 2:
                m0 *= d
        d += 1
    if mm > 1:
        m0 *= mm
    return s, m0


def sqrt_order(m: int) -> int:
    """An order n with sqrt(m) in Q(zeta_n)."""
    _, m0 = _squarefree_decompose(m)
    odd = m0 if m0 % 2 else m0 // 2
    return _lcm(8, odd) if odd > 1 else 8


def _lcm(a, b):
    return a * b // gcd(a, b)


def sqrt_as_cyclo(m: int, n: int = None) -> Cyclo:
    """sqrt(m) for a positive integer m, exactly, via Gauss sums."""
    if m <= 0:
        raise ValueError("m must be positive")
    if n is None:
        n = sqrt_order(m)
    s, m0 = _squarefree_decompose(m)
    out = Cyclo.rational(n, s)
    if m0 % 2 == 0:
        # sqrt(2) = zeta_8 + zeta_8^-1
        out = out * (Cyclo.root_of_unity(n, 1, 8) + Cyclo.root_of_unity(n, -1, 8))
        m0 //= 2
    p = 3
    while m0 > 1:
        if m0 % p == 0:
            g = Cyclo(n, {})
            for k in range(p):
                g = g + Cyclo.root_of_unity(n, k * k, p)
            if p % 4 == 3:
                # g = i sqrt(p); divide by i
                g = g * Cyclo.root_of_unity(n, -1, 4)
            out = out * g
            m0 //= p
        else:
            p += 2
    return out


# --- small exact-matrix helpers ------------------------------------------------


def mat_mul(A, B):
    rows, inner, cols = len(A), len(B), len(B[0])
    out = []
    for i in range(rows):
        row = []
        for j in range(cols):
            acc = None
            for t in range(inner):
                term = A[i][t] * B[t][j]
                acc = term if acc is None else acc + term
            row.append(acc)
        out.append(row)
    return out


def mat_dagger(A):
    return [[A[j][i].conj() for j in range(len(A))] for i in range(len(A[0]))]


def mat_identity(n, order):
    return [[Cyclo.rational(order, 1 if i == j else 0) for j in range(n)] for i in range(n)]


def mat_eq(A, B) -> bool:
    if len(A) != len(B) or len(A[0]) != len(B[0]):
        return False
    return all(a == b for ra, rb in zip(A, B) for a, b in zip(ra, rb))
