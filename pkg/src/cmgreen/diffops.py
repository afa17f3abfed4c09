"""Raising-operator calculus, Rankin-Cohen brackets, and special functions.

Almost holomorphic forms are stored exactly: part t of an AlmostHoloForm is a
rational q-series u_t, and the function represented is

    sum_t  u_t(q) * (4*pi*y)^(-t).

Powers of pi never enter the exact layer because each application of the
raising operator R produces exactly one factor (4*pi*y)^(-1); numeric pi
appears only in eval().  The weight-w Laplacian also closes over this
representation (the -4*pi^2 prefactor cancels the pi^2 produced by the
lowering operator), so eigenvalue identities can be checked as exact series
identities.

Special functions: half-integer Bessel K via the closed polynomial form,
Legendre Q with a large-argument series branch, exact Bernoulli numbers and
the upper incomplete gamma.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import mpmath
from mpmath import mp

from .errors import DiagonalSingularity, LinearSolveFailed
from .exactq import FracSeries, QSeries, bernoulli_number, _solve_exact

_ZERO = Fraction(0)

# spec alias: B_1 = -1/2 convention
bernoulli = bernoulli_number


def pochhammer(a: Fraction, m: int) -> Fraction:
    """Rising factorial (a)_m = a (a+1) ... (a+m-1)."""
    out = Fraction(1)
    a = Fraction(a)
    for i in range(m):
        out *= a + i
    return out


def binom(x, s: int) -> Fraction:
    """Generalized binomial C(x, s) = x(x-1)...(x-s+1)/s! for integer s >= 0."""
    if s < 0:
        return _ZERO
    out = Fraction(1)
    x = Fraction(x)
    for i in range(s):
        out *= (x - i) / (i + 1)
    return out


class AlmostHoloForm:
    """Polynomial in (4*pi*y)^(-1) with QSeries coefficients and a weight tag."""

    __slots__ = ("parts", "weight")

    def __init__(self, parts, weight: int):
        parts = list(parts)
        while parts and parts[-1].is_zero():
            parts.pop()
        self.parts = parts
        self.weight = weight

    @staticmethod
    def from_qseries(f: QSeries, weight=None) -> "AlmostHoloForm":
        w = f.weight if weight is None else weight
        if w is None:
            raise ValueError("weight tag required")
        return AlmostHoloForm([f], w)

    def part(self, t: int) -> QSeries:
        if t < len(self.parts):
            return self.parts[t]
        prec = self.parts[0].prec if self.parts else 1
        return QSeries.zero(prec)

    @property
    def depth(self) -> int:
        return len(self.parts)

    def is_zero(self) -> bool:
        return not self.parts

    def __eq__(self, other):
        if not isinstance(other, AlmostHoloForm):
            return NotImplemented
        n = max(self.depth, other.depth)
        return all(self.part(t) == other.part(t) for t in range(n))

    def __hash__(self):
        return hash((tuple(self.parts), self.weight))

    def __add__(self, other):
        if self.weight != other.weight:
            raise ValueError("weights differ")
        n = max(self.depth, other.depth)
        return AlmostHoloForm([self.part(t) + other.part(t) for t in range(n)], self.weight)

    def __neg__(self):
        return AlmostHoloForm([-p for p in self.parts], self.weight)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return AlmostHoloForm([p * other for p in self.parts], self.weight)
        if isinstance(other, QSeries):
            other = AlmostHoloForm.from_qseries(other)
        n = self.depth + other.depth - 1
        if n <= 0:
            return AlmostHoloForm([], self.weight + other.weight)
        prec = min(
            (p.prec for p in self.parts + other.parts),
            default=1,
        )
        acc = [QSeries.zero(prec) for _ in range(n)]
        for i, p in enumerate(self.parts):
            if p.is_zero():
                continue
            for j, q in enumerate(other.parts):
                if q.is_zero():
                    continue
                acc[i + j] = acc[i + j] + p * q
        return AlmostHoloForm(acc, self.weight + other.weight)

    __rmul__ = __mul__

    def raise_once(self) -> "AlmostHoloForm":
        """Apply the weight-raising operator R_w; weight goes up by 2."""
        w = self.weight
        out = [QSeries.zero(self.parts[0].prec) for _ in range(self.depth + 1)] if self.parts else []
        for t, p in enumerate(self.parts):
            out[t] = out[t] + p.deriv()
            out[t + 1] = out[t + 1] + (t - w) * p
        return AlmostHoloForm(out, w + 2)

    def lower_scaled(self) -> "AlmostHoloForm":
        """4*pi^2 times the lowering operator L_w; weight goes down by 2.

        L maps part t to t * part / (4*pi^2) in slot t-1; scaling by 4*pi^2
        keeps everything rational.
        """
        out = []
        for t in range(1, self.depth):
            out.append(self.parts[t] * t)
        return AlmostHoloForm(out, self.weight - 2)

    def laplacian(self) -> "AlmostHoloForm":
        """Weight-w hyperbolic Laplacian, exact: -4 pi^2 R_{w-2} L_w."""
        return -(self.lower_scaled().raise_once())

    def eval(self, tau):
        """Numeric value at tau (mpmath complex), at the current precision."""
        y = mp.im(tau)
        inv = 1 / (4 * mp.pi * y)
        total = mp.mpc(0)
        scale = mp.mpc(1)
        for p in self.parts:
            total += qseries_eval(p, tau) * scale
            scale *= inv
        return total

    def to_json(self) -> dict:
        return {
            "weight": self.weight,
            "part_basis": "(4*pi*y)^-t",
            "parts": [p.to_json() for p in self.parts],
        }

    @staticmethod
    def from_json(obj: dict) -> "AlmostHoloForm":
        return AlmostHoloForm([QSeries.from_json(p) for p in obj["parts"]], obj["weight"])


def qseries_eval(f: QSeries, tau):
    """Numeric sum of the stored window of f at tau."""
    q = mpmath.expjpi(2 * tau)
    acc = mp.mpc(0)
    power = q**f.valuation
    for c in f.coeffs:
        if c:
            acc += mp.mpf(c.numerator) / c.denominator * power
        power *= q
    return acc


def fracseries_eval(f: FracSeries, tau):
    """Numeric sum of a fractional-exponent series at tau, via a power ladder
    in u = e(tau/den)."""
    u = mpmath.expjpi(2 * tau / f.den)
    acc = mp.mpc(0)
    exps = f.exponents()
    if not exps:
        return acc
    power = u ** exps[0]
    prev = exps[0]
    for e in exps:
        if e != prev:
            power *= u ** (e - prev)
            prev = e
        c = f.terms[e]
        acc += mp.mpf(c.numerator) / c.denominator * power
    return acc


def raise_form(g: QSeries, r: int) -> AlmostHoloForm:
    """r-fold raising operator applied to a weight-tagged holomorphic series.

    Closed form: part t of R^r(g) is (-1)^t C(r, r-t) (l+r-t)_t g^(r-t),
    carried on the (4*pi*y)^(-t) basis.
    """
    if g.weight is None:
        raise ValueError("input needs a weight tag")
    if r < 0:
        raise ValueError("r must be >= 0")
    l = g.weight
    parts = []
    for t in range(r + 1):
        coeff = Fraction(-1) ** t * binom(r, r - t) * pochhammer(l + r - t, t)
        parts.append(g.deriv(r - t) * coeff)
    return AlmostHoloForm(parts, l + 2 * r)


def rc_bracket(f, g, r: int, weight_f=None, weight_g=None):
    """Rankin-Cohen bracket [f, g]_r of weight-tagged series.

    Works for QSeries and FracSeries alike (the theta factors carry
    fractional exponents); weights may be passed explicitly for series types
    without a weight slot.
    """
    k = weight_f if weight_f is not None else f.weight
    l = weight_g if weight_g is not None else getattr(g, "weight", None)
    if k is None or l is None:
        raise ValueError("both weights must be known")
    if r < 0:
        raise ValueError("r must be >= 0")
    df = [f]
    dg = [g]
    for _ in range(r):
        df.append(df[-1].deriv())
        dg.append(dg[-1].deriv())
    total = None
    for s in range(r + 1):
        c = Fraction(-1) ** s * binom(k + r - 1, s) * binom(l + r - 1, r - s)
        term = (df[r - s] * dg[s]) * c
        total = term if total is None else total + term
    if isinstance(total, QSeries):
        total = total.with_weight(k + l + 2 * r)
    return total


def _r_powers_table(weight, r):
    """Coefficients A_p of R^r(f) = sum_p A_p f^(p) (4 pi y)^(p-r) for weight-`weight` f."""
    return {p: Fraction(-1) ** (r - p) * binom(r, p) * pochhammer(weight + p, r - p) for p in range(r + 1)}


def rc1_residual(weight_f, weight_g, r: int):
    """Split R^r(f) g = a [f,g]_r + R(sum_s b_s R^s(f) R^(r-1-s)(g)).

    Returns (a, [b_0..b_(r-1)]) as exact rationals and verifies the identity
    in the formal bidifferential algebra before returning.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    k, l = Fraction(weight_f), Fraction(weight_g)

    def key(p, q, t):
        return (p, q, t)

    # target: R^r(f) * g
    target = {}
    for p, A in _r_powers_table(k, r).items():
        target[key(p, 0, r - p)] = A

    # column for a: [f, g]_r
    acol = {}
    for s in range(r + 1):
        c = Fraction(-1) ** s * binom(k + r - 1, s) * binom(l + r - 1, r - s)
        acol[key(r - s, s, 0)] = acol.get(key(r - s, s, 0), _ZERO) + c

    # columns for b_s: R_w applied to R^s(f) R^(r-1-s)(g), w = k + l + 2(r-1)
    w = k + l + 2 * (r - 1)
    bcols = []
    for s in range(r):
        prod = {}
        Af = _r_powers_table(k, s)
        Ag = _r_powers_table(l, r - 1 - s)
        for p, cf in Af.items():
            for q, cg in Ag.items():
                t = (s - p) + (r - 1 - s - q)
                kk = key(p, q, t)
                prod[kk] = prod.get(kk, _ZERO) + cf * cg
        col = {}
        for (p, q, t), c in prod.items():
            for kk, cc in (
                (key(p + 1, q, t), c),
                (key(p, q + 1, t), c),
                (key(p, q, t + 1), (t - w) * c),
            ):
                col[kk] = col.get(kk, _ZERO) + cc
        bcols.append(col)

    keys = sorted(set(target) | set(acol) | {kk for col in bcols for kk in col})
    rows = [[acol.get(kk, _ZERO)] + [col.get(kk, _ZERO) for col in bcols] for kk in keys]
    rhs = [target.get(kk, _ZERO) for kk in keys]
    sol = _solve_exact(rows, rhs)
    if sol is None:
        raise LinearSolveFailed("bidifferential split is inconsistent")
    a, bs = sol[0], sol[1:]
    expected = binom(k + l + 2 * r - 2, r)
    if expected != 0 and a != 1 / expected:
        raise LinearSolveFailed("solved leading coefficient disagrees with closed form")
    return a, bs


# --- special functions --------------------------------------------------------


@lru_cache(maxsize=None)
def bessel_h_poly(j: int):
    """Coefficients (descending powers) of the polynomial h_j with
    K_{j+1/2}(x) = sqrt(pi/2) x^(-j-1/2) e^(-x) h_j(x)."""
    if j < 0:
        raise ValueError("order must be >= 0")
    from math import factorial

    return tuple(
        Fraction(factorial(j + r), (2**r) * factorial(r) * factorial(j - r)) for r in range(j + 1)
    )


def bessel_k_half(j: int, x):
    """K_{j+1/2}(x) for x > 0, exact polynomial form times sqrt/exp factors.

    Relative error is a few ulps at the working precision (one exp, one
    sqrt, and an exactly-evaluated polynomial).
    """
    x = mp.mpf(x)
    if x <= 0:
        raise ValueError("x must be positive")
    h = mp.mpf(0)
    for c in bessel_h_poly(j):  # descending powers x^j .. x^0
        h = h * x + mp.mpf(c.numerator) / c.denominator
    return mp.sqrt(mp.pi / 2) * x ** mp.mpf(-(j + Fraction(1, 2))) * mp.e**-x * h


@lru_cache(maxsize=None)
def legendre_p_coeffs(n: int):
    """Coefficients of the Legendre polynomial P_n, ascending powers, exact."""
    if n == 0:
        return (Fraction(1),)
    if n == 1:
        return (Fraction(0), Fraction(1))
    pm2 = legendre_p_coeffs(n - 2)
    pm1 = legendre_p_coeffs(n - 1)
    out = [_ZERO] * (n + 1)
    for i, c in enumerate(pm1):
        out[i + 1] += Fraction(2 * n - 1, n) * c
    for i, c in enumerate(pm2):
        out[i] -= Fraction(n - 1, n) * c
    return tuple(out)


@lru_cache(maxsize=None)
def _legendre_w_coeffs(n: int):
    """W_{n-1} = sum_{j=1}^n P_{j-1} P_{n-j} / j, the polynomial part of Q_n."""
    out = [_ZERO] * n
    for j in range(1, n + 1):
        a = legendre_p_coeffs(j - 1)
        b = legendre_p_coeffs(n - j)
        for ia, ca in enumerate(a):
            if not ca:
                continue
            for ib, cb in enumerate(b):
                if cb:
                    out[ia + ib] += ca * cb / j
    return tuple(out)


def _poly_eval(coeffs, x):
    acc = mp.mpf(0)
    for c in reversed(coeffs):
        acc = acc * x + mp.mpf(c.numerator) / c.denominator
    return acc


@lru_cache(maxsize=None)
def _legendre_q_series_coeffs(n: int, nterms: int):
    """Descending series Q_n(t) = sum_j c_j t^(-n-1-2j), exact rationals."""
    from math import factorial

    dfact = 1
    for i in range(1, 2 * n + 2, 2):
        dfact *= i
    c = Fraction(factorial(n), dfact)
    a = Fraction(n + 2, 2)
    b = Fraction(n + 1, 2)
    cc = Fraction(2 * n + 3, 2)
    out = []
    term = c
    for j in range(nterms):
        out.append(term)
        term = term * (a + j) * (b + j) / ((cc + j) * (j + 1))
    return tuple(out)


def legendre_q(n: int, t):
    """Legendre function of the second kind Q_n(t) on t > 1.

    Closed form P_n(t)/2 log((t+1)/(t-1)) - W_{n-1}(t) for t < 2; for t >= 2
    the descending hypergeometric series avoids the catastrophic cancellation
    of the closed form (which loses about (2n+2) log10(t) digits).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    t = mp.mpf(t)
    if t <= 1:
        raise DiagonalSingularity("Legendre Q is singular on t <= 1")
    return legendre_q_shifted(n, t - 1)


def legendre_q_shifted(n: int, delta):
    """Q_n(1 + delta) for delta > 0, stable arbitrarily close to the diagonal."""
    delta = mp.mpf(delta)
    if delta <= 0:
        raise DiagonalSingularity("Legendre Q is singular on t <= 1")
    t = 1 + delta
    if t < 2:
        val = _poly_eval(legendre_p_coeffs(n), t) / 2 * mp.log((2 + delta) / delta)
        if n >= 1:
            val -= _poly_eval(_legendre_w_coeffs(n), t)
        return val
    # descending series; ratio of consecutive terms < t^-2 <= 1/4
    nterms = int(mp.prec / (2 * mp.log(t, 2))) + 8
    inv2 = 1 / (t * t)
    acc = mp.mpf(0)
    power = mp.mpf(1)
    for c in _legendre_q_series_coeffs(n, nterms):
        acc += mp.mpf(c.numerator) / c.denominator * power
        power *= inv2
    return acc * t ** (-(n + 1))


def inc_gamma_upper(a, x):
    """Upper incomplete gamma Gamma(a, x) at the working precision."""
    x = mp.mpf(x)
    if x <= 0:
        raise ValueError("x must be positive")
    return mpmath.gammainc(mp.mpf(a), x, mp.inf)


# --- finite-difference Laplacian ---------------------------------------------

_STENCILS = {
    2: ((-1, 1), (0, -2), (1, 1)),
    6: (
        (-3, Fraction(1, 90)),
        (-2, Fraction(-3, 20)),
        (-1, Fraction(3, 2)),
        (0, Fraction(-49, 18)),
        (1, Fraction(3, 2)),
        (2, Fraction(-3, 20)),
        (3, Fraction(1, 90)),
    ),
    8: (
        (-4, Fraction(-1, 560)),
        (-3, Fraction(8, 315)),
        (-2, Fraction(-1, 5)),
        (-1, Fraction(8, 5)),
        (0, Fraction(-205, 72)),
        (1, Fraction(8, 5)),
        (2, Fraction(-1, 5)),
        (3, Fraction(8, 315)),
        (4, Fraction(-1, 560)),
    ),
}


def laplacian_fd(fun, tau, h, order: int = 2):
    """Hyperbolic Laplacian -y^2 (d_xx + d_yy) by central differences.

    `fun` must be smooth near tau; callers evaluating truncated sums should
    freeze the truncation set so the sampled function is genuinely smooth.
    """
    stencil = _STENCILS[order]
    h = mp.mpf(h)
    fxx = mp.mpc(0)
    fyy = mp.mpc(0)
    for off, w in stencil:
        w = mp.mpf(w.numerator) / w.denominator if isinstance(w, Fraction) else mp.mpf(w)
        fxx += w * fun(tau + off * h)
        fyy += w * fun(tau + 1j * off * h)
    y = mp.im(tau)
    return -(y**2) * (fxx + fyy) / h**2
