"""Exact rational q-expansion arithmetic on the full modular group.

QSeries is a Laurent series in q with Fraction coefficients and an explicit
precision window: coefficients of q^n are stored for valuation <= n < prec
and unknown beyond.  Precision never silently extends; every operation
computes the window that is actually guaranteed correct.

FracSeries is the companion container for series in q^(1/den) with rational
exponents, used by coset theta series and vector-valued forms.

The constructive content: Eisenstein series, delta, echelonized cusp bases,
the relation test, the weakly holomorphic form with prescribed principal
part, and Hecke operators on q-expansions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import gcd

from .errors import NotARelation, PrecisionError

_ZERO = Fraction(0)


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    raise TypeError(f"exact coefficient expected, got {type(x).__name__}")


@lru_cache(maxsize=None)
def bernoulli_number(n: int) -> Fraction:
    """Exact Bernoulli number B_n with the B_1 = -1/2 convention."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return Fraction(1)
    if n == 1:
        return Fraction(-1, 2)
    if n % 2 == 1:
        return _ZERO
    # sum_{j=0}^{n} C(n+1, j) B_j = 0
    acc = _ZERO
    c = 1  # C(n+1, j)
    for j in range(n):
        acc += c * bernoulli_number(j)
        c = c * (n + 1 - j) // (j + 1)
    return -acc / (n + 1)


def sigma(n: int, k: int) -> int:
    """Divisor power sum sigma_k(n) for n >= 1."""
    total = 0
    d = 1
    while d * d <= n:
        if n % d == 0:
            total += d**k
            e = n // d
            if e != d:
                total += e**k
        d += 1
    return total


class QSeries:
    """Laurent series sum_{n >= valuation} c_n q^n known up to (excluding) prec.

    Immutable by convention: no method mutates self.  `weight` is carried as
    metadata and combined additively under multiplication.
    """

    __slots__ = ("valuation", "coeffs", "prec", "weight")

    def __init__(self, valuation: int, coeffs, prec: int, weight=None):
        coeffs = [_frac(c) for c in coeffs]
        if len(coeffs) != prec - valuation:
            raise ValueError("coeffs length must equal prec - valuation")
        # strip leading zeros; the zero series keeps valuation == prec
        while coeffs and coeffs[0] == 0:
            coeffs.pop(0)
            valuation += 1
        self.valuation = valuation
        self.coeffs = coeffs
        self.prec = prec
        self.weight = weight

    # --- construction helpers -------------------------------------------

    @staticmethod
    def zero(prec: int, weight=None) -> "QSeries":
        return QSeries(prec, [], prec, weight)

    @staticmethod
    def one(prec: int, weight=0) -> "QSeries":
        return QSeries.monomial(0, 1, prec, weight)

    @staticmethod
    def monomial(n: int, c, prec: int, weight=None) -> "QSeries":
        if n >= prec:
            raise ValueError("monomial exponent outside precision window")
        return QSeries(n, [c] + [0] * (prec - n - 1), prec, weight)

    # --- basic queries ---------------------------------------------------

    def is_zero(self) -> bool:
        return not self.coeffs

    def __getitem__(self, n: int) -> Fraction:
        if n >= self.prec:
            raise PrecisionError(f"coefficient of q^{n} outside window (prec={self.prec})")
        if n < self.valuation:
            return _ZERO
        return self.coeffs[n - self.valuation]

    def coefficients(self):
        """Pairs (n, c_n) over the stored window, zeros skipped."""
        for i, c in enumerate(self.coeffs):
            if c:
                yield self.valuation + i, c

    def __eq__(self, other) -> bool:
        """Equality of coefficients on the common window."""
        if not isinstance(other, QSeries):
            return NotImplemented
        lo = min(self.valuation, other.valuation)
        hi = min(self.prec, other.prec)
        return all(self[n] == other[n] for n in range(lo, hi))

    def __hash__(self):
        return hash((self.valuation, tuple(self.coeffs), self.prec))

    def __repr__(self):
        terms = []
        for n, c in self.coefficients():
            terms.append(f"{c}*q^{n}")
            if len(terms) >= 6:
                terms.append("...")
                break
        body = " + ".join(terms) if terms else "0"
        return f"QSeries({body} + O(q^{self.prec}), weight={self.weight})"

    # --- arithmetic -------------------------------------------------------

    def _combined_weight(self, other, add: bool):
        if add:
            return self.weight if self.weight == other.weight else None
        if self.weight is None or other.weight is None:
            return None
        return self.weight + other.weight

    def __add__(self, other):
        if isinstance(other, (int, Fraction)):
            other = QSeries.monomial(0, other, self.prec, self.weight)
        prec = min(self.prec, other.prec)
        val = min(self.valuation, other.valuation, prec)
        coeffs = [self[n] + other[n] for n in range(val, prec)]
        return QSeries(val, coeffs, prec, self._combined_weight(other, add=True))

    __radd__ = __add__

    def __neg__(self):
        return QSeries(self.valuation, [-c for c in self.coeffs], self.prec, self.weight)

    def __sub__(self, other):
        if isinstance(other, (int, Fraction)):
            other = QSeries.monomial(0, other, self.prec, self.weight)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            c = _frac(other)
            if c == 0:
                return QSeries.zero(self.prec, self.weight)
            return QSeries(self.valuation, [c * a for a in self.coeffs], self.prec, self.weight)
        if not isinstance(other, QSeries):
            return NotImplemented
        if self.is_zero() or other.is_zero():
            prec = min(self.prec + other.valuation, other.prec + self.valuation)
            return QSeries.zero(prec, self._combined_weight(other, add=False))
        prec = min(self.prec + other.valuation, other.prec + self.valuation)
        val = self.valuation + other.valuation
        n = prec - val
        out = [_ZERO] * n
        for i, a in enumerate(self.coeffs):
            if a == 0 or i >= n:
                continue
            jmax = min(len(other.coeffs), n - i)
            for j in range(jmax):
                b = other.coeffs[j]
                if b:
                    out[i + j] += a * b
        return QSeries(val, out, prec, self._combined_weight(other, add=False))

    __rmul__ = __mul__

    def __pow__(self, e: int):
        if not isinstance(e, int):
            raise TypeError("integer power expected")
        if e < 0:
            return self.inverse() ** (-e)
        result = QSeries.one(self.prec, 0)
        base = self
        k = e
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        if self.weight is not None:
            result = result.with_weight(self.weight * e)
        return result

    def inverse(self) -> "QSeries":
        """Multiplicative inverse; leading coefficient must be nonzero."""
        if self.is_zero():
            raise ZeroDivisionError("inverse of the zero series")
        n = len(self.coeffs)
        a0 = self.coeffs[0]
        inv0 = 1 / a0
        out = [inv0] + [_ZERO] * (n - 1)
        for m in range(1, n):
            s = _ZERO
            for j in range(1, m + 1):
                if j < len(self.coeffs) and self.coeffs[j]:
                    s += self.coeffs[j] * out[m - j]
            out[m] = -inv0 * s
        val = -self.valuation
        w = None if self.weight is None else -self.weight
        return QSeries(val, out, val + n, w)

    def truncate(self, prec: int) -> "QSeries":
        if prec > self.prec:
            raise PrecisionError("cannot extend precision by truncation")
        val = min(self.valuation, prec)
        return QSeries(val, [self[n] for n in range(val, prec)], prec, self.weight)

    def shift(self, n: int) -> "QSeries":
        """Multiply by q^n."""
        return QSeries(self.valuation + n, list(self.coeffs), self.prec + n, self.weight)

    def deriv(self, order: int = 1) -> "QSeries":
        """q d/dq applied `order` times (the normalized derivative f^(s))."""
        coeffs = list(self.coeffs)
        for _ in range(order):
            coeffs = [Fraction(self.valuation + i) * c for i, c in enumerate(coeffs)]
        return QSeries(self.valuation, coeffs, self.prec, None if self.weight is None else self.weight + 0)

    def with_weight(self, weight) -> "QSeries":
        return QSeries(self.valuation, list(self.coeffs), self.prec, weight)

    # --- serialization ----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "valuation": self.valuation,
            "prec": self.prec,
            "weight": self.weight,
            "coeffs": [[c.numerator, c.denominator] for c in self.coeffs],
        }

    @staticmethod
    def from_json(obj: dict) -> "QSeries":
        coeffs = [Fraction(n, d) for n, d in obj["coeffs"]]
        return QSeries(obj["valuation"], coeffs, obj["prec"], obj.get("weight"))


class FracSeries:
    """Series in q^(1/den) with Fraction coefficients and a precision window.

    Exponents are stored as integer multiples of 1/den; the window covers all
    exponents e with e < prec (prec is a Fraction or int, in q-units).
    Sparse representation: {numerator_exponent: coefficient}.
    """

    __slots__ = ("den", "terms", "prec")

    def __init__(self, den: int, terms: dict, prec):
        if den < 1:
            raise ValueError("den must be >= 1")
        self.den = den
        self.terms = {e: _frac(c) for e, c in terms.items() if c}
        self.prec = Fraction(prec)

    @staticmethod
    def from_qseries(f: QSeries, den: int = 1) -> "FracSeries":
        return FracSeries(den, {n * den: c for n, c in f.coefficients()}, f.prec)

    def exponents(self):
        return sorted(self.terms)

    def coefficient(self, e) -> Fraction:
        e = Fraction(e)
        num = e * self.den
        if num.denominator != 1:
            return _ZERO
        if e >= self.prec:
            raise PrecisionError("exponent outside window")
        return self.terms.get(int(num), _ZERO)

    def constant_term(self) -> Fraction:
        return self.coefficient(0) if self.prec > 0 else _ZERO

    def valuation(self):
        if not self.terms:
            return self.prec
        return Fraction(min(self.terms), self.den)

    def is_zero(self) -> bool:
        return not self.terms

    def _common(self, other: "FracSeries"):
        d = self.den * other.den // gcd(self.den, other.den)
        return d

    def rescaled(self, den: int) -> "FracSeries":
        if den % self.den:
            raise ValueError("new denominator must be a multiple")
        k = den // self.den
        return FracSeries(den, {e * k: c for e, c in self.terms.items()}, self.prec)

    def __add__(self, other):
        if isinstance(other, (int, Fraction)):
            other = FracSeries(1, {0: other}, self.prec)
        d = self._common(other)
        a, b = self.rescaled(d), other.rescaled(d)
        prec = min(a.prec, b.prec)
        terms = dict(a.terms)
        for e, c in b.terms.items():
            terms[e] = terms.get(e, _ZERO) + c
        terms = {e: c for e, c in terms.items() if c and Fraction(e, d) < prec}
        return FracSeries(d, terms, prec)

    __radd__ = __add__

    def __neg__(self):
        return FracSeries(self.den, {e: -c for e, c in self.terms.items()}, self.prec)

    def __sub__(self, other):
        if isinstance(other, (int, Fraction)):
            other = FracSeries(1, {0: other}, self.prec)
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            c = _frac(other)
            return FracSeries(self.den, {e: c * v for e, v in self.terms.items()}, self.prec)
        if isinstance(other, QSeries):
            other = FracSeries.from_qseries(other)
        d = self._common(other)
        a, b = self.rescaled(d), other.rescaled(d)
        # window of the product, in q-units
        prec = min(a.prec + b.valuation(), b.prec + a.valuation())
        out: dict = {}
        cut = prec * d
        for e1, c1 in a.terms.items():
            for e2, c2 in b.terms.items():
                e = e1 + e2
                if e < cut:
                    out[e] = out.get(e, _ZERO) + c1 * c2
        return FracSeries(d, out, prec)

    __rmul__ = __mul__

    def deriv(self, order: int = 1) -> "FracSeries":
        """q d/dq: multiplies the coefficient of q^e by e."""
        terms = self.terms
        for _ in range(order):
            terms = {e: Fraction(e, self.den) * c for e, c in terms.items()}
        return FracSeries(self.den, terms, self.prec)

    def truncate(self, prec) -> "FracSeries":
        prec = Fraction(prec)
        if prec > self.prec:
            raise PrecisionError("cannot extend precision by truncation")
        cut = prec * self.den
        return FracSeries(self.den, {e: c for e, c in self.terms.items() if e < cut}, prec)

    def __eq__(self, other):
        if not isinstance(other, FracSeries):
            return NotImplemented
        d = self._common(other)
        a, b = self.rescaled(d), other.rescaled(d)
        prec = min(a.prec, b.prec) * d
        for e in set(a.terms) | set(b.terms):
            if e < prec and a.terms.get(e, _ZERO) != b.terms.get(e, _ZERO):
                return False
        return True

    def __hash__(self):
        return hash((self.den, tuple(sorted(self.terms.items())), self.prec))

    def __repr__(self):
        parts = [f"{c}*q^({e}/{self.den})" for e, c in sorted(self.terms.items())[:5]]
        return f"FracSeries({' + '.join(parts) if parts else '0'} + O(q^{self.prec}))"


@dataclass(frozen=True)
class Relation:
    """Finitely supported integer vector m -> lambda_m (m >= 1) for weight 2k."""

    entries: dict
    k: int

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        cleaned = {}
        for m, lam in self.entries.items():
            if not isinstance(m, int) or m < 1:
                raise ValueError("indices must be integers >= 1")
            if not isinstance(lam, int):
                raise ValueError("values must be integers")
            if lam:
                cleaned[m] = lam
        if not cleaned:
            raise ValueError("support must be nonempty")
        object.__setattr__(self, "entries", dict(sorted(cleaned.items())))

    @property
    def max_index(self) -> int:
        return max(self.entries)

    def items(self):
        return self.entries.items()


# --- classical series --------------------------------------------------------


def eisenstein(k: int, prec: int) -> QSeries:
    """Normalized Eisenstein series E_k = 1 - (2k/B_k) sum sigma_{k-1}(n) q^n."""
    if k < 4 or k % 2:
        raise ValueError("k must be even and >= 4")
    if prec < 1:
        raise ValueError("prec must be >= 1")
    factor = Fraction(-2 * k) / bernoulli_number(k)
    coeffs = [Fraction(1)] + [factor * sigma(n, k - 1) for n in range(1, prec)]
    return QSeries(0, coeffs, prec, weight=k)


def delta(prec: int) -> QSeries:
    """Discriminant cusp form (E4^3 - E6^2)/1728, valuation 1."""
    if prec < 2:
        raise ValueError("prec must be >= 2")
    # products lose nothing here: both factors have valuation 0
    e4 = eisenstein(4, prec)
    e6 = eisenstein(6, prec)
    d = (e4 * e4 * e4 - e6 * e6) * Fraction(1, 1728)
    return d.with_weight(12)


def series_div(a: QSeries, b: QSeries) -> QSeries:
    """Laurent quotient a/b with the guaranteed-correct window."""
    if b.is_zero():
        raise ZeroDivisionError("division by zero series")
    q = a * b.inverse()
    if a.weight is not None and b.weight is not None:
        return q.with_weight(a.weight - b.weight)
    return q


def modular_basis(weight: int, prec: int):
    """Echelonized basis of M_weight(SL2(Z)) with leading terms q^0..q^(d-1)."""
    if weight < 0 or weight % 2:
        return []
    if weight == 0:
        return [QSeries.one(prec, 0)]
    monomials = []
    for a in range(weight // 4 + 1):
        rem = weight - 4 * a
        if rem % 6 == 0:
            monomials.append((a, rem // 6))
    if not monomials:
        return []
    e4 = eisenstein(4, prec)
    e6 = eisenstein(6, prec)
    rows = []
    for a, b in monomials:
        f = QSeries.one(prec, 0)
        for _ in range(a):
            f = f * e4
        for _ in range(b):
            f = f * e6
        rows.append([f[n] for n in range(prec)])
    reduced = _rref(rows)
    basis = []
    for row in reduced:
        if any(row):
            basis.append(QSeries(0, row, prec, weight))
    return basis


def _rref(rows):
    """Reduced row echelon form over Fractions; returns new row list."""
    rows = [list(r) for r in rows]
    nrows, ncols = len(rows), len(rows[0]) if rows else 0
    pivot_row = 0
    for col in range(ncols):
        pr = None
        for r in range(pivot_row, nrows):
            if rows[r][col]:
                pr = r
                break
        if pr is None:
            continue
        rows[pivot_row], rows[pr] = rows[pr], rows[pivot_row]
        pv = rows[pivot_row][col]
        rows[pivot_row] = [c / pv for c in rows[pivot_row]]
        for r in range(nrows):
            if r != pivot_row and rows[r][col]:
                f = rows[r][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[pivot_row])]
        pivot_row += 1
        if pivot_row == nrows:
            break
    return rows


def dim_cusp_forms(weight: int) -> int:
    """Dimension of S_weight(SL2(Z)) (even weight)."""
    if weight < 12 or weight % 2:
        return 0
    d = weight // 12
    if weight % 12 == 2:
        return d - 1
    return d


def cusp_basis(weight: int, prec: int = None):
    """Echelonized basis of S_weight(SL2(Z)) with leading terms q, q^2, ..."""
    dim = dim_cusp_forms(weight)
    if dim == 0:
        return []
    if prec is None:
        prec = dim + 2
    prec = max(prec, dim + 1)
    mb = modular_basis(weight, prec)
    # rows with leading exponent >= 1 form the cusp subspace in echelon form
    return [f for f in mb if f.valuation >= 1]


def is_relation(lam: Relation) -> bool:
    """True iff sum lambda_m a_m(f) = 0 for every cusp form f of weight 2k."""
    basis = cusp_basis(2 * lam.k, prec=lam.max_index + 2)
    for f in basis:
        if sum(c * f[m] for m, c in lam.items()) != 0:
            return False
    return True


def g_lambda(lam: Relation, prec: int) -> QSeries:
    """The weakly holomorphic form of weight 2-2k with principal part
    sum lambda_m q^(-m), computed exactly.

    Strategy: a candidate g times delta^M lands in the holomorphic space of
    weight 2-2k+12M once M >= max_index and the weight is nonnegative; the
    principal-part conditions become a rational linear system against the
    echelon basis of that space.  Inconsistency of the system is exactly the
    Serre-duality obstruction, reported as NotARelation with the obstructing
    cusp form attached.
    """
    k = lam.k
    w = 2 - 2 * k
    maxm = lam.max_index
    M = maxm
    while w + 12 * M < 0:
        M += 1
    W = w + 12 * M
    work = max(prec, 1) + M + 2
    basis = modular_basis(W, work + M)
    if not basis:
        raise NotARelation("ambient holomorphic space is empty")
    dM = delta(work + M + maxm)
    dpow = QSeries.one(dM.prec, 0)
    for _ in range(M):
        dpow = dpow * dM
    dpow_inv = dpow.inverse()
    # Laurent expansions h_i / delta^M, window down to q^(-M)
    expansions = [series_div(f, dpow) for f in basis]
    # conditions: coefficient of q^(-j) equals lambda_j (0 outside support)
    rows = []
    rhs = []
    for j in range(M, 0, -1):
        rows.append([e[-j] for e in expansions])
        rhs.append(Fraction(lam.entries.get(j, 0)))
    sol = _solve_exact(rows, rhs)
    if sol is None:
        # recover the obstructing cusp form for diagnostics
        witness = None
        for f in cusp_basis(2 * k, prec=maxm + 2):
            if sum(c * f[m] for m, c in lam.items()) != 0:
                witness = f
                break
        raise NotARelation(
            "no weakly holomorphic form has this principal part", obstruction=witness
        )
    g = QSeries.zero(expansions[0].prec, None)
    for c, e in zip(sol, expansions):
        if c:
            g = g + c * e
    g = g.truncate(prec).with_weight(w)
    for n, c in g.coefficients():
        assert c.denominator == 1, f"non-integral coefficient at q^{n}"
    return g


def _solve_exact(rows, rhs):
    """Solve an exact linear system; None if inconsistent.

    The systems here have a unique solution when consistent (injectivity
    comes from the absence of holomorphic forms in negative weight).
    """
    m = len(rows)
    n = len(rows[0]) if rows else 0
    aug = [list(r) + [b] for r, b in zip(rows, rhs)]
    pivots = []
    row = 0
    for col in range(n):
        pr = next((r for r in range(row, m) if aug[r][col]), None)
        if pr is None:
            continue
        aug[row], aug[pr] = aug[pr], aug[row]
        pv = aug[row][col]
        aug[row] = [c / pv for c in aug[row]]
        for r in range(m):
            if r != row and aug[r][col]:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[row])]
        pivots.append(col)
        row += 1
        if row == m:
            break
    for r in range(row, m):
        if aug[r][n]:
            return None
    sol = [_ZERO] * n
    for r, col in enumerate(pivots):
        sol[col] = aug[r][n]
    return sol


def hecke(f: QSeries, m: int, weight: int, paper_normalization: bool = False) -> QSeries:
    """Hecke operator T_m on q-expansions.

    Classical coefficient rule: b_n = sum_{d | gcd(n, m), d > 0}
    d^(weight-1) a_(n m / d^2), negative indices of weak forms included.
    With paper_normalization=True the result is scaled by m^(weight-1)...
    rather: the m^{-1}-normalized average over determinant-m cosets, which
    for weight w equals m^(1-w) times the classical rule.  At weight 0 the
    two coincide.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if f.weight is not None and weight != f.weight:
        raise ValueError("weight tag mismatch")
    if m == 1:
        return f.with_weight(weight)
    val_out = f.valuation * m if f.valuation < 0 else -((-f.valuation) // m)
    prec_out = (f.prec - 1) // m + 1
    if prec_out <= val_out:
        raise PrecisionError("input window too small for this Hecke index")
    coeffs = []
    for n in range(val_out, prec_out):
        b = _ZERO
        g = m if n == 0 else gcd(abs(n), m)
        for d in range(1, g + 1):
            if g % d == 0:
                b += Fraction(d) ** (weight - 1) * f[n * m // (d * d)]
        coeffs.append(b)
    out = QSeries(val_out, coeffs, prec_out, weight)
    if paper_normalization:
        out = out * (Fraction(m) ** (1 - weight))
    return out
