"""Even lattices, discriminant groups, Weil representation, coset theta
series, short-vector enumeration, and the 2x2 integer matrix lattice with its
CM splittings.

Conventions.  A lattice is stored through an integer Gram matrix together
with an optional embedding into an ambient rational quadratic space (rows of
`basis` are ambient vectors; `ambient_gram` is the ambient bilinear form).
The norm is x^2 = (x, x) and q(x) = (x, x)/2.  The 2x2 matrix lattice uses
coordinates (a, b, c, d) for (a b; c d) with q = -det, which makes it even
unimodular of signature (2, 2).

All discriminant-group phases are exact rationals; Weil matrices live in
cyclotomic fields (see cyclo).  Short vectors are enumerated by exact
rational Cholesky branch-and-bound, optionally through a write-once disk
cache.
"""

from __future__ import annotations

import os
import re
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, isqrt

from mpmath import mp

from .cyclo import Cyclo, sqrt_as_cyclo, sqrt_order, _lcm
from .errors import LatticeError, NotSameField
from .exactq import FracSeries

_ZERO = Fraction(0)


# --- exact integer/rational linear algebra ------------------------------------


def integer_kernel(A):
    """Basis of {x in Z^n : A x = 0} via unimodular column reduction.

    A is a list of integer rows.  The returned vectors generate the full
    (saturated) kernel lattice.
    """
    if not A:
        raise ValueError("empty matrix")
    m, n = len(A), len(A[0])
    work = [list(r) for r in A]
    U = [[1 if i == j else 0 for j in range(n)] for i in range(n)]  # columns tracked

    def col_addmul(j, i, t):
        for r in range(m):
            work[r][j] += t * work[r][i]
        for r in range(n):
            U[r][j] += t * U[r][i]

    def col_swap(i, j):
        for r in range(m):
            work[r][i], work[r][j] = work[r][j], work[r][i]
        for r in range(n):
            U[r][i], U[r][j] = U[r][j], U[r][i]

    pivot_col = 0
    for row in range(m):
        # euclidean reduction across columns pivot_col..n-1 on this row
        while True:
            nz = [j for j in range(pivot_col, n) if work[row][j]]
            if not nz:
                break
            jmin = min(nz, key=lambda j: abs(work[row][j]))
            col_swap(pivot_col, jmin)
            done = True
            for j in range(pivot_col + 1, n):
                if work[row][j]:
                    t = -(work[row][j] // work[row][pivot_col])
                    col_addmul(j, pivot_col, t)
                    if work[row][j]:
                        done = False
            if done:
                break
        if any(work[row][j] for j in range(pivot_col, n)):
            pivot_col += 1
            if pivot_col == n:
                break
    kernel = []
    for j in range(pivot_col, n):
        if all(work[r][j] == 0 for r in range(m)):
            kernel.append([U[r][j] for r in range(n)])
    return kernel


def integer_kernel_rational(rows):
    """Integer kernel of a rational matrix (denominators cleared per row)."""
    cleared = []
    for r in rows:
        den = 1
        for c in r:
            den = den * c.denominator // gcd(den, c.denominator)
        cleared.append([int(c * den) for c in r])
    return integer_kernel(cleared)


def smith_normal_form(A):
    """U A V = D diagonal; returns (D, U, V) over the integers."""
    A = [list(r) for r in A]
    m, n = len(A), len(A[0])
    U = [[int(i == j) for j in range(m)] for i in range(m)]
    V = [[int(i == j) for j in range(n)] for i in range(n)]

    def row_op(i, j, t):
        A[j] = [a + t * b for a, b in zip(A[j], A[i])]
        U[j] = [a + t * b for a, b in zip(U[j], U[i])]

    def col_op(i, j, t):
        for r in range(m):
            A[r][j] += t * A[r][i]
        for r in range(n):
            V[r][j] += t * V[r][i]

    def row_swap(i, j):
        A[i], A[j] = A[j], A[i]
        U[i], U[j] = U[j], U[i]

    def col_swap(i, j):
        for r in range(m):
            A[r][i], A[r][j] = A[r][j], A[r][i]
        for r in range(n):
            V[r][i], V[r][j] = V[r][j], V[r][i]

    k = 0
    while k < min(m, n):
        # find smallest nonzero entry in the remaining block
        best = None
        for i in range(k, m):
            for j in range(k, n):
                if A[i][j] and (best is None or abs(A[i][j]) < abs(A[best[0]][best[1]])):
                    best = (i, j)
        if best is None:
            break
        row_swap(k, best[0])
        col_swap(k, best[1])
        dirty = False
        for i in range(k + 1, m):
            if A[i][k]:
                row_op(k, i, -(A[i][k] // A[k][k]))
                dirty = dirty or A[i][k] != 0
        for j in range(k + 1, n):
            if A[k][j]:
                col_op(k, j, -(A[k][j] // A[k][k]))
                dirty = dirty or A[k][j] != 0
        if dirty:
            continue
        # divisibility fixup so d_k | d_{k+1}
        offender = None
        for i in range(k + 1, m):
            for j in range(k + 1, n):
                if A[i][j] % A[k][k]:
                    offender = i
                    break
            if offender:
                break
        if offender is not None:
            row_op(offender, k, 1)
            continue
        if A[k][k] < 0:
            A[k] = [-a for a in A[k]]
            U[k] = [-a for a in U[k]]
        k += 1
    return A, U, V


def rational_inverse(A):
    """Inverse of a square rational matrix, exact."""
    n = len(A)
    aug = [[Fraction(A[i][j]) for j in range(n)] + [Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col]), None)
        if piv is None:
            raise LatticeError("singular matrix")
        aug[col], aug[piv] = aug[piv], aug[col]
        pv = aug[col][col]
        aug[col] = [c / pv for c in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def mat_vec(A, v):
    return [sum(a * b for a, b in zip(row, v)) for row in A]


def det_int(A):
    """Determinant of an integer matrix by fraction-free Gaussian elimination."""
    n = len(A)
    M = [[Fraction(x) for x in row] for row in A]
    det = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col]), None)
        if piv is None:
            return 0
        if piv != col:
            M[col], M[piv] = M[piv], M[col]
            det = -det
        det *= M[col][col]
        inv = 1 / M[col][col]
        for r in range(col + 1, n):
            if M[r][col]:
                f = M[r][col] * inv
                M[r] = [a - f * b for a, b in zip(M[r], M[col])]
    assert det.denominator == 1
    return int(det)


# --- lattices ------------------------------------------------------------------


class EvenLattice:
    """Integral Gram matrix with even diagonal, optionally embedded."""

    __slots__ = ("gram", "basis", "ambient_gram", "_signature", "_disc")

    def __init__(self, gram, basis=None, ambient_gram=None):
        gram = tuple(tuple(int(x) for x in row) for row in gram)
        n = len(gram)
        for i in range(n):
            if len(gram[i]) != n:
                raise LatticeError("gram matrix must be square")
            if gram[i][i] % 2:
                raise LatticeError("gram diagonal must be even")
            for j in range(n):
                if gram[i][j] != gram[j][i]:
                    raise LatticeError("gram matrix must be symmetric")
        self.gram = gram
        self.basis = None if basis is None else tuple(tuple(Fraction(x) for x in row) for row in basis)
        self.ambient_gram = (
            None if ambient_gram is None else tuple(tuple(Fraction(x) for x in row) for row in ambient_gram)
        )
        self._signature = None
        self._disc = None

    @property
    def rank(self) -> int:
        return len(self.gram)

    @property
    def det(self) -> int:
        return det_int(self.gram)

    @property
    def signature(self):
        """(b+, b-) by exact congruence diagonalization."""
        if self._signature is None:
            n = self.rank
            M = [[Fraction(x) for x in row] for row in self.gram]
            pos = neg = 0
            idx = 0
            while idx < n:
                if M[idx][idx] == 0:
                    j = next((j for j in range(idx + 1, n) if M[idx][j]), None)
                    if j is None:
                        idx += 1
                        continue
                    # make the diagonal entry nonzero: row/col i += row/col j
                    for t in range(n):
                        M[idx][t] += M[j][t]
                    for t in range(n):
                        M[t][idx] += M[t][j]
                d = M[idx][idx]
                if d > 0:
                    pos += 1
                else:
                    neg += 1
                for r in range(idx + 1, n):
                    if M[r][idx]:
                        f = M[r][idx] / d
                        for t in range(n):
                            M[r][t] -= f * M[idx][t]
                        for t in range(n):
                            M[t][r] -= f * M[t][idx]
                idx += 1
            self._signature = (pos, neg)
        return self._signature

    def is_positive_definite(self):
        return self.signature == (self.rank, 0)

    def is_negative_definite(self):
        return self.signature == (0, self.rank)

    def bilinear(self, x, y):
        """x^T gram y in lattice coordinates."""
        return sum(Fraction(xi) * sum(Fraction(g) * Fraction(yj) for g, yj in zip(row, y)) for xi, row in zip(x, self.gram))

    def qvalue(self, x) -> Fraction:
        return self.bilinear(x, x) / 2

    def ambient_vector(self, coords):
        if self.basis is None:
            return tuple(Fraction(c) for c in coords)
        n = len(self.basis[0])
        out = [_ZERO] * n
        for c, row in zip(coords, self.basis):
            c = Fraction(c)
            for i, b in enumerate(row):
                out[i] += c * b
        return tuple(out)

    def ambient_pairing(self, v, w):
        G = self.ambient_gram if self.ambient_gram is not None else self.gram
        return sum(Fraction(vi) * sum(Fraction(g) * Fraction(wj) for g, wj in zip(row, w)) for vi, row in zip(v, G))

    def coords_of(self, ambient_v):
        """Lattice-basis coordinates of an ambient vector in the rational span."""
        if self.basis is None:
            return tuple(Fraction(x) for x in ambient_v)
        rhs = [self.ambient_pairing(row, ambient_v) for row in self.basis]
        Ginv = rational_inverse([[Fraction(x) for x in row] for row in self.gram])
        coords = mat_vec(Ginv, rhs)
        # consistency: the vector must lie in the span
        recon = self.ambient_vector(coords)
        if tuple(recon) != tuple(Fraction(x) for x in ambient_v):
            raise LatticeError("vector not in the rational span of the lattice")
        return tuple(coords)

    def contains(self, ambient_v) -> bool:
        try:
            coords = self.coords_of(ambient_v)
        except LatticeError:
            return False
        return all(c.denominator == 1 for c in coords)

    def __repr__(self):
        return f"EvenLattice(gram={self.gram})"


@dataclass(frozen=True)
class DiscGroup:
    """Coset representatives of L'/L with exact q-values mod 1."""

    lattice: EvenLattice
    reps: tuple  # lattice-basis coordinates, each a tuple of Fractions in [0,1)
    elementary_divisors: tuple
    qvals: tuple  # q(rep) mod 1

    @property
    def order(self) -> int:
        return len(self.reps)

    def index_of(self, coords) -> int:
        key = tuple(Fraction(c) % 1 for c in coords)
        return self._lookup()[key]

    def _lookup(self):
        if not hasattr(self, "_lookup_cache"):
            object.__setattr__(
                self, "_lookup_cache", {tuple(c % 1 for c in r): i for i, r in enumerate(self.reps)}
            )
        return self._lookup_cache

    def neg_index(self, i: int) -> int:
        return self.index_of(tuple(-c for c in self.reps[i]))

    def pairing(self, i: int, j: int) -> Fraction:
        """(rep_i, rep_j) mod 1."""
        return self.lattice.bilinear(self.reps[i], self.reps[j]) % 1

    def phase_denominator(self) -> int:
        den = 1
        for i in range(self.order):
            den = _lcm(den, (self.qvals[i] % 1).denominator)
        for i in range(self.order):
            den = _lcm(den, max((self.pairing(i, j)).denominator for j in range(self.order)))
        return den


def disc_group(L: EvenLattice) -> DiscGroup:
    """Smith-normal-form coset representatives of L'/L (cached on L)."""
    if L._disc is not None:
        return L._disc
    d = L.det
    if d == 0:
        raise LatticeError("degenerate lattice")
    n = L.rank
    D, U, V = smith_normal_form([list(r) for r in L.gram])
    divisors = [D[i][i] for i in range(n)]
    Uinv = rational_inverse(U)
    Ginv = rational_inverse([[Fraction(x) for x in row] for row in L.gram])
    reps = []
    qvals = []

    def gen(idx, current):
        if idx == n:
            reps.append(tuple(current))
            return
        for k in range(divisors[idx]):
            gen(idx + 1, current + [k])

    combos = []
    gen(0, [])
    combos, reps = reps, []
    for k in combos:
        # coset representative G^-1 U^-1 k, reduced mod Z^n
        w = mat_vec(Uinv, [Fraction(x) for x in k])
        r = mat_vec(Ginv, w)
        r = tuple(c % 1 for c in r)
        reps.append(r)
    reps = sorted(set(reps))
    if len(reps) != abs(d):
        raise LatticeError("internal error: wrong discriminant group order")
    qvals = tuple(L.qvalue(r) % 1 for r in reps)
    dg = DiscGroup(L, tuple(reps), tuple(e for e in divisors if e != 1), qvals)
    L._disc = dg
    return dg


# --- Weil representation -------------------------------------------------------


def _weil_order(dg: DiscGroup) -> int:
    return _lcm(_lcm(8, dg.phase_denominator()), sqrt_order(abs(dg.lattice.det)))


def weil_T(L: EvenLattice):
    """rho(T~) as an exact cyclotomic matrix: diagonal with entries e(q(nu))."""
    dg = disc_group(L)
    n = _weil_order(dg)
    size = dg.order
    M = [[Cyclo.rational(n, 0) for _ in range(size)] for _ in range(size)]
    for i, q in enumerate(dg.qvals):
        M[i][i] = Cyclo.root_of_unity(n, int(q * n), n)
    return M


def weil_S(L: EvenLattice):
    """rho(S~): i^((b- - b+)/2) |L'/L|^(-1/2) (e(-(mu, nu)))_{mu, nu}, exact."""
    dg = disc_group(L)
    n = _weil_order(dg)
    size = dg.order
    bp, bm = L.signature
    # i^((bm-bp)/2) = e((bm-bp)/8)
    phase = Cyclo.root_of_unity(n, (bm - bp) * (n // 8), n)
    invsqrt = sqrt_as_cyclo(size).promoted(n) * Fraction(1, size)
    scale = phase * invsqrt
    M = []
    for i in range(size):
        row = []
        for j in range(size):
            pair = dg.pairing(i, j)
            row.append(scale * Cyclo.root_of_unity(n, int((-pair % 1) * n), n))
        M.append(row)
    return M


# --- vector valued forms, res and tr -------------------------------------------


class VVForm:
    """Map from discriminant-group cosets to fractional-exponent q-series."""

    __slots__ = ("disc", "components", "weight")

    def __init__(self, disc: DiscGroup, components: dict, weight):
        self.disc = disc
        self.components = dict(components)
        self.weight = weight

    def component(self, i: int) -> FracSeries:
        if i in self.components:
            return self.components[i]
        prec = min((c.prec for c in self.components.values()), default=Fraction(1))
        return FracSeries(1, {}, prec)

    def __add__(self, other):
        if other.disc is not self.disc and other.disc.reps != self.disc.reps:
            raise LatticeError("mismatched discriminant groups")
        out = dict(self.components)
        for i, c in other.components.items():
            out[i] = out[i] + c if i in out else c
        return VVForm(self.disc, out, self.weight)

    def __mul__(self, scalar):
        return VVForm(self.disc, {i: c * scalar for i, c in self.components.items()}, self.weight)

    __rmul__ = __mul__

    def constant_terms(self):
        return {i: c.constant_term() for i, c in self.components.items()}


def _require_sublattice(L: EvenLattice, M: EvenLattice):
    for row in M.basis or ():
        if not L.contains(row):
            raise LatticeError("M is not a sublattice of L")
    if M.basis is None and L.basis is None:
        # coordinate lattices: require integer basis change with det != 0
        pass


def _dual_contains(L: EvenLattice, ambient_v) -> bool:
    """ambient_v in L' (integral pairing with every basis vector)."""
    basis = L.basis if L.basis is not None else tuple(
        tuple(Fraction(int(i == j)) for j in range(L.rank)) for i in range(L.rank)
    )
    return all(L.ambient_pairing(row, ambient_v).denominator == 1 for row in basis)


def res_map(L: EvenLattice, M: EvenLattice, f: VVForm) -> VVForm:
    """View a form on rho_L as a form on rho_M for finite-index M in L.

    Component at mu in M'/M is f at the image class in L'/L when mu lies in
    L'/M, zero otherwise.
    """
    _require_sublattice(L, M)
    dgL = f.disc
    dgM = disc_group(M)
    out = {}
    for i, rep in enumerate(dgM.reps):
        v = M.ambient_vector(rep)
        if not _dual_contains(L, v):
            continue
        lam = dgL.index_of(L.coords_of(v))
        comp = f.components.get(lam)
        if comp is not None:
            out[i] = comp
    return VVForm(dgM, out, f.weight)


def tr_map(L: EvenLattice, M: EvenLattice, g: VVForm) -> VVForm:
    """Adjoint direction: (tr g)_lambda = sum over mu in L'/M above lambda."""
    _require_sublattice(L, M)
    dgM = g.disc
    dgL = disc_group(L)
    out = {}
    for i, rep in enumerate(dgM.reps):
        v = M.ambient_vector(rep)
        if not _dual_contains(L, v):
            continue
        lam = dgL.index_of(L.coords_of(v))
        comp = g.components.get(i)
        if comp is None:
            continue
        out[lam] = out[lam] + comp if lam in out else comp
    return VVForm(dgL, out, g.weight)


# --- short vectors --------------------------------------------------------------


def _ldl(gram):
    """Exact LDL^T of a positive definite rational matrix: Q(x) = sum d_i (x_i + sum_{j>i} mu_ij x_j)^2."""
    n = len(gram)
    A = [[Fraction(gram[i][j]) for j in range(n)] for i in range(n)]
    d = [_ZERO] * n
    mu = [[_ZERO] * n for _ in range(n)]
    for i in range(n):
        d[i] = A[i][i]
        if d[i] <= 0:
            raise LatticeError("not positive definite")
        for j in range(i + 1, n):
            mu[i][j] = A[i][j] / d[i]
        for r in range(i + 1, n):
            for c in range(r, n):
                A[r][c] -= A[i][r] * A[i][c] / d[i]
                A[c][r] = A[r][c]
    return d, mu


def _floor_sqrt_frac(x: Fraction) -> int:
    """floor(sqrt(x)) for x >= 0 rational."""
    if x < 0:
        raise ValueError
    n, d = x.numerator, x.denominator
    return isqrt(n * d) // d


def _int_interval(center: Fraction, radius2: Fraction):
    """Integers t with (t + center)^2 <= radius2."""
    if radius2 < 0:
        return range(0, 0)
    r = _floor_sqrt_frac(radius2)
    lo = -center - r - 1
    hi = -center + r + 1
    lo_i = int(lo) - 1
    hi_i = int(hi) + 1
    while (lo_i + center) ** 2 > radius2:
        lo_i += 1
    while (hi_i + center) ** 2 > radius2:
        hi_i -= 1
    return range(lo_i, hi_i + 1)


def short_vectors(L: EvenLattice, bound, offset=None, include_zero=False, cache_dir=None):
    """All v in L + offset with |q(v)| <= bound, each exactly once,
    sorted by (|norm|, coordinates); deterministic.

    L must be definite.  `offset` is a rational coordinate vector; vectors
    returned are coordinate tuples of v - offset... rather, the enumerated
    lattice-plus-offset points x + offset are returned as (coords_of_x,
    q_value) with coords the integer part.  For offset = 0 the zero vector
    is omitted unless include_zero is set.
    """
    bound = Fraction(bound)
    if bound < 0:
        raise ValueError("bound must be >= 0")
    sig = L.signature
    if sig == (L.rank, 0):
        gram = L.gram
        sign = 1
    elif sig == (0, L.rank):
        gram = tuple(tuple(-x for x in row) for row in L.gram)
        sign = -1
    else:
        raise LatticeError("short_vectors needs a definite lattice")
    offset = tuple(Fraction(x) for x in (offset or (0,) * L.rank))

    if cache_dir is not None:
        cached = _cache_load(cache_dir, gram, bound, offset, sign)
        if cached is not None:
            return _filter_zero(cached, offset, include_zero)

    d, mu = _ldl(gram)
    n = L.rank
    out = []
    coords = [0] * n

    def descend(i, remaining):
        if i < 0:
            x = tuple(coords)
            qv = sign * sum(
                Fraction(gram[a][b]) * (coords[a] + offset[a]) * (coords[b] + offset[b])
                for a in range(n)
                for b in range(n)
            ) / 2
            out.append((x, qv))
            return
        center = offset[i] + sum(mu[i][j] * (coords[j] + offset[j]) for j in range(i + 1, n))
        for t in _int_interval(center, remaining / d[i]):
            coords[i] = t
            used = d[i] * (t + center) ** 2
            descend(i - 1, remaining - used)
        coords[i] = 0

    descend(n - 1, 2 * bound)
    out.sort(key=lambda vn: (abs(vn[1]), vn[0]))

    if cache_dir is not None:
        _cache_store(cache_dir, gram, bound, offset, sign, out)
    return _filter_zero(out, offset, include_zero)


def _filter_zero(vectors, offset, include_zero):
    if include_zero:
        return list(vectors)
    zero = tuple(0 for _ in offset)
    if any(o != 0 for o in offset):
        return list(vectors)
    return [vn for vn in vectors if vn[0] != zero]


def _cache_key(gram, bound, offset, sign):
    import hashlib

    blob = repr((gram, str(bound), tuple(str(o) for o in offset), sign)).encode()
    return hashlib.sha256(blob).hexdigest()[:24]


def _cache_load(cache_dir, gram, bound, offset, sign):
    path = os.path.join(cache_dir, f"sv-{_cache_key(gram, bound, offset, sign)}.txt")
    if not os.path.exists(path):
        return None
    n = len(gram)
    out = []
    with open(path) as fh:
        header = fh.readline().split()
        count = int(header[1])
        for line in fh:
            parts = line.split()
            coords = tuple(int(x) for x in parts[:n])
            qv = Fraction(int(parts[n]), int(parts[n + 1]))
            out.append((coords, qv))
    if len(out) != count:
        return None
    # validation: recompute every stored norm
    for coords, qv in out:
        x = [c + o for c, o in zip(coords, offset)]
        expect = sign * sum(Fraction(gram[a][b]) * x[a] * x[b] for a in range(n) for b in range(n)) / 2
        if expect != qv:
            return None
    return out


def _cache_store(cache_dir, gram, bound, offset, sign, vectors):
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(cache_dir, f"sv-{_cache_key(gram, bound, offset, sign)}.txt")
    if os.path.exists(path):  # write-once
        return
    fd, tmp = tempfile.mkstemp(dir=cache_dir)
    with os.fdopen(fd, "w") as fh:
        fh.write(f"count {len(vectors)}\n")
        for coords, qv in vectors:
            fh.write(" ".join(str(c) for c in coords) + f" {qv.numerator} {qv.denominator}\n")
    os.replace(tmp, path)


# --- coset theta series ----------------------------------------------------------


def coset_theta(M: EvenLattice, offset, prec, cache_dir=None) -> FracSeries:
    """theta_mu(tau) = sum_{m in mu + M} q^(-q(m)) for negative definite M.

    Exponents -q(m) are nonnegative rationals; coefficients count vectors.
    """
    if not M.is_negative_definite():
        raise LatticeError("coset theta needs a negative definite lattice")
    prec = Fraction(prec)
    den = 1
    qoff = M.qvalue(offset) % 1
    den = _lcm(den, qoff.denominator)
    vectors = short_vectors(M, prec, offset=offset, include_zero=True, cache_dir=cache_dir)
    terms = {}
    for coords, qv in vectors:
        e = -qv  # nonnegative
        if e >= prec:
            continue
        den = _lcm(den, e.denominator)
    out = {}
    for coords, qv in vectors:
        e = -qv
        if e >= prec:
            continue
        key = int(e * den)
        out[key] = out.get(key, _ZERO) + 1
    return FracSeries(den, out, prec)


def vartheta(L: EvenLattice, N: EvenLattice, M: EvenLattice, lam, nu, prec, cache_dir=None) -> FracSeries:
    """Entry theta_{lambda,nu} of the contraction matrix between rho_L and rho_N:

        sum over m in M' with m + nu in lambda + L of q^(-q(m)).

    lam and nu are coset indices into disc_group(L) and disc_group(N), or
    explicit ambient vectors.
    """
    dgL = disc_group(L)
    dgN = disc_group(N)
    dgM = disc_group(M)
    lam_v = dgL.lattice.ambient_vector(dgL.reps[lam]) if isinstance(lam, int) else tuple(map(Fraction, lam))
    nu_v = dgN.lattice.ambient_vector(dgN.reps[nu]) if isinstance(nu, int) else tuple(map(Fraction, nu))
    total = None
    for rep in dgM.reps:
        mu_v = M.ambient_vector(rep)
        w = tuple(a + b - c for a, b, c in zip(mu_v, nu_v, lam_v))
        if L.contains(w):
            theta = coset_theta(M, rep, prec, cache_dir=cache_dir)
            total = theta if total is None else total + theta
    if total is None:
        return FracSeries(1, {}, prec)
    return total


# --- the 2x2 integer matrix lattice ----------------------------------------------

# coordinates (a, b, c, d) for (a b; c d); bilinear form of q = -det
M2Z_GRAM = (
    (0, 0, 0, -1),
    (0, 0, 1, 0),
    (0, 1, 0, 0),
    (-1, 0, 0, 0),
)


def m2z_lattice() -> EvenLattice:
    return EvenLattice(M2Z_GRAM)


@dataclass
class GrassPoint:
    """Positive 2-plane of the matrix lattice attached to (tau1, tau2)."""

    tau1: object
    tau2: object
    X: tuple
    Y: tuple

    def invariant_residuals(self):
        """Numeric residuals of X^2 = Y^2 = 2 y1 y2 and (X, Y) = 0."""

        def pair(u, w):
            a1, b1, c1, d1 = u
            a2, b2, c2, d2 = w
            return -(a1 * d2 + d1 * a2 - b1 * c2 - c1 * b2)

        target = 2 * self.tau1.imag * self.tau2.imag
        return (
            abs(pair(self.X, self.X) - target),
            abs(pair(self.Y, self.Y) - target),
            abs(pair(self.X, self.Y)),
        )


def m2z_grassmannian(tau1, tau2) -> GrassPoint:
    """Numeric Grassmannian point: span of Re Z, Im Z for
    Z = (tau1 tau2, tau1; tau2, 1) in coordinates (a, b, c, d)."""
    tau1, tau2 = mp.mpc(tau1), mp.mpc(tau2)
    z = (tau1 * tau2, tau1, tau2, mp.mpc(1))
    X = tuple(w.real for w in z)
    Y = tuple(w.imag for w in z)
    return GrassPoint(tau1, tau2, X, Y)


def project(l, P: GrassPoint):
    """(l^2_{v+}/2, l^2_{v-}/2) for an integer matrix l = (a b; c d)."""
    a, b, c, d = (mp.mpf(x) for x in l)
    t1, t2 = P.tau1, P.tau2
    y1, y2 = t1.imag, t2.imag
    num = abs(d * t1 * t2 - c * t1 - b * t2 + a) ** 2
    plus = num / (4 * y1 * y2)
    q = b * c - a * d  # q(l) = -det
    return plus, q - plus


# --- exact CM points and splittings ----------------------------------------------


@dataclass(frozen=True)
class QuadPoint:
    """Exact point tau = re + im*sqrt(D)*i of the upper half plane,
    D squarefree positive."""

    re: Fraction
    im: Fraction  # coefficient of sqrt(D) * i; must be > 0
    D: int

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("D must be a positive integer")
        if self.im <= 0:
            raise ValueError("point must be in the upper half plane")

    def to_mpc(self):
        return mp.mpc(mp.mpf(self.re.numerator) / self.re.denominator,
                      mp.mpf(self.im.numerator) / self.im.denominator * mp.sqrt(self.D))

    def minimal_polynomial(self):
        """(A, B, C) with A tau^2 + B tau + C = 0, integral, gcd 1, A > 0."""
        # (tau - re)^2 = -im^2 D
        B2 = -2 * self.re
        C2 = self.re**2 + self.im**2 * self.D
        den = _lcm(B2.denominator, C2.denominator)
        A, B, C = den, int(B2 * den), int(C2 * den)
        g = gcd(gcd(abs(A), abs(B)), abs(C))
        return (A // g, B // g, C // g)

    @property
    def discriminant(self) -> int:
        A, B, C = self.minimal_polynomial()
        return B * B - 4 * A * C

    def __str__(self):
        return f"({self.re}) + ({self.im})*sqrt(-{self.D})"


_TOKEN = re.compile(r"\s*(?:(\d+)|(sqrt)|(i)|(.))")


class _PointParser:
    """Tiny recursive-descent parser for exact quadratic surds:
    integers, rationals, i, sqrt(-D), +, -, *, /, parentheses, and implicit
    multiplication as in '2i' or 'sqrt(-7)3'."""

    def __init__(self, text: str):
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m or m.group(4) is not None and m.group(4).isspace():
                pos = m.end() if m else pos + 1
                continue
            self.tokens.append(m.group(0).strip())
            pos = m.end()
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expect=None):
        tok = self.peek()
        if tok is None or (expect is not None and tok != expect):
            raise ValueError(f"parse error at token {tok!r}")
        self.pos += 1
        return tok

    # values are (re, co, D): re + co*sqrt(-D), D = 0 for rationals

    def parse(self):
        v = self.expr()
        if self.peek() is not None:
            raise ValueError("trailing input")
        return v

    def expr(self):
        v = self.term()
        while self.peek() in ("+", "-"):
            op = self.take()
            w = self.term()
            v = _surd_add(v, w if op == "+" else _surd_neg(w))
        return v

    def term(self):
        v = self.factor()
        while True:
            tok = self.peek()
            if tok in ("*", "/"):
                self.take()
                w = self.factor()
                v = _surd_mul(v, w) if tok == "*" else _surd_div(v, w)
            elif tok is not None and (tok.isdigit() or tok in ("i", "sqrt", "(")):
                v = _surd_mul(v, self.factor())  # implicit multiplication
            else:
                return v

    def factor(self):
        tok = self.peek()
        if tok == "-":
            self.take()
            return _surd_neg(self.factor())
        if tok == "+":
            self.take()
            return self.factor()
        if tok == "(":
            self.take()
            v = self.expr()
            self.take(")")
            return v
        if tok == "i":
            self.take()
            return (_ZERO, Fraction(1), 1)
        if tok == "sqrt":
            self.take()
            self.take("(")
            inner = self.expr()
            self.take(")")
            if inner[2] != 0 or inner[0] >= 0:
                raise ValueError("sqrt argument must be a negative rational")
            mag = -inner[0]
            if mag.denominator != 1:
                raise ValueError("sqrt argument must be a negative integer")
            s, d0 = _sqfree(int(mag))
            return (_ZERO, Fraction(s), d0)
        if tok is not None and tok.isdigit():
            self.take()
            return (Fraction(int(tok)), _ZERO, 0)
        raise ValueError(f"parse error at token {tok!r}")


def _sqfree(m: int):
    s, m0 = 1, 1
    d = 2
    while d * d <= m:
        e = 0
        while m % d == 0:
            m //= d
            e += 1
        s *= d ** (e // 2)
        if e % 2:
            m0 *= d
        d += 1
    m0 *= m
    return s, m0


def _surd_neg(v):
    return (-v[0], -v[1], v[2])


def _surd_add(v, w):
    if v[2] and w[2] and v[2] != w[2]:
        raise NotSameField("cannot mix different quadratic fields in one point")
    D = v[2] or w[2]
    co = v[1] + w[1]
    return (v[0] + w[0], co, D if co else 0)


def _surd_mul(v, w):
    if v[2] and w[2] and v[2] != w[2]:
        raise NotSameField("cannot mix different quadratic fields in one point")
    D = v[2] or w[2]
    re = v[0] * w[0] - v[1] * w[1] * (D if D else 0)
    co = v[0] * w[1] + v[1] * w[0]
    return (re, co, D if co else 0)


def _surd_div(v, w):
    if w[2] == 0:
        if w[0] == 0:
            raise ZeroDivisionError
        return (v[0] / w[0], v[1] / w[0], v[2])
    # multiply by conjugate
    conj = (w[0], -w[1], w[2])
    num = _surd_mul(v, conj)
    den = w[0] * w[0] + w[1] * w[1] * w[2]
    return (num[0] / den, num[1] / den, num[2])


def parse_cm_point(text: str) -> QuadPoint:
    """Parse exact CM-point syntax like 'i', '2i', '(1+3i)/2', '(1+sqrt(-7))/2'."""
    re_, co, D = _PointParser(text).parse()
    if D == 0 or co == 0:
        raise ValueError("point must have positive imaginary part")
    return QuadPoint(re_, co, D)


@dataclass
class CMSplitting:
    """Rational splitting N + M of the matrix lattice at a CM Grassmannian point."""

    D: int
    tau1: QuadPoint
    tau2: QuadPoint
    N: EvenLattice  # signature (2, 0), embedded
    M: EvenLattice  # signature (0, 2), embedded
    index: int  # [M2(Z) : N + M]

    @property
    def embedN(self):
        return self.N.basis

    @property
    def embedM(self):
        return self.M.basis


def cm_splitting(tau1: QuadPoint, tau2: QuadPoint) -> CMSplitting:
    """Intersect the rational plane spanned by Re Z, Im Z (and its orthogonal
    complement) with the integer matrix lattice; exact throughout."""
    if tau1.D != tau2.D:
        raise NotSameField(f"points generate Q(sqrt(-{tau1.D})) and Q(sqrt(-{tau2.D}))")
    D = tau1.D
    # Z = (tau1 tau2, tau1, tau2, 1) over Q(sqrt(-D)); split into
    # rational part X and sqrt(D)-coefficient part Y/sqrt(D)
    p1, q1 = tau1.re, tau1.im
    p2, q2 = tau2.re, tau2.im
    prod_re = p1 * p2 - q1 * q2 * D
    prod_im = p1 * q2 + q1 * p2
    X = (prod_re, p1, p2, Fraction(1))
    Yred = (prod_im, q1, q2, _ZERO)
    phi = [[Fraction(x) for x in row] for row in M2Z_GRAM]

    def pair_rows(v):
        return [sum(phi[i][j] * v[j] for j in range(4)) for i in range(4)]

    rowX = pair_rows(X)
    rowY = pair_rows(Yred)
    # v- = vectors orthogonal to v+ ; N = integer kernel of the v- equations
    M_basis = integer_kernel_rational([rowX, rowY])
    if len(M_basis) != 2:
        raise NotSameField("positive plane is not rational over Q")
    # v+ = orthogonal complement of v-, so N = integer vectors pairing to 0 with M
    rowM = [pair_rows([Fraction(x) for x in b]) for b in M_basis]
    N_basis = integer_kernel_rational(rowM)
    if len(N_basis) != 2:
        raise NotSameField("negative plane is not rational over Q")

    def build(basis):
        gram = [[0] * len(basis) for _ in range(len(basis))]
        for i, u in enumerate(basis):
            for j, w in enumerate(basis):
                val = sum(Fraction(u[a]) * phi[a][b] * w[b] for a in range(4) for b in range(4))
                assert val.denominator == 1
                gram[i][j] = int(val)
        return EvenLattice(gram, basis=basis, ambient_gram=M2Z_GRAM)

    N = build(N_basis)
    M = build(M_basis)
    if not N.is_positive_definite():
        N, M = M, N
    if not (N.is_positive_definite() and M.is_negative_definite()):
        raise LatticeError("splitting has wrong signatures")
    full = [list(N.basis[0]), list(N.basis[1]), list(M.basis[0]), list(M.basis[1])]
    index = abs(det_int([[int(x) for x in row] for row in full]))
    return CMSplitting(D=D, tau1=tau1, tau2=tau2, N=N, M=M, index=index)
