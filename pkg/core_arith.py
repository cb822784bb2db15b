"""Exact arithmetic substrate.

Rationals are sympy ``QQ`` elements, series live in ``QQ[lam]`` truncated at an
explicit order, rational functions are elements of the field ``QQ(lam)`` and
homogeneous polynomials have ``QQ(lam)`` coefficients.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache

from sympy import isprime, mod_inverse, multiplicity
from sympy.polys.domains import QQ
from sympy.polys.fields import FracElement, field
from sympy.polys.matrices import DomainMatrix
from sympy.polys.orderings import grlex
from sympy.polys.polyerrors import CoercionFailed
from sympy.polys.ring_series import rs_mul, rs_series_inversion, rs_trunc
from sympy.polys.rings import PolyElement, ring

from errors import DomainError, NonUnitError, UsageError

logger = logging.getLogger(__name__)

# Configuration
LAMBDA_NAME = 'lam'
T_NAME = 't'

FIELD, LAM = field(LAMBDA_NAME, QQ)   # QQ(lam)
RING = FIELD.ring                     # QQ[lam], the same cached ring as ring(LAMBDA_NAME, QQ)
LAM_POLY = RING.gens[0]
T_RING, T_POLY = ring(T_NAME, QQ)

# Rational functions in lam are plain field elements
RationalFunction = FracElement


class NoSolutionType:
    """Sentinel returned by linsolve_ratfun for inconsistent systems"""
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __bool__(self):
        return False

    def __repr__(self):
        return 'NoSolution'


NoSolution = NoSolutionType()


# ---------------------------------------------------------------- rationals

def to_rational(value):
    """Convert int, QQ element or a "num/den" string to QQ"""
    try:
        if isinstance(value, str):
            text = value.strip()
            if '/' in text:
                num, den = text.split('/', 1)
                if int(den) == 0:
                    raise UsageError(f"zero denominator in rational {value!r}")
                return QQ(int(num), int(den))
            return QQ(int(text))
        return QQ.convert(value)
    except (ValueError, TypeError, CoercionFailed) as exc:
        raise UsageError(f"not a rational number: {value!r}") from exc


def rational_to_str(q):
    """Serialize a rational as "num/den", den omitted when 1"""
    q = QQ.convert(q)
    num, den = int(QQ.numer(q)), int(QQ.denom(q))
    return str(num) if den == 1 else f"{num}/{den}"


def p_valuation(q, p):
    """p-adic valuation of a nonzero rational"""
    num, den = int(QQ.numer(q)), int(QQ.denom(q))
    return int(multiplicity(p, abs(num))) - int(multiplicity(p, den))


# ---------------------------------------------------------------- polynomials in lam

def poly_from_coeffs(coeffs, poly_ring=RING):
    """Dense coefficient list (constant term first) to a univariate polynomial"""
    return poly_ring.from_dict({(k,): to_rational(c) for k, c in enumerate(coeffs)})


def poly_coeffs(poly):
    """Dense coefficient list of a univariate polynomial, constant term first"""
    if not poly:
        return []
    top = poly.degree()
    return [poly.get((k,), QQ.zero) for k in range(top + 1)]


def poly_valuation(poly):
    """Lowest exponent present in a nonzero univariate polynomial"""
    return min(monom[0] for monom in poly.keys())


def poly_shift(poly, m):
    """Multiply by lam**m; negative m requires the dropped terms to be absent"""
    if m < 0 and poly and poly_valuation(poly) < -m:
        raise DomainError(f"cannot divide by lam^{-m}: valuation is {poly_valuation(poly)}")
    return poly.ring.from_dict({(k + m,): c for (k,), c in poly.items()})


def poly_compose_power(poly, p):
    """Substitute lam -> lam**p"""
    return poly.ring.from_dict({(k * p,): c for (k,), c in poly.items()})


# ---------------------------------------------------------------- rational functions

def ratfun(numer, denom=1):
    """Build a reduced element of QQ(lam)"""
    numer = numer if isinstance(numer, PolyElement) else RING(numer)
    denom = denom if isinstance(denom, PolyElement) else RING(denom)
    if not denom:
        raise DomainError("rational function with zero denominator")
    return FIELD.new(numer, denom)


def ratfun_value_at_zero(f):
    """Value at lam = 0 of a rational function regular there"""
    den0 = f.denom.get((0,), QQ.zero)
    if not den0:
        raise DomainError(f"{f.as_expr()} has a pole at lam = 0")
    return f.numer.get((0,), QQ.zero) / den0


def laurent_split(f):
    """Write f = lam**v * g with g regular and nonzero at 0; returns (v, g)"""
    if not f:
        return 0, FIELD.zero
    vn, vd = poly_valuation(f.numer), poly_valuation(f.denom)
    g = FIELD.new(poly_shift(f.numer, -vn), poly_shift(f.denom, -vd))
    return vn - vd, g


def pole_order_at_zero(f):
    return max(0, -laurent_split(f)[0])


def ratfun_compose_power(f, p):
    """f(lam**p) for a rational function f"""
    return FIELD.new(poly_compose_power(f.numer, p), poly_compose_power(f.denom, p))


def ratfun_to_json(f):
    """Numerator and monic denominator as dense coefficient arrays"""
    lc = f.denom.LC
    numer = f.numer.quo_ground(lc)
    denom = f.denom.quo_ground(lc)
    return {
        'numerator': [rational_to_str(c) for c in poly_coeffs(numer)],
        'denominator': [rational_to_str(c) for c in poly_coeffs(denom)],
    }


# ---------------------------------------------------------------- truncated series

class TruncSeries:
    """Power series in lam known modulo lam**order"""
    __slots__ = ('poly', 'order')

    def __init__(self, poly, order):
        if order < 0:
            raise UsageError(f"negative truncation order {order}")
        if not isinstance(poly, PolyElement) or poly.ring != RING:
            poly = RING(poly)
        self.poly = rs_trunc(poly, LAM_POLY, order)
        self.order = order

    @classmethod
    def from_coeffs(cls, coeffs, order=None):
        order = len(coeffs) if order is None else order
        return cls(poly_from_coeffs(coeffs[:order]), order)

    @classmethod
    def zero(cls, order):
        return cls(RING.zero, order)

    @classmethod
    def one(cls, order):
        return cls(RING.one, order)

    @classmethod
    def monomial(cls, k, order, coeff=1):
        return cls(RING({(k,): to_rational(coeff)}), order)

    @property
    def coeffs(self):
        return [self.poly.get((k,), QQ.zero) for k in range(self.order)]

    def coeff(self, k):
        if k >= self.order:
            raise UsageError(f"coefficient {k} is beyond truncation order {self.order}")
        return self.poly.get((k,), QQ.zero)

    def value_at_zero(self):
        return self.coeff(0) if self.order else QQ.zero

    def valuation(self):
        """Index of the first nonzero coefficient, None if zero to this order"""
        if not self.poly:
            return None
        return poly_valuation(self.poly)

    def is_zero(self):
        return not self.poly

    def _check(self, other):
        if not isinstance(other, TruncSeries):
            raise UsageError(f"expected a TruncSeries, got {type(other).__name__}")
        if other.order != self.order:
            raise UsageError(f"mismatched truncation orders {self.order} and {other.order}")

    def __add__(self, other):
        self._check(other)
        return TruncSeries(self.poly + other.poly, self.order)

    def __sub__(self, other):
        self._check(other)
        return TruncSeries(self.poly - other.poly, self.order)

    def __neg__(self):
        return TruncSeries(-self.poly, self.order)

    def __mul__(self, other):
        if isinstance(other, TruncSeries):
            return series_mul(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __eq__(self, other):
        if not isinstance(other, TruncSeries):
            return NotImplemented
        return self.order == other.order and self.poly == other.poly

    def __hash__(self):
        return hash((self.order, tuple(sorted(self.poly.items()))))

    def __repr__(self):
        return f"TruncSeries({self.poly.as_expr()} + O({LAMBDA_NAME}^{self.order}))"

    def scale(self, c):
        return TruncSeries(self.poly.mul_ground(to_rational(c)), self.order)

    def mul_poly(self, poly):
        """Multiply by a polynomial in lam, keeping the order"""
        return TruncSeries(rs_mul(self.poly, poly, LAM_POLY, self.order), self.order)

    def truncate(self, order):
        if order > self.order:
            raise UsageError(f"cannot extend series of order {self.order} to {order}")
        return TruncSeries(self.poly, order)

    def shift(self, m):
        """Multiply by lam**m; m < 0 divides and requires the low terms to vanish"""
        return TruncSeries(poly_shift(self.poly, m), max(self.order + m, 0))

    def compose_power(self, p):
        """Substitute lam -> lam**p; order m becomes p*(m-1)+1"""
        if p < 1:
            raise UsageError(f"composition power must be positive, got {p}")
        new_order = p * (self.order - 1) + 1 if self.order else 0
        return TruncSeries(poly_compose_power(self.poly, p), new_order)

    def derive(self):
        return series_derive(self)

    def inverse(self):
        return series_inverse(self)

    def to_json(self):
        return [rational_to_str(c) for c in self.coeffs]


def series_mul(a, b):
    a._check(b)
    return TruncSeries(rs_mul(a.poly, b.poly, LAM_POLY, a.order), a.order)


def series_add(a, b):
    return a + b


def series_sub(a, b):
    return a - b


def series_scale(a, c):
    return a.scale(c)


def series_shift(a, m):
    return a.shift(m)


def series_compose_power(a, p):
    return a.compose_power(p)


def series_inverse(a):
    """Multiplicative inverse of a unit series"""
    if not a.value_at_zero():
        raise NonUnitError("series with zero constant term is not invertible")
    return TruncSeries(rs_series_inversion(a.poly, LAM_POLY, a.order), a.order)


def series_derive(a):
    """d/dlam; the order drops by one"""
    return TruncSeries(a.poly.diff(LAM_POLY), max(a.order - 1, 0))


def series_of_ratfun(f, order):
    """Expansion of a rational function regular at lam = 0"""
    f = FIELD(f)
    if not f.denom.get((0,), QQ.zero):
        raise DomainError(f"{f.as_expr()} has a pole at lam = 0")
    return TruncSeries(f.numer, order) * series_inverse(TruncSeries(f.denom, order))


# ---------------------------------------------------------------- homogeneous polynomials

@lru_cache(maxsize=None)
def homog_ring(n):
    """QQ(lam)[X1..Xn] with graded lexicographic monomial order"""
    names = ','.join(f"X{i}" for i in range(1, n + 1))
    return ring(names, FIELD.to_domain(), grlex)[0]


class HomogPoly:
    """Homogeneous polynomial in X1..Xn with QQ(lam) coefficients"""
    __slots__ = ('n', 'degree', 'poly')

    def __init__(self, poly, degree):
        for monom in poly.keys():
            if sum(monom) != degree:
                raise UsageError(f"monomial {monom} does not have degree {degree}")
        self.n = poly.ring.ngens
        self.degree = degree
        self.poly = poly

    @classmethod
    def zero(cls, n, degree):
        return cls(homog_ring(n).zero, degree)

    @classmethod
    def from_terms(cls, n, degree, terms):
        R = homog_ring(n)
        return cls(R.from_dict({tuple(e): FIELD(c) for e, c in terms.items()}), degree)

    @classmethod
    def monomial(cls, exponents, coeff=1):
        exponents = tuple(exponents)
        return cls.from_terms(len(exponents), sum(exponents), {exponents: coeff})

    @property
    def terms(self):
        return dict(self.poly.items())

    def is_zero(self):
        return not self.poly

    def _check(self, other):
        if other.n != self.n or other.degree != self.degree:
            raise UsageError(
                f"cannot combine degree {self.degree} and degree {other.degree} polynomials")

    def __add__(self, other):
        self._check(other)
        return HomogPoly(self.poly + other.poly, self.degree)

    def __sub__(self, other):
        self._check(other)
        return HomogPoly(self.poly - other.poly, self.degree)

    def __neg__(self):
        return HomogPoly(-self.poly, self.degree)

    def __eq__(self, other):
        if not isinstance(other, HomogPoly):
            return NotImplemented
        return self.n == other.n and self.degree == other.degree and self.poly == other.poly

    def __repr__(self):
        return f"HomogPoly(degree={self.degree}, {self.poly})"

    def scale(self, c):
        return HomogPoly(self.poly.mul_ground(FIELD(c)), self.degree)

    def mul_monomial(self, exponents, coeff=1):
        exponents = tuple(exponents)
        return HomogPoly(self.poly.mul_term((exponents, FIELD(coeff))), self.degree + sum(exponents))

    def mul(self, other):
        return HomogPoly(self.poly * other.poly, self.degree + other.degree)

    def partial(self, i):
        """Derivative in X_{i+1}"""
        return HomogPoly(self.poly.diff(self.poly.ring.gens[i]), self.degree - 1)

    def lambda_derivative(self):
        """Apply lam * d/dlam to every coefficient"""
        R = self.poly.ring
        terms = {m: LAM * c.diff(LAM) for m, c in self.poly.items()}
        return HomogPoly(R.from_dict(terms), self.degree)


# ---------------------------------------------------------------- linear algebra over QQ(lam)

def linsolve_ratfun(M, rhs):
    """Any exact solution of M x = rhs over QQ(lam), or NoSolution.

    Each row is cleared of denominators and the augmented system is brought to
    reduced echelon form fraction-free over QQ[lam]; free variables are set to 0.
    """
    nrows = len(M)
    ncols = len(M[0]) if nrows else 0
    if len(rhs) != nrows:
        raise UsageError(f"{nrows} equations but {len(rhs)} right-hand sides")
    if nrows == 0:
        return [FIELD.zero] * ncols

    rows = []
    for row, b in zip(M, rhs):
        entries = [FIELD(e) for e in row] + [FIELD(b)]
        common = RING.one
        for e in entries:
            common = common.lcm(e.denom)
        rows.append([e.numer * common.exquo(e.denom) for e in entries])

    augmented = DomainMatrix(rows, (nrows, ncols + 1), RING.to_domain())
    echelon, den, pivots = augmented.rref_den()
    if ncols in pivots:
        return NoSolution

    echelon = echelon.to_list()
    x = [FIELD.zero] * ncols
    for i, col in enumerate(pivots):
        x[col] = FIELD.new(echelon[i][ncols], den)
    logger.debug("linsolve_ratfun: %dx%d system, rank %d", nrows, ncols, len(pivots))
    return x


# ---------------------------------------------------------------- p-adic reduction

@dataclass(frozen=True)
class PadicVector:
    """Residues mod p**N of a rational vector scaled by p**(-denominator_valuation)"""
    p: int
    N: int
    entries: tuple
    denominator_valuation: int

    def to_json(self):
        return {'p': self.p, 'N': self.N, 'entries': list(self.entries),
                'denominator_valuation': self.denominator_valuation}


@dataclass(frozen=True)
class PadicMatrix:
    p: int
    N: int
    entries: tuple
    denominator_valuation: int

    def to_json(self):
        return {'p': self.p, 'N': self.N, 'entries': [list(row) for row in self.entries],
                'denominator_valuation': self.denominator_valuation}


def _check_padic(p, N):
    if not isprime(p):
        raise DomainError(f"{p} is not prime")
    if N < 1:
        raise DomainError(f"p-adic precision must be at least 1, got {N}")


def _residues(values, p, N):
    values = [to_rational(c) for c in values]
    nonzero = [p_valuation(c, p) for c in values if c]
    valuation = min([0] + nonzero)
    modulus = p ** N
    residues = []
    for c in values:
        if not c:
            residues.append(0)
            continue
        num = int(QQ.numer(c)) * p ** (-valuation)
        den = int(QQ.denom(c))
        cleared = p ** multiplicity(p, den)
        num, den = num // cleared, den // cleared
        residues.append(int(num * mod_inverse(den, modulus)) % modulus)
    return residues, valuation


def reduce_mod_p(s, p, N):
    """Reduce a series (or rational vector) mod p**N with one shared valuation"""
    _check_padic(p, N)
    values = s.coeffs if isinstance(s, TruncSeries) else list(s)
    residues, valuation = _residues(values, p, N)
    return PadicVector(p, N, tuple(residues), valuation)


def reduce_matrix_mod_p(M, p, N):
    _check_padic(p, N)
    rows = [list(row) for row in M]
    width = len(rows[0]) if rows else 0
    flat, valuation = _residues([c for row in rows for c in row], p, N)
    entries = tuple(tuple(flat[i * width:(i + 1) * width]) for i in range(len(rows)))
    return PadicMatrix(p, N, entries, valuation)


if __name__ == "__main__":
    print("=== SERIES ===")
    geometric = series_inverse(TruncSeries.from_coeffs([1, -1], 8))
    print(f"1/(1 - lam)      = {geometric}")
    square = TruncSeries.from_coeffs([1, 2, 1], 4)
    print(f"1/(1 + lam)^2    = {series_inverse(square)}")

    print("\n=== LINEAR SOLVE OVER QQ(lam) ===")
    M = [[LAM, 1], [0, LAM]]
    print(f"[[lam, 1], [0, lam]] x = (1, lam)  ->  x = {linsolve_ratfun(M, [1, LAM])}")
    print(f"0 * x = 1  ->  {linsolve_ratfun([[0]], [1])}")

    print("\n=== P-ADIC REDUCTION ===")
    print(reduce_mod_p([QQ(1, 2)], 3, 2))
    print(reduce_mod_p([QQ(1, 3)], 3, 2))
