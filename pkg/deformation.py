"""Deformation method: fundamental solutions, Wronskian, A(lam) and F(lam).

Matrices act on row vectors: row i of the Wronskian is (w_i, w_i', ...), so
dW/dlam = W C for the companion matrix C, A = W(0)^-1 W satisfies dA = A C
and F(lam) = A_V(lam)^-1 F(0) A_V1(lam^p) satisfies

    dF/dlam + C_V F - p lam^(p-1) F C_V1(lam^p) = 0.
"""
import logging
import math
from dataclasses import dataclass

from sympy import factorial, igcd, isprime
from sympy.polys.domains import QQ
from sympy.polys.matrices import DomainMatrix

from core_arith import (FIELD, LAM, TruncSeries, pole_order_at_zero, rational_to_str,
                        ratfun_compose_power, ratfun_to_json, reduce_matrix_mod_p,
                        ratfun_value_at_zero, series_of_ratfun, to_rational)
from dwork_family import frobenius_pullback, rank
from errors import (CyclicBasisFails, DegenerateParameterError, DomainError,
                    UnsupportedMonodromy, UsageError)
from pf_operators import reduce_P, to_companion

logger = logging.getLogger(__name__)

# Configuration
DEFAULT_ORDER = 40
EXTRA_ORDER = None   # working precision added for basis correction; None means d * rank


# ---------------------------------------------------------------- constant matrices

def qq_matrix(rows):
    rows = [[to_rational(x) for x in row] for row in rows]
    ncols = len(rows[0]) if rows else 0
    return DomainMatrix(rows, (len(rows), ncols), QQ)


def identity_rows(r):
    return [[QQ.one if i == j else QQ.zero for j in range(r)] for i in range(r)]


def _is_nilpotent(M):
    r = M.shape[0]
    return (M ** r).is_zero_matrix if r else True


# ---------------------------------------------------------------- series matrices

class SeriesMatrix:
    """Matrix of truncated series sharing one order"""
    __slots__ = ('rows', 'order')

    def __init__(self, rows, order=None):
        rows = [list(row) for row in rows]
        orders = {s.order for row in rows for s in row}
        if order is None:
            if len(orders) != 1:
                raise UsageError(f"series matrix entries have orders {sorted(orders)}")
            order = orders.pop()
        elif orders and orders != {order}:
            raise UsageError(f"series matrix entries have orders {sorted(orders)}, expected {order}")
        self.rows = rows
        self.order = order

    @classmethod
    def zero(cls, nrows, ncols, order):
        return cls([[TruncSeries.zero(order) for _ in range(ncols)] for _ in range(nrows)], order)

    @classmethod
    def identity(cls, r, order):
        return cls.from_constant(identity_rows(r), order)

    @classmethod
    def from_constant(cls, rows, order):
        rows = rows.to_list() if isinstance(rows, DomainMatrix) else rows
        return cls([[TruncSeries(to_rational(c), order)
                     for c in row] for row in rows], order)

    @classmethod
    def from_ratfuns(cls, rows, order):
        """Expansion of a matrix of rational functions regular at lam = 0"""
        return cls([[series_of_ratfun(e, order) for e in row] for row in rows], order)

    @property
    def nrows(self):
        return len(self.rows)

    @property
    def ncols(self):
        return len(self.rows[0]) if self.rows else 0

    @property
    def shape(self):
        return self.nrows, self.ncols

    def entry(self, i, j):
        return self.rows[i][j]

    def column(self, j):
        return [row[j] for row in self.rows]

    def _map(self, fn, order=None):
        rows = [[fn(s) for s in row] for row in self.rows]
        return SeriesMatrix(rows, self.order if order is None else order)

    def __add__(self, other):
        self._check_shape(other)
        return SeriesMatrix([[a + b for a, b in zip(ra, rb)] for ra, rb in zip(self.rows, other.rows)],
                            self.order)

    def __sub__(self, other):
        self._check_shape(other)
        return SeriesMatrix([[a - b for a, b in zip(ra, rb)] for ra, rb in zip(self.rows, other.rows)],
                            self.order)

    def __neg__(self):
        return self._map(lambda s: -s)

    def __mul__(self, other):
        if isinstance(other, SeriesMatrix):
            return self.matmul(other)
        return self._map(lambda s: s.scale(other))

    def __rmul__(self, other):
        return self._map(lambda s: s.scale(other))

    def __eq__(self, other):
        if not isinstance(other, SeriesMatrix):
            return NotImplemented
        return self.order == other.order and self.rows == other.rows

    def __repr__(self):
        return f"SeriesMatrix({self.nrows}x{self.ncols}, order={self.order})"

    def _check_shape(self, other):
        if self.shape != other.shape:
            raise UsageError(f"shape mismatch {self.shape} vs {other.shape}")
        if self.order != other.order:
            raise UsageError(f"mismatched truncation orders {self.order} and {other.order}")

    def matmul(self, other):
        if self.ncols != other.nrows:
            raise UsageError(f"cannot multiply {self.shape} by {other.shape}")
        if self.order != other.order:
            raise UsageError(f"mismatched truncation orders {self.order} and {other.order}")
        rows = []
        for i in range(self.nrows):
            row = []
            for j in range(other.ncols):
                acc = TruncSeries.zero(self.order)
                for k in range(self.ncols):
                    acc = acc + self.rows[i][k] * other.rows[k][j]
                row.append(acc)
            rows.append(row)
        return SeriesMatrix(rows, self.order)

    def mul_constant_right(self, M):
        return self.matmul(SeriesMatrix.from_constant(M, self.order))

    def mul_constant_left(self, M):
        return SeriesMatrix.from_constant(M, self.order).matmul(self)

    def mul_ratfun_right(self, rows):
        """Product with a matrix of rational functions regular at lam = 0"""
        return self.matmul(SeriesMatrix.from_ratfuns(rows, self.order))

    def value_at_zero(self):
        return qq_matrix([[s.value_at_zero() for s in row] for row in self.rows])

    def coefficient_matrix(self, k):
        return [[s.coeff(k) for s in row] for row in self.rows]

    def derive(self):
        return self._map(lambda s: s.derive(), max(self.order - 1, 0))

    def truncate(self, order):
        return self._map(lambda s: s.truncate(order), order)

    def shift(self, m):
        return self._map(lambda s: s.shift(m), max(self.order + m, 0))

    def compose_power(self, p):
        new_order = p * (self.order - 1) + 1 if self.order else 0
        return self._map(lambda s: s.compose_power(p), new_order)

    def is_zero(self):
        return all(s.is_zero() for row in self.rows for s in row)

    def inverse(self):
        """Newton iteration X <- X (2 - M X) from the inverse of M(0)"""
        if self.nrows != self.ncols:
            raise UsageError(f"cannot invert a {self.shape} matrix")
        M0 = self.value_at_zero()
        if M0.det() == 0:
            raise DomainError("series matrix is not invertible at lam = 0")
        X = SeriesMatrix.from_constant(M0.inv(), self.order)
        two = SeriesMatrix.identity(self.nrows, self.order) * 2
        for _ in range(max(1, math.ceil(math.log2(max(self.order, 1)))) + 1):
            X = X.matmul(two - self.matmul(X))
        return X

    def to_json(self):
        return [[s.to_json() for s in row] for row in self.rows]


def ratfun_matrix_pole_order(rows):
    return max((pole_order_at_zero(e) for row in rows for e in row), default=0)


def scaled_series(rows, a, order):
    """Expansion of lam^a * M for a rational matrix M with poles of order <= a"""
    return SeriesMatrix.from_ratfuns([[LAM ** a * e for e in row] for row in rows], order)


# ---------------------------------------------------------------- solutions

@dataclass
class SolutionBasis:
    exponents: tuple
    upper: list
    lower: list
    scales: list
    solutions: list
    order: int

    def to_json(self):
        return [{
            'exponent': k,
            'scale': rational_to_str(c),
            'upper': [rational_to_str(a) for a in up],
            'lower': [rational_to_str(b) for b in low],
        } for k, c, up, low in zip(self.exponents, self.scales, self.upper, self.lower)]


def fundamental_solutions(family, V, order):
    """w_i = c_i lam^k_i rF(r-1)((alpha + k_i)/d; 1 + (k_i - k_j)/d; lam^d)

    c_i = 1/k_i! for k_i < r, else 1, which makes W(0) = I in the cyclic case.
    """
    P = reduce_P(family, V)
    ks, alphas = P.factored
    ks = [int(k) for k in ks]
    d, r = family.d, len(ks)
    exps, uppers, lowers, scales, sols = [], [], [], [], []
    for i, k in enumerate(ks):
        upper = [(a + k) / d for a in alphas]
        lower = [1 + QQ(k - kj, d) for j, kj in enumerate(ks) if j != i]
        for b in lower:
            if QQ.denom(b) == 1 and b <= 0:
                raise DegenerateParameterError(
                    f"lower parameter {rational_to_str(b)} for exponent {k} is a nonpositive integer")
        scale = QQ(1, int(factorial(k))) if k < r else QQ.one
        coeffs = {}
        term, n = scale, 0
        while k + d * n < order:
            coeffs[k + d * n] = term
            num = QQ.one
            for a in upper:
                num *= n + a
            den = QQ(n + 1)
            for b in lower:
                den *= n + b
            term = term * num / den
            n += 1
        poly = FIELD.ring.from_dict({(e,): c for e, c in coeffs.items()})
        exps.append(k)
        uppers.append(upper)
        lowers.append(lower)
        scales.append(scale)
        sols.append(TruncSeries(poly, order))
    return SolutionBasis(tuple(exps), uppers, lowers, scales, sols, order)


def wronskian(basis, order=None):
    """Row i = (w_i, dw_i/dlam, ..., d^(r-1)w_i/dlam^(r-1))"""
    r = len(basis.solutions)
    order = basis.order - (r - 1) if order is None else order
    if basis.order < order + r - 1:
        raise UsageError(f"solutions of order {basis.order} give a Wronskian of order "
                         f"{basis.order - r + 1} at most, {order} requested")
    rows = []
    for w in basis.solutions:
        derivs = [w]
        for _ in range(r - 1):
            derivs.append(derivs[-1].derive())
        rows.append([s.truncate(order) for s in derivs])
    return SeriesMatrix(rows, order)


def _cyclic_deformation(family, V, order):
    r = rank(family, V)
    basis = fundamental_solutions(family, V, order + r - 1)
    W = wronskian(basis, order)
    W0 = W.value_at_zero()
    if W0.det() == 0:
        raise CyclicBasisFails(f"W(0) is singular for V = ({V}); exponents {basis.exponents}",
                               wronskian=W)
    return W.mul_constant_left(W0.inv()), basis


def deformation_matrix(family, V, order):
    """A(lam) = W(0)^-1 W(lam) in the cyclic-basis case"""
    return _cyclic_deformation(family, V, order)[0]


# ---------------------------------------------------------------- canonical correction

@dataclass
class BasisChange:
    B: list
    connection: list
    residue: list
    precision_loss: int = 0

    def to_json(self):
        return {
            'B': [[ratfun_to_json(e) for e in row] for row in self.B],
            'connection': [[ratfun_to_json(e) for e in row] for row in self.connection],
            'residue': [[rational_to_str(c) for c in row] for row in self.residue],
        }


def _express(lead, basis):
    """Coefficients a with lead = sum a_l basis_l, or None if lead is independent"""
    if not basis:
        return None
    r = len(lead)
    rows = [[basis[l][i] for l in range(len(basis))] + [lead[i]] for i in range(r)]
    echelon, pivots = DomainMatrix(rows, (r, len(basis) + 1), QQ).rref()
    if len(basis) in pivots:
        return None
    echelon = echelon.to_list()
    coeffs = [QQ.zero] * len(basis)
    for i, col in enumerate(pivots):
        coeffs[col] = echelon[i][len(basis)]
    return coeffs


def _common_truncate(vectors):
    order = min(s.order for v in vectors for s in v)
    return [[s.truncate(order) for s in v] for v in vectors]


def transformed_connection(C, B):
    """B^-1 C B + B^-1 dB/dlam over QQ(lam)"""
    K = FIELD.to_domain()
    r = len(B)
    Bm = DomainMatrix([list(row) for row in B], (r, r), K)
    dB = DomainMatrix([[e.diff(LAM) for e in row] for row in B], (r, r), K)
    Cm = DomainMatrix([list(row) for row in C], (r, r), K)
    Binv = Bm.inv()
    return (Binv * Cm * Bm + Binv * dB).to_list()


def connection_residue(connection):
    """Value at lam = 0 of a connection matrix regular there"""
    try:
        return [[ratfun_value_at_zero(e) for e in row] for row in connection]
    except DomainError as exc:
        raise UnsupportedMonodromy(f"connection is not regular at lam = 0: {exc}") from exc


def canonical_correction(family, V, W):
    """Greedy column reduction of the Wronskian to a basis regular and invertible at 0.

    Column j is divided by the smallest power lam^m that leaves a nonzero value
    at 0; when that value is spanned by the earlier chosen columns they are
    subtracted (times lam^m) first.  A final constant change makes A(0) = I.
    Returns (BasisChange, A) with A = W B.
    """
    r = W.nrows
    chosen, changes, values = [], [], []
    for j in range(r):
        v = W.column(j)
        b = [FIELD.one if i == j else FIELD.zero for i in range(r)]
        while True:
            vals = [s.valuation() for s in v]
            present = [x for x in vals if x is not None]
            if not present:
                raise UnsupportedMonodromy(f"column {j} vanishes to working precision {v[0].order}")
            m = min(present)
            lead = [s.coeff(m) for s in v]
            coeffs = _express(lead, values)
            if coeffs is None:
                chosen.append([s.shift(-m) for s in v])
                changes.append([e * LAM ** (-m) for e in b])
                values.append(lead)
                logger.debug("column %d: divided by lam^%d", j, m)
                break
            for l, a in enumerate(coeffs):
                if not a:
                    continue
                vv, ee = _common_truncate([v, [s.shift(m) for s in chosen[l]]])
                v = [x - y.scale(a) for x, y in zip(vv, ee)]
                b = [x - LAM ** m * y * a for x, y in zip(b, changes[l])]

    chosen = _common_truncate(chosen)
    order = chosen[0][0].order
    M0 = DomainMatrix([[values[j][i] for j in range(r)] for i in range(r)], (r, r), QQ)
    if M0.det() == 0:
        raise UnsupportedMonodromy(f"corrected basis is singular at 0 for V = ({V})")
    M0_inv = M0.inv()
    A = SeriesMatrix([[chosen[j][i] for j in range(r)] for i in range(r)], order).mul_constant_right(M0_inv)

    K = FIELD.to_domain()
    B_raw = DomainMatrix([[changes[j][i] for j in range(r)] for i in range(r)], (r, r), K)
    B = (B_raw * M0_inv.convert_to(K)).to_list()

    C = to_companion(reduce_P(family, V)).entries
    connection = transformed_connection(C, B)
    residue = connection_residue(connection)
    if not _is_nilpotent(qq_matrix(residue)):
        raise UnsupportedMonodromy(f"residue of the corrected connection is not nilpotent for V = ({V})")
    loss = W.order - order
    logger.info("canonical correction for V = (%s): precision loss %d", V, loss)
    return BasisChange(B, connection, residue, loss), A


@dataclass
class DeformationResult:
    V: object
    A: SeriesMatrix
    connection: list
    basis: SolutionBasis
    basis_change: BasisChange = None

    @property
    def corrected(self):
        return self.basis_change is not None

    def to_json(self):
        out = {
            'v': str(self.V),
            'order': self.A.order,
            'rank': self.A.nrows,
            'exponents': list(self.basis.exponents),
            'corrected': self.corrected,
            'A': self.A.to_json(),
            'connection': [[ratfun_to_json(e) for e in row] for row in self.connection],
        }
        if self.basis_change is not None:
            out['basis_change'] = self.basis_change.to_json()
        return out


def deformation_data(family, V, order=DEFAULT_ORDER):
    """A(lam) with its connection matrix, correcting the basis when W(0) is singular"""
    r = rank(family, V)
    companion = to_companion(reduce_P(family, V))
    try:
        A, basis = _cyclic_deformation(family, V, order)
        return DeformationResult(V, A, companion.entries, basis)
    except CyclicBasisFails:
        logger.info("cyclic basis fails for V = (%s), correcting", V)

    extra = EXTRA_ORDER if EXTRA_ORDER is not None else family.d * r
    while True:
        basis = fundamental_solutions(family, V, order + r - 1 + extra)
        change, A = canonical_correction(family, V, wronskian(basis))
        if A.order >= order:
            return DeformationResult(V, A.truncate(order), change.connection, basis, change)
        extra += order - A.order


def dA_minus_AC(A, C):
    """lam^a (dA/dlam - A C) as a series matrix of order A.order - 1"""
    a = ratfun_matrix_pole_order(C)
    o = A.order - 1
    dA = A.derive().shift(a).truncate(o)
    return dA - A.truncate(o).matmul(scaled_series(C, a, o))


# ---------------------------------------------------------------- Frobenius

@dataclass
class FrobeniusResult:
    p: int
    F0: list
    F: SeriesMatrix
    reduction: list = None
    residual_zero: bool = None
    residual_order: int = None
    V: object = None
    V1: object = None

    def to_json(self):
        out = {
            'p': self.p,
            'F0': [[rational_to_str(c) for c in row] for row in self.F0],
            'F': self.F.to_json(),
            'order': self.F.order,
        }
        if self.V is not None:
            out['v'] = str(self.V)
            out['v1'] = str(self.V1)
        if self.residual_zero is not None:
            out['residual'] = 'zero to order' if self.residual_zero else 'nonzero'
            out['residual_order'] = self.residual_order
        if self.reduction is not None:
            out['mod'] = {
                'p': self.p,
                'N': self.reduction[0].N if self.reduction else None,
                'coefficients': [m.to_json() for m in self.reduction],
            }
        return out


def check_frobenius_prime(family, p):
    """p must be prime (or 1) and prime to d * prod w_i"""
    if p != 1 and not isprime(p):
        raise DomainError(f"p = {p} is not prime")
    bad = family.d * math.prod(family.w)
    if igcd(p, bad) != 1:
        raise DomainError(f"p = {p} divides d * prod(w) = {bad}")


def frobenius_order_needed(order, p):
    """Order of A_V1 needed so that A_V1(lam^p) is known to the given order"""
    return (order - 2) // p + 2 if order > 1 else 1


def frobenius_matrix(A_V, A_V1, F0, p, order, family=None, prec=None):
    """F(lam) = A_V(lam)^-1 F0 A_V1(lam^p), exact over QQ"""
    F0 = [[to_rational(c) for c in row] for row in F0]
    if len(F0) != A_V.nrows or any(len(row) != A_V1.nrows for row in F0):
        raise UsageError(f"F0 must be {A_V.nrows}x{A_V1.nrows}")
    if family is not None:
        check_frobenius_prime(family, p)
    needed = frobenius_order_needed(order, p)
    if A_V.order < order or A_V1.order < needed:
        raise UsageError(f"need A_V to order {order} and A_V1 to order {needed}")
    A_inv = A_V.truncate(order).inverse()
    A1p = A_V1.truncate(needed).compose_power(p).truncate(order)
    F = A_inv.mul_constant_right(qq_matrix(F0)).matmul(A1p)
    reduction = None
    if prec is not None:
        reduction = [reduce_matrix_mod_p(F.coefficient_matrix(k), p, prec) for k in range(order)]
    return FrobeniusResult(p, F0, F, reduction)


def _twisted_connection(C_V1, p):
    return [[p * LAM ** (p - 1) * ratfun_compose_power(e, p) for e in row] for row in C_V1]


def horizontality_scale(C_V, C_V1, p):
    """Largest pole order at 0 among C_V and p lam^(p-1) C_V1(lam^p)"""
    return max(ratfun_matrix_pole_order(C_V), ratfun_matrix_pole_order(_twisted_connection(C_V1, p)))


def horizontality_residual(F, C_V, C_V1, p):
    """lam^a (dF/dlam + C_V F - p lam^(p-1) F C_V1(lam^p)) to order F.order - 1.

    a = horizontality_scale(C_V, C_V1, p); the result vanishes exactly when the
    unscaled residual does, which is then known to order F.order - 1 - a.
    """
    twisted = _twisted_connection(C_V1, p)
    a = horizontality_scale(C_V, C_V1, p)
    o = F.order - 1

    Ft = F.truncate(o)
    dF = F.derive().shift(a).truncate(o)
    return dF + scaled_series(C_V, a, o).matmul(Ft) - Ft.matmul(scaled_series(twisted, a, o))


def frobenius_for_pair(family, V, p, order=DEFAULT_ORDER, F0=None, prec=None):
    """F(lam) for the pair (V, V^(1)) with its horizontality check"""
    check_frobenius_prime(family, p)
    V1 = frobenius_pullback(family, V, p)
    data_V = deformation_data(family, V, order)
    data_V1 = deformation_data(family, V1, frobenius_order_needed(order, p))
    r, r1 = data_V.A.nrows, data_V1.A.nrows
    if F0 is None:
        if r != r1:
            raise UsageError(f"F0 is required: ranks {r} and {r1} differ")
        F0 = identity_rows(r)
    result = frobenius_matrix(data_V.A, data_V1.A, F0, p, order, family=family, prec=prec)
    residual = horizontality_residual(result.F, data_V.connection, data_V1.connection, p)
    result.residual_zero = residual.is_zero()
    a = horizontality_scale(data_V.connection, data_V1.connection, p)
    result.residual_order = max(residual.order - a, 0)
    result.V, result.V1 = V, V1
    if not result.residual_zero:
        logger.warning("horizontality residual is nonzero for V = (%s), p = %d", V, p)
    return result


if __name__ == "__main__":
    from dwork_family import char_vector, validate_family

    family = validate_family(4, 4, (1, 1, 1, 1))
    print("=== DEFORMATION MATRICES, QUARTIC K3 ===")
    for v in [(1, 2, 2, 3), (1, 1, 1, 1), (1, 1, 3, 3)]:
        V = char_vector(family, v)
        data = deformation_data(family, V, 12)
        print(f"V = ({V}): rank {data.A.nrows}, corrected: {data.corrected}")
        for row in data.A.rows:
            print("   ", [s.poly.as_expr() for s in row])

    print("\n=== FROBENIUS, p = 3 ===")
    result = frobenius_for_pair(family, char_vector(family, (1, 1, 3, 3)), 3, order=12, prec=4)
    print(f"V1 = ({result.V1}), residual: {'zero' if result.residual_zero else 'NONZERO'}")
