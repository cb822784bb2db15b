"""Differential operators in D = lam d/dlam (or t d/dt).

Operators are kept in left normal form sum_j c_j(lam) D^j and multiplied with
the rewrite D lam^m = lam^m (D + m).  Builds the Picard-Fuchs operators P'(V, W)
and P(V, W), the hypergeometric descent Hyp'(V, W, b) with its cancel
operation, and companion matrices in d/dlam.
"""
import logging
from dataclasses import dataclass

from sympy import binomial
from sympy.functions.combinatorial.numbers import stirling
from sympy.polys.domains import QQ
from sympy.polys.polyerrors import ExactQuotientFailed
from sympy.polys.rings import ring

from core_arith import (FIELD, LAM, LAMBDA_NAME, RING, T_NAME, T_RING, TruncSeries,
                        poly_coeffs, rational_to_str, ratfun_to_json,
                        to_rational)
from dwork_family import exponents, index_set_I
from errors import DomainError, UsageError

logger = logging.getLogger(__name__)

COEFF_RINGS = {'lambda': RING, 't': T_RING}
VARIABLE_NAMES = {'lambda': LAMBDA_NAME, 't': T_NAME}

# Commutative image: polynomials in D alone
D_RING, D_GEN = ring('D', QQ)


def _binom(n, k):
    return QQ(int(binomial(n, k)))


def d_product(shifts):
    """prod (D + s) as a polynomial in D"""
    result = D_RING.one
    for s in shifts:
        result *= D_GEN + to_rational(s)
    return result


class DiffOperator:
    """sum_j c_j(x) D^j with x = lam or t and D = x d/dx"""
    __slots__ = ('variable', 'terms', 'factored')

    def __init__(self, terms, variable='lambda', factored=None):
        if variable not in COEFF_RINGS:
            raise UsageError(f"unknown operator variable {variable!r}")
        R = COEFF_RINGS[variable]
        self.variable = variable
        self.terms = {}
        for j, c in terms.items():
            c = c if getattr(c, 'ring', None) == R else R(c)
            if c:
                self.terms[j] = c
        # (left roots k, right shifts alpha) when built as prod(D - k) - x^d prod(D + alpha)
        self.factored = factored

    @classmethod
    def zero(cls, variable='lambda'):
        return cls({}, variable)

    @classmethod
    def D(cls, variable='lambda'):
        return cls({1: 1}, variable)

    @classmethod
    def from_d_poly(cls, dpoly, power=0, variable='lambda'):
        """x^power * f(D) for a polynomial f in D_RING"""
        R = COEFF_RINGS[variable]
        terms = {}
        for (j,), c in dpoly.items():
            terms[j] = R({(power,): c})
        return cls(terms, variable)

    @classmethod
    def from_factors(cls, left_roots, right_shifts, d, variable='lambda'):
        """prod (D - k) - x^d prod (D + alpha)"""
        left = d_product([-to_rational(k) for k in left_roots])
        right = d_product(right_shifts)
        op = cls.from_d_poly(left, 0, variable) - cls.from_d_poly(right, d, variable)
        op.factored = (tuple(to_rational(k) for k in left_roots),
                       tuple(sorted(to_rational(a) for a in right_shifts)))
        return op

    @property
    def ring(self):
        return COEFF_RINGS[self.variable]

    def order(self):
        if not self.terms:
            raise DomainError("the zero operator has no order")
        return max(self.terms)

    def is_zero(self):
        return not self.terms

    def coeff(self, j):
        return self.terms.get(j, self.ring.zero)

    def x_degree(self):
        return max((c.degree() for c in self.terms.values()), default=0)

    def part(self, power):
        """The D-polynomial multiplying x^power"""
        return D_RING.from_dict({(j,): c.get((power,), QQ.zero) for j, c in self.terms.items()})

    def x_powers(self):
        return sorted({m[0] for c in self.terms.values() for m in c.keys()})

    def _check(self, other):
        if not isinstance(other, DiffOperator):
            raise UsageError(f"expected a DiffOperator, got {type(other).__name__}")
        if other.variable != self.variable:
            raise UsageError(f"cannot combine operators in {self.variable} and {other.variable}")

    def __add__(self, other):
        self._check(other)
        terms = dict(self.terms)
        for j, c in other.terms.items():
            terms[j] = terms.get(j, self.ring.zero) + c
        return DiffOperator(terms, self.variable)

    def __neg__(self):
        return DiffOperator({j: -c for j, c in self.terms.items()}, self.variable)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, DiffOperator):
            return self.scale(other)
        self._check(other)
        R = self.ring
        terms = {}
        for j, a in self.terms.items():
            for k, b in other.terms.items():
                for (m,), c in b.items():
                    # D^j x^m = x^m (D + m)^j
                    for i in range(j + 1):
                        coeff = c * _binom(j, i) * QQ(m) ** (j - i)
                        if coeff:
                            terms[i + k] = terms.get(i + k, R.zero) + a.mul_term(((m,), coeff))
        return DiffOperator(terms, self.variable)

    def __rmul__(self, other):
        return self.scale(other)

    def __eq__(self, other):
        if not isinstance(other, DiffOperator):
            return NotImplemented
        return self.variable == other.variable and self.terms == other.terms

    def __repr__(self):
        return f"DiffOperator({self.pretty()})"

    def scale(self, c):
        c = to_rational(c)
        return DiffOperator({j: p.mul_ground(c) for j, p in self.terms.items()}, self.variable)

    def mul_poly(self, poly):
        """Left multiplication by a polynomial in x"""
        poly = self.ring(poly)
        return DiffOperator({j: poly * c for j, c in self.terms.items()}, self.variable)

    def shift_d(self, c):
        """Substitute D -> D + c"""
        c = to_rational(c)
        terms = {}
        for j, a in self.terms.items():
            for i in range(j + 1):
                coeff = _binom(j, i) * c ** (j - i)
                if coeff:
                    terms[i] = terms.get(i, self.ring.zero) + a.mul_ground(coeff)
        return DiffOperator(terms, self.variable)

    def to_json(self):
        return {
            'variable': self.variable,
            'terms': [{'dpow': j, 'coeffs': [rational_to_str(c) for c in poly_coeffs(self.terms[j])]}
                      for j in sorted(self.terms)],
        }

    def pretty(self):
        x = VARIABLE_NAMES[self.variable]
        if self.factored is not None:
            left, right = self.factored
            power = max(self.x_powers())
            return f"{_factor_string(left, -1)} - {x}^{power}*{_factor_string(right, 1)}"
        if not self.terms:
            return '0'
        pieces = []
        for power in self.x_powers():
            dpoly = str(self.part(power).as_expr())
            pieces.append(f"({dpoly})" if power == 0 else f"{x}^{power}*({dpoly})")
        return ' + '.join(pieces)


def _factor_string(roots, sign):
    counts = {}
    for r in roots:
        counts[r] = counts.get(r, 0) + 1
    pieces = []
    for r in sorted(counts):
        shift = sign * r
        if shift == 0:
            base = 'D'
        elif shift > 0:
            base = f"(D + {rational_to_str(shift)})"
        else:
            base = f"(D - {rational_to_str(-shift)})"
        pieces.append(base if counts[r] == 1 else f"{base}^{counts[r]}")
    return '*'.join(pieces) if pieces else '1'


# ---------------------------------------------------------------- Picard-Fuchs operators

def right_shifts(family, V):
    """(v_i + j d)/w_i for all i and 0 <= j < w_i"""
    d = family.d
    return sorted(QQ(v + j * d, w) for v, w in zip(V.tilde, family.w) for j in range(w))


def build_P_prime(family, V):
    """prod_{k<d}(D - k) - lam^d prod_{i,j}(D + (v_i + j d)/w_i)"""
    index_set_I(family, V)  # rejects V that is not totally nonzero
    return DiffOperator.from_factors(range(family.d), right_shifts(family, V), family.d)


def reduce_P(family, V):
    """Divide out (D - k) on the left and (D + d - k) on the right for k in I(V, W)"""
    d = family.d
    removed = index_set_I(family, V)
    shifts = right_shifts(family, V)
    left = d_product([-k for k in range(d)])
    right = d_product(shifts)
    try:
        left = left.exquo(d_product([-k for k in removed]))
        right = right.exquo(d_product([d - k for k in removed]))
    except ExactQuotientFailed as exc:
        raise DomainError(f"factor removal failed for V = ({V}): {exc}") from exc

    remaining = list(shifts)
    for k in removed:
        remaining.remove(QQ(d - k))
    op = DiffOperator.from_d_poly(left) - DiffOperator.from_d_poly(right, d)
    op.factored = (tuple(QQ(k) for k in exponents(family, V)), tuple(remaining))
    logger.debug("P(V=%s) has order %d", V, op.order())
    return op


def factored_parameters(op):
    """Left roots followed by right shifts of a factored operator"""
    if op.factored is None:
        raise DomainError("operator carries no factored form")
    left, right = op.factored
    return list(left) + list(right)


def perturb_parameter(op, index, delta=1):
    """Rebuild a factored operator with one parameter moved by delta"""
    left, right = (list(part) for part in op.factored or ((), ()))
    params = factored_parameters(op)
    if not 0 <= index < len(params):
        raise UsageError(f"parameter index {index} out of range 0..{len(params) - 1}")
    if index < len(left):
        left[index] += to_rational(delta)
    else:
        right[index - len(left)] += to_rational(delta)
    return DiffOperator.from_factors(left, right, max(op.x_powers()), op.variable)


# ---------------------------------------------------------------- hypergeometric parameters

@dataclass(frozen=True)
class HypParams:
    alphas: tuple
    betas: tuple
    variable: str = 't'

    def __post_init__(self):
        if len(self.alphas) != len(self.betas):
            raise UsageError(f"{len(self.alphas)} alphas but {len(self.betas)} betas")
        object.__setattr__(self, 'alphas', tuple(sorted(to_rational(a) for a in self.alphas)))
        object.__setattr__(self, 'betas', tuple(sorted(to_rational(b) for b in self.betas)))

    def to_json(self):
        return {'alphas': [rational_to_str(a) for a in self.alphas],
                'betas': [rational_to_str(b) for b in self.betas]}

    def pretty(self):
        alphas = ', '.join(rational_to_str(a) for a in self.alphas)
        betas = ', '.join(rational_to_str(b) for b in self.betas)
        return f"Hyp({alphas}; {betas}; {VARIABLE_NAMES[self.variable]})"


def _integral(q):
    return QQ.denom(q) == 1


def build_hyp_prime(family, V):
    """Parameters of the descended operator Hyp'(V, W, b)"""
    index_set_I(family, V)
    d, N = family.d, V.N
    alphas = [QQ(k + N, d) for k in range(d)]
    betas = [QQ((w - j) * d - v, w * d) + QQ(N, d)
             for v, w in zip(V.tilde, family.w) for j in range(w)]
    return HypParams(tuple(alphas), tuple(betas))


def cancel(h):
    """Delete alpha/beta pairs congruent mod Z until none are left"""
    alphas = list(h.alphas)
    betas = list(h.betas)
    kept = []
    for a in alphas:
        match = next((b for b in betas if _integral(a - b)), None)
        if match is None:
            kept.append(a)
        else:
            betas.remove(match)
    return HypParams(tuple(kept), tuple(betas), h.variable)


def is_irreducible(h):
    return not any(_integral(a - b) for a in h.alphas for b in h.betas)


def hyp_operator(h):
    """prod (D_t + beta - 1) - t prod (D_t + alpha)"""
    left = d_product([b - 1 for b in h.betas])
    right = d_product(h.alphas)
    op = DiffOperator.from_d_poly(left, 0, h.variable) - DiffOperator.from_d_poly(right, 1, h.variable)
    op.factored = (tuple(1 - b for b in h.betas), tuple(h.alphas))
    return op


# ---------------------------------------------------------------- changes of variable

def conjugate(op, N):
    """lam^N op lam^-N, that is D -> D - N"""
    return op.shift_d(-N)


def rescale_to_t(op, d, normalize=True):
    """Substitute t = lam^-d, D_lam = -d D_t, clearing negative powers of t"""
    if op.variable != 'lambda':
        raise UsageError("rescale_to_t expects an operator in lambda")
    powers = op.x_powers()
    if any(m % d for m in powers):
        raise DomainError(f"operator has lambda powers {powers} not divisible by d = {d}")
    top = max(powers) // d if powers else 0
    terms = {}
    for j, c in op.terms.items():
        scale = QQ(-d) ** j
        terms[j] = T_RING.from_dict({(top - m // d,): coeff * scale for (m,), coeff in c.items()})
    result = DiffOperator(terms, 't')
    if normalize and result.terms:
        lead = result.part(0)
        if not lead:
            raise DomainError("operator has no t^0 part to normalize by")
        result = result.scale(1 / lead.LC)
    return result


def conjugate_and_rescale(op, N, d):
    return rescale_to_t(conjugate(op, N), d)


def local_exponents_at_zero(op):
    """Rational roots, with multiplicity, of the D-polynomial of the x^0 part"""
    found = []
    for factor, mult in op.part(0).factor_list()[1]:
        if factor.degree() == 1:
            c1, c0 = factor.coeff(D_GEN), factor.get((0,), QQ.zero)
            found.extend([-c0 / c1] * mult)
    return sorted(found)


# ---------------------------------------------------------------- companion matrices

class CompanionMatrix:
    """Companion matrix in d/dlam acting on row vectors (w, w', ..., w^(r-1))

    Subdiagonal entries are 1 and the last column holds -c_i of the monic
    equation w^(r) + sum c_i w^(i) = 0.
    """

    def __init__(self, monic_coeffs):
        self.monic_coeffs = tuple(monic_coeffs)
        self.r = len(self.monic_coeffs)
        r = self.r
        self.entries = [[FIELD.zero] * r for _ in range(r)]
        for i in range(r - 1):
            self.entries[i + 1][i] = FIELD.one
        for i in range(r):
            self.entries[i][r - 1] = -self.monic_coeffs[i]

    def to_json(self):
        return {'r': self.r, 'entries': [[ratfun_to_json(e) for e in row] for row in self.entries]}


def to_companion(op):
    """Convert sum c_j D^j to monic form in d/dlam and emit its companion matrix"""
    if op.is_zero():
        raise DomainError("cannot build the companion matrix of the zero operator")
    if op.variable != 'lambda':
        raise UsageError("to_companion expects an operator in lambda")
    r = op.order()
    # D^j = sum_i S(j, i) lam^i (d/dlam)^i
    e = [RING.zero] * (r + 1)
    for j, c in op.terms.items():
        for i in range(j + 1):
            s = QQ(int(stirling(j, i)))
            if s:
                e[i] += c.mul_term(((i,), s))
    if not e[r]:
        raise DomainError("leading coefficient vanishes after converting to d/dlam")
    monic = [FIELD.new(e[i], e[r]) for i in range(r)]
    return CompanionMatrix(monic)


def connection_matrix_D(op):
    """Connection matrix for lam d/dlam, that is lam times the companion matrix"""
    C = to_companion(op)
    return [[LAM * e for e in row] for row in C.entries]


# ---------------------------------------------------------------- action on series

def apply_operator(op, s):
    """Exact action of sum c_j(x) (x d/dx)^j on a truncated series; order is kept"""
    result = TruncSeries.zero(s.order)
    for j, c in op.terms.items():
        powered = RING.from_dict({(k,): a * QQ(k) ** j for (k,), a in s.poly.items()})
        result = result + TruncSeries(powered, s.order).mul_poly(RING.from_dict(dict(c.items())))
    return result


if __name__ == "__main__":
    from dwork_family import char_vector, validate_family

    family = validate_family(4, 4, (1, 1, 1, 1))
    print("=== QUARTIC K3: PICARD-FUCHS OPERATORS ===")
    for v in [(1, 2, 2, 3), (1, 1, 1, 1), (1, 1, 3, 3)]:
        V = char_vector(family, v)
        print(f"V = ({V})")
        print(f"  P'  = {build_P_prime(family, V).pretty()}")
        print(f"  P   = {reduce_P(family, V).pretty()}")
        h = build_hyp_prime(family, V)
        print(f"  Hyp' = {h.pretty()}")
        print(f"  Hyp  = {cancel(h).pretty()}")

    print("\n=== COMPANION MATRIX OF P(1,2,2,3) ===")
    C = to_companion(reduce_P(family, char_vector(family, (1, 2, 2, 3))))
    print(C.entries)
