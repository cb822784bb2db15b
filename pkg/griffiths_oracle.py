"""Griffiths-Dwork reduction oracle for the Dwork family.

A class A/Q^p * Omega in H^{n-1}(P - X) is stored as a map p -> A.  Pole
order is lowered with the relation

    (sum B_i dQ/dX_i) / Q^p * Omega  ==  1/(p-1) (sum dB_i/dX_i) / Q^(p-1) * Omega

and a class is zero iff every top-order numerator lies in the Jacobian ideal
on the way down to pole order 1.  Nothing here reads the operator
construction, so verify_annihilation is an independent check of it.
"""
import logging
import os
import time
from dataclasses import dataclass
from functools import lru_cache

from sympy.polys.domains import QQ

from core_arith import FIELD, LAM, NoSolution, HomogPoly, homog_ring, linsolve_ratfun
from dwork_family import is_totally_nonzero
from errors import DomainError, OracleResourceError, UsageError

logger = logging.getLogger(__name__)

# Configuration
STRATEGIES = ('rewrite', 'dense')
DEFAULT_STRATEGY = os.environ.get('DWORK_ORACLE_STRATEGY', 'rewrite')
MAX_CLASS_MONOMIALS = int(os.environ.get('DWORK_ORACLE_MAX_MONOMIALS', 20000))
MAX_POLE_ORDER = int(os.environ.get('DWORK_ORACLE_MAX_POLE_ORDER', 16))


def _axpy(target, source, scale):
    """target += scale * source for monomial -> coefficient dicts"""
    for m, c in source.items():
        value = target.get(m, FIELD.zero) + scale * c
        if value:
            target[m] = value
        else:
            target.pop(m, None)
    return target


def monomials_of_degree(n, m):
    if n == 1:
        yield (m,)
        return
    for first in range(m, -1, -1):
        for rest in monomials_of_degree(n - 1, m - first):
            yield (first,) + rest


# ---------------------------------------------------------------- classes

class CohomClass:
    """sum_p A_p / Q_lam^p * Omega with deg A_p = p d - n"""
    __slots__ = ('family', 'terms')

    def __init__(self, family, terms=None):
        self.family = family
        self.terms = {}
        for p, A in (terms or {}).items():
            if p < 1:
                raise UsageError(f"pole order must be positive, got {p}")
            if A.degree != p * family.d - family.n:
                raise UsageError(f"numerator at pole order {p} has degree {A.degree}, "
                                 f"expected {p * family.d - family.n}")
            if not A.is_zero():
                self.terms[p] = A

    @classmethod
    def zero(cls, family):
        return cls(family)

    @classmethod
    def single(cls, family, p, numerator):
        return cls(family, {p: numerator})

    def is_zero(self):
        """Structural zero; use is_zero_class for vanishing in cohomology"""
        return not self.terms

    def top_pole_order(self):
        return max(self.terms, default=0)

    def numerator(self, p):
        return self.terms.get(p, HomogPoly.zero(self.family.n, p * self.family.d - self.family.n))

    def size(self):
        return sum(len(A.poly) for A in self.terms.values())

    def __add__(self, other):
        terms = dict(self.terms)
        for p, A in other.terms.items():
            terms[p] = terms[p] + A if p in terms else A
        return CohomClass(self.family, terms)

    def __sub__(self, other):
        return self + other.scale(-1)

    def __neg__(self):
        return self.scale(-1)

    def __eq__(self, other):
        if not isinstance(other, CohomClass):
            return NotImplemented
        return self.family == other.family and self.terms == other.terms

    def __repr__(self):
        return f"CohomClass(pole orders {sorted(self.terms)})"

    def scale(self, c):
        return CohomClass(self.family, {p: A.scale(c) for p, A in self.terms.items()})


@dataclass
class NotInIdeal:
    """Top numerator is outside the Jacobian ideal: the class does not vanish"""
    pole_order: int
    remainder: HomogPoly
    message: str = ''

    def __bool__(self):
        return False


@dataclass
class VerificationResult:
    family: object
    v: object
    operator: str
    annihilates: bool
    top_pole_order: int
    steps: int
    wall_time_ms: int = 0
    failed_at: int = None

    def to_json(self, timings=False):
        out = {
            'family': self.family.to_json(),
            'v': str(self.v),
            'operator': self.operator,
            'annihilates': self.annihilates,
            'top_pole_order': self.top_pole_order,
        }
        if timings:
            out['wall_time_ms'] = self.wall_time_ms
        return out


# ---------------------------------------------------------------- Jacobian ideal

class JacobianBasisCache:
    """Ideal membership data for J = (dQ/dX_1, ..., dQ/dX_n) over QQ(lam).

    Two strategies decide the same question.  'rewrite' uses
    X_i^(d-1) = dQ/dX_i / (d w_i) + lam X^(W - e_i) to push every monomial onto
    the monomials with all exponents <= d - 2, which form a basis of the
    Jacobian ring in each degree.  'dense' solves A = sum B_i dQ/dX_i as a
    linear system restricted to one character of the diagonal symmetry group.
    """

    def __init__(self, family):
        self.family = family
        self.n, self.d, self.w = family.n, family.d, family.w
        self.R = homog_ring(self.n)
        self._normal_forms = {}
        self._matrices = {}
        self._partials = [self._partial(i) for i in range(self.n)]

    def partial(self, i):
        return self._partials[i]

    def _partial(self, i):
        """dQ/dX_i as a monomial dict"""
        n, d, w = self.n, self.d, self.w
        pure = tuple(d - 1 if j == i else 0 for j in range(n))
        mixed = tuple(w[j] - (1 if j == i else 0) for j in range(n))
        out = {pure: FIELD(d * w[i])}
        out[mixed] = out.get(mixed, FIELD.zero) - d * w[i] * LAM
        return out

    def character_key(self, a):
        d, w = self.d, self.w
        return min(tuple((x + r * wi) % d for x, wi in zip(a, w)) for r in range(d))

    def is_basis_monomial(self, a):
        return all(x <= self.d - 2 for x in a)

    def basis_size(self, m):
        return sum(1 for a in monomials_of_degree(self.n, m) if self.is_basis_monomial(a))

    # rewrite strategy
    def normal_form(self, a):
        """(remainder, divergence) of X^a.

        X^a = R + sum B_i dQ/dX_i with R supported on basis monomials, and the
        divergence is sum dB_i/dX_i, both as monomial -> QQ(lam) dicts.
        """
        memo = self._normal_forms
        if a in memo:
            return memo[a]
        d, w = self.d, self.w
        chain, divs, seen = [], [], {}
        cur = a
        while cur not in memo and cur not in seen and not self.is_basis_monomial(cur):
            seen[cur] = len(chain)
            chain.append(cur)
            i = max(range(self.n), key=lambda j: (cur[j], -j))
            reduced = tuple(x - (d - 1 if j == i else 0) for j, x in enumerate(cur))
            div = {}
            if reduced[i]:
                div[tuple(x - (1 if j == i else 0) for j, x in enumerate(reduced))] = FIELD(QQ(reduced[i], d * w[i]))
            divs.append(div)
            cur = tuple(x - (d if j == i else 0) + wj for j, (x, wj) in enumerate(zip(cur, w)))

        if cur in memo:
            nxt = memo[cur]
        elif self.is_basis_monomial(cur):
            nxt = ({cur: FIELD.one}, {})
            memo[cur] = nxt
        else:
            start = seen[cur]
            length = len(chain) - start
            acc = {}
            for k in range(start, len(chain)):
                _axpy(acc, divs[k], LAM ** (k - start))
            nxt = ({}, _axpy({}, acc, 1 / (1 - LAM ** length)))
            logger.debug("rewrite cycle of length %d through %s", length, cur)

        for k in range(len(chain) - 1, -1, -1):
            rem = _axpy({}, nxt[0], LAM)
            div = _axpy(dict(divs[k]), nxt[1], LAM)
            nxt = (rem, div)
            memo[chain[k]] = nxt
        if len(memo) > MAX_CLASS_MONOMIALS:
            raise OracleResourceError(f"rewrite memo exceeds {MAX_CLASS_MONOMIALS} monomials")
        return memo[a]

    def split_rewrite(self, A):
        remainder, divergence = {}, {}
        for a, c in A.poly.items():
            rem, div = self.normal_form(a)
            _axpy(remainder, rem, c)
            _axpy(divergence, div, c)
        return remainder, divergence

    # dense strategy
    def multiplication_system(self, m, keys):
        """Rows: degree m monomials with the given character keys; columns (i, b)"""
        cache_key = (m, keys)
        if cache_key in self._matrices:
            return self._matrices[cache_key]
        d, n = self.d, self.n
        rows = [a for a in monomials_of_degree(n, m) if self.character_key(a) in keys]
        if len(rows) > MAX_CLASS_MONOMIALS:
            raise OracleResourceError(f"degree {m} system has {len(rows)} monomials, "
                                      f"cap is {MAX_CLASS_MONOMIALS}")
        row_index = {a: k for k, a in enumerate(rows)}
        cols = []
        if m >= d - 1:
            for b in monomials_of_degree(n, m - (d - 1)):
                for i in range(n):
                    shifted = tuple(x + (d - 1 if j == i else 0) for j, x in enumerate(b))
                    if self.character_key(shifted) in keys:
                        cols.append((i, b))
        matrix = [[FIELD.zero] * len(cols) for _ in rows]
        for k, (i, b) in enumerate(cols):
            for e, c in self.partial(i).items():
                target = tuple(x + y for x, y in zip(b, e))
                matrix[row_index[target]][k] = matrix[row_index[target]][k] + c
        logger.debug("dense system in degree %d: %d x %d", m, len(rows), len(cols))
        self._matrices[cache_key] = (rows, cols, matrix)
        return rows, cols, matrix

    def split_dense(self, A):
        if A.is_zero():
            return {}, {}
        keys = frozenset(self.character_key(a) for a in A.poly.keys())
        rows, cols, matrix = self.multiplication_system(A.degree, keys)
        rhs = [A.poly.get(a, FIELD.zero) for a in rows]
        x = linsolve_ratfun(matrix, rhs) if cols else NoSolution
        if x is NoSolution:
            return dict(A.poly.items()), {}
        divergence = {}
        for (i, b), c in zip(cols, x):
            if c and b[i]:
                target = tuple(y - (1 if j == i else 0) for j, y in enumerate(b))
                _axpy(divergence, {target: FIELD(b[i])}, c)
        return {}, divergence


# ---------------------------------------------------------------- oracle

class GriffithsOracle:
    """Cohomology calculus for one family with a fixed membership strategy"""

    def __init__(self, family, strategy=None):
        strategy = strategy or DEFAULT_STRATEGY
        if strategy not in STRATEGIES:
            raise UsageError(f"unknown oracle strategy {strategy!r}; choose from {STRATEGIES}")
        self.family = family
        self.strategy = strategy
        self.cache = JacobianBasisCache(family)

    def omega_class(self, V):
        """prod X_i^(v_i - 1) / Q^deg(V) * Omega"""
        if not is_totally_nonzero(V):
            raise DomainError(f"V = ({V}) is not totally nonzero")
        numerator = HomogPoly.monomial(tuple(x - 1 for x in V.tilde))
        return CohomClass.single(self.family, V.deg, numerator)

    def apply_D_lambda(self, c):
        """lam d/dlam of A/Q^p is (lam dA/dlam)/Q^p + p d lam X^W A / Q^(p+1)"""
        result = CohomClass.zero(self.family)
        d, W = self.family.d, self.family.w
        for p, A in c.terms.items():
            if p + 1 > MAX_POLE_ORDER:
                raise OracleResourceError(f"pole order {p + 1} exceeds cap {MAX_POLE_ORDER}")
            result = result + CohomClass(self.family, {
                p: A.lambda_derivative(),
                p + 1: A.mul_monomial(W, p * d * LAM),
            })
        if result.size() > MAX_CLASS_MONOMIALS:
            raise OracleResourceError(f"class has {result.size()} terms, cap is {MAX_CLASS_MONOMIALS}")
        return result

    def apply_operator_to_class(self, op, c):
        """sum_j c_j(lam) D^j applied to c"""
        if op.variable != 'lambda':
            raise UsageError("the oracle acts with operators in lam only")
        result = CohomClass.zero(self.family)
        power = c
        for j in range(op.order() + 1):
            if j:
                power = self.apply_D_lambda(power)
            coeff = op.coeff(j)
            if coeff:
                result = result + power.scale(coeff)
        return result

    def _split(self, A):
        if self.strategy == 'dense':
            return self.cache.split_dense(A)
        return self.cache.split_rewrite(A)

    def griffiths_reduce_step(self, c, p):
        """Replace the pole order p term by lower order terms, or NotInIdeal"""
        if p >= 2 and p not in c.terms and p > c.top_pole_order():
            return c
        if p < 2 or p != c.top_pole_order():
            raise UsageError(f"reduction needs the top pole order >= 2, got {p} "
                             f"for top order {c.top_pole_order()}")
        A = c.terms[p]
        remainder, divergence = self._split(A)
        if remainder:
            return NotInIdeal(p, HomogPoly(A.poly.ring.from_dict(remainder), A.degree),
                              f"numerator at pole order {p} is not in the Jacobian ideal")
        terms = {q: B for q, B in c.terms.items() if q != p}
        n, d = self.family.n, self.family.d
        lower = HomogPoly(A.poly.ring.from_dict(divergence), (p - 1) * d - n).scale(QQ(1, p - 1))
        terms[p - 1] = terms[p - 1] + lower if p - 1 in terms else lower
        logger.debug("reduced pole order %d (%d divergence terms)", p, len(divergence))
        return CohomClass(self.family, terms)

    def reduce(self, c):
        """(True, steps) if c vanishes, else (NotInIdeal, steps)"""
        steps = 0
        while c.terms:
            p = c.top_pole_order()
            if p == 1:
                # deg d - n < d - 1: every monomial is a basis monomial
                remainder, _ = self._split(c.terms[1])
                if remainder:
                    return NotInIdeal(1, c.terms[1], "pole order 1 numerator is nonzero"), steps
                return True, steps
            c = self.griffiths_reduce_step(c, p)
            steps += 1
            if isinstance(c, NotInIdeal):
                return c, steps
        return True, steps

    def is_zero_class(self, c):
        verdict, _ = self.reduce(c)
        return verdict is True

    def verify(self, V, op):
        start = time.perf_counter()
        image = self.apply_operator_to_class(op, self.omega_class(V))
        verdict, steps = self.reduce(image)
        elapsed = int((time.perf_counter() - start) * 1000)
        result = VerificationResult(self.family, V, op.pretty(), verdict is True,
                                    image.top_pole_order(), steps, elapsed,
                                    None if verdict is True else verdict.pole_order)
        logger.info("V = (%s): %s annihilates = %s in %d ms", V, result.operator,
                    result.annihilates, elapsed)
        return result


@lru_cache(maxsize=None)
def oracle_for(family, strategy=None):
    return GriffithsOracle(family, strategy)


def omega_class(family, V):
    return oracle_for(family).omega_class(V)


def apply_D_lambda(c):
    return oracle_for(c.family).apply_D_lambda(c)


def apply_operator_to_class(op, c):
    return oracle_for(c.family).apply_operator_to_class(op, c)


def griffiths_reduce_step(c, p, strategy=None):
    return oracle_for(c.family, strategy).griffiths_reduce_step(c, p)


def is_zero_class(c, strategy=None):
    return oracle_for(c.family, strategy).is_zero_class(c)


def verify_annihilation(family, V, op, strategy=None):
    return oracle_for(family, strategy).verify(V, op).annihilates


if __name__ == "__main__":
    from dwork_family import char_vector, validate_family
    from pf_operators import build_P_prime, perturb_parameter, reduce_P

    family = validate_family(4, 4, (1, 1, 1, 1))
    oracle = GriffithsOracle(family)
    print("=== GRIFFITHS ORACLE, QUARTIC K3 ===")
    for v in [(1, 2, 2, 3), (1, 1, 1, 1), (1, 1, 3, 3)]:
        V = char_vector(family, v)
        for name, op in [("P'", build_P_prime(family, V)), ("P", reduce_P(family, V))]:
            result = oracle.verify(V, op)
            mark = "✓" if result.annihilates else "✗"
            print(f"{mark} V = ({V}) {name}: top pole order {result.top_pole_order}, "
                  f"{result.steps} steps, {result.wall_time_ms} ms")
        wrong = perturb_parameter(reduce_P(family, V), 0)
        print(f"  mutated P annihilates: {oracle.verify(V, wrong).annihilates}")
