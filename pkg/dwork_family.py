"""Combinatorics of the generalized Dwork family

    Q_lam = w1 X1^d + ... + wn Xn^d - d lam X1^w1 ... Xn^wn

character vectors V in (Z/d)^n with zero coordinate sum, ranks, the index
sets I(V, W) and J(V, W), the Bezout vector b and Frobenius pullback.
"""
import logging
from dataclasses import dataclass
from itertools import permutations, product

import pandas as pd
from sympy import igcd, ilcm, mod_inverse
from sympy.core.intfunc import igcdex

from core_arith import to_rational
from errors import DomainError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FamilyData:
    n: int
    d: int
    w: tuple
    b: tuple
    d_W: int

    def to_json(self):
        return {'n': self.n, 'd': self.d, 'w': list(self.w), 'b': list(self.b), 'dW': self.d_W}

    def __str__(self):
        return f"(n={self.n}, d={self.d}, W={','.join(map(str, self.w))})"


@dataclass(frozen=True)
class CharVector:
    d: int
    v: tuple
    tilde: tuple
    deg: int
    N: int

    def __str__(self):
        return ','.join(str(x) for x in self.v)

    def to_json(self):
        return str(self)


def _bezout_step(g, w):
    """Bezout pair (x, y) with x*g + y*w = gcd(g, w), |y| then |x| minimal, x >= 0 on ties"""
    x0, y0, h = (int(x) for x in igcdex(g, w))
    step_x, step_y = w // h, g // h
    centre = round(y0 / step_y)
    candidates = [(x0 + k * step_x, y0 - k * step_y) for k in range(centre - 2, centre + 3)]
    x, y = min(candidates, key=lambda xy: (abs(xy[1]), abs(xy[0]), xy[0] < 0))
    return x, y, h


def bezout_vector(W):
    """Integers b with sum b_i w_i = gcd(W), folding extended Euclid left over W"""
    g, b = W[0], [1]
    for w in W[1:]:
        x, y, g = _bezout_step(g, w)
        b = [bi * x for bi in b] + [y]
    return tuple(b), g


def validate_family(n, d, W):
    """Check the family conditions and derive b and d_W"""
    W = tuple(int(w) for w in W)
    if n < 3:
        raise ValidationError(f"n must be at least 3, got n = {n}")
    if len(W) != n:
        raise ValidationError(f"W has {len(W)} entries but n = {n}")
    if any(w <= 0 for w in W):
        raise ValidationError(f"weights must be positive integers, got W = {W}")
    if sum(W) != d:
        raise ValidationError(f"sum of weights {sum(W)} differs from d = {d}")
    g = 0
    for w in W:
        g = igcd(g, w)
    if g != 1:
        raise ValidationError(f"gcd of weights is {g}, must be 1")
    if d < n:
        raise ValidationError(f"d = {d} must be at least n = {n}")

    b, _ = bezout_vector(W)
    lcm_w = 1
    for w in W:
        lcm_w = ilcm(lcm_w, w)
    return FamilyData(n, d, W, tuple(int(x) for x in b), int(lcm_w * d))


def char_vector(family, v):
    """CharVector of residues v mod d; the coordinate sum must vanish mod d"""
    if len(v) != family.n:
        raise DomainError(f"V has {len(v)} entries but n = {family.n}")
    d = family.d
    tilde = tuple(int(x) % d for x in v)
    if sum(tilde) % d:
        raise DomainError(f"coordinates of V = {tuple(v)} do not sum to 0 mod {d}")
    N = sum(bi * vi for bi, vi in zip(family.b, tilde))
    return CharVector(d, tilde, tilde, sum(tilde) // d, N)


def parse_char_vector(family, text):
    return char_vector(family, [int(x) for x in text.split(',')])


def degree(V):
    return V.deg


def negate(family, V):
    return char_vector(family, [-x for x in V.v])


def is_totally_nonzero(V):
    return all(x != 0 for x in V.tilde)


def _require_totally_nonzero(V):
    if not is_totally_nonzero(V):
        raise DomainError(f"V = ({V}) is not totally nonzero")


def _shift(family, v, r):
    return tuple((x + r * w) % family.d for x, w in zip(v, family.w))


def rank(family, V):
    """Number of r in Z/d with V + rW totally nonzero"""
    return sum(1 for r in range(family.d) if all(_shift(family, V.tilde, r)))


def index_set_J(family, V):
    _require_totally_nonzero(V)
    d = family.d
    return sorted({r for r in range(d)
                   if any((v + r * w) % d == 0 for v, w in zip(V.tilde, family.w))})


def index_set_I(family, V):
    _require_totally_nonzero(V)
    d = family.d
    found = set()
    for v, w in zip(V.tilde, family.w):
        for j in range(w):
            x = v + j * d
            if x % w == 0:
                found.add(d - x // w)
    return sorted(found)


def exponents(family, V):
    """Local exponents at lam = 0 of the reduced operator: {0..d-1} minus I(V, W)"""
    removed = set(index_set_I(family, V))
    return [k for k in range(family.d) if k not in removed]


def cyclic_basis_expected(family, V):
    """True when the exponents are 0..r-1, so the Wronskian is invertible at 0"""
    return exponents(family, V) == list(range(rank(family, V)))


def frobenius_pullback(family, V, p):
    """V^(1) = p^-1 V mod d"""
    d = family.d
    if igcd(p, d) != 1:
        raise DomainError(f"p = {p} is not prime to d = {d}")
    p_inv = int(mod_inverse(p, d))
    return char_vector(family, [p_inv * x for x in V.tilde])


def _totally_nonzero_vectors(family):
    n, d = family.n, family.d
    for head in product(range(1, d), repeat=n - 1):
        last = (-sum(head)) % d
        if last:
            yield head + (last,)


def _orbit(family, v):
    return {_shift(family, v, r) for r in range(family.d)}


def _orbit_representative(family, v):
    return min(u for u in _orbit(family, v) if all(u))


def representatives(family):
    """Lexicographically least totally nonzero member of each orbit under V -> V + rW"""
    seen = set()
    reps = []
    for v in _totally_nonzero_vectors(family):
        if v in seen:
            continue
        reps.append(char_vector(family, v))
        seen |= _orbit(family, v)
    logger.debug("family %s: %d orbit representatives", family, len(reps))
    return reps


@dataclass(frozen=True)
class SymmetryType:
    representative: CharVector
    members: tuple
    rank: int

    @property
    def multiplicity(self):
        return len(self.members)


def symmetry_types(family):
    """Group orbit representatives under coordinate permutations fixing W"""
    n = family.n
    perms = [s for s in permutations(range(n)) if all(family.w[s[i]] == family.w[i] for i in range(n))]
    groups = {}
    for V in representatives(family):
        key = min(_orbit_representative(family, tuple(V.tilde[s[i]] for i in range(n))) for s in perms)
        groups.setdefault(key, []).append(V)
    types = []
    for key in sorted(groups):
        rep = char_vector(family, key)
        types.append(SymmetryType(rep, tuple(groups[key]), rank(family, rep)))
    return types


def total_rank(family):
    return sum(rank(family, V) for V in representatives(family))


def is_smooth_fiber(family, lam0):
    """The fiber at lam0 is smooth iff 1 - lam0^d != 0"""
    lam0 = to_rational(lam0)
    return 1 - lam0 ** family.d != 0


class FamilySurvey:
    """Per-representative combinatorial report for one family"""

    def __init__(self, family):
        self.family = family
        self.reps = representatives(family)

    def calculate_records(self):
        records = []
        for V in self.reps:
            records.append({
                'v': str(V),
                'deg': V.deg,
                'N': V.N,
                'rank': rank(self.family, V),
                'I': index_set_I(self.family, V),
                'J': index_set_J(self.family, V),
                'exponents': exponents(self.family, V),
                'cyclic_basis': cyclic_basis_expected(self.family, V),
            })
        return records

    def to_frame(self):
        return pd.DataFrame(self.calculate_records())

    def generate_report(self):
        records = self.calculate_records()
        types = symmetry_types(self.family)
        by_v = {r['v']: r for r in records}
        return {
            'family': self.family.to_json(),
            'summary': {
                'orbits': len(records),
                'symmetry_types': len(types),
                'total_rank': sum(r['rank'] for r in records),
                'cyclic_basis_failures': sum(1 for r in records if not r['cyclic_basis']),
            },
            'representatives': [
                dict(by_v[str(t.representative)], multiplicity=t.multiplicity,
                     orbits=[str(V) for V in t.members])
                for t in types
            ],
            'orbits': records,
        }


if __name__ == "__main__":
    family = validate_family(4, 4, (1, 1, 1, 1))
    survey = FamilySurvey(family)
    report = survey.generate_report()

    print("=== QUARTIC K3 PENCIL ===")
    print(f"b = {family.b}, d_W = {family.d_W}")
    print(f"Orbits: {report['summary']['orbits']}, total rank: {report['summary']['total_rank']}")

    print("\n=== SYMMETRY TYPES ===")
    for entry in report['representatives']:
        print(f"V = ({entry['v']}): rank {entry['rank']}, I = {entry['I']}, "
              f"x{entry['multiplicity']}, cyclic basis: {entry['cyclic_basis']}")

    print("\n=== ALL ORBITS ===")
    print(survey.to_frame().to_string(index=False))
