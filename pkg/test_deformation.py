import random

import pytest
from sympy import binomial
from sympy.polys.domains import QQ

import deformation
from core_arith import FIELD, LAM, TruncSeries
from deformation import (SeriesMatrix, check_frobenius_prime, connection_residue, dA_minus_AC,
                         deformation_data, deformation_matrix, frobenius_for_pair,
                         frobenius_matrix, frobenius_order_needed, fundamental_solutions,
                         horizontality_residual, horizontality_scale, identity_rows,
                         transformed_connection, wronskian)
from dwork_family import char_vector, frobenius_pullback, validate_family
from errors import CyclicBasisFails, DegenerateParameterError, DomainError, UsageError
from pf_operators import DiffOperator, apply_operator, reduce_P

K3 = validate_family(4, 4, (1, 1, 1, 1))
V1 = char_vector(K3, (1, 2, 2, 3))
V2 = char_vector(K3, (1, 1, 1, 1))
V3 = char_vector(K3, (1, 1, 3, 3))


def hypergeometric_2f1(a, b, c, order, d=4, shift=0):
    """Coefficients of lam^shift 2F1(a, b; c; lam^d) below the given order"""
    coeffs = [QQ(0)] * order
    term, n = QQ(1), 0
    while shift + d * n < order:
        coeffs[shift + d * n] = term
        term = term * (a + n) * (b + n) / ((c + n) * (n + 1))
        n += 1
    return coeffs


def random_series_matrix(rng, r, order):
    rows = []
    for i in range(r):
        row = []
        for j in range(r):
            coeffs = [QQ(rng.randint(-5, 5), rng.randint(1, 4)) for _ in range(order)]
            if i == j:
                coeffs[0] = QQ(rng.choice([-3, -2, -1, 1, 2, 3]))
            elif i > j:
                coeffs[0] = QQ(0)
            row.append(TruncSeries.from_coeffs(coeffs, order))
        rows.append(row)
    return SeriesMatrix(rows, order)


def test_rank_one_class_is_binomial_series():
    data = deformation_data(K3, V1, 40)
    assert not data.corrected
    expected = [QQ(0)] * 40
    for n in range(10):
        expected[4 * n] = QQ(int(binomial(2 * n, n)), 4 ** n)
    assert data.A.entry(0, 0).coeffs == expected


def test_rank_three_class_cyclic_basis():
    data = deformation_data(K3, V2, 40)
    assert not data.corrected
    assert data.A.order == 40
    assert data.A.value_at_zero().to_list() == identity_rows(3)
    assert dA_minus_AC(data.A, data.connection).is_zero()


def test_rank_two_class_needs_basis_change():
    with pytest.raises(CyclicBasisFails) as info:
        deformation_matrix(K3, V3, 20)
    assert info.value.wronskian is not None
    assert info.value.wronskian.value_at_zero().det() == 0

    data = deformation_data(K3, V3, 20)
    assert data.corrected
    assert data.basis_change.B == [[FIELD.one, FIELD.zero], [FIELD.zero, 1 / (2 * LAM)]]

    q = QQ
    a00 = hypergeometric_2f1(q(1, 4), q(3, 4), q(1, 2), 20)
    a10 = hypergeometric_2f1(q(3, 4), q(5, 4), q(3, 2), 20, shift=2)
    a11 = hypergeometric_2f1(q(3, 4), q(5, 4), q(1, 2), 20)
    # (1/(2 lam)) d/dlam of the first solution
    first = hypergeometric_2f1(q(1, 4), q(3, 4), q(1, 2), 24)
    a01 = [QQ(0)] * 20
    for k in range(4, 21, 4):
        a01[k - 2] = QQ(k, 2) * first[k]
    assert data.A.entry(0, 0).coeffs == a00
    assert data.A.entry(0, 1).coeffs == a01
    assert data.A.entry(1, 0).coeffs == a10
    assert data.A.entry(1, 1).coeffs == a11
    assert data.A.entry(1, 1).coeff(4) == QQ(15, 8)


def test_corrected_connection_is_regular_and_nilpotent():
    data = deformation_data(K3, V3, 20)
    expected = [[FIELD.zero, 3 * LAM / (2 * (1 - LAM ** 4))],
                [2 * LAM, 6 * LAM ** 3 / (1 - LAM ** 4)]]
    assert data.connection == expected
    assert connection_residue(data.connection) == [[QQ(0), QQ(0)], [QQ(0), QQ(0)]]
    assert dA_minus_AC(data.A, data.connection).is_zero()


def test_base_change_of_wronskian_gives_A():
    basis = fundamental_solutions(K3, V3, 30)
    W = wronskian(basis, 28)
    data = deformation_data(K3, V3, 20)
    B_inv = [[FIELD.one, FIELD.zero], [FIELD.zero, 2 * LAM]]
    assert data.A.mul_ratfun_right(B_inv) == W.truncate(20)


def test_non_cyclic_pullback_class():
    V = frobenius_pullback(K3, V2, 3)
    assert V.v == (3, 3, 3, 3)
    data = deformation_data(K3, V, 16)
    assert data.corrected
    assert data.A.value_at_zero().to_list() == identity_rows(3)
    assert dA_minus_AC(data.A, data.connection).is_zero()


def test_solutions_are_annihilated():
    for V in (V1, V2, V3):
        P = reduce_P(K3, V)
        basis = fundamental_solutions(K3, V, 60)
        assert list(basis.exponents) == [int(k) for k in P.factored[0]]
        for w in basis.solutions:
            assert apply_operator(P, w).is_zero()


def test_solution_normalization():
    basis = fundamental_solutions(K3, V2, 10)
    assert basis.scales == [QQ(1), QQ(1), QQ(1, 2)]
    assert [w.valuation() for w in basis.solutions] == [0, 1, 2]
    assert basis.to_json()[0] == {'exponent': 0, 'scale': '1', 'upper': ['1/4', '1/4', '1/4'],
                                  'lower': ['3/4', '1/2']}


def test_degenerate_lower_parameter(monkeypatch):
    monkeypatch.setattr(deformation, 'reduce_P',
                        lambda family, V: DiffOperator.from_factors([0, 4], [1, 1], 4))
    with pytest.raises(DegenerateParameterError):
        fundamental_solutions(K3, V3, 10)


def test_cyclic_deformation_expands_solutions_once(monkeypatch):
    calls = []
    original = deformation.fundamental_solutions

    def counting(family, V, order):
        calls.append(order)
        return original(family, V, order)

    monkeypatch.setattr(deformation, 'fundamental_solutions', counting)
    data = deformation_data(K3, V2, 12)
    assert calls == [14]
    assert data.A == deformation_matrix(K3, V2, 12)



def test_wronskian_precision_check():
    basis = fundamental_solutions(K3, V2, 10)
    with pytest.raises(UsageError):
        wronskian(basis, 9)
    assert wronskian(basis).order == 8


def test_matrix_calculus_properties():
    rng = random.Random(2024)
    order = 30
    for _ in range(50):
        r = rng.randint(1, 3)
        M = random_series_matrix(rng, r, order)
        M_inv = M.inverse()
        assert M.matmul(M_inv) == SeriesMatrix.identity(r, order)
        # derivative of the inverse
        low = order - 1
        assert M_inv.derive() == -(M_inv.truncate(low).matmul(M.derive()).matmul(M_inv.truncate(low)))

        # base change: dX = X C  <=>  d(XB) = (XB) (B^-1 C B + B^-1 dB)
        X = random_series_matrix(rng, r, order)
        B = random_series_matrix(rng, r, order)
        C = X.inverse().truncate(low).matmul(X.derive())
        B_low = B.truncate(low)
        B_inv = B.inverse().truncate(low)
        C_tilde = B_inv.matmul(C).matmul(B_low) + B_inv.matmul(B.derive())
        Y = X.matmul(B)
        assert Y.derive() == Y.truncate(low).matmul(C_tilde)


def test_transformed_connection_identity_change():
    C = [[FIELD.zero, FIELD.one], [LAM, FIELD.zero]]
    identity = [[FIELD.one, FIELD.zero], [FIELD.zero, FIELD.one]]
    assert transformed_connection(C, identity) == C


def test_frobenius_horizontality_random_F0():
    rng = random.Random(99)
    order = 30
    cache = {}

    def data(V, needed):
        key = (V.v, needed)
        if key not in cache:
            cache[key] = deformation_data(K3, V, needed)
        return cache[key]

    checked = 0
    for p in (3, 5, 7):
        for V in (V1, V2, V3):
            V_1 = frobenius_pullback(K3, V, p)
            d_V = data(V, order)
            d_V1 = data(V_1, frobenius_order_needed(order, p))
            r, s = d_V.A.nrows, d_V1.A.nrows
            for _ in range(3):
                F0 = [[QQ(rng.randint(-9, 9), rng.randint(1, 9)) for _ in range(s)] for _ in range(r)]
                result = frobenius_matrix(d_V.A, d_V1.A, F0, p, order, family=K3)
                residual = horizontality_residual(result.F, d_V.connection, d_V1.connection, p)
                assert residual.is_zero(), (p, str(V))
                checked += 1
    assert checked >= 20


def test_bumped_frobenius_coefficient_breaks_horizontality():
    order = 20
    d_V = deformation_data(K3, V1, order)
    V_1 = frobenius_pullback(K3, V1, 3)
    d_V1 = deformation_data(K3, V_1, frobenius_order_needed(order, 3))
    result = frobenius_matrix(d_V.A, d_V1.A, [[QQ(2)]], 3, order)
    bumped = result.F + SeriesMatrix([[TruncSeries.monomial(1, order)]], order)
    assert not horizontality_residual(bumped, d_V.connection, d_V1.connection, 3).is_zero()


def test_frobenius_for_pair_with_reduction():
    result = frobenius_for_pair(K3, V1, 3, order=12, prec=2)
    assert result.residual_zero
    assert str(result.V1) == "3,2,2,1"
    assert len(result.reduction) == 12
    assert result.reduction[0].entries == ((1,),)
    assert result.to_json()['residual'] == 'zero to order'


def test_residual_order_accounts_for_pole_scaling():
    order = 12
    result = frobenius_for_pair(K3, V1, 3, order=order)
    d_V = deformation_data(K3, V1, order)
    d_V1 = deformation_data(K3, result.V1, frobenius_order_needed(order, 3))
    a = horizontality_scale(d_V.connection, d_V1.connection, 3)
    assert a >= 0
    assert result.residual_order == order - 1 - a
    assert result.to_json()['residual_order'] == result.residual_order


def test_frobenius_prime_checks():
    with pytest.raises(DomainError):
        check_frobenius_prime(K3, 2)
    with pytest.raises(DomainError):
        check_frobenius_prime(K3, 9)
    weighted = validate_family(3, 6, (1, 2, 3))
    with pytest.raises(DomainError):
        check_frobenius_prime(weighted, 3)
    check_frobenius_prime(K3, 1)
    check_frobenius_prime(K3, 7)


def test_frobenius_matrix_shape_checks():
    d_V = deformation_data(K3, V1, 10)
    with pytest.raises(UsageError):
        frobenius_matrix(d_V.A, d_V.A, [[1, 0]], 5, 10)
    with pytest.raises(UsageError):
        frobenius_matrix(d_V.A, d_V.A.truncate(2), [[1]], 5, 10)


if __name__ == "__main__":
    print("=== TESTING DEFORMATION METHOD ===")
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn) and name not in (
                "test_degenerate_lower_parameter", "test_cyclic_deformation_expands_solutions_once"):
            fn()
            print(f"✓ {name}")
    print("\n=== ALL TESTS PASSED! ===")
