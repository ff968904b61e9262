import math

import numpy as np
import pytest

from loewnerkit import herglotz as hg


ALL_SPECS = [
    hg.CayleyLinear(),
    hg.Cayley(),
    hg.ConstantImaginary(),
    hg.Automorphism(1.0, 0.5),
    hg.Automorphism(0.0, 1.0),
    hg.Exponential(),
    hg.Taylor([1.0, 0.5 + 0.25j]),
]


def test_eval_simple_values():
    assert hg.eval(hg.Cayley(), 0.0) == 1.0
    assert hg.eval(hg.ConstantImaginary(), 0.5) == 1j
    assert hg.eval(hg.CayleyLinear(), 0.5) == 2.0


def test_eval_exponential_quarter_pi():
    # exp(pi/4), checked against mpmath to 36 digits
    want = 2.1932800507380154566
    got = hg.eval(hg.Exponential(), 0.5)
    assert got.imag == 0.0
    assert abs(got.real - want) < 1e-14


def test_eval_rejects_outside_disk():
    for spec in ALL_SPECS:
        with pytest.raises(hg.DomainError):
            hg.eval(spec, 1.5)
        with pytest.raises(hg.DomainError):
            hg.eval(spec, 1.0)


def test_eval_rejects_near_pole():
    for spec in [hg.Cayley(), hg.CayleyLinear(), hg.Automorphism(2.0, 0.0)]:
        with pytest.raises(hg.SingularPointError):
            hg.eval(spec, 1.0 - 1e-13)
    # entire specs are fine arbitrarily close to 1
    assert hg.eval(hg.Exponential(), 1.0 - 1e-13) != 0.0
    assert hg.eval(hg.Automorphism(0.0, 1.0), 1.0 - 1e-13) == 1j


def test_real_part_nonnegative_on_grid():
    rng = np.random.default_rng(7)
    pts = 0.97 * np.sqrt(rng.random(500)) * np.exp(2j * math.pi * rng.random(500))
    for spec in ALL_SPECS:
        vals = np.asarray(spec._value(pts))
        assert vals.real.min() >= -1e-12, spec.text_form()


def test_taylor_cayley():
    assert hg.taylor_coefficients(hg.Cayley(), 3) == [1, 2, 2, 2]
    assert hg.taylor_coefficients(hg.CayleyLinear(), 4) == [1, 1, 1, 1, 1]


def test_taylor_exponential():
    coeffs = hg.taylor_coefficients(hg.Exponential(), 6)
    for m, c in enumerate(coeffs):
        assert c.imag == 0.0
        assert abs(c.real - (math.pi / 2.0) ** m / math.factorial(m)) < 1e-15


def test_taylor_automorphism_and_const():
    assert hg.taylor_coefficients(hg.Automorphism(1.5, -0.5), 3) == \
        [1.5 - 0.5j, 3.0, 3.0, 3.0]
    assert hg.taylor_coefficients(hg.ConstantImaginary(), 2) == [1j, 0, 0]


def test_taylor_spec_pads_and_truncates():
    spec = hg.Taylor([1.0, 0.5])
    assert hg.taylor_coefficients(spec, 4) == [1.0, 0.5, 0.0, 0.0, 0.0]
    assert hg.taylor_coefficients(spec, 0) == [1.0]


def test_taylor_matches_series_numerically():
    # partial sums of the exact coefficients must converge to _value
    z = 0.3 - 0.2j
    for spec in ALL_SPECS:
        coeffs = hg.taylor_coefficients(spec, 60)
        acc = 0.0 + 0.0j
        for c in reversed(coeffs):
            acc = acc * z + c
        assert abs(acc - hg.eval(spec, z)) < 1e-12, spec.text_form()


def test_bp_field_matches_definition():
    # the cancelled forms must agree with (w-1)^2 p(w) away from the pole
    pts = [0.3 + 0.4j, -0.7j, 0.0, 0.9, -0.95 + 0.01j]
    for spec in ALL_SPECS:
        for w in pts:
            direct = (w - 1.0) ** 2 * spec._value(w)
            assert abs(spec._bp_field(w) - direct) < 1e-13


def test_bp_field_finite_at_one():
    # cancelled forms evaluate cleanly at the former pole
    assert hg.CayleyLinear()._bp_field(1.0) == 0.0
    assert hg.Cayley()._bp_field(1.0) == 0.0
    assert hg.Automorphism(1.0, 0.5)._bp_field(1.0) == 0.0
    assert hg.ConstantImaginary()._bp_field(1.0) == 0.0


def test_automorphism_generator_value():
    # polynomial route and field route agree; value checked offline
    got = hg.automorphism_generator(0.0, 1.0, 0.5, 1j)
    assert abs(got - 2.5) < 1e-15
    spec = hg.Automorphism(1.0, 0.5)
    for z in [0.2 + 0.1j, -0.5j, 0.0]:
        via_field = spec._bp_field(z) - 1j * 2.0 * z
        assert abs(hg.automorphism_generator(1.0, 0.5, 2.0, z) - via_field) < 1e-14


def test_automorphism_rejects_negative_A():
    with pytest.raises(ValueError):
        hg.Automorphism(-0.5, 0.0)
    with pytest.raises(ValueError):
        hg.automorphism_generator(-1.0, 0.0, 1.0, 0.0)


def test_berkson_porta_factor():
    # solvable reference case: k=1, tau0 = (1-i)/2, factor at 0 is 1+i
    got = hg.berkson_porta_p0(hg.CayleyLinear(), 1.0, 0.5 - 0.5j, 0.0)
    assert abs(got - (1.0 + 1.0j)) < 1e-14


def test_berkson_porta_factor_is_herglotz_on_grid():
    # the factored quotient should itself have nonnegative real part
    tau0 = 0.5 - 0.5j
    rng = np.random.default_rng(3)
    for _ in range(200):
        z = 0.9 * math.sqrt(rng.random()) * np.exp(2j * math.pi * rng.random())
        z = complex(z)
        if abs(z - tau0) < 0.05:
            continue
        val = hg.berkson_porta_p0(hg.CayleyLinear(), 1.0, tau0, z)
        assert val.real >= -1e-10


def test_berkson_porta_errors():
    with pytest.raises(hg.SingularPointError):
        hg.berkson_porta_p0(hg.CayleyLinear(), 1.0, 0.5 - 0.5j, 0.5 - 0.5j)
    with pytest.raises(hg.DomainError):
        hg.berkson_porta_p0(hg.CayleyLinear(), 1.0, 0.5 - 0.5j, 2.0)


def test_berkson_porta_data_validates_tau():
    data = hg.BerksonPortaData(tau=0.5 - 0.5j, herglotz=hg.CayleyLinear())
    assert data.tau == 0.5 - 0.5j
    with pytest.raises(ValueError):
        hg.BerksonPortaData(tau=1.5, herglotz=hg.CayleyLinear())


def test_text_form_round_trip():
    for spec in ALL_SPECS:
        again = hg.parse_spec(spec.text_form())
        assert again == spec
        assert hash(again) == hash(spec)


def test_parse_spec_accepts_plain_forms():
    assert hg.parse_spec("cayley") == hg.Cayley()
    assert hg.parse_spec(" const-i ") == hg.ConstantImaginary()
    s = hg.parse_spec("automorphism:1,0.5")
    assert s.A == 1.0 and s.B == 0.5
    t = hg.parse_spec("taylor:1,0.5+0.25i")
    assert t.coefficients == (1.0, 0.5 + 0.25j)


def test_parse_spec_rejects_garbage():
    for bad in ["", "cayley2", "automorphism:1", "automorphism:1,2,3",
                "taylor:", "taylor:1,zap"]:
        with pytest.raises(ValueError):
            hg.parse_spec(bad)


def test_parse_complex_literals():
    assert hg.parse_complex("1") == 1.0
    assert hg.parse_complex("-2.5i") == -2.5j
    assert hg.parse_complex("1-2i") == 1.0 - 2.0j
    assert hg.parse_complex(hg.format_complex(0.125 - 3.5j)) == 0.125 - 3.5j
    with pytest.raises(ValueError):
        hg.parse_complex("one")


def test_taylor_admissibility_check():
    # p(z) = z goes negative on the left half of the disk
    with pytest.raises(ValueError):
        hg.Taylor([0.0, 1.0])
    # p(z) = 1 + z stays nonnegative
    hg.Taylor([1.0, 1.0])
    with pytest.raises(ValueError):
        hg.Taylor([])
