"""Curve-core tests: field towers, group law, pairing, serialization.

Every derived expectation is checked against the independent naive
implementations in oracles.py (schoolbook field arithmetic, affine
chord-and-tangent group law, full-exponent final exponentiation).
"""

import random

import pytest

import oracles
from cpschain.errors import WireError
from cpschain.mscrypto import bls12381 as curve

# Standard compressed encodings of the curve's generators; shared by
# every interoperable implementation of this curve, so they double as
# an external compatibility check of the serialization convention.
G1_GEN_HEX = (
    "97f1d3a73197d7942695638c4fa9ac0fc3688c4f9774b905a14e3a3f171bac58"
    "6c55e83ff97a1aeffb3af00adb22c6bb"
)
G2_GEN_HEX = (
    "93e02b6052719f607dacd3a088274f65596bd0d09920b61ab5da61bbdc7f5049"
    "334cf11213945d57e5ac7d055d042b7e024aa2b2f08f0a91260805272dc51051"
    "c6e47ad4fa403b02b4510b647ae3d1770bac0326a805bbefd48056c8c121bdb8"
)


def _rand_fp2(rng):
    return (curve.mpz(rng.randrange(int(curve.P))), curve.mpz(rng.randrange(int(curve.P))))


def _rand_fp6(rng):
    return (_rand_fp2(rng), _rand_fp2(rng), _rand_fp2(rng))


def _rand_fp12(rng):
    return (_rand_fp6(rng), _rand_fp6(rng))


def _g1_aff_int(pt):
    aff = curve.g1_to_affine(pt)
    return None if aff is None else (int(aff[0]), int(aff[1]))


def _g2_aff_int(pt):
    aff = curve.g2_to_affine(pt)
    if aff is None:
        return None
    return (
        (int(aff[0][0]), int(aff[0][1])),
        (int(aff[1][0]), int(aff[1][1])),
    )


def test_constants_match_oracle_copies():
    assert int(curve.P) == oracles.P
    assert int(curve.R) == oracles.R
    assert curve.ABS_X == oracles.ABS_X


def test_fp12_multiplication_matches_schoolbook():
    rng = random.Random(1001)
    for _ in range(8):
        a, b = _rand_fp12(rng), _rand_fp12(rng)
        fast = oracles.tower_to_flat(curve.fp12_mul(a, b))
        slow = oracles.f12_mul(oracles.tower_to_flat(a), oracles.tower_to_flat(b))
        assert fast == slow


def test_fp12_squaring_matches_multiplication():
    rng = random.Random(1002)
    for _ in range(8):
        a = _rand_fp12(rng)
        assert curve.fp12_sqr(a) == curve.fp12_mul(a, a)


def test_field_inversion_round_trips():
    rng = random.Random(1003)
    a2 = _rand_fp2(rng)
    assert curve.fp2_mul(a2, curve.fp2_inv(a2)) == curve.FP2_ONE
    a6 = _rand_fp6(rng)
    assert curve.fp6_mul(a6, curve.fp6_inv(a6)) == curve.FP6_ONE
    a12 = _rand_fp12(rng)
    assert curve.fp12_mul(a12, curve.fp12_inv(a12)) == curve.FP12_ONE


def test_frobenius_equals_generic_power():
    rng = random.Random(1004)
    f = _rand_fp12(rng)
    p = int(curve.P)
    assert curve.frobenius(f, 1) == curve.fp12_pow(f, p)
    assert curve.frobenius(f, 2) == curve.fp12_pow(f, p * p)
    assert curve.frobenius(f, 3) == curve.fp12_pow(f, p * p * p)


def test_cyclotomic_squaring_agrees_on_cyclotomic_elements():
    rng = random.Random(1005)
    for _ in range(4):
        f = _rand_fp12(rng)
        # The easy part of the final exponentiation lands in the
        # cyclotomic subgroup, where the specialized squaring is valid.
        t = curve.fp12_mul(curve.fp12_conj(f), curve.fp12_inv(f))
        m = curve.fp12_mul(curve.frobenius(t, 2), t)
        assert curve.fp12_cyc_sqr(m) == curve.fp12_sqr(m)
        # and conjugation must invert it there
        assert curve.fp12_mul(m, curve.fp12_conj(m)) == curve.FP12_ONE


def test_g1_scalar_mult_matches_affine_oracle():
    rng = random.Random(1006)
    gen = _g1_aff_int(curve.G1_GEN)
    scalars = [1, 2, 3, 0xDEADBEEF, int(curve.R) - 1, rng.randrange(int(curve.R))]
    for k in scalars:
        assert _g1_aff_int(curve.g1_mul(curve.G1_GEN, k)) == oracles.g1aff_mul(gen, k)
    assert curve.g1_is_inf(curve.g1_mul(curve.G1_GEN, int(curve.R)))


def test_g2_scalar_mult_matches_affine_oracle():
    rng = random.Random(1007)
    gen = _g2_aff_int(curve.G2_GEN)
    for k in (1, 5, 0xABCDEF0123, rng.randrange(int(curve.R))):
        assert _g2_aff_int(curve.g2_mul(curve.G2_GEN, k)) == oracles.g2aff_mul(gen, k)
    assert curve.g2_is_inf(curve.g2_mul(curve.G2_GEN, int(curve.R)))


def test_mixed_addition_against_oracle():
    rng = random.Random(1008)
    a = rng.randrange(1, int(curve.R))
    b = rng.randrange(1, int(curve.R))
    pa, pb = curve.g1_mul(curve.G1_GEN, a), curve.g1_mul(curve.G1_GEN, b)
    got = _g1_aff_int(curve.g1_add(pa, pb))
    want = oracles.g1aff_add(_g1_aff_int(pa), _g1_aff_int(pb))
    assert got == want
    # doubling branch and inverse-pair branch
    assert _g1_aff_int(curve.g1_add(pa, pa)) == oracles.g1aff_add(
        _g1_aff_int(pa), _g1_aff_int(pa)
    )
    assert curve.g1_is_inf(curve.g1_add(pa, curve.g1_neg(pa)))


def test_hash_to_g1_properties():
    h1 = curve.hash_to_g1(b"message", b"DST-A")
    h2 = curve.hash_to_g1(b"message", b"DST-A")
    assert curve.g1_eq(h1, h2)
    assert not curve.g1_is_inf(h1)
    assert curve.g1_is_inf(curve.g1_mul(h1, int(curve.R)))  # subgroup membership
    assert not curve.g1_eq(h1, curve.hash_to_g1(b"message", b"DST-B"))
    assert not curve.g1_eq(h1, curve.hash_to_g1(b"other", b"DST-A"))


def test_pairing_matches_independent_oracle():
    assert oracles.tower_to_flat(
        curve.pairing(curve.G1_GEN, curve.G2_GEN)
    ) == oracles.oracle_pairing_cubed(_g1_aff_int(curve.G1_GEN), _g2_aff_int(curve.G2_GEN))
    p2 = curve.g1_mul(curve.G1_GEN, 7777)
    q2 = curve.g2_mul(curve.G2_GEN, 131071)
    assert oracles.tower_to_flat(curve.pairing(p2, q2)) == oracles.oracle_pairing_cubed(
        _g1_aff_int(p2), _g2_aff_int(q2)
    )


def test_pairing_bilinearity():
    rng = random.Random(1009)
    e = curve.pairing(curve.G1_GEN, curve.G2_GEN)
    assert e != curve.FP12_ONE  # nondegeneracy
    assert curve.fp12_pow(e, int(curve.R)) == curve.FP12_ONE  # GT order
    a = rng.randrange(2, 1 << 64)
    b = rng.randrange(2, 1 << 64)
    lhs = curve.pairing(curve.g1_mul(curve.G1_GEN, a), curve.g2_mul(curve.G2_GEN, b))
    assert lhs == curve.fp12_pow(e, a * b)


def test_pairing_product_and_check():
    p = curve.g1_mul(curve.G1_GEN, 31337)
    q = curve.g2_mul(curve.G2_GEN, 271828)
    prep = curve.prepare_g2(q)
    # e(P, Q) * e(-P, Q) == 1
    assert curve.pairing_check([(p, prep), (curve.g1_neg(p), prep)])
    assert not curve.pairing_check([(p, prep), (p, prep)])
    # product with shared Miller loop equals product of separate pairings
    p2 = curve.g1_mul(curve.G1_GEN, 99)
    q2 = curve.g2_mul(curve.G2_GEN, 101)
    combined = curve.pairing_product([(p, prep), (p2, curve.prepare_g2(q2))])
    separate = curve.fp12_mul(curve.pairing(p, q), curve.pairing(p2, q2))
    assert combined == separate
    # infinity members contribute one
    assert curve.pairing_product([(curve.G1_INF, prep)]) == curve.FP12_ONE
    assert curve.pairing_product([(p, curve.prepare_g2(curve.G2_INF))]) == curve.FP12_ONE


def test_generator_known_encodings():
    assert curve.g1_to_bytes(curve.G1_GEN).hex() == G1_GEN_HEX
    assert curve.g2_to_bytes(curve.G2_GEN).hex() == G2_GEN_HEX
    assert curve.g1_eq(curve.g1_from_bytes(bytes.fromhex(G1_GEN_HEX)), curve.G1_GEN)
    assert curve.g2_eq(curve.g2_from_bytes(bytes.fromhex(G2_GEN_HEX)), curve.G2_GEN)


def test_serialization_round_trips():
    rng = random.Random(1010)
    for _ in range(4):
        k = rng.randrange(1, int(curve.R))
        p1 = curve.g1_mul(curve.G1_GEN, k)
        assert curve.g1_eq(curve.g1_from_bytes(curve.g1_to_bytes(p1)), p1)
        p2 = curve.g2_mul(curve.G2_GEN, k)
        assert curve.g2_eq(curve.g2_from_bytes(curve.g2_to_bytes(p2)), p2)
    assert curve.g1_is_inf(curve.g1_from_bytes(curve.g1_to_bytes(curve.G1_INF)))
    assert curve.g2_is_inf(curve.g2_from_bytes(curve.g2_to_bytes(curve.G2_INF)))


def test_serialization_rejects_malformed_input():
    good = curve.g1_to_bytes(curve.G1_GEN)
    with pytest.raises(WireError):
        curve.g1_from_bytes(good[:-1])  # wrong length
    with pytest.raises(WireError):
        curve.g1_from_bytes(bytes(48))  # compression flag missing
    with pytest.raises(WireError):
        # x stuffed with the field modulus
        curve.g1_from_bytes(
            bytes([0x80 | (int(curve.P) >> 376)]) + int(curve.P).to_bytes(48, "big")[1:]
        )
    with pytest.raises(WireError):
        curve.g1_from_bytes(bytes([0xC0]) + bytes(46) + b"\x01")  # dirty infinity
    with pytest.raises(WireError):
        curve.g2_from_bytes(bytes([0xC0]) + bytes(94) + b"\x01")
    # x = 1 gives rhs = 5, a quadratic non-residue: not on the curve
    with pytest.raises(WireError):
        curve.g1_from_bytes(bytes([0x80]) + bytes(46) + b"\x01")


def _curve_point_outside_subgroup():
    """Find an E(Fp) point in the cofactor part (full group, order h*R)."""
    x = curve.mpz(1)
    while True:
        rhs = (x * x % curve.P * x + curve.B_G1) % curve.P
        y = curve.powmod(rhs, (curve.P + 1) // 4, curve.P)
        if y * y % curve.P == rhs:
            pt = (x, y, curve.mpz(1))
            if not curve.g1_is_inf(curve.g1_mul(pt, int(curve.R))):
                return pt
        x = x + 1


def test_deserialization_rejects_non_subgroup_points():
    pt = _curve_point_outside_subgroup()
    aff = curve.g1_to_affine(pt)
    raw = bytearray(int(aff[0]).to_bytes(48, "big"))
    raw[0] |= 0x80
    if aff[1] > (int(curve.P) - 1) // 2:
        raw[0] |= 0x20
    with pytest.raises(WireError):
        curve.g1_from_bytes(bytes(raw))
