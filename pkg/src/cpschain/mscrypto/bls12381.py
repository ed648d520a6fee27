"""BLS12-381 pairing curve arithmetic on gmpy2 big integers.

This module is self-contained curve math; the signature scheme built on
top of it lives in `scheme`. Implemented here from first principles
because no pairing library is available in the target environment.

Conventions:

- G1 is the order-R subgroup of E(Fp): y^2 = x^3 + 4.
- G2 is the order-R subgroup of the M-twist E'(Fp2): y^2 = x^3 + 4*(1+u).
- GT is the order-R subgroup of Fp12^*.
- Field towers: Fp2 = Fp[u]/(u^2+1), Fp6 = Fp2[v]/(v^3 - xi) with
  xi = 1+u, Fp12 = Fp6[w]/(w^2 - v). Elements are nested tuples of mpz.
- Points are Jacobian triples (X, Y, Z); Z == 0 marks infinity.
- Compressed serialization (48 bytes G1 / 96 bytes G2) with the widely
  used flag convention: top three bits of the first byte carry
  compressed / infinity / lexicographically-largest-y flags.
- Hashing to G1 is deterministic try-and-increment followed by
  cofactor clearing.

The optimal ate pairing is computed as a Miller loop over the curve
parameter followed by final exponentiation. The final exponentiation
uses a shortened hard part that raises to 3*(p^4 - p^2 + 1)/r instead
of (p^4 - p^2 + 1)/r. Every caller compares pairing values or products
of pairings against each other or against one, and cubing is a
bijection on the order-R subgroup of GT (gcd(3, R) = 1), so all such
comparisons are unaffected.

Nothing here is constant-time; this is a deterministic simulation and
research implementation, not hardened production cryptography.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

from gmpy2 import invert, mpz, powmod

from ..errors import WireError

# --- curve family constants --------------------------------------------------

P = mpz(
    0x1A0111EA397FE69A4B1BA7B6434BACD764774B84F38512BF6730D2A0F6B0F6241EABFFFEB153FFFFB9FEFFFFFFFFAAAB
)
R = mpz(0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001)
ABS_X = 0xD201000000010000  # |x|; the BLS parameter x itself is negative

# The curve family defines r = x^4 - x^2 + 1 and p = (x-1)^2 * r / 3 + x.
# These integer identities pin down P and R against typos.
_x = -ABS_X
assert R == _x**4 - _x**2 + 1
assert P == (_x - 1) ** 2 * (_x**4 - _x**2 + 1) // 3 + _x
assert P % 4 == 3

# Exponent of the hard part of the final exponentiation, times three:
# 3 * (p^4 - p^2 + 1) / r == (x-1)^2 * (x+p) * (x^2 + p^2 - 1) + 3.
assert (P**4 - P**2 + 1) % R == 0
assert (_x - 1) ** 2 * (_x + P) * (_x**2 + P**2 - 1) + 3 == 3 * (
    (P**4 - P**2 + 1) // R
)

H_EFF_G1 = ABS_X + 1  # cofactor-clearing multiplier (1 - x) for hashed points
ATE_BITS = bin(ABS_X)[3:]  # MSB-first bits of |x| with the leading one removed

_SQRT_EXP = (P + 1) // 4  # square roots in Fp, valid because P % 4 == 3
_INV2 = invert(mpz(2), P)
_HALF_P = (P - 1) // 2  # y > _HALF_P  <=>  y is lexicographically larger than -y

# --- Fp2 ----------------------------------------------------------------------

FP2_ZERO = (mpz(0), mpz(0))
FP2_ONE = (mpz(1), mpz(0))
XI = (mpz(1), mpz(1))  # the cubic/sextic nonresidue 1 + u
B_G1 = mpz(4)
B_G2 = (mpz(4), mpz(4))  # twist coefficient 4 * xi


def fp2_add(a, b):
    return ((a[0] + b[0]) % P, (a[1] + b[1]) % P)


def fp2_sub(a, b):
    return ((a[0] - b[0]) % P, (a[1] - b[1]) % P)


def fp2_neg(a):
    return (-a[0] % P, -a[1] % P)


def fp2_conj(a):
    return (a[0], -a[1] % P)


def fp2_is_zero(a) -> bool:
    return not a[0] and not a[1]


def fp2_mul(a, b):
    a0, a1 = a
    b0, b1 = b
    t0 = a0 * b0
    t1 = a1 * b1
    return ((t0 - t1) % P, ((a0 + a1) * (b0 + b1) - t0 - t1) % P)


def fp2_sqr(a):
    a0, a1 = a
    t = a0 * a1
    return ((a0 + a1) * (a0 - a1) % P, (t + t) % P)


def fp2_mul_fp(a, s):
    return (a[0] * s % P, a[1] * s % P)


def fp2_mul_xi(a):
    a0, a1 = a
    return ((a0 - a1) % P, (a0 + a1) % P)


def fp2_inv(a):
    a0, a1 = a
    n_inv = invert((a0 * a0 + a1 * a1) % P, P)
    return (a0 * n_inv % P, -a1 * n_inv % P)


def fp2_pow(a, e):
    result = FP2_ONE
    for bit in bin(int(e))[2:]:
        result = fp2_sqr(result)
        if bit == "1":
            result = fp2_mul(result, a)
    return result


def fp2_sqrt(a):
    """Square root in Fp2, or None if `a` is not a square.

    Uses the complex-number formula: with u^2 = -1 this field behaves
    exactly like Fp(i), so sqrt(a0 + a1*u) = x0 + x1*u with
    x0 = sqrt((a0 + |a|) / 2) and x1 = a1 / (2*x0), where |a| is a
    square root of the norm a0^2 + a1^2.
    """
    a0, a1 = a
    if not a1:
        y = powmod(a0, _SQRT_EXP, P)
        if y * y % P == a0:
            return (y, mpz(0))
        neg = -a0 % P
        y = powmod(neg, _SQRT_EXP, P)
        if y * y % P == neg:
            return (mpz(0), y)
        return None
    norm = (a0 * a0 + a1 * a1) % P
    s = powmod(norm, _SQRT_EXP, P)
    if s * s % P != norm:
        return None
    for delta in ((a0 + s) * _INV2 % P, (a0 - s) * _INV2 % P):
        if not delta:
            continue
        x0 = powmod(delta, _SQRT_EXP, P)
        if x0 * x0 % P != delta:
            continue
        x1 = a1 * invert(x0 + x0, P) % P
        cand = (x0, x1)
        if fp2_sqr(cand) == a:
            return cand
    return None


# --- Fp6 ----------------------------------------------------------------------

FP6_ZERO = (FP2_ZERO, FP2_ZERO, FP2_ZERO)
FP6_ONE = (FP2_ONE, FP2_ZERO, FP2_ZERO)


def fp6_add(a, b):
    return (fp2_add(a[0], b[0]), fp2_add(a[1], b[1]), fp2_add(a[2], b[2]))


def fp6_sub(a, b):
    return (fp2_sub(a[0], b[0]), fp2_sub(a[1], b[1]), fp2_sub(a[2], b[2]))


def fp6_neg(a):
    return (fp2_neg(a[0]), fp2_neg(a[1]), fp2_neg(a[2]))


def fp6_mul(a, b):
    a0, a1, a2 = a
    b0, b1, b2 = b
    t0 = fp2_mul(a0, b0)
    t1 = fp2_mul(a1, b1)
    t2 = fp2_mul(a2, b2)
    c0 = fp2_add(
        t0,
        fp2_mul_xi(
            fp2_sub(fp2_sub(fp2_mul(fp2_add(a1, a2), fp2_add(b1, b2)), t1), t2)
        ),
    )
    c1 = fp2_add(
        fp2_sub(fp2_sub(fp2_mul(fp2_add(a0, a1), fp2_add(b0, b1)), t0), t1),
        fp2_mul_xi(t2),
    )
    c2 = fp2_add(
        fp2_sub(fp2_sub(fp2_mul(fp2_add(a0, a2), fp2_add(b0, b2)), t0), t2), t1
    )
    return (c0, c1, c2)


def fp6_sqr(a):
    a0, a1, a2 = a
    s0 = fp2_sqr(a0)
    ab = fp2_mul(a0, a1)
    s1 = fp2_add(ab, ab)
    s2 = fp2_sqr(fp2_add(fp2_sub(a0, a1), a2))
    bc = fp2_mul(a1, a2)
    s3 = fp2_add(bc, bc)
    s4 = fp2_sqr(a2)
    return (
        fp2_add(s0, fp2_mul_xi(s3)),
        fp2_add(s1, fp2_mul_xi(s4)),
        fp2_sub(fp2_add(fp2_add(s1, s2), s3), fp2_add(s0, s4)),
    )


def fp6_mul_v(a):
    """Multiply by v (the Fp6 polynomial variable); v^3 = xi."""
    return (fp2_mul_xi(a[2]), a[0], a[1])


def fp6_inv(a):
    a0, a1, a2 = a
    c0 = fp2_sub(fp2_sqr(a0), fp2_mul_xi(fp2_mul(a1, a2)))
    c1 = fp2_sub(fp2_mul_xi(fp2_sqr(a2)), fp2_mul(a0, a1))
    c2 = fp2_sub(fp2_sqr(a1), fp2_mul(a0, a2))
    t_inv = fp2_inv(
        fp2_add(fp2_mul(a0, c0), fp2_mul_xi(fp2_add(fp2_mul(a2, c1), fp2_mul(a1, c2))))
    )
    return (fp2_mul(c0, t_inv), fp2_mul(c1, t_inv), fp2_mul(c2, t_inv))


def _fp6_mul_by_01(a, b0, b1):
    """Multiply by a sparse Fp6 element b0 + b1*v (5 Fp2 multiplications)."""
    a0, a1, a2 = a
    t0 = fp2_mul(a0, b0)
    t1 = fp2_mul(a1, b1)
    c0 = fp2_add(t0, fp2_mul_xi(fp2_sub(fp2_mul(fp2_add(a1, a2), b1), t1)))
    c1 = fp2_sub(fp2_sub(fp2_mul(fp2_add(a0, a1), fp2_add(b0, b1)), t0), t1)
    c2 = fp2_add(fp2_sub(fp2_mul(fp2_add(a0, a2), b0), t0), t1)
    return (c0, c1, c2)


def _fp6_mul_by_1(a, b1):
    """Multiply by a sparse Fp6 element b1*v (3 Fp2 multiplications)."""
    a0, a1, a2 = a
    return (fp2_mul_xi(fp2_mul(a2, b1)), fp2_mul(a0, b1), fp2_mul(a1, b1))


# --- Fp12 ---------------------------------------------------------------------

FP12_ONE = (FP6_ONE, FP6_ZERO)


def fp12_mul(a, b):
    a0, a1 = a
    b0, b1 = b
    t0 = fp6_mul(a0, b0)
    t1 = fp6_mul(a1, b1)
    c0 = fp6_add(t0, fp6_mul_v(t1))
    c1 = fp6_sub(fp6_sub(fp6_mul(fp6_add(a0, a1), fp6_add(b0, b1)), t0), t1)
    return (c0, c1)


def fp12_sqr(a):
    a0, a1 = a
    t = fp6_mul(a0, a1)
    c0 = fp6_sub(
        fp6_sub(fp6_mul(fp6_add(a0, a1), fp6_add(a0, fp6_mul_v(a1))), t),
        fp6_mul_v(t),
    )
    return (c0, fp6_add(t, t))


def fp12_conj(a):
    """Conjugation over Fp6; equals inversion on the cyclotomic subgroup."""
    return (a[0], fp6_neg(a[1]))


def fp12_inv(a):
    a0, a1 = a
    t = fp6_inv(fp6_sub(fp6_sqr(a0), fp6_mul_v(fp6_sqr(a1))))
    return (fp6_mul(a0, t), fp6_neg(fp6_mul(a1, t)))


def fp12_pow(a, e):
    result = FP12_ONE
    for bit in bin(int(e))[2:]:
        result = fp12_sqr(result)
        if bit == "1":
            result = fp12_mul(result, a)
    return result


def _mul_by_014(f, a, b, c):
    """Multiply f by the sparse element a + b*v + c*v*w (13 Fp2 muls).

    Miller-loop line evaluations on this M-twist only populate the
    w^0, w^2 and w^3 slots, which in tower coordinates are the 0th and
    1st Fp2 coefficient of the first Fp6 and the 1st of the second.
    """
    f0, f1 = f
    t0 = _fp6_mul_by_01(f0, a, b)
    t1 = _fp6_mul_by_1(f1, c)
    t2 = _fp6_mul_by_01(fp6_add(f0, f1), a, fp2_add(b, c))
    return (
        fp6_add(t0, fp6_mul_v(t1)),
        fp6_sub(fp6_sub(t2, t0), t1),
    )


# --- Frobenius ----------------------------------------------------------------

# _GAMMA[n][k] = xi^(k * (P^n - 1) / 6): the action of the p^n-power map
# on w^k, written on the basis f = sum c_k * w^k with c_k in Fp2.
_GAMMA = {}
for _n in (1, 2, 3):
    _base = fp2_pow(XI, (P**_n - 1) // 6)
    _row = [FP2_ONE]
    for _k in range(5):
        _row.append(fp2_mul(_row[-1], _base))
    _GAMMA[_n] = _row
del _n, _k, _base, _row


def frobenius(f, n):
    """Raise f to the p^n power for n in {1, 2, 3}."""
    (a0, a1, a2), (b0, b1, b2) = f
    coeffs = [a0, b0, a1, b1, a2, b2]
    if n % 2:
        coeffs = [fp2_conj(c) for c in coeffs]
    gamma = _GAMMA[n]
    c = [fp2_mul(coeffs[k], gamma[k]) for k in range(6)]
    return ((c[0], c[2], c[4]), (c[1], c[3], c[5]))


# --- cyclotomic subgroup helpers ---------------------------------------------


def _fp4_sqr(a, b):
    """Squaring in Fp4 = Fp2[t]/(t^2 - xi): (a + b*t)^2 = c0 + c1*t."""
    t = fp2_mul(a, b)
    c0 = fp2_sub(
        fp2_sub(fp2_mul(fp2_add(a, b), fp2_add(a, fp2_mul_xi(b))), t),
        fp2_mul_xi(t),
    )
    return c0, fp2_add(t, t)


def fp12_cyc_sqr(f):
    """Granger-Scott squaring; valid only on the cyclotomic subgroup."""
    (z0, z4, z3), (z2, z1, z5) = f
    t0, t1 = _fp4_sqr(z0, z1)
    t2, t3 = _fp4_sqr(z2, z3)
    t4, t5 = _fp4_sqr(z4, z5)

    def three_minus_two(t, z):
        return fp2_sub(fp2_add(fp2_add(t, t), t), fp2_add(z, z))

    def three_plus_two(t, z):
        return fp2_add(fp2_add(fp2_add(t, t), t), fp2_add(z, z))

    r0 = three_minus_two(t0, z0)
    r1 = three_plus_two(t1, z1)
    r2 = three_plus_two(fp2_mul_xi(t5), z2)
    r3 = three_minus_two(t4, z3)
    r4 = three_minus_two(t2, z4)
    r5 = three_plus_two(t3, z5)
    return ((r0, r4, r3), (r2, r1, r5))


def _cyc_exp_abs_x(a):
    """a^|x| for a in the cyclotomic subgroup."""
    result = a
    for bit in ATE_BITS:
        result = fp12_cyc_sqr(result)
        if bit == "1":
            result = fp12_mul(result, a)
    return result


def final_exponentiation(f):
    """Map a Miller-loop value into GT: f^(3 * (p^12 - 1) / r).

    Easy part: f^((p^6 - 1) * (p^2 + 1)). Hard part: the exponent
    3 * (p^4 - p^2 + 1) / r via the factorization
    (x-1)^2 * (x+p) * (x^2 + p^2 - 1) + 3, asserted above. Inversions
    after the easy part are conjugations.
    """
    t = fp12_mul(fp12_conj(f), fp12_inv(f))
    m = fp12_mul(frobenius(t, 2), t)

    def pow_x_minus_1(a):
        # a^(x - 1) with x = -|x|: invert a^(|x| + 1).
        return fp12_conj(fp12_mul(_cyc_exp_abs_x(a), a))

    t1 = pow_x_minus_1(pow_x_minus_1(m))
    t2 = fp12_mul(fp12_conj(_cyc_exp_abs_x(t1)), frobenius(t1, 1))
    t3 = fp12_mul(
        fp12_mul(_cyc_exp_abs_x(_cyc_exp_abs_x(t2)), frobenius(t2, 2)),
        fp12_conj(t2),
    )
    return fp12_mul(t3, fp12_mul(fp12_sqr(m), m))


# --- G1 group law (Jacobian coordinates, inline Fp arithmetic) ----------------

G1_INF = (mpz(0), mpz(1), mpz(0))
G1_GEN = (
    mpz(
        0x17F1D3A73197D7942695638C4FA9AC0FC3688C4F9774B905A14E3A3F171BAC586C55E83FF97A1AEFFB3AF00ADB22C6BB
    ),
    mpz(
        0x08B3F481E3AAA0F1A09E30ED741D8AE4FCF5E095D5D00AF600DB18CB2C04B3EDD03CC744A2888AE40CAA232946C5E7E1
    ),
    mpz(1),
)
assert (G1_GEN[1] ** 2 - G1_GEN[0] ** 3 - B_G1) % P == 0


def g1_is_inf(pt) -> bool:
    return not pt[2]


def g1_neg(pt):
    return (pt[0], -pt[1] % P, pt[2])


def g1_double(pt):
    x, y, z = pt
    if not z:
        return pt
    a = x * x % P
    b = y * y % P
    c = b * b % P
    d = ((x + b) ** 2 - a - c) % P
    d = (d + d) % P
    e = 3 * a % P
    f = e * e % P
    x3 = (f - d - d) % P
    y3 = (e * (d - x3) - 8 * c) % P
    z3 = (y + y) * z % P
    return (x3, y3, z3)


def g1_add(p1, p2):
    x1, y1, z1 = p1
    x2, y2, z2 = p2
    if not z1:
        return p2
    if not z2:
        return p1
    z1z1 = z1 * z1 % P
    z2z2 = z2 * z2 % P
    u1 = x1 * z2z2 % P
    u2 = x2 * z1z1 % P
    s1 = y1 * z2 * z2z2 % P
    s2 = y2 * z1 * z1z1 % P
    if u1 == u2:
        if s1 == s2:
            return g1_double(p1)
        return G1_INF
    h = (u2 - u1) % P
    i = (h + h) ** 2 % P
    j = h * i % P
    rr = (s2 - s1) * 2 % P
    v = u1 * i % P
    x3 = (rr * rr - j - v - v) % P
    y3 = (rr * (v - x3) - 2 * s1 * j) % P
    z3 = ((z1 + z2) ** 2 - z1z1 - z2z2) * h % P
    return (x3, y3, z3)


def g1_mul(pt, k):
    k = int(k)
    if k < 0:
        pt = g1_neg(pt)
        k = -k
    if k == 0 or not pt[2]:
        return G1_INF
    acc = G1_INF
    for bit in bin(k)[2:]:
        acc = g1_double(acc)
        if bit == "1":
            acc = g1_add(acc, pt)
    return acc


def g1_eq(p1, p2) -> bool:
    z1, z2 = p1[2], p2[2]
    if not z1 or not z2:
        return (not z1) == (not z2)
    z1z1 = z1 * z1 % P
    z2z2 = z2 * z2 % P
    if (p1[0] * z2z2 - p2[0] * z1z1) % P:
        return False
    return (p1[1] * z2 * z2z2 - p2[1] * z1 * z1z1) % P == 0


def g1_to_affine(pt):
    x, y, z = pt
    if not z:
        return None
    zi = invert(z, P)
    zi2 = zi * zi % P
    return (x * zi2 % P, y * zi2 * zi % P)


def g1_normalize(pt):
    """Canonical Jacobian form: Z = 1, or the canonical infinity triple."""
    aff = g1_to_affine(pt)
    if aff is None:
        return G1_INF
    return (aff[0], aff[1], mpz(1))


def g1_in_subgroup(pt) -> bool:
    aff = g1_to_affine(pt)
    if aff is None:
        return True
    x, y = aff
    if (y * y - x * x * x - B_G1) % P:
        return False
    return g1_is_inf(g1_mul((x, y, mpz(1)), R))


# --- G2 group law (Jacobian coordinates over Fp2) -----------------------------

G2_INF = (FP2_ONE, FP2_ONE, FP2_ZERO)
G2_GEN = (
    (
        mpz(
            0x024AA2B2F08F0A91260805272DC51051C6E47AD4FA403B02B4510B647AE3D1770BAC0326A805BBEFD48056C8C121BDB8
        ),
        mpz(
            0x13E02B6052719F607DACD3A088274F65596BD0D09920B61AB5DA61BBDC7F5049334CF11213945D57E5AC7D055D042B7E
        ),
    ),
    (
        mpz(
            0x0CE5D527727D6E118CC9CDC6DA2E351AADFD9BAA8CBDD3A76D429A695160D12C923AC9CC3BACA289E193548608B82801
        ),
        mpz(
            0x0606C4A02EA734CC32ACD2B02BC28B99CB3E287E85A763AF267492AB572E99AB3F370D275CEC1DA1AAA9075FF05F79BE
        ),
    ),
    FP2_ONE,
)
assert fp2_sub(fp2_sqr(G2_GEN[1]), fp2_add(fp2_mul(fp2_sqr(G2_GEN[0]), G2_GEN[0]), B_G2)) == FP2_ZERO


def g2_is_inf(pt) -> bool:
    return fp2_is_zero(pt[2])


def g2_neg(pt):
    return (pt[0], fp2_neg(pt[1]), pt[2])


def g2_double(pt):
    x, y, z = pt
    if fp2_is_zero(z):
        return pt
    a = fp2_sqr(x)
    b = fp2_sqr(y)
    c = fp2_sqr(b)
    d = fp2_sub(fp2_sqr(fp2_add(x, b)), fp2_add(a, c))
    d = fp2_add(d, d)
    e = fp2_add(fp2_add(a, a), a)
    f = fp2_sqr(e)
    x3 = fp2_sub(f, fp2_add(d, d))
    c2 = fp2_add(c, c)
    c4 = fp2_add(c2, c2)
    y3 = fp2_sub(fp2_mul(e, fp2_sub(d, x3)), fp2_add(c4, c4))
    z3 = fp2_mul(fp2_add(y, y), z)
    return (x3, y3, z3)


def g2_add(p1, p2):
    x1, y1, z1 = p1
    x2, y2, z2 = p2
    if fp2_is_zero(z1):
        return p2
    if fp2_is_zero(z2):
        return p1
    z1z1 = fp2_sqr(z1)
    z2z2 = fp2_sqr(z2)
    u1 = fp2_mul(x1, z2z2)
    u2 = fp2_mul(x2, z1z1)
    s1 = fp2_mul(fp2_mul(y1, z2), z2z2)
    s2 = fp2_mul(fp2_mul(y2, z1), z1z1)
    if u1 == u2:
        if s1 == s2:
            return g2_double(p1)
        return G2_INF
    h = fp2_sub(u2, u1)
    h2 = fp2_add(h, h)
    i = fp2_sqr(h2)
    j = fp2_mul(h, i)
    rr = fp2_sub(s2, s1)
    rr = fp2_add(rr, rr)
    v = fp2_mul(u1, i)
    x3 = fp2_sub(fp2_sub(fp2_sqr(rr), j), fp2_add(v, v))
    s1j = fp2_mul(s1, j)
    y3 = fp2_sub(fp2_mul(rr, fp2_sub(v, x3)), fp2_add(s1j, s1j))
    z3 = fp2_mul(fp2_sub(fp2_sqr(fp2_add(z1, z2)), fp2_add(z1z1, z2z2)), h)
    return (x3, y3, z3)


def g2_mul(pt, k):
    k = int(k)
    if k < 0:
        pt = g2_neg(pt)
        k = -k
    if k == 0 or fp2_is_zero(pt[2]):
        return G2_INF
    acc = G2_INF
    for bit in bin(k)[2:]:
        acc = g2_double(acc)
        if bit == "1":
            acc = g2_add(acc, pt)
    return acc


def g2_eq(p1, p2) -> bool:
    z1, z2 = p1[2], p2[2]
    if fp2_is_zero(z1) or fp2_is_zero(z2):
        return fp2_is_zero(z1) == fp2_is_zero(z2)
    z1z1 = fp2_sqr(z1)
    z2z2 = fp2_sqr(z2)
    if fp2_mul(p1[0], z2z2) != fp2_mul(p2[0], z1z1):
        return False
    return fp2_mul(fp2_mul(p1[1], z2), z2z2) == fp2_mul(fp2_mul(p2[1], z1), z1z1)


def g2_to_affine(pt):
    x, y, z = pt
    if fp2_is_zero(z):
        return None
    zi = fp2_inv(z)
    zi2 = fp2_sqr(zi)
    return (fp2_mul(x, zi2), fp2_mul(y, fp2_mul(zi2, zi)))


def g2_normalize(pt):
    """Canonical Jacobian form: Z = 1, or the canonical infinity triple."""
    aff = g2_to_affine(pt)
    if aff is None:
        return G2_INF
    return (aff[0], aff[1], FP2_ONE)


def g2_in_subgroup(pt) -> bool:
    aff = g2_to_affine(pt)
    if aff is None:
        return True
    x, y = aff
    if fp2_sqr(y) != fp2_add(fp2_mul(fp2_sqr(x), x), B_G2):
        return False
    return g2_is_inf(g2_mul((x, y, FP2_ONE), R))


# --- hashing to G1 ------------------------------------------------------------


def hash_to_g1(msg: bytes, dst: bytes):
    """Deterministic try-and-increment hash onto the order-R subgroup."""
    prefix = len(dst).to_bytes(4, "big") + dst
    for ctr in range(65536):
        digest = hashlib.sha512(prefix + ctr.to_bytes(4, "big") + msg).digest()
        x = mpz(int.from_bytes(digest[:48], "big")) % P
        rhs = (x * x % P * x + B_G1) % P
        y = powmod(rhs, _SQRT_EXP, P)
        if y * y % P == rhs:
            if (digest[48] & 1) != (y & 1):
                y = -y % P
            return g1_mul((x, y, mpz(1)), H_EFF_G1)
    raise ValueError("hash_to_g1 failed to find a curve point")  # unreachable


# --- compressed serialization ------------------------------------------------

_FLAG_COMPRESSED = 0x80
_FLAG_INFINITY = 0x40
_FLAG_SIGN = 0x20


def g1_to_bytes(pt) -> bytes:
    aff = g1_to_affine(pt)
    if aff is None:
        return bytes([_FLAG_COMPRESSED | _FLAG_INFINITY]) + bytes(47)
    x, y = aff
    out = bytearray(int(x).to_bytes(48, "big"))
    out[0] |= _FLAG_COMPRESSED
    if y > _HALF_P:
        out[0] |= _FLAG_SIGN
    return bytes(out)


@lru_cache(maxsize=4096)
def g1_from_bytes(data: bytes):
    """Decode and fully validate a compressed G1 point.

    Decompression plus the subgroup check is by far the most expensive
    step of deserialization, and real workloads parse the same roster
    and signature bytes over and over, so results are memoized (the
    returned Jacobian triple is immutable)."""
    if len(data) != 48:
        raise WireError(f"G1 point must be 48 bytes, got {len(data)}")
    flags = data[0]
    if not flags & _FLAG_COMPRESSED:
        raise WireError("G1 point lacks the compressed-encoding flag")
    if flags & _FLAG_INFINITY:
        if flags != (_FLAG_COMPRESSED | _FLAG_INFINITY) or any(data[1:]):
            raise WireError("malformed G1 point at infinity")
        return G1_INF
    x = mpz(int.from_bytes(bytes([flags & 0x1F]) + data[1:], "big"))
    if x >= P:
        raise WireError("G1 x coordinate exceeds the field modulus")
    rhs = (x * x % P * x + B_G1) % P
    y = powmod(rhs, _SQRT_EXP, P)
    if y * y % P != rhs:
        raise WireError("G1 x coordinate is not on the curve")
    if not y and flags & _FLAG_SIGN:
        raise WireError("non-canonical G1 sign flag")
    if bool(flags & _FLAG_SIGN) != (y > _HALF_P):
        y = -y % P
    pt = (x, y, mpz(1))
    if not g1_in_subgroup(pt):
        raise WireError("G1 point is not in the prime-order subgroup")
    return pt


def _fp2_is_larger(a) -> bool:
    """Lexicographic comparison of a against -a, second coefficient first."""
    c0, c1 = a
    if c1:
        return c1 > _HALF_P
    return c0 > _HALF_P


def g2_to_bytes(pt) -> bytes:
    aff = g2_to_affine(pt)
    if aff is None:
        return bytes([_FLAG_COMPRESSED | _FLAG_INFINITY]) + bytes(95)
    (x0, x1), y = aff
    out = bytearray(int(x1).to_bytes(48, "big") + int(x0).to_bytes(48, "big"))
    out[0] |= _FLAG_COMPRESSED
    if _fp2_is_larger(y):
        out[0] |= _FLAG_SIGN
    return bytes(out)


@lru_cache(maxsize=4096)
def g2_from_bytes(data: bytes):
    """Decode and fully validate a compressed G2 point (memoized like
    `g1_from_bytes`, and for the same reason)."""
    if len(data) != 96:
        raise WireError(f"G2 point must be 96 bytes, got {len(data)}")
    flags = data[0]
    if not flags & _FLAG_COMPRESSED:
        raise WireError("G2 point lacks the compressed-encoding flag")
    if flags & _FLAG_INFINITY:
        if flags != (_FLAG_COMPRESSED | _FLAG_INFINITY) or any(data[1:]):
            raise WireError("malformed G2 point at infinity")
        return G2_INF
    x1 = mpz(int.from_bytes(bytes([flags & 0x1F]) + data[1:48], "big"))
    x0 = mpz(int.from_bytes(data[48:], "big"))
    if x0 >= P or x1 >= P:
        raise WireError("G2 x coordinate exceeds the field modulus")
    x = (x0, x1)
    y = fp2_sqrt(fp2_add(fp2_mul(fp2_sqr(x), x), B_G2))
    if y is None:
        raise WireError("G2 x coordinate is not on the curve")
    if fp2_is_zero(y) and flags & _FLAG_SIGN:
        raise WireError("non-canonical G2 sign flag")
    if bool(flags & _FLAG_SIGN) != _fp2_is_larger(y):
        y = fp2_neg(y)
    pt = (x, y, FP2_ONE)
    if not g2_in_subgroup(pt):
        raise WireError("G2 point is not in the prime-order subgroup")
    return pt


# --- optimal ate pairing ------------------------------------------------------


def prepare_g2(pt):
    """Precompute the Miller-loop line coefficients for a G2 point.

    The point is tracked in homogeneous projective coordinates on the
    twist; each step emits the three Fp2 coefficients of the line
    through the current point(s), to be evaluated at a G1 point later.
    Returns None for the point at infinity (its pairing is one).
    """
    aff = g2_to_affine(pt)
    if aff is None:
        return None
    xq, yq = aff
    coeffs = []
    rx, ry, rz = xq, yq, FP2_ONE
    for bit in ATE_BITS:
        # Doubling step: tangent line at R, then R = 2R.
        a = fp2_mul_fp(fp2_mul(rx, ry), _INV2)
        b = fp2_sqr(ry)
        c = fp2_sqr(rz)
        e = fp2_mul(B_G2, fp2_add(fp2_add(c, c), c))
        f = fp2_add(fp2_add(e, e), e)
        g = fp2_mul_fp(fp2_add(b, f), _INV2)
        h = fp2_sub(fp2_sqr(fp2_add(ry, rz)), fp2_add(b, c))
        i = fp2_sub(e, b)
        j = fp2_sqr(rx)
        e2 = fp2_sqr(e)
        rx = fp2_mul(a, fp2_sub(b, f))
        ry = fp2_sub(fp2_sqr(g), fp2_add(fp2_add(e2, e2), e2))
        rz = fp2_mul(b, h)
        coeffs.append((i, fp2_add(fp2_add(j, j), j), fp2_neg(h)))
        if bit == "1":
            # Addition step: chord through R and Q, then R = R + Q.
            theta = fp2_sub(ry, fp2_mul(yq, rz))
            lam = fp2_sub(rx, fp2_mul(xq, rz))
            c = fp2_sqr(theta)
            d = fp2_sqr(lam)
            e = fp2_mul(lam, d)
            f = fp2_mul(rz, c)
            g = fp2_mul(rx, d)
            h = fp2_add(fp2_sub(e, fp2_add(g, g)), f)
            rx = fp2_mul(lam, h)
            ry = fp2_sub(fp2_mul(theta, fp2_sub(g, h)), fp2_mul(e, ry))
            rz = fp2_mul(rz, e)
            coeffs.append(
                (fp2_sub(fp2_mul(theta, xq), fp2_mul(lam, yq)), fp2_neg(theta), lam)
            )
    return coeffs


def multi_miller_loop(pairs):
    """Product of Miller-loop values for (G1 point, prepared G2) pairs.

    Squarings of the accumulator are shared across all pairs, so a
    product of n pairings costs one Miller loop plus n line evaluations
    per step. Pairs with either member at infinity contribute one and
    are skipped.
    """
    work = []
    for pt, prep in pairs:
        if prep is None or not pt[2]:
            continue
        px, py = g1_to_affine(pt)
        work.append((px, py, prep))
    if not work:
        return FP12_ONE
    f = FP12_ONE
    idx = 0
    for bit in ATE_BITS:
        f = fp12_sqr(f)
        for px, py, prep in work:
            c0, c1, c2 = prep[idx]
            f = _mul_by_014(f, c0, fp2_mul_fp(c1, px), fp2_mul_fp(c2, py))
        idx += 1
        if bit == "1":
            for px, py, prep in work:
                c0, c1, c2 = prep[idx]
                f = _mul_by_014(f, c0, fp2_mul_fp(c1, px), fp2_mul_fp(c2, py))
            idx += 1
    # The curve parameter is negative: conjugate the loop value.
    return fp12_conj(f)


def pairing(p, q):
    """Full pairing e(P, Q) for P in G1, Q in G2 (GT element as Fp12)."""
    return final_exponentiation(multi_miller_loop([(p, prepare_g2(q))]))


def pairing_product(pairs):
    """Product of pairings with a single shared final exponentiation."""
    return final_exponentiation(multi_miller_loop(pairs))


def pairing_check(pairs) -> bool:
    """True iff the product of pairings over (G1, prepared G2) pairs is one."""
    return pairing_product(pairs) == FP12_ONE


G2_GEN_PREP = prepare_g2(G2_GEN)
G2_GEN_NEG_PREP = prepare_g2(g2_neg(G2_GEN))
