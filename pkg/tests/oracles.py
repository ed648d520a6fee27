"""Independent reference implementations used only by the test suite.

Everything here is written with the most naive correct algorithms
available — affine chord-and-tangent group law, right-to-left
double-and-add, schoolbook polynomial multiplication, Gaussian
elimination for field inversion, and full-exponent final
exponentiation — sharing no arithmetic code with the package under
test. The curve constants are re-declared here on purpose so a typo in
either copy shows up as a disagreement.
"""

from __future__ import annotations

P = int(
    "1a0111ea397fe69a4b1ba7b6434bacd764774b84f38512bf6730d2a0f6b0f624"
    "1eabfffeb153ffffb9feffffffffaaab",
    16,
)
R = int("73eda753299d7d483339d80809a1d80553bda402fffe5bfeffffffff00000001", 16)
ABS_X = 0xD201000000010000

# --- G1: affine chord-and-tangent over Fp (None is the point at infinity) ----


def g1aff_add(p, q):
    if p is None:
        return q
    if q is None:
        return p
    x1, y1 = p
    x2, y2 = q
    if x1 == x2:
        if (y1 + y2) % P == 0:
            return None
        lam = 3 * x1 * x1 * pow(2 * y1, -1, P) % P
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, P) % P
    x3 = (lam * lam - x1 - x2) % P
    y3 = (lam * (x1 - x3) - y1) % P
    return (x3, y3)


def g1aff_mul(p, k):
    k = int(k)
    if k < 0:
        p = None if p is None else (p[0], -p[1] % P)
        k = -k
    acc = None
    while k:
        if k & 1:
            acc = g1aff_add(acc, p)
        p = g1aff_add(p, p)
        k >>= 1
    return acc


# --- Fp2 as complex numbers (schoolbook) --------------------------------------


def f2_add(a, b):
    return ((a[0] + b[0]) % P, (a[1] + b[1]) % P)


def f2_sub(a, b):
    return ((a[0] - b[0]) % P, (a[1] - b[1]) % P)


def f2_mul(a, b):
    return (
        (a[0] * b[0] - a[1] * b[1]) % P,
        (a[0] * b[1] + a[1] * b[0]) % P,
    )


def f2_smul(s, a):
    return (s * a[0] % P, s * a[1] % P)


def f2_inv(a):
    n_inv = pow((a[0] * a[0] + a[1] * a[1]) % P, -1, P)
    return (a[0] * n_inv % P, -a[1] * n_inv % P)


# --- G2: affine chord-and-tangent over Fp2 -------------------------------------


def g2aff_add(p, q):
    if p is None:
        return q
    if q is None:
        return p
    x1, y1 = p
    x2, y2 = q
    if x1 == x2:
        if f2_add(y1, y2) == (0, 0):
            return None
        lam = f2_mul(f2_smul(3, f2_mul(x1, x1)), f2_inv(f2_smul(2, y1)))
    else:
        lam = f2_mul(f2_sub(y2, y1), f2_inv(f2_sub(x2, x1)))
    x3 = f2_sub(f2_sub(f2_mul(lam, lam), x1), x2)
    y3 = f2_sub(f2_mul(lam, f2_sub(x1, x3)), y1)
    return (x3, y3)


def g2aff_mul(p, k):
    k = int(k)
    if k < 0:
        p = None if p is None else (p[0], f2_sub((0, 0), p[1]))
        k = -k
    acc = None
    while k:
        if k & 1:
            acc = g2aff_add(acc, p)
        p = g2aff_add(p, p)
        k >>= 1
    return acc


# --- Fp12 as Fp2[w]/(w^6 - xi), xi = 1 + u: schoolbook convolution -------------

XI = (1, 1)
F12_ZERO = [(0, 0)] * 6
F12_ONE = [(1, 0)] + [(0, 0)] * 5


def f12_add(a, b):
    return [f2_add(x, y) for x, y in zip(a, b)]


def f12_sub(a, b):
    return [f2_sub(x, y) for x, y in zip(a, b)]


def f12_smul(s, a):
    return [f2_smul(s, c) for c in a]


def f12_mul(a, b):
    res = [(0, 0)] * 6
    for i in range(6):
        ai = a[i]
        if ai == (0, 0):
            continue
        for j in range(6):
            t = f2_mul(ai, b[j])
            k = i + j
            if k >= 6:
                k -= 6
                t = f2_mul(t, XI)
            res[k] = f2_add(res[k], t)
    return res


def f12_conj(a):
    """The p^6-power map: w -> -w, i.e. negate odd w-power coefficients."""
    return [c if k % 2 == 0 else f2_sub((0, 0), c) for k, c in enumerate(a)]


def f12_inv(a):
    """Inversion by solving the 12x12 linear system M_a * x = e_0 over Fp."""
    cols = []
    for j in range(12):
        basis = [(0, 0)] * 6
        k, i = divmod(j, 2)
        basis[k] = (1, 0) if i == 0 else (0, 1)
        prod = f12_mul(a, basis)
        col = []
        for c in prod:
            col.extend((c[0] % P, c[1] % P))
        cols.append(col)
    m = [[cols[j][i] for j in range(12)] + [1 if i == 0 else 0] for i in range(12)]
    for piv in range(12):
        row = next(r for r in range(piv, 12) if m[r][piv])
        m[piv], m[row] = m[row], m[piv]
        scale = pow(m[piv][piv], -1, P)
        m[piv] = [v * scale % P for v in m[piv]]
        for r in range(12):
            if r != piv and m[r][piv]:
                factor = m[r][piv]
                m[r] = [(v - factor * pv) % P for v, pv in zip(m[r], m[piv])]
    x = [m[i][12] for i in range(12)]
    out = [(x[2 * k], x[2 * k + 1]) for k in range(6)]
    assert f12_mul(a, out) == F12_ONE, "oracle inversion self-check failed"
    return out


def f12_pow(a, e):
    result = F12_ONE
    for bit in bin(int(e))[2:]:
        result = f12_mul(result, result)
        if bit == "1":
            result = f12_mul(result, a)
    return result


def tower_to_flat(f):
    """Convert the package's ((A0,A1,A2),(B0,B1,B2)) tower element to the
    oracle's w-power coefficient list [A0, B0, A1, B1, A2, B2]."""
    (a0, a1, a2), (b0, b1, b2) = f
    return [
        (int(c[0]), int(c[1])) for c in (a0, b0, a1, b1, a2, b2)
    ]


# --- E(Fp12): affine chord-and-tangent, generic over f12 ops -------------------


def e12_add(p, q):
    if p is None:
        return q
    if q is None:
        return p
    x1, y1 = p
    x2, y2 = q
    if x1 == x2:
        if f12_add(y1, y2) == F12_ZERO:
            return None
        lam = f12_mul(f12_smul(3, f12_mul(x1, x1)), f12_inv(f12_smul(2, y1)))
    else:
        lam = f12_mul(f12_sub(y2, y1), f12_inv(f12_sub(x2, x1)))
    x3 = f12_sub(f12_sub(f12_mul(lam, lam), x1), x2)
    y3 = f12_sub(f12_mul(lam, f12_sub(x1, x3)), y1)
    return (x3, y3)


def _line(t, q, px, py):
    """Value at (px, py) of the line through t and q (tangent if t == q)."""
    xt, yt = t
    xq, yq = q
    if xt == xq and yt != yq:
        # vertical line x - xt
        return f12_sub(px, xt)
    if t == q:
        lam = f12_mul(f12_smul(3, f12_mul(xt, xt)), f12_inv(f12_smul(2, yt)))
    else:
        lam = f12_mul(f12_sub(yq, yt), f12_inv(f12_sub(xq, xt)))
    return f12_sub(f12_sub(py, yt), f12_mul(lam, f12_sub(px, xt)))


def _embed_fp(value):
    return [(int(value) % P, 0)] + [(0, 0)] * 5


def _embed_fp2(c):
    return [(int(c[0]) % P, int(c[1]) % P)] + [(0, 0)] * 5


_W2 = [(0, 0), (0, 0), (1, 0), (0, 0), (0, 0), (0, 0)]
_W3 = [(0, 0), (0, 0), (0, 0), (1, 0), (0, 0), (0, 0)]
_W2_INV = f12_inv(_W2)
_W3_INV = f12_inv(_W3)


def untwist(q_aff):
    """Map an affine twist point (Fp2 coords) onto E(Fp12): (x/w^2, y/w^3)."""
    xq, yq = q_aff
    return (
        f12_mul(_embed_fp2(xq), _W2_INV),
        f12_mul(_embed_fp2(yq), _W3_INV),
    )


def oracle_pairing(p_aff, q_aff):
    """Optimal ate pairing with the full standard final exponentiation.

    p_aff: (x, y) ints, affine G1. q_aff: ((c0,c1), (c0,c1)) affine twist
    G2. Returns the oracle-representation GT element. The package's
    pairing equals this value cubed (it uses a tripled hard-part
    exponent).
    """
    px = _embed_fp(p_aff[0])
    py = _embed_fp(p_aff[1])
    q = untwist(q_aff)
    t = q
    f = F12_ONE
    for bit in bin(ABS_X)[3:]:
        f = f12_mul(f12_mul(f, f), _line(t, t, px, py))
        t = e12_add(t, t)
        if bit == "1":
            f = f12_mul(f, _line(t, q, px, py))
            t = e12_add(t, q)
    f = f12_conj(f)  # negative curve parameter
    return f12_pow(f, (P**12 - 1) // R)


def oracle_pairing_cubed(p_aff, q_aff):
    e = oracle_pairing(p_aff, q_aff)
    return f12_mul(f12_mul(e, e), e)
