"""numba kernels acting in place on one amplitude row.

A row is a float64 array of shape (2, 2**n): real parts then imaginary
parts. Keeping them apart lets the gate loops vectorise; interleaved
complex128 runs about three times slower here.

A compiled circuit ("program") is four parallel arrays: op codes, first and
second wire, and a (G, 2, 2) complex stack of matrices (unused for
two-qubit ops).
"""

import numpy as np
from numba import njit

OP_U = 0
OP_DIAG = 1
OP_CNOT = 2
OP_CZ = 3

_JIT = dict(cache=True, fastmath=True, nogil=True)


@njit(**_JIT)
def _pair_index(k, q):
    return ((k >> q) << (q + 1)) | (k & ((1 << q) - 1))


@njit(**_JIT)
def apply_1q(psi, u, q):
    re = psi[0]
    im = psi[1]
    ar, ai = u[0, 0].real, u[0, 0].imag
    br, bi = u[0, 1].real, u[0, 1].imag
    cr, ci = u[1, 0].real, u[1, 0].imag
    dr, di = u[1, 1].real, u[1, 1].imag
    s = 1 << q
    n = re.shape[0]
    if s < 8:
        for k in range(n >> 1):
            i = _pair_index(k, q)
            j = i + s
            x1, x2, y1, y2 = re[i], im[i], re[j], im[j]
            re[i] = ar * x1 - ai * x2 + br * y1 - bi * y2
            im[i] = ar * x2 + ai * x1 + br * y2 + bi * y1
            re[j] = cr * x1 - ci * x2 + dr * y1 - di * y2
            im[j] = cr * x2 + ci * x1 + dr * y2 + di * y1
        return
    real = ai == 0.0 and bi == 0.0 and ci == 0.0 and di == 0.0
    for base in range(0, n, 2 * s):
        xr = re[base:base + s]
        xi = im[base:base + s]
        yr = re[base + s:base + 2 * s]
        yi = im[base + s:base + 2 * s]
        if real:
            for i in range(s):
                x1, x2, y1, y2 = xr[i], xi[i], yr[i], yi[i]
                xr[i] = ar * x1 + br * y1
                xi[i] = ar * x2 + br * y2
                yr[i] = cr * x1 + dr * y1
                yi[i] = cr * x2 + dr * y2
        else:
            for i in range(s):
                x1, x2, y1, y2 = xr[i], xi[i], yr[i], yi[i]
                xr[i] = ar * x1 - ai * x2 + br * y1 - bi * y2
                xi[i] = ar * x2 + ai * x1 + br * y2 + bi * y1
                yr[i] = cr * x1 - ci * x2 + dr * y1 - di * y2
                yi[i] = cr * x2 + ci * x1 + dr * y2 + di * y1


@njit(**_JIT)
def apply_diag(psi, d0, d1, q):
    re = psi[0]
    im = psi[1]
    s = 1 << q
    n = re.shape[0]
    if s < 8:
        d0r, d0i = d0.real, d0.imag
        er, ei = d1.real - d0r, d1.imag - d0i
        for i in range(n):
            bit = (i >> q) & 1
            dr = d0r + bit * er
            di = d0i + bit * ei
            x1, x2 = re[i], im[i]
            re[i] = dr * x1 - di * x2
            im[i] = dr * x2 + di * x1
        return
    for base in range(0, n, s):
        d = d1 if (base >> q) & 1 else d0
        dr, di = d.real, d.imag
        xr = re[base:base + s]
        xi = im[base:base + s]
        for i in range(s):
            x1, x2 = xr[i], xi[i]
            xr[i] = dr * x1 - di * x2
            xi[i] = dr * x2 + di * x1


@njit(**_JIT)
def _insert_zero_bits(k, lo, hi):
    # spread k so that bit positions lo < hi are zero
    k = ((k >> lo) << (lo + 1)) | (k & ((1 << lo) - 1))
    return ((k >> hi) << (hi + 1)) | (k & ((1 << hi) - 1))


@njit(**_JIT)
def apply_cnot(psi, c, t):
    lo, hi = min(c, t), max(c, t)
    cm, tm = 1 << c, 1 << t
    if lo >= 3:
        # swap contiguous runs of 2**lo amplitudes
        run = 1 << lo
        for r in range(2):
            row = psi[r]
            for k in range(row.shape[0] >> (lo + 2)):
                i = _insert_zero_bits(k << lo, lo, hi) | cm
                j = i | tm
                for m in range(run):
                    tmp = row[i + m]
                    row[i + m] = row[j + m]
                    row[j + m] = tmp
        return
    for r in range(2):
        row = psi[r]
        for k in range(row.shape[0] >> 2):
            i = _insert_zero_bits(k, lo, hi) | cm
            j = i | tm
            tmp = row[i]
            row[i] = row[j]
            row[j] = tmp


@njit(**_JIT)
def apply_cz(psi, c, t):
    lo, hi = min(c, t), max(c, t)
    m = (1 << c) | (1 << t)
    run = 1 << lo if lo >= 3 else 1
    for r in range(2):
        row = psi[r]
        for k in range(row.shape[0] >> 2 >> (lo if lo >= 3 else 0)):
            base = k << lo if lo >= 3 else k
            i = _insert_zero_bits(base, lo, hi) | m
            for o in range(run):
                row[i + o] = -row[i + o]


@njit(**_JIT)
def run_program(psi, codes, qa, qb, mats, start, stop):
    for g in range(start, stop):
        code = codes[g]
        if code == OP_U:
            apply_1q(psi, mats[g], qa[g])
        elif code == OP_DIAG:
            apply_diag(psi, mats[g, 0, 0], mats[g, 1, 1], qa[g])
        elif code == OP_CNOT:
            apply_cnot(psi, qa[g], qb[g])
        else:
            apply_cz(psi, qa[g], qb[g])


@njit(**_JIT)
def probabilities(psi):
    re = psi[0]
    im = psi[1]
    out = np.empty(re.shape[0])
    for i in range(re.shape[0]):
        out[i] = re[i] * re[i] + im[i] * im[i]
    return out


@njit(**_JIT)
def shifted_probabilities(final, chi):
    """|final - i chi|^2 / 2 and |final + i chi|^2 / 2, elementwise."""
    fr, fi, cr, ci = final[0], final[1], chi[0], chi[1]
    n = fr.shape[0]
    plus = np.empty(n)
    minus = np.empty(n)
    for i in range(n):
        a = fr[i] + ci[i]
        b = fi[i] - cr[i]
        c = fr[i] - ci[i]
        d = fi[i] + cr[i]
        plus[i] = 0.5 * (a * a + b * b)
        minus[i] = 0.5 * (c * c + d * d)
    return plus, minus


@njit(**_JIT)
def z_expectations(probs, n):
    """Per-qubit <Z> of a probability vector (bit q of the index = qubit q).

    Folds the top qubit away at each level, so the work is 2 * len(probs).
    """
    out = np.zeros(n)
    m = probs
    total = 0.0
    for q in range(n - 1, -1, -1):
        half = m.shape[0] >> 1
        folded = np.empty(half)
        ones = 0.0
        zeros = 0.0
        for i in range(half):
            zeros += m[i]
            ones += m[i + half]
            folded[i] = m[i] + m[i + half]
        if q == n - 1:
            total = zeros + ones
        out[q] = (zeros - ones) / total
        m = folded
    return out


@njit(**_JIT)
def count_ones(indices, n):
    out = np.zeros(n, dtype=np.int64)
    for idx in indices:
        for q in range(n):
            out[q] += (idx >> q) & 1
    return out
