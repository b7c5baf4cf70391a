"""Pure numpy versions of the hot kernels; same signatures as ``_kernels.pyx``."""

import numpy as np


def householder_chain(x, u_rows):
    """Apply reflections ``I - 2 u u^H`` for each row of ``u_rows`` in order.

    x : (batch, n) complex128, modified in place and returned.
    u_rows : (k, n) complex128 unit (or all-zero) vectors.
    """
    for u in u_rows:
        alpha = x @ u.conj()
        x -= 2.0 * alpha[:, None] * u[None, :]
    return x


def rshift_rne(v, s):
    """Arithmetic right shift by ``s`` with round-half-to-even."""
    if s <= 0:
        return v << (-s)
    q = v >> s
    r = v - (q << s)
    half = 1 << (s - 1)
    up = (r > half) | ((r == half) & ((q & 1) == 1))
    return q + up


def saturate(v, bits):
    lo = -(1 << (bits - 1))
    hi = (1 << (bits - 1)) - 1
    return np.clip(v, lo, hi)


def fixed_merged_stages(xr, xi, u1r, u1i, u2r, u2i, rhor, rhoi,
                        x_bits, x_frac, u_frac, i_bits, i_frac):
    """Integer datapath of the merged two-reflection module, cascaded.

    All arrays are int64.  ``xr/xi`` are (batch, n) raw samples at scale
    2^-x_frac; ``u*`` are (stages, n) raw at 2^-u_frac; ``rho*`` (stages,)
    raw at 2^-u_frac.  Returns new (xr, xi).
    """
    xr = np.array(xr, dtype=np.int64)
    xi = np.array(xi, dtype=np.int64)
    sh_alpha = u_frac + x_frac - i_frac
    sh_t = u_frac
    acc_frac = i_frac + u_frac
    sh_x_in = acc_frac - x_frac
    for s in range(u1r.shape[0]):
        a1r = saturate(rshift_rne(xr @ u1r[s] + xi @ u1i[s], sh_alpha), i_bits)
        a1i = saturate(rshift_rne(xi @ u1r[s] - xr @ u1i[s], sh_alpha), i_bits)
        a2r = saturate(rshift_rne(xr @ u2r[s] + xi @ u2i[s], sh_alpha), i_bits)
        a2i = saturate(rshift_rne(xi @ u2r[s] - xr @ u2i[s], sh_alpha), i_bits)
        tr = saturate(rshift_rne(a1r * rhor[s] - a1i * rhoi[s], sh_t), i_bits)
        ti = saturate(rshift_rne(a1r * rhoi[s] + a1i * rhor[s], sh_t), i_bits)
        cr = saturate(a2r - 2 * tr, i_bits)
        ci = saturate(a2i - 2 * ti, i_bits)
        a1r, a1i, cr, ci = (a[:, None] for a in (a1r, a1i, cr, ci))
        accr = (xr << sh_x_in) - 2 * (a1r * u1r[s] - a1i * u1i[s]) \
            - 2 * (cr * u2r[s] - ci * u2i[s])
        acci = (xi << sh_x_in) - 2 * (a1r * u1i[s] + a1i * u1r[s]) \
            - 2 * (cr * u2i[s] + ci * u2r[s])
        xr = saturate(rshift_rne(accr, sh_x_in), x_bits)
        xi = saturate(rshift_rne(acci, sh_x_in), x_bits)
    return xr, xi
