# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t

cnp.import_array()


def householder_chain(x, u_rows):
    """Apply reflections ``I - 2 u u^H`` for each row of ``u_rows`` in order (in place)."""
    cdef double[:, ::1] xv = x.view(np.float64)
    cdef double[:, ::1] uv = np.ascontiguousarray(u_rows).view(np.float64)
    cdef Py_ssize_t nb = xv.shape[0], n = xv.shape[1] // 2, nk = uv.shape[0]
    cdef Py_ssize_t b, k, i
    cdef double ar, ai, ur, ui, xr, xi
    with nogil:
        for b in range(nb):
            for k in range(nk):
                ar = 0.0
                ai = 0.0
                for i in range(n):
                    ur = uv[k, 2 * i]
                    ui = uv[k, 2 * i + 1]
                    xr = xv[b, 2 * i]
                    xi = xv[b, 2 * i + 1]
                    ar = ar + ur * xr + ui * xi
                    ai = ai + ur * xi - ui * xr
                ar = 2.0 * ar
                ai = 2.0 * ai
                for i in range(n):
                    ur = uv[k, 2 * i]
                    ui = uv[k, 2 * i + 1]
                    xv[b, 2 * i] = xv[b, 2 * i] - (ar * ur - ai * ui)
                    xv[b, 2 * i + 1] = xv[b, 2 * i + 1] - (ar * ui + ai * ur)
    return x


cdef inline int64_t _rne(int64_t v, int s) nogil:
    cdef int64_t q, r, half
    if s <= 0:
        return v << (-s)
    q = v >> s
    r = v - (q << s)
    half = (<int64_t>1) << (s - 1)
    if r > half or (r == half and (q & 1)):
        q += 1
    return q


cdef inline int64_t _sat(int64_t v, int bits) nogil:
    cdef int64_t lo = -((<int64_t>1) << (bits - 1))
    cdef int64_t hi = ((<int64_t>1) << (bits - 1)) - 1
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def fixed_merged_stages(xr_in, xi_in,
                        int64_t[:, ::1] u1r, int64_t[:, ::1] u1i,
                        int64_t[:, ::1] u2r, int64_t[:, ::1] u2i,
                        int64_t[::1] rhor, int64_t[::1] rhoi,
                        int x_bits, int x_frac, int u_frac, int i_bits, int i_frac):
    xr_arr = np.array(xr_in, dtype=np.int64, order="C")
    xi_arr = np.array(xi_in, dtype=np.int64, order="C")
    cdef int64_t[:, ::1] xr = xr_arr
    cdef int64_t[:, ::1] xi = xi_arr
    cdef Py_ssize_t nb = xr.shape[0], n = xr.shape[1], ns = u1r.shape[0]
    cdef Py_ssize_t b, s, i
    cdef int sh_alpha = u_frac + x_frac - i_frac
    cdef int sh_t = u_frac
    cdef int sh_x_in = i_frac + u_frac - x_frac
    cdef int64_t s1r, s1i, s2r, s2i, a1r, a1i, a2r, a2i, tr, ti, cr, ci, accr, acci
    with nogil:
        for b in range(nb):
            for s in range(ns):
                s1r = 0
                s1i = 0
                s2r = 0
                s2i = 0
                for i in range(n):
                    s1r += xr[b, i] * u1r[s, i] + xi[b, i] * u1i[s, i]
                    s1i += xi[b, i] * u1r[s, i] - xr[b, i] * u1i[s, i]
                    s2r += xr[b, i] * u2r[s, i] + xi[b, i] * u2i[s, i]
                    s2i += xi[b, i] * u2r[s, i] - xr[b, i] * u2i[s, i]
                a1r = _sat(_rne(s1r, sh_alpha), i_bits)
                a1i = _sat(_rne(s1i, sh_alpha), i_bits)
                a2r = _sat(_rne(s2r, sh_alpha), i_bits)
                a2i = _sat(_rne(s2i, sh_alpha), i_bits)
                tr = _sat(_rne(a1r * rhor[s] - a1i * rhoi[s], sh_t), i_bits)
                ti = _sat(_rne(a1r * rhoi[s] + a1i * rhor[s], sh_t), i_bits)
                cr = _sat(a2r - 2 * tr, i_bits)
                ci = _sat(a2i - 2 * ti, i_bits)
                for i in range(n):
                    accr = (xr[b, i] << sh_x_in) - 2 * (a1r * u1r[s, i] - a1i * u1i[s, i]) \
                        - 2 * (cr * u2r[s, i] - ci * u2i[s, i])
                    acci = (xi[b, i] << sh_x_in) - 2 * (a1r * u1i[s, i] + a1i * u1r[s, i]) \
                        - 2 * (cr * u2i[s, i] + ci * u2r[s, i])
                    xr[b, i] = _sat(_rne(accr, sh_x_in), x_bits)
                    xi[b, i] = _sat(_rne(acci, sh_x_in), x_bits)
    return xr_arr, xi_arr
