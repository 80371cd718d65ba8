# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Biot-Savart accumulation kernel (hot loop of the forward model).

The arithmetic here must stay operation-for-operation identical to
``nvscope._fieldkern_py.field_accumulate`` so both backends produce
bit-identical results; edit the two together.
"""

from libc.math cimport sqrt


def field_accumulate(double[:, ::1] starts, double[:, ::1] ends,
                     double[::1] cur_re, double[::1] cur_im,
                     double[:, ::1] points, double r_min,
                     double[:, ::1] out_re, double[:, ::1] out_im):
    """Accumulate finite-segment fields into out_re/out_im (teslas).

    Segments are summed in array order for every point. Returns -1 on
    success, or the flat index s * n_points + p of the first point p
    that lies within r_min of the axis of segment s (output buffers are
    then partially written and must be discarded by the caller).
    """
    cdef Py_ssize_t S = starts.shape[0]
    cdef Py_ssize_t P = points.shape[0]
    cdef Py_ssize_t s, p
    cdef double sx, sy, sz, ex, ey, ez, gx, gy, gz, L2, dx, dy, dz
    cdef double cr, ci, px, py, pz
    cdef double a1x, a1y, a1z, a2x, a2y, a2z, fx, fy, fz
    cdef double s2, rho2, n1, n2, sf, k, t
    cdef double rmin2 = r_min * r_min

    for s in range(S):
        sx = starts[s, 0]; sy = starts[s, 1]; sz = starts[s, 2]
        ex = ends[s, 0]; ey = ends[s, 1]; ez = ends[s, 2]
        gx = ex - sx; gy = ey - sy; gz = ez - sz
        L2 = (gx * gx + gy * gy) + gz * gz
        dx = gx / L2; dy = gy / L2; dz = gz / L2
        cr = cur_re[s]; ci = cur_im[s]
        for p in range(P):
            px = points[p, 0]; py = points[p, 1]; pz = points[p, 2]
            a1x = px - sx; a1y = py - sy; a1z = pz - sz
            a2x = px - ex; a2y = py - ey; a2z = pz - ez
            fx = a1y * dz - a1z * dy
            fy = a1z * dx - a1x * dz
            fz = a1x * dy - a1y * dx
            s2 = (fx * fx + fy * fy) + fz * fz
            rho2 = s2 * L2
            if rho2 < rmin2:
                return s * P + p
            n1 = sqrt((a1x * a1x + a1y * a1y) + a1z * a1z)
            n2 = sqrt((a2x * a2x + a2y * a2y) + a2z * a2z)
            sf = ((dx * a2x + dy * a2y) + dz * a2z) / n2 \
                - ((dx * a1x + dy * a1y) + dz * a1z) / n1
            k = 1e-7 * (sf / s2)
            t = fx * k
            out_re[p, 0] += t * cr
            out_im[p, 0] += t * ci
            t = fy * k
            out_re[p, 1] += t * cr
            out_im[p, 1] += t * ci
            t = fz * k
            out_re[p, 2] += t * cr
            out_im[p, 2] += t * ci
    return -1
