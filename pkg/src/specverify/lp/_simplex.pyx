# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pivot loop; mirrors _simplex_py.iterate exactly."""
from libc.math cimport INFINITY, fabs, isfinite

cdef enum:
    OPTIMAL = 0
    UNBOUNDED = 1
    LIMIT = 2

cdef double TIE_TOL = 1e-12
cdef double DEGENERATE_STEP = 1e-12
cdef double HARRIS_TOL = 1e-9


def iterate(double[:, ::1] T, long[::1] basis, double[::1] upper, signed char[::1] flipped,
            unsigned char[::1] eligible, Py_ssize_t m, Py_ssize_t obj_row, Py_ssize_t max_iter,
            long[::1] state, double dtol, double ptol):
    cdef Py_ssize_t nrow = T.shape[0]
    cdef Py_ssize_t ncol = T.shape[1] - 1
    cdef Py_ssize_t rhs = ncol
    cdef Py_ssize_t it, i, j, q, r, bv
    cdef double best, v, a, ratio, tmin, tmax, uq, piv, f, besta
    cdef long bestb
    cdef int status = LIMIT
    cdef Py_ssize_t done = max_iter
    with nogil:
        for it in range(max_iter):
            # pricing
            q = -1
            if state[1]:
                for j in range(ncol):
                    if eligible[j] and T[obj_row, j] < -dtol:
                        q = j
                        break
                if q < 0:
                    status = OPTIMAL
                    done = it
                    break
            else:
                best = INFINITY
                for j in range(ncol):
                    if eligible[j]:
                        v = T[obj_row, j]
                        if v < best:
                            best = v
                            q = j
                if q < 0 or not best < -dtol:
                    status = OPTIMAL
                    done = it
                    break

            # ratio test
            r = -1
            tmin = INFINITY
            if state[1]:
                for i in range(m):
                    ratio = _ratio(T[i, q], T[i, rhs], upper[basis[i]], ptol, 0.0)
                    if ratio < 0.0:
                        ratio = 0.0
                    if ratio < tmin:
                        tmin = ratio
                if isfinite(tmin):
                    bestb = -1
                    for i in range(m):
                        ratio = _ratio(T[i, q], T[i, rhs], upper[basis[i]], ptol, 0.0)
                        if ratio < 0.0:
                            ratio = 0.0
                        if ratio <= tmin + TIE_TOL:
                            if r < 0 or basis[i] < bestb:
                                r = i
                                bestb = basis[i]
            else:
                # Harris: largest pivot among rows within the relaxed minimum ratio
                tmax = INFINITY
                for i in range(m):
                    ratio = _ratio(T[i, q], T[i, rhs], upper[basis[i]], ptol, HARRIS_TOL)
                    if ratio < tmax:
                        tmax = ratio
                if isfinite(tmax):
                    besta = -1.0
                    for i in range(m):
                        ratio = _ratio(T[i, q], T[i, rhs], upper[basis[i]], ptol, 0.0)
                        if ratio <= tmax:
                            a = fabs(T[i, q])
                            if a > besta:
                                r = i
                                besta = a
                                tmin = ratio
                    if tmin < 0.0:
                        tmin = 0.0

            uq = upper[q]
            if uq <= tmin and uq < INFINITY:
                for i in range(nrow):
                    T[i, rhs] -= T[i, q] * uq
                    T[i, q] = -T[i, q]
                flipped[q] ^= 1
                continue
            if r < 0:
                status = UNBOUNDED
                done = it
                break

            if tmin <= DEGENERATE_STEP:
                state[0] += 1
                if state[0] >= state[2]:
                    state[1] = 1

            if T[r, q] > 0:
                if T[r, rhs] < 0.0:
                    T[r, rhs] = 0.0
            elif T[r, rhs] > upper[basis[r]]:
                T[r, rhs] = upper[basis[r]]

            if T[r, q] < 0:
                bv = basis[r]
                for j in range(ncol + 1):
                    T[r, j] = -T[r, j]
                T[r, bv] = 1.0
                T[r, rhs] += upper[bv]
                flipped[bv] ^= 1

            piv = T[r, q]
            for j in range(ncol + 1):
                T[r, j] = T[r, j] / piv
            for i in range(nrow):
                if i == r:
                    continue
                f = T[i, q]
                if f != 0.0:
                    for j in range(ncol + 1):
                        T[i, j] -= f * T[r, j]
            basis[r] = q
    return status, done


cdef inline double _ratio(double a, double b, double ub, double ptol, double slack) noexcept nogil:
    if a > ptol:
        return (b + slack) / a
    elif a < -ptol and isfinite(ub):
        return (ub - b + slack) / (-a)
    return INFINITY
