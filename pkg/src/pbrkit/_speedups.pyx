# distutils: language = c++
"""Compiled versions of the kernels in ``pbrkit._fallback``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, NAN
from libcpp.algorithm cimport sort, stable_sort
from libcpp.vector cimport vector
from libcpp.pair cimport pair

cnp.import_array()


cdef double _gini_sorted(const double* y, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0, num = 0.0
    if n == 0:
        return NAN
    for i in range(n):
        s += y[i]
        num += (2.0 * (i + 1) - n - 1) * y[i]
    if s == 0.0:
        return NAN
    if y[0] == y[n - 1]:
        return 0.0  # constant vector; avoid round-off residue
    return num / (n * s)


cdef double _gini_inplace(double* y, Py_ssize_t n) noexcept nogil:
    sort(y, y + n)
    return _gini_sorted(y, n)


def gini_sorted(const double[::1] y):
    return _gini_sorted(&y[0], y.shape[0]) if y.shape[0] else NAN


def gini(x):
    cdef double[::1] buf = np.array(x, dtype=np.float64, copy=True).ravel()
    cdef Py_ssize_t n = buf.shape[0]
    if n == 0:
        return NAN
    with nogil:
        res = _gini_inplace(&buf[0], n)
    return res


def gini_rows(x):
    cdef double[:, ::1] buf = np.array(x, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t r, n_rows = buf.shape[0], n = buf.shape[1]
    out = np.empty(n_rows)
    cdef double[::1] o = out
    with nogil:
        for r in range(n_rows):
            o[r] = _gini_inplace(&buf[r, 0], n)
    return out


def weighted_gini(x, w):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], i, j
    cdef vector[pair[double, Py_ssize_t]] items
    cdef double total_w = 0.0, mass = 0.0, cum = 0.0, acc = 0.0, wi, xi
    items.reserve(n)
    for i in range(n):
        items.push_back(pair[double, Py_ssize_t](xv[i], i))
        total_w += wv[i]
        mass += wv[i] * xv[i]
    if total_w == 0.0 or mass == 0.0:
        return NAN
    stable_sort(items.begin(), items.end())
    for i in range(n):
        j = items[i].second
        wi = wv[j]
        xi = xv[j]
        # below = cum, above = total_w - cum - wi
        acc += wi * xi * (cum - (total_w - cum - wi))
        cum += wi
    return acc / (total_w * mass)


def leave_one_out_gini(x):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], i, j
    cdef vector[pair[double, Py_ssize_t]] items
    cdef double total = 0.0, numer = 0.0, prefix = 0.0, y, c, new_num, new_sum
    out = np.empty(n)
    cdef double[::1] o = out
    items.reserve(n)
    for i in range(n):
        items.push_back(pair[double, Py_ssize_t](xv[i], i))
    stable_sort(items.begin(), items.end())
    for i in range(n):
        y = items[i].first
        total += y
        numer += (2.0 * (i + 1) - n - 1) * y
    for i in range(n):
        y = items[i].first
        j = items[i].second
        c = 2.0 * (i + 1) - n - 1
        # before = prefix (sum strictly before), after = total - prefix - y
        new_num = numer - c * y + prefix - (total - prefix - y)
        new_sum = total - y
        if n > 1 and new_sum != 0.0:
            o[j] = new_num / ((n - 1) * new_sum)
        else:
            o[j] = NAN
        prefix += y
    return out


def theil(x):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], i
    cdef double mu = 0.0, acc = 0.0, r
    for i in range(n):
        mu += xv[i]
    mu /= n
    for i in range(n):
        r = xv[i] / mu
        acc += r * log(r)
    return acc / n


cdef bint _dev_greater(const pair[double, Py_ssize_t]& a, const pair[double, Py_ssize_t]& b) noexcept nogil:
    return a.first > b.first


cdef void _aligned(const double* v, const double* dev, Py_ssize_t n, double target,
                   const cnp.int64_t* ks, Py_ssize_t m, double* out,
                   double* work, vector[pair[double, Py_ssize_t]]& items) noexcept nogil:
    cdef Py_ssize_t i, j, k, done
    items.clear()
    for i in range(n):
        items.push_back(pair[double, Py_ssize_t](dev[i], i))
    stable_sort(items.begin(), items.end(), _dev_greater)
    for i in range(n):
        work[i] = v[i]
    done = 0
    # ks ascending is not assumed; rebuild from scratch when it decreases
    for j in range(m):
        k = ks[j]
        if k < done:
            for i in range(n):
                work[i] = v[i]
            done = 0
        for i in range(done, k):
            work[items[i].second] = target
        done = k
        out[j] = _gini_of_copy(work, n)


cdef double _gini_of_copy(const double* src, Py_ssize_t n) noexcept nogil:
    cdef vector[double] tmp
    tmp.assign(src, src + n)
    sort(tmp.begin(), tmp.end())
    return _gini_sorted(tmp.data(), n)


def aligned_gini(values, dev, double target, ks):
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] d = np.ascontiguousarray(dev, dtype=np.float64)
    cdef cnp.int64_t[::1] kk = np.ascontiguousarray(ks, dtype=np.int64)
    cdef Py_ssize_t n = v.shape[0], m = kk.shape[0]
    out = np.empty(m)
    cdef double[::1] o = out
    cdef double[::1] work = np.empty(n)
    cdef vector[pair[double, Py_ssize_t]] items
    items.reserve(n)
    if m == 0:
        return out
    with nogil:
        _aligned(&v[0], &d[0], n, target, &kk[0], m, &o[0], &work[0], items)
    return out


def bootstrap_alignment(values, dev, idx, double target, ks):
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] d = np.ascontiguousarray(dev, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef cnp.int64_t[::1] kk = np.ascontiguousarray(ks, dtype=np.int64)
    cdef Py_ssize_t n_rep = ix.shape[0], n = ix.shape[1], m = kk.shape[0], r, i
    base = np.empty(n_rep)
    adj = np.empty((n_rep, m))
    cdef double[::1] b = base
    cdef double[:, ::1] a = adj
    cdef double[::1] sv = np.empty(n)
    cdef double[::1] sd = np.empty(n)
    cdef double[::1] work = np.empty(n)
    cdef vector[pair[double, Py_ssize_t]] items
    items.reserve(n)
    with nogil:
        for r in range(n_rep):
            for i in range(n):
                sv[i] = v[ix[r, i]]
                sd[i] = d[ix[r, i]]
            b[r] = _gini_of_copy(&sv[0], n)
            if m:
                _aligned(&sv[0], &sd[0], n, target, &kk[0], m, &a[r, 0], &work[0], items)
    return base, adj


def permutation_mean_diff(pooled, Py_ssize_t n_a, perms):
    cdef double[::1] p = np.ascontiguousarray(pooled, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] pm = np.ascontiguousarray(perms, dtype=np.int64)
    cdef Py_ssize_t n_rep = pm.shape[0], n = pm.shape[1], r, i
    cdef Py_ssize_t n_b = n - n_a
    cdef double sa, sb
    out = np.empty(n_rep)
    cdef double[::1] o = out
    with nogil:
        for r in range(n_rep):
            sa = 0.0
            sb = 0.0
            for i in range(n_a):
                sa += p[pm[r, i]]
            for i in range(n_a, n):
                sb += p[pm[r, i]]
            o[r] = sa / n_a - sb / n_b
    return out


def resample_cis(values, idx, mask):
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef cnp.uint8_t[::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t r, i, j, n_rest, n_rows = ix.shape[0], n = ix.shape[1]
    cdef double g_all, g_minus
    out = np.empty(n_rows)
    cdef double[::1] o = out
    cdef vector[double] a, b
    with nogil:
        for r in range(n_rows):
            a.clear()
            b.clear()
            for i in range(n):
                j = ix[r, i]
                a.push_back(v[j])
                if not m[j]:
                    b.push_back(v[j])
            if <Py_ssize_t>b.size() == n:
                o[r] = NAN
                continue
            n_rest = b.size()
            g_all = _gini_inplace(a.data(), n)
            g_minus = _gini_inplace(b.data(), n_rest) if n_rest > 0 else NAN
            if g_all != g_all or g_minus != g_minus:
                o[r] = NAN
            elif g_all == 0.0:
                o[r] = 0.0
            else:
                o[r] = 100.0 * ((g_all - g_minus) / g_all)
    return out
