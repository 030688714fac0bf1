# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: seed synthesis, chunk labeling, relabeling, kernel application.

All loops release the GIL so chunk passes scale across a thread pool.
Semantics are kept bit-identical to mitoseg._kernels.fallback.
"""

import numpy as np

from libc.stdlib cimport calloc, free, malloc, realloc
from libc.stdint cimport int64_t, uint8_t, uint32_t

BACKEND = "compiled"


def seed_map_into(const float[:, :, ::1] mask, const float[:, :, ::1] boundary,
                  double t1, double t2, uint8_t[:, :, ::1] out):
    from ._kernels.fallback import quantize_thresholds
    t1q, t2q = quantize_thresholds(t1, t2)
    cdef float t1f = t1q, t2f = t2q
    cdef Py_ssize_t n = mask.shape[0] * mask.shape[1] * mask.shape[2]
    cdef const float* mp = &mask[0, 0, 0]
    cdef const float* bp = &boundary[0, 0, 0]
    cdef uint8_t* op = &out[0, 0, 0]
    cdef Py_ssize_t i
    with nogil:
        # branchless so the compiler can vectorize
        for i in range(n):
            op[i] = (mp[i] > t1f) & (bp[i] < t2f)


cdef inline uint32_t _find(uint32_t* parent, uint32_t x) nogil:
    cdef uint32_t r = x
    cdef uint32_t nxt
    while parent[r] != r:
        r = parent[r]
    while parent[x] != r:
        nxt = parent[x]
        parent[x] = r
        x = nxt
    return r


cdef inline uint32_t _union(uint32_t* parent, uint8_t* rank, uint32_t a, uint32_t b) nogil:
    # a and b are roots
    cdef uint32_t t
    if rank[a] < rank[b]:
        t = a
        a = b
        b = t
    parent[b] = a
    if rank[a] == rank[b]:
        rank[a] += 1
    return a


def label_chunk(const uint8_t[:, :, ::1] seed, uint32_t[:, :, ::1] labels,
                Py_ssize_t z0, Py_ssize_t y0, Py_ssize_t x0,
                Py_ssize_t cd, Py_ssize_t ch, Py_ssize_t cw, int connectivity):
    """Two-pass union-find labeling of one chunk box of the full arrays.

    Writes dense labels 1..K into the box (numbered by first occurrence in
    z,y,x raster order) and returns ``(K, first_flat, counts)`` with the
    chunk-local flat index of each label's first voxel and its voxel count.
    """
    cdef int offs[13][3]
    cdef int noff = 0
    cdef int dz, dy, dx
    if connectivity == 6:
        for dz, dy, dx in ((-1, 0, 0), (0, -1, 0), (0, 0, -1)):
            offs[noff][0] = dz
            offs[noff][1] = dy
            offs[noff][2] = dx
            noff += 1
    else:
        for dz in range(-1, 1):
            for dy in range(-1, 2):
                for dx in range(-1, 2):
                    if dz < 0 or (dz == 0 and (dy < 0 or (dy == 0 and dx < 0))):
                        offs[noff][0] = dz
                        offs[noff][1] = dy
                        offs[noff][2] = dx
                        noff += 1

    cdef Py_ssize_t cap = 4096
    cdef uint32_t* parent = <uint32_t*> malloc(cap * sizeof(uint32_t))
    cdef uint8_t* rank = <uint8_t*> malloc(cap * sizeof(uint8_t))
    cdef int64_t* first = <int64_t*> malloc(cap * sizeof(int64_t))
    cdef int64_t* cnt = <int64_t*> malloc(cap * sizeof(int64_t))
    cdef uint32_t* newid = NULL
    cdef uint32_t* dense = NULL
    if parent == NULL or rank == NULL or first == NULL or cnt == NULL:
        free(parent); free(rank); free(first); free(cnt)
        raise MemoryError()

    cdef Py_ssize_t z, y, x, i, nz, ny, nx
    cdef uint32_t cur, r, p_count = 0, k_count = 0, l
    cdef int64_t f_l, c_l
    cdef bint oom = 0

    cdef Py_ssize_t z1 = z0 + cd, y1 = y0 + ch, x1 = x0 + cw
    with nogil:
        # pass 1: provisional labels with in-chunk unions
        for z in range(z0, z1):
            for y in range(y0, y1):
                for x in range(x0, x1):
                    if seed[z, y, x] == 0:
                        labels[z, y, x] = 0
                        continue
                    cur = 0
                    for i in range(noff):
                        nz = z + offs[i][0]
                        ny = y + offs[i][1]
                        nx = x + offs[i][2]
                        if nz < z0 or ny < y0 or ny >= y1 or nx < x0 or nx >= x1:
                            continue
                        if seed[nz, ny, nx] == 0:
                            continue
                        r = _find(parent, labels[nz, ny, nx])
                        if cur == 0:
                            cur = r
                        elif cur != r:
                            cur = _union(parent, rank, cur, r)
                    if cur == 0:
                        p_count += 1
                        if <Py_ssize_t> p_count + 1 > cap:
                            cap = cap * 2
                            parent = <uint32_t*> realloc(parent, cap * sizeof(uint32_t))
                            rank = <uint8_t*> realloc(rank, cap * sizeof(uint8_t))
                            first = <int64_t*> realloc(first, cap * sizeof(int64_t))
                            cnt = <int64_t*> realloc(cnt, cap * sizeof(int64_t))
                            if parent == NULL or rank == NULL or first == NULL or cnt == NULL:
                                oom = 1
                                break
                        cur = p_count
                        parent[cur] = cur
                        rank[cur] = 0
                        first[cur] = ((z - z0) * ch + (y - y0)) * cw + (x - x0)
                        cnt[cur] = 1
                    else:
                        cnt[cur] += 1
                    labels[z, y, x] = cur
                if oom:
                    break
            if oom:
                break

        if not oom and p_count > 0:
            # dense ids in first-occurrence order; first/cnt collapse in place
            newid = <uint32_t*> calloc(p_count + 1, sizeof(uint32_t))
            dense = <uint32_t*> malloc((p_count + 1) * sizeof(uint32_t))
            if newid == NULL or dense == NULL:
                oom = 1
            else:
                dense[0] = 0
                for l in range(1, p_count + 1):
                    # read before the in-place collapse can overwrite slot k_count == l
                    f_l = first[l]
                    c_l = cnt[l]
                    r = _find(parent, l)
                    if newid[r] == 0:
                        k_count += 1
                        newid[r] = k_count
                        first[k_count] = f_l
                        cnt[k_count] = 0
                    dense[l] = newid[r]
                    cnt[newid[r]] += c_l

                # pass 2: rewrite to dense labels
                for z in range(z0, z1):
                    for y in range(y0, y1):
                        for x in range(x0, x1):
                            l = labels[z, y, x]
                            if l != 0:
                                labels[z, y, x] = dense[l]

    if oom:
        free(parent); free(rank); free(first); free(cnt); free(newid); free(dense)
        raise MemoryError()

    first_np = np.empty(k_count, dtype=np.int64)
    counts_np = np.empty(k_count, dtype=np.int64)
    cdef int64_t[::1] fv = first_np
    cdef int64_t[::1] cv = counts_np
    for i in range(k_count):
        fv[i] = first[i + 1]
        cv[i] = cnt[i + 1]
    free(parent); free(rank); free(first); free(cnt); free(newid); free(dense)
    return int(k_count), first_np, counts_np


def relabel_into(uint32_t[:, :, ::1] labels, const uint32_t[::1] lut,
                 Py_ssize_t z0, Py_ssize_t y0, Py_ssize_t x0,
                 Py_ssize_t cd, Py_ssize_t ch, Py_ssize_t cw):
    """labels[box] <- lut[labels[box]]; the caller guarantees lut[0] == 0."""
    cdef Py_ssize_t z, y, x
    with nogil:
        for z in range(z0, z0 + cd):
            for y in range(y0, y0 + ch):
                for x in range(x0, x0 + cw):
                    labels[z, y, x] = lut[labels[z, y, x]]


def apply_kernels_into(const float[:, ::1] prev, const float[:, ::1] nxt,
                       const float[:, :, :, ::1] k1, const float[:, :, :, ::1] k2,
                       float[:, ::1] out):
    cdef Py_ssize_t h = k1.shape[0], w = k1.shape[1], k = k1.shape[2]
    cdef Py_ssize_t c = k // 2
    cdef Py_ssize_t y, x, u, v, sy, sx
    cdef double acc1, acc2, pv, nv
    with nogil:
        for y in range(h):
            for x in range(w):
                acc1 = 0.0
                acc2 = 0.0
                for u in range(k):
                    sy = y + u - c
                    for v in range(k):
                        sx = x + v - c
                        if 0 <= sy < h and 0 <= sx < w:
                            pv = <double> prev[sy, sx]
                            nv = <double> nxt[sy, sx]
                        else:
                            pv = 0.0
                            nv = 0.0
                        acc1 = acc1 + pv * (<double> k1[y, x, u, v])
                        acc2 = acc2 + nv * (<double> k2[y, x, u, v])
                out[y, x] = <float> (acc1 + acc2)
