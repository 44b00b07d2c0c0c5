# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM time loop; same contract as ``_lstm_py``."""
import numpy as np
cimport cython
from libc.math cimport tanh

ctypedef fused real:
    float
    double


cdef inline double _sigmoid(double z) noexcept nogil:
    return 0.5 * (tanh(0.5 * z) + 1.0)


def _forward(const real[:, :, ::1] xproj, const real[:, ::1] rec,
             real[:, :, ::1] hs, real[:, :, ::1] cs, real[:, :, ::1] acts):
    cdef Py_ssize_t B = xproj.shape[0], T = xproj.shape[1], G = xproj.shape[2]
    cdef Py_ssize_t u = G // 4
    cdef Py_ssize_t b, t, j, k
    cdef double c_prev, c, hp
    with nogil:
        for b in range(B):
            for t in range(T):
                # pre-activations accumulated row-wise so rec is read contiguously
                for j in range(G):
                    acts[b, t, j] = xproj[b, t, j]
                if t > 0:
                    for k in range(u):
                        hp = hs[b, t - 1, k]
                        for j in range(G):
                            acts[b, t, j] = acts[b, t, j] + <real>hp * rec[k, j]
                for j in range(G):
                    if 2 * u <= j < 3 * u:
                        acts[b, t, j] = <real>tanh(<double>acts[b, t, j])
                    else:
                        acts[b, t, j] = <real>_sigmoid(<double>acts[b, t, j])
                for j in range(u):
                    c_prev = cs[b, t - 1, j] if t > 0 else 0.0
                    c = acts[b, t, u + j] * c_prev + acts[b, t, j] * acts[b, t, 2 * u + j]
                    cs[b, t, j] = <real>c
                    hs[b, t, j] = <real>(acts[b, t, 3 * u + j] * tanh(<double>cs[b, t, j]))


def _backward(const real[:, :, ::1] dhs, const real[:, :, ::1] hs,
              const real[:, :, ::1] cs, const real[:, :, ::1] acts,
              const real[:, ::1] rec, real[:, :, ::1] dxproj, real[:, ::1] drec,
              real[:, ::1] dh_next, real[:, ::1] dc_next):
    cdef Py_ssize_t B = dhs.shape[0], T = dhs.shape[1], u = dhs.shape[2]
    cdef Py_ssize_t G = 4 * u
    cdef Py_ssize_t b, t, j, k
    cdef double i_, f_, g_, o_, dh, tc, dc, c_prev, acc, hp
    with nogil:
        for b in range(B):
            for j in range(u):
                dh_next[b, j] = 0
                dc_next[b, j] = 0
            for t in range(T - 1, -1, -1):
                for j in range(u):
                    i_ = acts[b, t, j]
                    f_ = acts[b, t, u + j]
                    g_ = acts[b, t, 2 * u + j]
                    o_ = acts[b, t, 3 * u + j]
                    dh = dhs[b, t, j] + dh_next[b, j]
                    tc = tanh(<double>cs[b, t, j])
                    dc = dc_next[b, j] + dh * o_ * (1.0 - tc * tc)
                    c_prev = cs[b, t - 1, j] if t > 0 else 0.0
                    dxproj[b, t, j] = <real>(dc * g_ * i_ * (1.0 - i_))
                    dxproj[b, t, u + j] = <real>(dc * c_prev * f_ * (1.0 - f_))
                    dxproj[b, t, 2 * u + j] = <real>(dc * i_ * (1.0 - g_ * g_))
                    dxproj[b, t, 3 * u + j] = <real>(dh * tc * o_ * (1.0 - o_))
                    dc_next[b, j] = <real>(dc * f_)
                if t > 0:
                    for k in range(u):
                        hp = hs[b, t - 1, k]
                        for j in range(G):
                            drec[k, j] = <real>(drec[k, j] + hp * dxproj[b, t, j])
                for k in range(u):
                    acc = 0.0
                    for j in range(G):
                        acc = acc + dxproj[b, t, j] * rec[k, j]
                    dh_next[b, k] = <real>acc


def lstm_forward(xproj, recurrent):
    xproj = np.ascontiguousarray(xproj)
    recurrent = np.ascontiguousarray(recurrent, dtype=xproj.dtype)
    batch, steps, width = xproj.shape
    u = width // 4
    hs = np.empty((batch, steps, u), dtype=xproj.dtype)
    cs = np.empty((batch, steps, u), dtype=xproj.dtype)
    acts = np.empty((batch, steps, width), dtype=xproj.dtype)
    _forward(xproj, recurrent, hs, cs, acts)
    return hs, cs, acts


def lstm_backward(dhs, hs, cs, acts, recurrent):
    dtype = hs.dtype
    dhs = np.ascontiguousarray(dhs, dtype=dtype)
    recurrent = np.ascontiguousarray(recurrent, dtype=dtype)
    batch, steps, u = dhs.shape
    dxproj = np.empty((batch, steps, 4 * u), dtype=dtype)
    drec = np.zeros((u, 4 * u), dtype=dtype)
    dh_next = np.empty((batch, u), dtype=dtype)
    dc_next = np.empty((batch, u), dtype=dtype)
    _backward(dhs, np.ascontiguousarray(hs), np.ascontiguousarray(cs),
              np.ascontiguousarray(acts), recurrent, dxproj, drec, dh_next, dc_next)
    return dxproj, drec
