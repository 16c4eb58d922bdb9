"""Numpy implementations of the hot kernels, used when the extension is absent.

The Lindblad right-hand side works on the state reshaped to
``rho[a, j, b, k]`` (system a, b; Fock j, k) and exploits the ladder
structure of b, b^dag, so one call costs O(S^3 N^2) instead of O((S N)^3).
"""
import numpy as np


def lindblad_rhs(rho, hs_left, hs_right, omega, coup_left, coup_right,
                 gamma_phase, gamma_up, gamma_down):
    S, N = rho.shape[0], rho.shape[1]
    n = np.arange(N, dtype=float)
    sq = np.sqrt(np.arange(1, N, dtype=float))
    bbd = n + 1.0
    bbd[-1] = 0.0

    # system commutator and oscillator energy, both under -i
    comm = np.tensordot(hs_left, rho, axes=(1, 0))
    comm -= np.moveaxis(np.tensordot(rho, hs_right, axes=(2, 0)), 3, 2)
    jk = (n[:, None] - n[None, :])[None, :, None, :]
    comm += omega * jk * rho

    qr = np.zeros_like(rho)
    qr[:, 1:] += sq[None, :, None, None] * rho[:, :-1]
    qr[:, :-1] += sq[None, :, None, None] * rho[:, 1:]
    rq = np.zeros_like(rho)
    rq[..., 1:] += sq * rho[..., :-1]
    rq[..., :-1] += sq * rho[..., 1:]
    comm += coup_left[:, None, None, None] * qr - coup_right[None, None, :, None] * rq

    out = -1j * comm
    out -= 0.5 * gamma_phase * jk ** 2 * rho
    out -= 0.5 * gamma_up * (bbd[:, None] + bbd[None, :])[None, :, None, :] * rho
    out -= 0.5 * gamma_down * (n[:, None] + n[None, :])[None, :, None, :] * rho
    if gamma_up:
        out[:, 1:, :, 1:] += gamma_up * (sq[:, None] * sq[None, :])[None, :, None, :] * rho[:, :-1, :, :-1]
    if gamma_down:
        out[:, :-1, :, :-1] += gamma_down * (sq[:, None] * sq[None, :])[None, :, None, :] * rho[:, 1:, :, 1:]
    return out


def cosine_transform(u, wh, delta, chunk=4_000_000):
    out = np.empty(delta.shape[0])
    step = max(1, chunk // max(1, u.shape[0]))
    for start in range(0, delta.shape[0], step):
        d = delta[start:start + step]
        out[start:start + step] = np.cos(np.outer(d, u)) @ wh
    return out
