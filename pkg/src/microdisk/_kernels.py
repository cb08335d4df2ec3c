"""Numba-compiled field update kernels.

These mirror the numpy reference updates in fdtd.Simulation exactly (same
operation order per cell); a regression test asserts step-for-step
agreement between the two backends.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True, fastmath=False)
def update_h(er, ep, ez, hr, hp, hz,
             psi_hr_z, psi_hp_z, psi_hp_r, psi_hz_r,
             rn, rh, inv_rn, inv_rh,
             bz_h, az_h, ikz_h, br_h, ar_h, ikr_h,
             m, dt, dr, dz, nr, nz):
    jm = 1j * m
    for i in range(nr + 1):
        for j in range(nz):
            d = (ep[i, j + 1] - ep[i, j]) / dz
            psi = bz_h[j] * psi_hr_z[i, j] + az_h[j] * d
            psi_hr_z[i, j] = psi
            term = d * ikz_h[j] + psi
            if m != 0:
                term -= jm * inv_rn[i] * ez[i, j]
            hr[i, j] += dt * term
    for i in range(nr):
        for j in range(nz):
            dzt = (er[i, j + 1] - er[i, j]) / dz
            psi = bz_h[j] * psi_hp_z[i, j] + az_h[j] * dzt
            psi_hp_z[i, j] = psi
            t1 = dzt * ikz_h[j] + psi
            drt = (ez[i + 1, j] - ez[i, j]) / dr
            psi = br_h[i] * psi_hp_r[i, j] + ar_h[i] * drt
            psi_hp_r[i, j] = psi
            t2 = drt * ikr_h[i] + psi
            hp[i, j] -= dt * (t1 - t2)
    for i in range(nr):
        for j in range(nz + 1):
            drt = (rn[i + 1] * ep[i + 1, j] - rn[i] * ep[i, j]) / (rh[i] * dr)
            psi = br_h[i] * psi_hz_r[i, j] + ar_h[i] * drt
            psi_hz_r[i, j] = psi
            term = drt * ikr_h[i] + psi
            if m != 0:
                term -= jm * inv_rh[i] * er[i, j]
            hz[i, j] -= dt * term


@numba.njit(cache=True, fastmath=False)
def update_e(er, ep, ez, hr, hp, hz,
             psi_er_z, psi_ep_z, psi_ep_r, psi_ez_r,
             ce_r, ce_p, ce_z,
             rn, rh, inv_rn, inv_rh,
             bz_n, az_n, ikz_n, br_n, ar_n, ikr_n,
             m, dr, dz, nr, nz, on_axis):
    jm = 1j * m
    for i in range(nr):
        for j in range(1, nz):
            d = (hp[i, j] - hp[i, j - 1]) / dz
            psi = bz_n[j] * psi_er_z[i, j] + az_n[j] * d
            psi_er_z[i, j] = psi
            term = -(d * ikz_n[j] + psi)
            if m != 0:
                term += jm * inv_rh[i] * hz[i, j]
            er[i, j] += ce_r[i, j] * term
    for i in range(1, nr):
        for j in range(1, nz):
            dzt = (hr[i, j] - hr[i, j - 1]) / dz
            psi = bz_n[j] * psi_ep_z[i, j] + az_n[j] * dzt
            psi_ep_z[i, j] = psi
            t1 = dzt * ikz_n[j] + psi
            drt = (hz[i, j] - hz[i - 1, j]) / dr
            psi = br_n[i] * psi_ep_r[i, j] + ar_n[i] * drt
            psi_ep_r[i, j] = psi
            t2 = drt * ikr_n[i] + psi
            ep[i, j] += ce_p[i, j] * (t1 - t2)
    for i in range(1, nr):
        for j in range(nz):
            drt = (rh[i] * hp[i, j] - rh[i - 1] * hp[i - 1, j]) / (rn[i] * dr)
            psi = br_n[i] * psi_ez_r[i, j] + ar_n[i] * drt
            psi_ez_r[i, j] = psi
            term = drt * ikr_n[i] + psi
            if m != 0:
                term -= jm * inv_rn[i] * hr[i, j]
            ez[i, j] += ce_z[i, j] * term
    if on_axis and m == 0:
        for j in range(nz):
            ez[0, j] += ce_z[0, j] * (4.0 / dr) * hp[0, j]
