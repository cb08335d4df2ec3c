"""Cavity-QED parameter chain for an NV-like emitter coupled to a disk mode.

Rates follow the nu = omega/2pi convention and are quoted in GHz.  The
enhancement/coupling conventions are chosen so that the published quadruple
(g, kappa, gamma, gamma_zpl) is mutually consistent: F = 2 g^2 / (kappa *
gamma_zpl).  Note this differs from the textbook 4 g^2 form by a factor of
two; see coupling_g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

C_UM_GHZ = 299792.458  # speed of light, um * GHz


@dataclass(frozen=True)
class EmitterModel:
    """Spontaneous-emission data of the emitter (rates in GHz, /2pi)."""

    gamma_total: float
    gamma_zpl: float
    lambda_zpl: float
    depth_um: float = 0.2

    def __post_init__(self):
        if not 0 < self.gamma_zpl < self.gamma_total:
            raise ValueError("need 0 < gamma_zpl < gamma_total")
        if self.lambda_zpl <= 0:
            raise ValueError("lambda_zpl must be positive")


def nv_center() -> EmitterModel:
    """Default emitter preset: NV- with ~3% zero-phonon-line branching."""
    return EmitterModel(gamma_total=0.013, gamma_zpl=0.0004, lambda_zpl=0.637)


@dataclass(frozen=True)
class CqedParams:
    g_zpl: float
    kappa: float
    f_zpl: float
    beta: float

    def __post_init__(self):
        for name in ("g_zpl", "kappa", "f_zpl", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.beta >= 1:
            raise ValueError("beta must be < 1")


def kappa(lam: float, q: float) -> float:
    """Photon decay rate kappa/2pi = (c/lambda)/(2Q) in GHz."""
    if lam <= 0 or q <= 0:
        raise ValueError("lam and Q must be positive")
    return (C_UM_GHZ / lam) / (2.0 * q)


def purcell_zpl(q_total: float, v_bar: float, eta: float,
                n_max_loc: float = 3.25, n_emit: float = 2.42) -> float:
    """ZPL emission enhancement for an optimal dipole at the diamond maximum.

    F = (3 / 4 pi^2) * (n_max_loc / n_emit) * Q eta^2 / V_bar, the standard
    on-resonance Purcell factor rewritten in the peak-normalized mode volume
    V_bar (units of (lambda/n_max_loc)^3, traveling-wave convention) and the
    diamond field ratio eta.
    """
    if v_bar is None or eta is None:
        raise ValueError("mode is missing v_bar or eta")
    if v_bar <= 0 or not 0 <= eta <= 1 or q_total <= 0:
        raise ValueError("need v_bar > 0, 0 <= eta <= 1, Q > 0")
    return (3.0 / (4.0 * math.pi ** 2)) * (n_max_loc / n_emit) * q_total * eta ** 2 / v_bar


def coupling_g(f_zpl: float, kap: float, gamma_zpl: float) -> float:
    """Single-photon coupling rate g = sqrt(F kappa gamma_zpl / 2) in GHz.

    The factor 2 (rather than 4) keeps F = 2 g^2/(kappa gamma_zpl), the
    convention under which the published parameter set is self-consistent.
    """
    if f_zpl < 0 or kap <= 0 or gamma_zpl <= 0:
        raise ValueError("need F >= 0 and positive kappa, gamma_zpl")
    return math.sqrt(f_zpl * kap * gamma_zpl / 2.0)


def beta(f_zpl: float, emitter: EmitterModel) -> float:
    """Fraction of total spontaneous emission routed into the cavity mode."""
    if f_zpl < 0:
        raise ValueError("F must be non-negative")
    enhanced = f_zpl * emitter.gamma_zpl
    return enhanced / (emitter.gamma_total - emitter.gamma_zpl + enhanced)


def mode_cqed_params(lam: float, q_total: float, v_bar: float, eta: float,
                     emitter: EmitterModel | None = None,
                     n_max_loc: float = 3.25, n_emit: float = 2.42) -> CqedParams:
    """Full parameter chain for one mode/emitter pairing."""
    em = emitter if emitter is not None else nv_center()
    kap = kappa(lam, q_total)
    f = purcell_zpl(q_total, v_bar, eta, n_max_loc=n_max_loc, n_emit=n_emit)
    return CqedParams(g_zpl=coupling_g(f, kap, em.gamma_zpl), kappa=kap,
                      f_zpl=f, beta=beta(f, em))
