"""Constructive Birkhoff normal form: triangular cohomological solves.

Degree by degree, the generator part chi^(d) solves

    {Z_2, chi^(d)} + Q^(d) = P^(d) + K^(d) + H^(d)

where K^(d) collects nested bracket chains ad_{chi^(q1)} ... P^(q_{l+1})
with weight 1/l! and H^(d) the chains ending in {chi^(q), Z_2} with
weight 1/(l+1)!.  Non gamma-resonant keys are inverted entrywise by the
diagonal small-divisor operator; resonant keys go to Q wholesale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularDivisor
from .polyalg import (HomogeneousPolynomial, InhomogeneousPolynomial,
                      bracket_with_Z2, divisor_tensor, poisson_bracket)
from .resonance import is_gamma_resonant

__all__ = [
    "ParameterSchedule",
    "NormalFormResult",
    "schedule",
    "birkhoff",
    "transform_check",
]


@dataclass
class ParameterSchedule:
    """Parameter chain used by the almost-global existence argument.

    The regularity gap is s - s_c = 9 r^2 X + alpha with
    X = 2 a_r + r alpha beta + 2, and N, gamma are tied to eps through

        N = eps^(-8 / (9 r X)),   gamma = N^(-X),

    which makes gamma^(-r) = eps^(-8/9) an exact identity.  (Defining N
    through the full gap s - s_c would perturb the identity by the lone
    alpha term; the alpha-free exponent is used so the chain is exact.)
    """

    r: int
    s_c: float
    s: float
    N: float
    gamma: float
    eps: float
    a_r: float
    alpha: float
    beta: float
    nu: float
    flags: dict = field(default_factory=dict)

    @property
    def exponent(self):
        return 2.0 * self.a_r + self.r * self.alpha * self.beta + 2.0

    def as_dict(self):
        return {
            "r": self.r, "s_c": self.s_c, "s": self.s, "N": self.N,
            "gamma": self.gamma, "eps": self.eps, "a_r": self.a_r,
            "alpha": self.alpha, "beta": self.beta, "nu": self.nu,
            "flags": dict(self.flags),
        }


def schedule(r, s_c, eps, a_r=None, alpha=1.0, beta=1.0, nu=0.0):
    """Build the parameter schedule; degenerate inputs are flagged, not rejected."""
    if r < 3:
        raise ValueError("normal form order r must be >= 3")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if a_r is None:
        a_r = float(r)   # heuristic default; the paper never pins a_q numerically
    X = 2.0 * a_r + r * alpha * beta + 2.0
    s = s_c + 9.0 * r * r * X + alpha
    N = eps ** (-8.0 / (9.0 * r * X))
    gamma = N ** (-X)
    flags = {}
    if r < 17:
        flags["below_bootstrap_order"] = True
    if eps >= 1.0:
        flags["degenerate"] = True
    if gamma >= 1.0 or N <= 1.0:
        flags["smallness_violated"] = True
    return ParameterSchedule(int(r), float(s_c), float(s), float(N), float(gamma),
                             float(eps), float(a_r), float(alpha), float(beta),
                             float(nu), flags)


@dataclass
class NormalFormResult:
    chi: InhomogeneousPolynomial
    resonant: InhomogeneousPolynomial
    order: int
    gamma: float
    schedule: ParameterSchedule | None
    diagnostics: dict

    @property
    def Q(self):
        return self.resonant


def _compositions(total, length, low, high):
    """Integer tuples of the given length in [low, high] summing to total."""
    if length == 1:
        if low <= total <= high:
            yield (total,)
        return
    for first in range(low, min(high, total - low * (length - 1)) + 1):
        for rest in _compositions(total - first, length - 1, low, high):
            yield (first,) + rest


class _ChainCache:
    """Memoized nested ad-chains ad_{chi^{q1}} ... applied to a seed."""

    def __init__(self, chi_parts, prune_tol):
        self.chi = chi_parts
        self.prune_tol = prune_tol
        self._memo = {}

    def chain(self, degrees, seed_key, seed_poly):
        """ad_{chi^{d1}} ... ad_{chi^{dl}} seed; degrees may be empty."""
        if not degrees:
            return seed_poly
        key = (degrees, seed_key)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        inner = self.chain(degrees[1:], seed_key, seed_poly)
        chi = self.chi.get(degrees[0])
        if inner is None or chi is None:
            out = None
        else:
            out = poisson_bracket(chi, inner, prune_tol=self.prune_tol)
            if not out.terms:
                out = None
        self._memo[key] = out
        return out


def birkhoff(P, gamma, r, prune_tol=1e-14, budget=None, keep_schedule=None):
    """Remove non gamma-resonant terms of P up to degree r.

    Returns a NormalFormResult with the generator chi, the resonant part
    Q, and per-degree diagnostics including the cohomological residual
    relative to the coefficient scale.
    """
    if r < 3:
        raise ValueError("r must be >= 3")
    if not P.parts:
        raise ValueError("P has no homogeneous parts")
    spectrum = P.spectrum
    for part in P.parts.values():
        if part.spectrum is not spectrum:
            raise ValueError("all parts of P must share one spectrum")
        if part.n < part.nu + 1:
            raise ValueError("the tame grading requires n >= nu + 1")
    nu = max(p.nu for p in P.parts.values())
    n = min(p.n for p in P.parts.values())

    res_cache = {}

    def resonant_key(key):
        hit = res_cache.get(key)
        if hit is None:
            kwargs = {} if budget is None else {"budget": budget}
            hit = is_gamma_resonant(key, gamma, spectrum, **kwargs)
            res_cache[key] = hit
        return hit

    chi_parts = {}
    q_parts = {}
    zchi_parts = {}   # {chi^(q), Z_2} seeds for the H chains
    diagnostics = {"degrees": {}, "gamma": gamma, "order": r,
                   "prune_tol": prune_tol}
    chains = _ChainCache(chi_parts, prune_tol)

    for d in range(3, r + 1):
        K_d = HomogeneousPolynomial.zero(d, nu, n, spectrum)
        H_d = HomogeneousPolynomial.zero(d, nu, n, spectrum)
        for ell in range(1, d - 2):
            invl = 1.0 / math.factorial(ell)
            invl1 = 1.0 / math.factorial(ell + 1)
            for comp in _compositions(d + 2 * ell, ell + 1, 3, r):
                ads, seed_deg = comp[:-1], comp[-1]
                if all(q in chi_parts for q in ads):
                    seedP = P.parts.get(seed_deg)
                    if seedP is not None:
                        term = chains.chain(ads, ("P", seed_deg), seedP)
                        if term is not None:
                            K_d = K_d + term.scaled(invl)
                    seedZ = zchi_parts.get(seed_deg)
                    if seedZ is not None:
                        term = chains.chain(ads, ("Z", seed_deg), seedZ)
                        if term is not None:
                            H_d = H_d + term.scaled(invl1)
        K_d = K_d.prune(prune_tol)
        H_d = H_d.prune(prune_tol)
        P_d = P.parts.get(d)
        W = K_d + H_d if P_d is None else P_d + K_d + H_d

        chi_terms = {}
        q_terms = {}
        n_res = 0
        for key, T in W.terms.items():
            resonant, rep = resonant_key(key)
            if resonant:
                q_terms[key] = T
                n_res += 1
            else:
                delta = divisor_tensor(spectrum, key.clusters, key.signs)
                if np.any(delta == 0.0):
                    raise SingularDivisor(
                        f"zero divisor inside certified non-resonant key {key}")
                chi_terms[key] = T / (1j * delta)
        chi_d = HomogeneousPolynomial(d, nu, n, spectrum, chi_terms)
        q_d = HomogeneousPolynomial(d, nu, n, spectrum, q_terms)
        chi_parts[d] = chi_d
        q_parts[d] = q_d
        zchi_parts[d] = bracket_with_Z2(chi_d).scaled(-1.0)

        # cohomological residual {Z2, chi} + Q - W, against the W scale
        res_poly = bracket_with_Z2(chi_d) + q_d + W.scaled(-1.0)
        scale = max((np.max(np.abs(T)) for T in W.terms.values()), default=0.0)
        resid = max((np.max(np.abs(T)) for T in res_poly.terms.values()), default=0.0)
        diagnostics["degrees"][d] = {
            "chi_norm": chi_d.norm(),
            "Q_norm": q_d.norm(),
            "K_norm": K_d.norm(),
            "H_norm": H_d.norm(),
            "P_norm": P_d.norm() if P_d is not None else 0.0,
            "residual": float(resid),
            "scale": float(scale),
            "resonant_keys": n_res,
            "nonresonant_keys": len(chi_terms),
            "support_disjoint": not (set(chi_terms) & set(q_terms)),
        }

    chi = InhomogeneousPolynomial([p for p in chi_parts.values()], gamma=gamma)
    Q = InhomogeneousPolynomial([p for p in q_parts.values()], gamma=gamma)
    return NormalFormResult(chi, Q, int(r), float(gamma), keep_schedule, diagnostics)


def z2_energy(spectrum, u, dtype=None):
    """Z_2(u) = 1/2 sum omega_j |u_j|^2."""
    om = spectrum.omegas if dtype is None else spectrum.omegas.astype(dtype)
    return 0.5 * float(np.sum(om * (u.real.astype(om.dtype) ** 2 + u.imag.astype(om.dtype) ** 2)))


def transform_check(P, result, profile, amplitudes, tol=1e-13,
                    extended=True, fd_directions=0, fd_h=1e-6, rng=None):
    """Sample the conjugation remainder (Z2+P)(Phi_chi^{-1}(u)) - (Z2+Q)(u).

    ``profile`` is a StateVector direction; each amplitude scales it so
    the H^{1+nu} norm equals the amplitude.  The Z2 difference is formed
    through the bilinear identity |v|^2 - |u|^2 = Re[(v-u) conj(v+u)],
    and the chi flow runs in extended precision by default, so remainder
    samples far below the energy scale stay resolvable.

    Returns a dict with per-amplitude residuals and the fitted log-log
    slope (expected about r+1).
    """
    from .flow import chi_flow, flow_safety
    from .spectrum import StateVector, sobolev_norm

    spec = profile.spectrum
    nu = max(p.nu for p in result.chi.parts.values()) if result.chi.parts else 0.0
    base = sobolev_norm(profile, 1.0 + nu)
    dtype = np.complex256 if extended else np.complex128
    om = spec.omegas.astype(np.longdouble if extended else float)
    safety = flow_safety(result.chi, result.gamma)

    rows = []
    for eps in amplitudes:
        u = (eps / base) * profile.modes.astype(dtype)
        uvec = StateVector(u, spec)
        v = chi_flow(result.chi, uvec, -1.0, tol=tol, dtype=dtype,
                     radius=safety.radius).modes
        diff = v - u
        z2diff = 0.5 * np.sum(om * np.real(diff * np.conj(v + u)))
        p_v = sum(part.value_complex(v).real for part in P.parts.values())
        q_u = sum(part.value_complex(u).real for part in result.resonant.parts.values())
        res = float(z2diff + p_v - q_u)
        rows.append({"eps": float(eps), "residual": abs(res),
                     "energy_scale": abs(z2_energy(spec, u))})

    xs = np.log([row["eps"] for row in rows])
    ys = np.log([max(row["residual"], 1e-300) for row in rows])
    slope = float(np.polyfit(xs, ys, 1)[0]) if len(rows) >= 2 else float("nan")

    fd_report = []
    if fd_directions:
        rng = np.random.default_rng(rng)
        eps0 = amplitudes[0]

        def residual_at(modes):
            uu = modes.astype(dtype)
            vv = chi_flow(result.chi, StateVector(uu, spec), -1.0,
                          tol=tol, dtype=dtype, radius=safety.radius).modes
            dd = vv - uu
            z2d = 0.5 * np.sum(om * np.real(dd * np.conj(vv + uu)))
            return float(z2d
                         + sum(p.value_complex(vv).real for p in P.parts.values())
                         - sum(p.value_complex(uu).real for p in result.resonant.parts.values()))

        u0 = (eps0 / base) * profile.modes
        for _ in range(fd_directions):
            w = rng.standard_normal(spec.n_modes) + 1j * rng.standard_normal(spec.n_modes)
            w /= np.linalg.norm(w)
            d = (residual_at(u0 + fd_h * w) - residual_at(u0 - fd_h * w)) / (2 * fd_h)
            fd_report.append(abs(d))

    return {"rows": rows, "slope": slope, "fd_gradient_samples": fd_report,
            "safety_radius": safety.radius}
