"""Small divisors, certified gamma-resonance, and the type trichotomy.

The small-divisor operator attached to a monomial key acts diagonally on
eigenmode tuples, multiplying by sum_l sigma_l omega_{j_l}.  Its inverse
is bounded on the injective norm by cs_factor / min_divisor, where
cs_factor is the Cauchy-Schwarz volume prod_l (#C_{k_l})^{1/2}; the ratio
min_divisor / cs_factor is therefore a sufficient (certified) lower bound
for declaring a key non resonant.  Resonance is the conservative
complement: borderline keys stay in the resonant normal form.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ProductTooLarge
from .polyalg import MonomialKey, canonicalize, divisor_tensor

__all__ = [
    "DivisorReport",
    "ResonanceClass",
    "small_divisor",
    "divisor_report",
    "is_gamma_resonant",
    "classify",
    "indicator_sum_vanishes",
    "enumerate_keys",
    "mass_scan",
    "NON_RESONANT",
    "TYPE_I",
    "TYPE_II",
    "TYPE_III",
    "ANOMALOUS",
]

NON_RESONANT = "non_resonant"
TYPE_I = "type_I"
TYPE_II = "type_II"
TYPE_III = "type_III"
ANOMALOUS = "anomalous"

DEFAULT_BUDGET = 10**7


@dataclass
class DivisorReport:
    key: MonomialKey
    min_divisor: float
    cs_factor: float
    gamma_certificate: float
    argmin_modes: tuple


@dataclass
class ResonanceClass:
    kind: str
    threshold: int
    gamma: float
    report: DivisorReport


def small_divisor(modes, signs, spectrum):
    """Signed frequency sum sum_l sigma_l omega_{j_l} (0-based mode indices)."""
    if len(modes) != len(signs):
        raise ValueError("modes and signs must have equal length")
    om = spectrum.omegas
    return float(sum(s * om[j] for j, s in zip(modes, signs)))


def divisor_report(key, spectrum, budget=DEFAULT_BUDGET):
    """Exhaustive minimum of |sum sigma omega| over the cluster product set."""
    if not isinstance(key, MonomialKey):
        key = MonomialKey(tuple(key[0]), tuple(key[1]))
    dims = [spectrum.dim(k) for k in key.clusters]
    size = int(np.prod(dims))
    if size > budget:
        raise ProductTooLarge(
            f"cluster product set of size {size} exceeds the budget {budget}")
    if size == 0:
        return DivisorReport(key, np.inf, 1.0, np.inf, ())
    delta = divisor_tensor(spectrum, key.clusters, key.signs)
    flat = np.abs(delta).reshape(-1)
    pos = int(np.argmin(flat))
    idx = np.unravel_index(pos, delta.shape)
    modes = tuple(int(spectrum.members(k)[i]) for k, i in zip(key.clusters, idx))
    cs = float(np.sqrt(size))
    mind = float(flat[pos])
    return DivisorReport(key, mind, cs, mind / cs, modes)


def is_gamma_resonant(key, gamma, spectrum, budget=DEFAULT_BUDGET):
    """Certified test: non-resonant when min_divisor / cs_factor >= gamma.

    The certificate is sufficient for invertibility of the small-divisor
    operator with norm <= 1/gamma; failing it conservatively marks the key
    resonant.  Returns (resonant, DivisorReport).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    rep = divisor_report(key, spectrum, budget=budget)
    return rep.gamma_certificate < gamma, rep


def indicator_sum_vanishes(key):
    """True when sum_l sigma_l 1_{k_l} = 0 as a cluster-indexed vector."""
    acc = {}
    for k, s in zip(key.clusters, key.signs):
        acc[k] = acc.get(k, 0) + s
    return all(v == 0 for v in acc.values())


def _has_opposite_top_pair(key):
    """Some sorted arrangement has sigma_1* = -sigma_2*."""
    ks = np.array(key.clusters)
    ss = np.array(key.signs)
    kmax = ks.max()
    for i in np.nonzero(ks == kmax)[0]:
        rest = np.delete(ks, i)
        second = rest.max()
        for j in range(len(ks)):
            if j != i and ks[j] == second and ss[j] == -ss[i]:
                return True
    return False


def classify(key, N, gamma, spectrum, budget=DEFAULT_BUDGET):
    """Trichotomy of gamma-resonant keys at threshold N.

    Certified non-resonant keys come first; resonant keys are tested as
    Type I (k_3* > N), Type II (k_1* <= N with vanishing signed cluster
    indicator), then Type III (k_2* > N >= k_3* with an opposite top
    pair).  Anything else is reported as anomalous, which at valid
    parameters signals N below the trichotomy threshold.
    """
    if not isinstance(key, MonomialKey):
        key = MonomialKey(tuple(key[0]), tuple(key[1]))
    resonant, rep = is_gamma_resonant(key, gamma, spectrum, budget=budget)
    if not resonant:
        return ResonanceClass(NON_RESONANT, N, gamma, rep)
    ks = sorted(key.clusters, reverse=True)
    if ks[2] > N:
        return ResonanceClass(TYPE_I, N, gamma, rep)
    if ks[0] <= N and indicator_sum_vanishes(key):
        return ResonanceClass(TYPE_II, N, gamma, rep)
    if ks[1] > N >= ks[2] and _has_opposite_top_pair(key):
        return ResonanceClass(TYPE_III, N, gamma, rep)
    return ResonanceClass(ANOMALOUS, N, gamma, rep)


def enumerate_keys(q, k_max, signs="canonical"):
    """All canonical keys with sorted clusters <= k_max.

    Sign tuples are listed up to global flip (the canonical half), which
    suffices for resonance and classification scans since both are
    invariant under permutations and the global sign flip.
    """
    out = []
    for ks in itertools.combinations_with_replacement(range(1, k_max + 1), q):
        ks = tuple(sorted(ks, reverse=True))
        seen = set()
        for ss in itertools.product((-1, 1), repeat=q):
            key, _, _ = canonicalize(ks, ss)
            if key not in seen:
                seen.add(key)
                out.append(key)
    return out


def mass_scan(model, grid, q, k_max, gamma, budget=DEFAULT_BUDGET):
    """Scan a frequency family over a mass grid.

    ``model`` maps a mass value to a FrequencySpectrum.  For each mass the
    scan enumerates keys with k_1 <= k_max whose signed cluster indicator
    does not vanish and reports the minimum certificate, the count of
    gamma-resonant keys, and the worst key.

    Returns a list of row dicts; per-key rows for resonant keys are under
    the ``"resonant_keys"`` entry.
    """
    if len(grid) == 0:
        raise ValueError("mass grid must be non-empty")
    rows = []
    for m in grid:
        spec = model(m)
        kk = min(k_max, spec.num_clusters)
        worst = np.inf
        worst_row = None
        resonant = []
        for key in enumerate_keys(q, kk):
            if indicator_sum_vanishes(key):
                continue
            rep = divisor_report(key, spec, budget=budget)
            if rep.gamma_certificate < worst:
                worst = rep.gamma_certificate
                worst_row = rep
            if rep.gamma_certificate < gamma:
                resonant.append(rep)
        rows.append({
            "mass": float(m),
            "worst_certificate": float(worst),
            "worst_key": worst_row.key if worst_row else None,
            "worst_min_divisor": worst_row.min_divisor if worst_row else np.inf,
            "resonant_count": len(resonant),
            "resonant_keys": resonant,
        })
    return rows
