"""Concrete frequency families and brute-force inequality verifiers.

Frequency frontends return a FrequencySpectrum built through the
pigeonhole cluster scan; nonlinearity frontends expand int F(x, Psi) with
Psi the mass-weighted real part of the state, using exact mode-product
integrals (trigonometric orthogonality on the circle, scaled
Gauss-Hermite quadrature for the quantum oscillator, exact for the
polynomial integrands that occur).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import StabilityViolation, UnsupportedBasis
from .polyalg import HomogeneousPolynomial, InhomogeneousPolynomial, MonomialKey, canonicalize
from .spectrum import assign_clusters, build_clusters

__all__ = [
    "ModelConfig",
    "CircleBasis",
    "HermiteBasis",
    "kg_frequencies",
    "kg_circle_model",
    "nls_frequencies",
    "oscillator_eigenvalues",
    "oscillator_frequencies",
    "taylor_parts",
    "cubic_kg_nonlinearity",
    "verify_lemma_A6",
    "verify_gamma_estimates",
    "verify_bracket_weight_inequalities",
]


@dataclass
class ModelConfig:
    """Configuration of a concrete frequency/nonlinearity frontend."""

    family: str                       # kg_circle | kg_generic_spectrum | nls_plane_wave | quantum_oscillator
    mass: float | None = None
    p0: float | None = None
    fprime: float | None = None
    sqrt_rho: tuple = ()
    k_max: int = 8
    nonlinearity: dict = field(default_factory=dict)   # degree -> coefficient of int Psi^q
    weyl_constant: int = 3

    def __post_init__(self):
        if self.family in ("kg_circle", "kg_generic_spectrum", "quantum_oscillator"):
            if self.mass is None or self.mass <= 0:
                raise ValueError(f"{self.family} requires a positive mass")
        if self.family == "nls_plane_wave":
            if self.p0 is None or self.fprime is None:
                raise ValueError("nls_plane_wave requires p0 and fprime")
        if self.family == "quantum_oscillator" and any(r <= 0 for r in self.sqrt_rho):
            raise ValueError("oscillator sqrt_rho entries must be positive")


# -- mode bases -------------------------------------------------------------

class CircleBasis:
    """Real Fourier basis on the circle of length 2*pi.

    Mode 0 is the constant; wavenumber n >= 1 contributes cos(nx)/sqrt(pi)
    and sin(nx)/sqrt(pi).
    """

    def __init__(self, max_wavenumber):
        self.max_wavenumber = int(max_wavenumber)
        self.modes = [("const", 0)]
        for n in range(1, self.max_wavenumber + 1):
            self.modes.append(("cos", n))
            self.modes.append(("sin", n))

    @property
    def lambdas(self):
        return np.array([float(n) for _, n in self.modes])

    def _branches(self, j):
        kind, n = self.modes[j]
        if kind == "const":
            return (((0, 1.0 / math.sqrt(2 * math.pi) + 0j)),)
        amp = 1.0 / (2.0 * math.sqrt(math.pi))
        if kind == "cos":
            return ((n, amp + 0j), (-n, amp + 0j))
        return ((n, -1j * amp), (-n, 1j * amp))

    def product_integral(self, mode_indices):
        """Exact integral of a product of basis functions over the circle."""
        total = {0: 2 * math.pi + 0j}
        for j in mode_indices:
            nxt = {}
            for wave, amp in total.items():
                for m, a in self._branches(j):
                    key = wave + m
                    nxt[key] = nxt.get(key, 0j) + amp * a
            total = nxt
        val = total.get(0, 0j)
        return float(val.real) if abs(val.imag) < 1e-14 * max(1.0, abs(val)) else complex(val)


class HermiteBasis:
    """1D quantum oscillator eigenfunctions h_n for -d^2/dx^2 + rho*x^2."""

    def __init__(self, n_levels, sqrt_rho=1.0):
        self.n_levels = int(n_levels)
        self.sqrt_rho = float(sqrt_rho)
        self.modes = list(range(self.n_levels))

    @property
    def lambdas(self):
        return np.sqrt(self.sqrt_rho * (2 * np.arange(self.n_levels) + 1.0))

    @lru_cache(maxsize=None)
    def _product_integral_unit(self, ns):
        """Integral of prod h_{n_l} for the unit oscillator, by scaled
        Gauss-Hermite quadrature (exact: the integrand is a polynomial
        times exp(-q x^2 / 2))."""
        q = len(ns)
        deg = sum(ns)
        npts = deg // 2 + 2
        y, w = np.polynomial.hermite.hermgauss(npts)
        x = y * math.sqrt(2.0 / q)
        vals = np.ones_like(x)
        Hm = {}
        maxn = max(ns)
        h = [np.full_like(x, math.pi ** -0.25)]
        if maxn >= 1:
            h.append(x * math.sqrt(2.0) * h[0])
        for n in range(2, maxn + 1):
            h.append(x * math.sqrt(2.0 / n) * h[n - 1] - math.sqrt((n - 1) / n) * h[n - 2])
        for n in ns:
            vals = vals * h[n]
        # h_n carry exp(-x^2/2) each; quadrature weight supplies exp(-y^2)
        vals = vals * np.exp(q * x**2 / 2.0 - y**2)
        return float(math.sqrt(2.0 / q) * np.sum(w * vals * np.exp(0 * y)))

    def product_integral(self, mode_indices):
        ns = tuple(sorted(int(n) for n in mode_indices))
        if sum(ns) % 2 == 1:
            return 0.0
        base = self._product_integral_unit(ns)
        # h_n^rho(x) = rho^{1/8} h_n(rho^{1/4} x)
        q = len(ns)
        return self.sqrt_rho ** ((q - 2) / 8.0) * base


# -- frequency frontends -----------------------------------------------------

def kg_frequencies(lambdas, m, weyl_constant=3, dimension=1, k_max=None):
    """Klein-Gordon frequencies omega_j = sqrt(lambda_j^2 + m), alpha=Upsilon=1, beta=d."""
    if m <= 0:
        raise ValueError("mass must be positive")
    lam = np.asarray(lambdas, dtype=float)
    deco = build_clusters(lam, weyl_constant, dimension, k_max=k_max)
    om = np.sqrt(lam**2 + m)
    return assign_clusters(deco, lam, om, alpha=1.0, upsilon=1.0,
                           beta=float(dimension), mass=m)


def kg_circle_model(max_wavenumber, m, weyl_constant=3, k_max=None):
    """Circle Klein-Gordon truncation: returns (spectrum, basis)."""
    basis = CircleBasis(max_wavenumber)
    spec = kg_frequencies(basis.lambdas, m, weyl_constant=weyl_constant,
                          dimension=1, k_max=k_max)
    return spec, basis


def nls_frequencies(lambdas, p0, fprime, dimension=2, weyl_constant=3, k_max=None):
    """Plane-wave NLS frequencies omega_j = sqrt(lam_{j+1}^4 + 2 p0 f'(p0) lam_{j+1}^2).

    The input eigenvalue list includes the constant mode lambda_1, which
    is dropped by the gauge reduction; mode j then rides on lambda_{j+1}.
    Clusters use alpha=2, Upsilon=1, beta=d/2.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.size < 2:
        raise ValueError("need at least two eigenvalues (the first is dropped)")
    shifted = lam[1:]
    c = 2.0 * p0 * fprime
    rad = shifted**4 + c * shifted**2
    if np.any(rad <= 0):
        raise StabilityViolation(
            f"2 p0 f'(p0) = {c} makes a squared frequency non-positive "
            f"(needs > -lambda_2^2 = {-shifted[0] ** 2})")
    om = np.sqrt(rad)
    deco = build_clusters(shifted, weyl_constant, dimension, k_max=k_max)
    return assign_clusters(deco, shifted, om, alpha=2.0, upsilon=1.0,
                           beta=dimension / 2.0)


def oscillator_eigenvalues(sqrt_rho, lambda_max):
    """Sorted lambda with lambda^2 in sum_i sqrt(rho_i)(2 N + 1), lambda <= lambda_max."""
    sqrt_rho = tuple(float(r) for r in sqrt_rho)
    if any(r <= 0 for r in sqrt_rho):
        raise ValueError("sqrt_rho entries must be positive")
    cut = float(lambda_max) ** 2
    levels = []

    def rec(i, acc, ns):
        if acc > cut:
            return
        if i == len(sqrt_rho):
            levels.append((math.sqrt(acc), tuple(ns)))
            return
        n = 0
        while True:
            val = acc + sqrt_rho[i] * (2 * n + 1)
            if val > cut and n > 0:
                break
            if val > cut and n == 0:
                return
            rec(i + 1, val, ns + [n])
            n += 1

    rec(0, 0.0, [])
    levels.sort()
    lam = np.array([x for x, _ in levels])
    labels = [t for _, t in levels]
    return lam, labels


def oscillator_frequencies(sqrt_rho, m, k_max, weyl_constant=None):
    """Quantum oscillator frequencies omega = sqrt(lambda^2 + m), beta = 2d."""
    if m <= 0:
        raise ValueError("mass must be positive")
    d = len(sqrt_rho)
    lam, labels = oscillator_eigenvalues(sqrt_rho, k_max + 0.49)
    if weyl_constant is None:
        # smallest integer C certifying the counting bound on the data
        weyl_constant = 1
        for k in range(1, int(math.floor(lam[-1])) + 2):
            cnt = int(np.searchsorted(lam, k, side="right"))
            weyl_constant = max(weyl_constant, math.ceil(cnt / k ** (2 * d)))
    deco = build_clusters(lam, weyl_constant, 2 * d)
    om = np.sqrt(lam**2 + m)
    spec = assign_clusters(deco, lam, om, alpha=1.0, upsilon=1.0,
                           beta=2.0 * d, mass=m)
    spec.oscillator_labels = labels
    return spec


# -- nonlinearity frontends ---------------------------------------------------

def taylor_parts(spectrum, basis, coefficients, nu=0.0, n=6.0, tol=1e-15):
    """Degree-q parts of G(u) = sum_q c_q int Psi^q with Psi = Lambda^{-1/2}(u+conj u)/2.

    ``coefficients`` maps degree q >= 3 to c_q.  The series coefficient of
    an ordered mode tuple j and any sign tuple is
    c_q * I(j) * prod omega_{j_l}^{-1/2} / 2^q, with I the exact
    mode-product integral of the basis.
    """
    if basis is None:
        raise UnsupportedBasis("this model supplies no mode-product integrals")
    om = spectrum.omegas
    parts = []
    for q, c in sorted(coefficients.items()):
        if q < 3:
            raise ValueError("Taylor parts start at degree 3")
        if c == 0:
            continue
        by_cluster = {}
        for combo in itertools.combinations_with_replacement(range(spectrum.n_modes), q):
            integral = basis.product_integral(combo)
            if abs(integral) <= tol:
                continue
            w = c * integral * np.prod(om[list(combo)] ** -0.5) / 2.0**q
            ktuple = tuple(sorted((spectrum.mode_cluster[j] for j in combo), reverse=True))
            by_cluster.setdefault(ktuple, []).append((combo, w))
        terms = {}
        for ktuple, entries in by_cluster.items():
            members = [spectrum.members(k) for k in ktuple]
            lookup = [{j: i for i, j in enumerate(mem)} for mem in members]
            shape = tuple(len(mem) for mem in members)
            T = np.zeros(shape, complex)
            for combo, w in entries:
                for arrangement in set(itertools.permutations(combo)):
                    idx = []
                    for ax, j in enumerate(arrangement):
                        pos = lookup[ax].get(j)
                        if pos is None:
                            idx = None
                            break
                        idx.append(pos)
                    if idx is not None:
                        T[tuple(idx)] = w
            for signs in itertools.product((-1, 1), repeat=q):
                key, _, _ = canonicalize(ktuple, signs)
                if key not in terms:
                    terms[key] = T.copy()
        if terms:
            parts.append(HomogeneousPolynomial(q, nu, n, spectrum, terms))
    return InhomogeneousPolynomial(parts) if parts else InhomogeneousPolynomial([])


def cubic_kg_nonlinearity(spectrum, basis, cubic=1.0, quartic=0.0, nu=0.0, n=6.0):
    """Degree-3 (and optional degree-4) parts of the Klein-Gordon nonlinearity.

    ``cubic`` and ``quartic`` are the coefficients of int Psi^3 and
    int Psi^4 in G.
    """
    coeffs = {}
    if cubic:
        coeffs[3] = cubic
    if quartic:
        coeffs[4] = quartic
    return taylor_parts(spectrum, basis, coeffs, nu=nu, n=n)


# -- brute-force inequality verifiers -----------------------------------------

def _sorted_tuples(q, k_bound):
    """All non-increasing q-tuples with entries in 1..k_bound, as an array."""
    rows = list(itertools.combinations_with_replacement(range(1, k_bound + 1), q))
    return np.array(rows, dtype=float)[:, ::-1]


def _gamma_rows(A):
    """Gamma_k for each row of a tuple array."""
    q = A.shape[1]
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=q)))
    sums = A @ signs.T
    return np.sum((1.0 + sums**2) ** -1.5, axis=1)


def _min_abs_sum_rows(A):
    q = A.shape[1]
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=q)))
    sums = np.abs(A @ signs.T)
    return sums.min(axis=1)


def verify_lemma_A6(q, n, nu, k_bound):
    """Max of LHS/RHS over sorted tuples <= k_bound.

    LHS = k3^(nu+n) * prod_{l>=4} k_l^nu / (k1 - k2 + k3)^n,
    RHS = Gamma_k * (k2/k1)^(n-3) * prod_{l>=3} k_l^(nu+3).
    Returns (max_ratio, worst_tuple).
    """
    if q < 3 or n < 4:
        raise ValueError("requires q >= 3 and n >= 4")
    A = _sorted_tuples(q, k_bound)
    gam = _gamma_rows(A)
    lhs = A[:, 2] ** (nu + n) / (A[:, 0] - A[:, 1] + A[:, 2]) ** n
    if q > 3:
        lhs = lhs * np.prod(A[:, 3:] ** nu, axis=1)
    rhs = gam * (A[:, 1] / A[:, 0]) ** (n - 3) * np.prod(A[:, 2:] ** (nu + 3.0), axis=1)
    ratio = lhs / rhs
    worst = int(np.argmax(ratio))
    return float(ratio[worst]), tuple(int(x) for x in A[worst])


def lemma_A6_diagonal(t, q, n, nu):
    """Closed form of LHS/RHS on the diagonal k1 = ... = kq = t."""
    gam = float(_gamma_rows(np.full((1, q), float(t)))[0])
    return t ** (-3.0 * (q - 2)) / gam


def verify_gamma_estimates(q, k_bound, n=4, nu=1.0):
    """Brute-force checks of the Gamma-weight estimates.

    (i) the equivalence Gamma_k ~ (1 + min_sign |sum sign*k|^3)^-1,
    (ii) the A6 reduction of the distance-quotient bound to the
         Gamma-weighted bound,
    (iii) the duplicated-pair domination used for L2-modulated
          nonlinearities, whose constant is exactly 1.

    Returns a dict report with worst ratios and witnesses.
    """
    A = _sorted_tuples(q, k_bound)
    gam = _gamma_rows(A)
    mins = _min_abs_sum_rows(A)
    equiv = gam * (1.0 + mins**3)
    report = {
        "gamma_equivalence": {
            "low": float(equiv.min()),
            "high": float(equiv.max()),
            "worst_low_tuple": tuple(int(x) for x in A[int(np.argmin(equiv))]),
            "worst_high_tuple": tuple(int(x) for x in A[int(np.argmax(equiv))]),
        },
    }
    ratio, worst = verify_lemma_A6(q, n, nu, k_bound)
    report["a6_reduction"] = {"max_ratio": float(ratio), "worst_tuple": worst}

    # duplicated-pair domination: h extended by (c, c)
    H = _sorted_tuples(q, k_bound)
    lhs_h = (H[:, 1] / H[:, 0]) ** n * np.prod(H[:, 2:] ** nu, axis=1)
    worst_ratio = 0.0
    worst_case = None
    case1_worst = 0.0
    for c in range(1, k_bound + 1):
        K = np.concatenate([H, np.full((H.shape[0], 2), float(c))], axis=1)
        K_sorted = -np.sort(-K, axis=1)
        rhs = (K_sorted[:, 1] / K_sorted[:, 0]) ** n * np.prod(K_sorted[:, 2:] ** nu, axis=1)
        r = lhs_h / rhs
        i = int(np.argmax(r))
        if r[i] > worst_ratio:
            worst_ratio = float(r[i])
            worst_case = (tuple(int(x) for x in H[i]), c)
        case1 = c >= H[:, 0]
        if np.any(case1):
            case1_worst = max(case1_worst, float(r[case1].max()))
    report["duplicated_pair"] = {
        "max_ratio": worst_ratio,
        "worst_case": worst_case,
        "case1_max_ratio": case1_worst,
    }
    return report


def _signed_sums(A):
    q = A.shape[1]
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=q)))
    return A @ signs.T  # (N, 2^q)


def verify_bracket_weight_inequalities(q, qp, k_bound, ell_max=None, chunk=256):
    """Brute-force the two internal bounds of the bracket norm estimate.

    Step 2: sum_l Gamma_{(k,l)} Gamma_{(k',l)} <= C * Gamma_{(k,k')} with
    an empirically frozen C; Step 3: the A-factor bounds
    a_{(k,l)} a_{(k',l)} <= a_{(k,k')} and likewise for b, with constant
    exactly 1.  Tuples k, k' run over sorted tuples of lengths q-1 and
    qp-1 with entries <= k_bound.

    Returns a dict with the worst ratios and witnesses.
    """
    if q < 3 or qp < 3:
        raise ValueError("degrees must be >= 3")
    if ell_max is None:
        ell_max = 2 * k_bound
    A = _sorted_tuples(q - 1, k_bound)
    B = _sorted_tuples(qp - 1, k_bound)
    SA, SB = _signed_sums(A), _signed_sums(B)
    ells = np.arange(1, ell_max + 1, dtype=float)

    def gamma_with_ell(S):
        up = (1.0 + (S[:, :, None] + ells[None, None, :]) ** 2) ** -1.5
        dn = (1.0 + (S[:, :, None] - ells[None, None, :]) ** 2) ** -1.5
        return (up + dn).sum(axis=1)  # (N, L)

    GA, GB = gamma_with_ell(SA), gamma_with_ell(SB)
    numer = GA @ GB.T

    worst = 0.0
    witness = None
    for lo in range(0, A.shape[0], chunk):
        hi = min(lo + chunk, A.shape[0])
        gp = np.zeros((hi - lo, B.shape[0]))
        for i in range(SA.shape[1]):
            col = SA[lo:hi, i][:, None]
            for j in range(SB.shape[1]):
                gp += (1.0 + (col + SB[:, j][None, :]) ** 2) ** -1.5
        r = numer[lo:hi] / gp
        k = int(np.argmax(r))
        a, b = divmod(k, B.shape[0])
        if r[a, b] > worst:
            worst = float(r[a, b])
            witness = (tuple(int(x) for x in A[lo + a]), tuple(int(x) for x in B[b]))

    # Step 3 factors a_k = prod(k) / k1*^2 and b_k = k2*/k1*
    prodA, topA, secA = np.prod(A, axis=1), A[:, 0], A[:, 1]
    prodB, topB, secB = np.prod(B, axis=1), B[:, 0], B[:, 1]
    a_ell_A = prodA[:, None] * ells[None, :] / np.maximum(topA[:, None], ells[None, :]) ** 2
    a_ell_B = prodB[:, None] * ells[None, :] / np.maximum(topB[:, None], ells[None, :]) ** 2

    def b_with_ell(top, sec):
        # second largest of (tuple, ell): sec if ell < sec else min(ell, top)
        second = np.maximum(np.minimum(top[:, None], ells[None, :]), sec[:, None])
        return second / np.maximum(top[:, None], ells[None, :])

    b_ell_A = b_with_ell(topA, secA)
    b_ell_B = b_with_ell(topB, secB)

    worst_a = 0.0
    worst_b = 0.0
    for lo in range(0, A.shape[0], chunk):
        hi = min(lo + chunk, A.shape[0])
        top_pair = np.maximum(topA[lo:hi, None], topB[None, :])
        a_pair = prodA[lo:hi, None] * prodB[None, :] / top_pair**2
        lhs_a = np.max(a_ell_A[lo:hi, None, :] * a_ell_B[None, :, :], axis=2)
        worst_a = max(worst_a, float((lhs_a / a_pair).max()))
        # second largest of the merged tuple
        low_top = np.minimum(topA[lo:hi, None], topB[None, :])
        sec_from_A = np.where(topA[lo:hi, None] >= topB[None, :], secA[lo:hi, None], 0.0)
        sec_from_B = np.where(topB[None, :] >= topA[lo:hi, None], secB[None, :], 0.0)
        second_pair = np.maximum(low_top, np.maximum(sec_from_A, sec_from_B))
        b_pair = second_pair / top_pair
        lhs_b = np.max(b_ell_A[lo:hi, None, :] * b_ell_B[None, :, :], axis=2)
        worst_b = max(worst_b, float((lhs_b / b_pair).max()))

    return {
        "step2_max_ratio": worst,
        "step2_witness": witness,
        "step3_a_max_ratio": worst_a,
        "step3_b_max_ratio": worst_b,
        "ell_max": ell_max,
    }
