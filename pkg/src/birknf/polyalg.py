"""Real homogeneous polynomials indexed by cluster tuples and sign tuples.

A degree-q polynomial is stored as a map from canonical monomial keys
(k, sigma) to complex coefficient tensors on E_{k_1} x ... x E_{k_q}.
Canonical form sorts the (k_i, sigma_i) pairs in descending order and,
between a key and its global sign flip, keeps the one with the
lexicographically smaller sign tuple; the flipped coefficient is the
entrywise conjugate and is never stored (reality condition).

Tensors are kept invariant under permutations of axes carrying identical
(k, sigma) pairs, so a stored key represents its whole permutation orbit.
Evaluation therefore sums ``mult * value`` over stored keys, where
``mult`` is the orbit size, doubling the real part for keys whose sign
flip lives in a different orbit.
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegreeUnderflow
from .spectrum import StateVector

__all__ = [
    "MonomialKey",
    "CoefficientTensor",
    "HomogeneousPolynomial",
    "InhomogeneousPolynomial",
    "PolynomialBuilder",
    "gamma_weight",
    "key_weight",
    "poly_norm",
    "evaluate",
    "gradient",
    "poisson_bracket",
    "bracket_with_Z2",
    "divisor_tensor",
    "polarize",
    "poly_to_text",
    "poly_from_text",
]


# -- monomial keys ---------------------------------------------------------

@dataclass(frozen=True)
class MonomialKey:
    clusters: tuple
    signs: tuple

    def __post_init__(self):
        if len(self.clusters) != len(self.signs):
            raise ValueError("clusters and signs must have equal length")

    @property
    def degree(self):
        return len(self.clusters)

    def sorted_clusters(self):
        return self.clusters  # canonical keys are stored descending


@lru_cache(maxsize=1_000_000)
def canonicalize(clusters, signs):
    """Canonical arrangement of a raw (k, sigma) tuple.

    Returns ``(key, perm, conj)`` where ``perm`` maps canonical slot i to
    raw slot perm[i] (use ``np.transpose(T, perm)``) and ``conj`` says the
    canonical representative is the global sign flip, so the transported
    tensor must additionally be conjugated.
    """
    q = len(clusters)
    perm1 = tuple(sorted(range(q), key=lambda i: (clusters[i], signs[i]), reverse=True))
    s1 = tuple(signs[i] for i in perm1)
    perm2 = tuple(sorted(range(q), key=lambda i: (clusters[i], -signs[i]), reverse=True))
    s2 = tuple(-signs[i] for i in perm2)
    ks = tuple(clusters[i] for i in perm1)
    if s1 <= s2:
        return MonomialKey(ks, s1), perm1, False
    return MonomialKey(ks, s2), perm2, True


@lru_cache(maxsize=1_000_000)
def _pair_groups(key):
    """Runs of identical (k, sigma) pairs in a canonical key."""
    pairs = list(zip(key.clusters, key.signs))
    groups, start = [], 0
    for i in range(1, len(pairs) + 1):
        if i == len(pairs) or pairs[i] != pairs[start]:
            groups.append((start, i))
            start = i
    return tuple(groups)


@lru_cache(maxsize=1_000_000)
def orbit_size(key):
    """Number of distinct tuple arrangements represented by a canonical key."""
    m = math.factorial(key.degree)
    for a, b in _pair_groups(key):
        m //= math.factorial(b - a)
    return m


def _sorted_arrangement(clusters, signs):
    """Descending (k, sigma) sort without considering the sign flip."""
    q = len(clusters)
    perm = tuple(sorted(range(q), key=lambda i: (clusters[i], signs[i]), reverse=True))
    return tuple(clusters[i] for i in perm), tuple(signs[i] for i in perm), perm


@lru_cache(maxsize=1_000_000)
def is_self_conjugate(key):
    """True when the global sign flip is a permutation of the key itself."""
    _, ss, _ = _sorted_arrangement(key.clusters, tuple(-s for s in key.signs))
    return ss == key.signs


def _conjugation_axes(key):
    """Axis permutation transporting the sign-flipped tuple back onto the key.

    Only meaningful for self-conjugate keys, where the stored tensor must
    satisfy T = conj(transpose(T, axes)).
    """
    ks, ss, perm = _sorted_arrangement(key.clusters, tuple(-s for s in key.signs))
    if ss != key.signs:
        raise ValueError("key is not self-conjugate")
    return perm


@lru_cache(maxsize=1_000_000)
def _block_sym_axes(key):
    """Axis permutations fixing the canonical key (block permutations)."""
    groups = [g for g in _pair_groups(key) if g[1] - g[0] > 1]
    if not groups:
        return ()
    q = key.degree
    out = []
    per_group = [list(itertools.permutations(range(a, b))) for a, b in groups]
    for combo in itertools.product(*per_group):
        axes = list(range(q))
        for (a, b), perm in zip(groups, combo):
            axes[a:b] = perm
        out.append(tuple(axes))
    return tuple(out)


def _block_symmetrize(T, key):
    all_axes = _block_sym_axes(key)
    if not all_axes:
        return T
    acc = np.zeros_like(T)
    for axes in all_axes:
        acc += np.transpose(T, axes)
    return acc / len(all_axes)


def _reality_project(T, key):
    """Enforce T = conj(transpose(T, pi)) on self-conjugate keys.

    pi is the axis bijection carrying the sign-flipped tuple back onto the
    key; ties in canonicalize guarantee its conj flag is False here.
    """
    if not is_self_conjugate(key):
        return T
    perm = _conjugation_axes(key)
    return (T + np.conj(np.transpose(T, perm))) / 2


@dataclass
class CoefficientTensor:
    entries: np.ndarray
    symmetrized: bool = True


# -- weights ---------------------------------------------------------------

@lru_cache(maxsize=200000)
def _gamma_weight_cached(k_sorted):
    q = len(k_sorted)
    arr = np.array(k_sorted, dtype=float)
    total = 0.0
    for signs in itertools.product((-1.0, 1.0), repeat=q):
        s = float(np.dot(signs, arr))
        total += (1.0 + s * s) ** -1.5
    return total


def gamma_weight(clusters):
    """Gamma_k = sum over sign tuples of <s_1 k_1 + ... + s_q k_q>^-3."""
    if len(clusters) < 3:
        raise ValueError("gamma_weight needs a tuple of length >= 3")
    return _gamma_weight_cached(tuple(sorted(clusters)))


def key_weight(key, nu, n):
    """Decay weight Gamma_k (k2*/k1*)^n prod_{l>=3} (k_l*)^nu."""
    ks = sorted(key.clusters, reverse=True)
    w = gamma_weight(key.clusters) * (ks[1] / ks[0]) ** n
    for x in ks[2:]:
        w *= float(x) ** nu
    return w


# -- the polynomial classes -------------------------------------------------

class HomogeneousPolynomial:
    """Degree-q real polynomial over a fixed FrequencySpectrum."""

    def __init__(self, degree, nu, n, spectrum, terms=None, symmetrized=True):
        if degree < 3:
            raise ValueError("homogeneous polynomials have degree >= 3")
        self.degree = int(degree)
        self.nu = float(nu)
        self.n = float(n)
        self.spectrum = spectrum
        self.terms = dict(terms or {})
        self.symmetrized = symmetrized
        self._compiled = None

    # construction helpers ------------------------------------------------

    @classmethod
    def zero(cls, degree, nu, n, spectrum):
        return cls(degree, nu, n, spectrum)

    def copy(self):
        return HomogeneousPolynomial(
            self.degree, self.nu, self.n, self.spectrum,
            {k: t.copy() for k, t in self.terms.items()},
        )

    def key_shape(self, key):
        return tuple(self.spectrum.dim(k) for k in key.clusters)

    def coefficient(self, clusters, signs):
        """Full coefficient tensor of an arbitrary (k, sigma) tuple."""
        key, perm, conj = canonicalize(tuple(clusters), tuple(signs))
        T = self.terms.get(key)
        if T is None:
            return CoefficientTensor(np.zeros(tuple(self.spectrum.dim(k) for k in clusters), complex))
        # invert the transport: stored slot i corresponds to raw slot perm[i]
        inv = np.argsort(perm)
        out = np.transpose(T, inv)
        if conj:
            out = np.conj(out)
        return CoefficientTensor(np.asarray(out))

    def scaled(self, t):
        out = {k: v * t for k, v in self.terms.items()}
        return HomogeneousPolynomial(self.degree, self.nu, self.n, self.spectrum, out)

    def __add__(self, other):
        if other == 0:
            return self
        if other.degree != self.degree or other.spectrum is not self.spectrum:
            raise ValueError("can only add same-degree polynomials over one spectrum")
        out = {k: v.copy() for k, v in self.terms.items()}
        for k, v in other.terms.items():
            out[k] = out[k] + v if k in out else v.copy()
        return HomogeneousPolynomial(self.degree, self.nu, self.n, self.spectrum, out)

    __radd__ = __add__

    def prune(self, rel_tol=1e-14):
        """Drop tensors whose Frobenius norm is below rel_tol * scale."""
        if not self.terms:
            return self
        scale = max(np.linalg.norm(t) for t in self.terms.values())
        kept = {k: t for k, t in self.terms.items()
                if np.linalg.norm(t) > rel_tol * scale}
        return HomogeneousPolynomial(self.degree, self.nu, self.n, self.spectrum, kept)

    def norm(self):
        return poly_norm(self)

    def num_keys(self):
        return len(self.terms)

    # evaluation -----------------------------------------------------------

    def _compile(self):
        """Flatten all tensor entries into index/sign/coefficient arrays."""
        if self._compiled is not None:
            return self._compiled
        spec = self.spectrum
        q = self.degree
        idx_rows, sgn_rows, cval, cgrad, plus_active = [], [], [], [], []
        for key, T in self.terms.items():
            m = orbit_size(key)
            sc = is_self_conjugate(key)
            member = [spec.members(k) for k in key.clusters]
            flat = np.asarray(T).reshape(-1)
            nz = np.nonzero(flat)[0]
            if nz.size == 0:
                continue
            multi = np.unravel_index(nz, T.shape)
            modes = np.stack([member[ax][multi[ax]] for ax in range(q)], axis=1)
            idx_rows.append(modes)
            sgn_rows.append(np.tile(np.array(key.signs, dtype=np.int8), (nz.size, 1)))
            vals = flat[nz]
            cval.append((m if sc else 2 * m) * vals)
            cgrad.append(2 * m * vals)
            plus_active.append(np.full(nz.size, not sc))
        if idx_rows:
            compiled = (
                np.concatenate(idx_rows, axis=0),
                np.concatenate(sgn_rows, axis=0),
                np.concatenate(cval),
                np.concatenate(cgrad),
                np.concatenate(plus_active),
            )
        else:
            compiled = (np.zeros((0, q), int), np.zeros((0, q), np.int8),
                        np.zeros(0, complex), np.zeros(0, complex), np.zeros(0, bool))
        self._compiled = compiled
        return compiled

    def _factor_matrix(self, u):
        idx, sgn, _, _, _ = self._compile()
        G = u[idx]
        np.conjugate(G, where=(sgn < 0), out=G)
        return G

    def value_complex(self, u):
        """Complex-valued evaluation sum (imaginary part is fp noise)."""
        idx, sgn, cval, _, _ = self._compile()
        if idx.shape[0] == 0:
            return complex(0.0)
        u = np.asarray(u)
        G = self._factor_matrix(u.astype(np.result_type(u.dtype, np.complex128)))
        return complex(np.sum(cval.astype(G.dtype) * np.prod(G, axis=1)))

    def __call__(self, u):
        m = u.modes if isinstance(u, StateVector) else np.asarray(u)
        return float(np.real(self.value_complex(m)))

    def gradient_modes(self, u):
        """Gradient array (grad P)_j = 2 d/d(conj u_j) P(u)."""
        idx, sgn, _, cgrad, plus_active = self._compile()
        u = np.asarray(u)
        dtype = np.result_type(u.dtype, np.complex128)
        out = np.zeros(u.shape, dtype)
        if idx.shape[0] == 0:
            return out
        G = self._factor_matrix(u.astype(dtype))
        E, q = G.shape
        left = np.ones((E, q), dtype)
        np.cumprod(G[:, :-1], axis=1, out=left[:, 1:])
        right = np.ones((E, q), dtype)
        right[:, :-1] = np.cumprod(G[:, :0:-1], axis=1)[:, ::-1]
        excl = left * right
        contrib = cgrad.astype(dtype)[:, None] * excl
        minus = sgn < 0
        np.add.at(out, idx[minus], contrib[minus])
        plus = (sgn > 0) & plus_active[:, None]
        np.add.at(out, idx[plus], np.conj(contrib[plus]))
        return out


class InhomogeneousPolynomial:
    """Sum of homogeneous parts of degrees 3..r with a gamma-scaled norm."""

    def __init__(self, parts, gamma=1.0):
        degs = [p.degree for p in parts]
        if len(set(degs)) != len(degs):
            raise ValueError("duplicate degrees")
        self.parts = {p.degree: p for p in parts}
        self.gamma = float(gamma)

    @property
    def degrees(self):
        return sorted(self.parts)

    @property
    def max_degree(self):
        return max(self.parts) if self.parts else 0

    @property
    def spectrum(self):
        return next(iter(self.parts.values())).spectrum

    def part(self, q):
        return self.parts.get(q)

    def __call__(self, u):
        return sum(p(u) for p in self.parts.values())

    def gradient_modes(self, u):
        out = None
        for p in self.parts.values():
            g = p.gradient_modes(u)
            out = g if out is None else out + g
        return out

    def norm(self, gamma=None):
        g = self.gamma if gamma is None else gamma
        return max((g ** (q - 3) * p.norm() for q, p in self.parts.items()), default=0.0)

    def truncated(self, max_degree):
        return InhomogeneousPolynomial(
            [p for q, p in self.parts.items() if q <= max_degree], self.gamma)


def poly_norm(P):
    """Sup over stored keys of the weighted Frobenius tensor norm.

    The Frobenius norm upper-bounds the injective multilinear norm, so the
    result is a sufficient certificate for every estimate stated with the
    injective norm; the two agree when all cluster dimensions are 1.
    """
    if not P.terms:
        return 0.0
    return max(np.linalg.norm(T) / key_weight(k, P.nu, P.n) for k, T in P.terms.items())


def injective_norm_lower(T, iters=60, seed=0):
    """Power-iteration lower bound for the injective norm of an order-3 tensor."""
    T = np.asarray(T, complex)
    if T.ndim != 3:
        raise ValueError("order-3 tensors only")
    rng = np.random.default_rng(seed)
    vs = [rng.standard_normal(d) + 1j * rng.standard_normal(d) for d in T.shape]
    vs = [v / np.linalg.norm(v) for v in vs]
    spec = "ijk,j,k->i", "ijk,i,k->j", "ijk,i,j->k"
    val = 0.0
    for _ in range(iters):
        for ax in range(3):
            args = [vs[i] for i in range(3) if i != ax]
            M = np.einsum(spec[ax], T, *args)
            nrm = np.linalg.norm(M)
            if nrm == 0:
                return 0.0
            vs[ax] = np.conj(M) / nrm
            val = nrm
    return float(val)


def evaluate(P, u):
    """Evaluate a homogeneous or inhomogeneous polynomial at a state."""
    m = u.modes if isinstance(u, StateVector) else np.asarray(u)
    if isinstance(P, InhomogeneousPolynomial):
        return float(sum(p(m) for p in P.parts.values()))
    return P(m)


def gradient(P, u):
    """Gradient as a StateVector (or array if u is an array)."""
    m = u.modes if isinstance(u, StateVector) else np.asarray(u)
    g = P.gradient_modes(m)
    if isinstance(u, StateVector):
        return StateVector(g, u.spectrum)
    return g


# -- builder ---------------------------------------------------------------

class PolynomialBuilder:
    """Accumulates raw terms and produces a canonical polynomial.

    ``mode='coefficient'`` sets the symmetric coefficient of the key's
    whole orbit; ``mode='series'`` adds a single raw series term, which is
    spread over the orbit (divided by the orbit size) on finalize.
    """

    def __init__(self, degree, nu, n, spectrum):
        self.degree = degree
        self.nu = nu
        self.n = n
        self.spectrum = spectrum
        self._acc = {}

    def add(self, clusters, signs, tensor, mode="coefficient"):
        key, perm, conj = canonicalize(tuple(clusters), tuple(signs))
        T = np.transpose(np.asarray(tensor, complex), perm)
        if conj:
            T = np.conj(T)
        if mode == "series":
            # A raw term on the flipped side arrives with conj=True and is
            # the reality twin of a natural-side term, so both sides are
            # averaged: weight 1/(2*orbit) unless the orbit contains its
            # own flips (self-conjugate), where 1/orbit already covers it.
            # Block symmetrization commutes with the sum and runs at build.
            w = orbit_size(key) if is_self_conjugate(key) else 2 * orbit_size(key)
            T = T / w
        elif mode != "coefficient":
            raise ValueError(f"unknown mode {mode!r}")
        acc = self._acc.get(key)
        if acc is None:
            self._acc[key] = T.astype(complex)
        else:
            acc += T
        return self

    def build(self, prune_tol=0.0):
        terms = {}
        for key, T in self._acc.items():
            T = _block_symmetrize(T, key)
            T = _reality_project(T, key)
            if np.any(T):
                terms[key] = T
        P = HomogeneousPolynomial(self.degree, self.nu, self.n, self.spectrum, terms)
        return P.prune(prune_tol) if prune_tol else P


# -- Poisson structure ------------------------------------------------------

def _slot_index(P):
    """Map (cluster, sign) -> list of (key, slot) over the canonical keys."""
    index = {}
    for key in P.terms:
        for slot, (k, s) in enumerate(zip(key.clusters, key.signs)):
            index.setdefault((k, s), []).append((key, slot))
    return index


def _content_order(P):
    """Deterministic fingerprint so {P,Q} = -{Q,P} holds bitwise."""
    return (P.degree, len(P.terms), tuple(sorted((k.clusters, k.signs) for k in P.terms)))


def poisson_bracket(P, Q, prune_tol=1e-14):
    """{P, Q} = (i grad P, grad Q)_l2 as a degree q+q'-2 polynomial.

    Coefficients are built by contracting P and Q tensors over one shared
    cluster slot with opposite signs, then symmetrized and canonicalized.
    The pair is processed in a fixed content order, which makes
    antisymmetry {P,Q} = -{Q,P} exact coefficientwise.
    """
    if P.spectrum is not Q.spectrum:
        raise ValueError("polynomials must share a spectrum")
    if P is Q:
        return HomogeneousPolynomial.zero(2 * P.degree - 2, P.nu, P.n, P.spectrum)
    if _content_order(Q) < _content_order(P):
        return poisson_bracket(Q, P, prune_tol).scaled(-1.0)
    q, qp = P.degree, Q.degree
    qq = q + qp - 2
    if qq < 3:
        raise DegreeUnderflow(f"bracket degree {qq} < 3")
    nu = max(P.nu, Q.nu)
    n = min(P.n, Q.n)
    out = PolynomialBuilder(qq, nu, n, P.spectrum)

    q_index = _slot_index(Q)
    for keyP, TP in P.terms.items():
        mP = orbit_size(keyP)
        scP = is_self_conjugate(keyP)
        for a in range(q):
            ka, sa = keyP.clusters[a], keyP.signs[a]
            matches = q_index.get(ka)
            if not matches:
                continue
            restP_k = keyP.clusters[:a] + keyP.clusters[a + 1:]
            restP_s = keyP.signs[:a] + keyP.signs[a + 1:]
            for keyQ, b in matches:
                sb = keyQ.signs[b]
                TQ = Q.terms[keyQ]
                mQ = orbit_size(keyQ)
                scQ = is_self_conjugate(keyQ)
                restQ_k = keyQ.clusters[:b] + keyQ.clusters[b + 1:]
                restQ_s = keyQ.signs[:b] + keyQ.signs[b + 1:]
                core = np.tensordot(TP, TQ, axes=([a], [b]))
                scale = 2j * mP * mQ
                if sb == -sa:
                    # natural x natural at s = sb, plus its conjugate twin
                    s = sb
                    out.add(restP_k + restQ_k, restP_s + restQ_s,
                            (scale * s) * core, mode="series")
                    if not (scP or scQ):
                        flip = tuple(-x for x in restP_s) + tuple(-x for x in restQ_s)
                        out.add(restP_k + restQ_k, flip,
                                np.conj((scale * s) * core), mode="series")
                else:
                    # natural x conjugate at s = -sa, and its mirror
                    s = -sa
                    if not scQ:
                        coreNC = np.tensordot(TP, np.conj(TQ), axes=([a], [b]))
                        out.add(restP_k + restQ_k,
                                restP_s + tuple(-x for x in restQ_s),
                                (scale * s) * coreNC, mode="series")
                    if not scP:
                        coreCN = np.tensordot(np.conj(TP), TQ, axes=([a], [b]))
                        out.add(restP_k + restQ_k,
                                tuple(-x for x in restP_s) + restQ_s,
                                (scale * -s) * coreCN, mode="series")
    return out.build(prune_tol)


def divisor_tensor(spectrum, clusters, signs, dtype=float):
    """Small divisors sum_l sigma_l omega_{j_l} on the cluster product grid."""
    q = len(clusters)
    shape = tuple(spectrum.dim(k) for k in clusters)
    out = np.zeros(shape, dtype)
    for ax, (k, s) in enumerate(zip(clusters, signs)):
        om = spectrum.omegas[spectrum.members(k)].astype(dtype)
        out = out + s * om.reshape((1,) * ax + (-1,) + (1,) * (q - ax - 1))
    return out


def bracket_with_Z2(P):
    """{Z_2, P}: each tensor entry is multiplied by i * sum_l sigma_l omega_{j_l}."""
    terms = {}
    for key, T in P.terms.items():
        delta = divisor_tensor(P.spectrum, key.clusters, key.signs)
        terms[key] = 1j * delta * T
    return HomogeneousPolynomial(P.degree, P.nu, P.n, P.spectrum, terms)


# -- polarization ------------------------------------------------------------

def polarize(dqG, clusters, signs, spectrum, factorial_normalized=False):
    """Extract the C-multilinear coefficient tensor from a real q-linear form.

    ``dqG(v1, ..., vq)`` must be the R-multilinear form d^q G(0) evaluated
    on complex vectors.  The returned tensor T satisfies the series
    reconstruction sum_{k,sigma} T(Pi^sigma u, ...) = d^q G(0)(u,..,u)/q!.
    Set ``factorial_normalized`` when dqG already includes the 1/q! factor.
    """
    q = len(clusters)
    shape = tuple(spectrum.dim(k) for k in clusters)
    members = [spectrum.members(k) for k in clusters]
    T = np.zeros(shape, complex)
    norm = 1.0 if factorial_normalized else 1.0 / math.factorial(q)
    basis = np.eye(spectrum.n_modes)
    for idx in np.ndindex(shape):
        vecs = [basis[members[ax][idx[ax]]] for ax in range(q)]
        val = 0.0 + 0.0j
        for eta in itertools.product((0, 1), repeat=q):
            phase = 1.0 + 0.0j
            args = []
            for ell in range(q):
                if eta[ell]:
                    phase *= -1j * signs[ell]
                    args.append(1j * vecs[ell])
                else:
                    args.append(vecs[ell].astype(complex))
            val += phase * dqG(*args)
        T[idx] = val * (2.0 ** -q) * norm
    return T


def multilinear_form_from_monomials(monomials, n_modes):
    """Oracle d^q G(0) for G = sum c * prod u_{j_l}^{s_l} (testing helper).

    ``monomials`` is an iterable of (modes tuple, signs tuple, coefficient).
    Returns a callable R-multilinear in q complex vector arguments.
    """
    monomials = list(monomials)
    q = len(monomials[0][0])

    def dqG(*vecs):
        if len(vecs) != q:
            raise ValueError("wrong arity")
        total = 0.0 + 0.0j
        for modes, sgns, c in monomials:
            for perm in itertools.permutations(range(q)):
                prod = c
                for slot, vi in enumerate(perm):
                    v = vecs[vi][modes[slot]]
                    prod *= v if sgns[slot] > 0 else np.conj(v)
                total += prod
        return total

    return dqG


# -- serialization -----------------------------------------------------------

def _c2hex(z):
    return f"{float(np.real(z)).hex()},{float(np.imag(z)).hex()}"


def _hex2c(tok):
    a, b = tok.split(",")
    return complex(float.fromhex(a), float.fromhex(b))


def poly_to_text(P):
    """Bit-exact structured text form of a homogeneous polynomial."""
    out = io.StringIO()
    out.write(f"# homogeneous polynomial\n")
    out.write(f"q={P.degree} nu={P.nu!r} n={P.n!r} spectrum={P.spectrum.content_hash()}\n")
    for key in sorted(P.terms, key=lambda k: (k.clusters, k.signs)):
        T = P.terms[key]
        ks = ",".join(map(str, key.clusters))
        ss = ",".join(map(str, key.signs))
        shape = ",".join(map(str, T.shape))
        vals = " ".join(_c2hex(z) for z in T.reshape(-1))
        out.write(f"{ks};{ss};{shape};{vals}\n")
    return out.getvalue()


def poly_from_text(text, spectrum):
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    head = dict(tok.split("=", 1) for tok in lines[0].split())
    if head["spectrum"] != spectrum.content_hash():
        raise ValueError("spectrum hash mismatch")
    q = int(head["q"])
    terms = {}
    for ln in lines[1:]:
        ks, ss, shape, vals = ln.split(";")
        key = MonomialKey(tuple(int(x) for x in ks.split(",")),
                          tuple(int(x) for x in ss.split(",")))
        shp = tuple(int(x) for x in shape.split(","))
        T = np.array([_hex2c(tok) for tok in vals.split()], complex).reshape(shp)
        terms[key] = T
    return HomogeneousPolynomial(q, float(head["nu"]), float(head["n"]), spectrum, terms)


def inhom_to_text(P):
    chunks = [f"# inhomogeneous polynomial gamma={P.gamma!r} degrees={','.join(map(str, P.degrees))}\n"]
    for qd in P.degrees:
        chunks.append(f"== part {qd}\n")
        chunks.append(poly_to_text(P.parts[qd]))
    return "".join(chunks)


def inhom_from_text(text, spectrum):
    header, *rest = text.split("== part ")
    gamma = float(header.split("gamma=", 1)[1].split()[0])
    parts = []
    for chunk in rest:
        body = chunk.split("\n", 1)[1]
        parts.append(poly_from_text(body, spectrum))
    return InhomogeneousPolynomial(parts, gamma=gamma)
