"""Truncated frequency data: cluster decomposition, projections, norms.

The cluster construction follows a pigeonhole scan: each unit window
[k-1/2, k) is split into 2*C*k^d equal subintervals; an eigenvalue count
bounded by C*k^d guarantees at least one empty subinterval, whose edges
become the boundary pair (c_{2k}, c_{2k+1}).  Cluster k collects the
eigenvalues in [c_{2k-1}, c_{2k}).  By construction the inter-cluster gap
c_{2k+1} - c_{2k} equals 1/(4*C*k^d) exactly and consecutive cluster
spacings stay within [1/2, 3/2].
"""

from __future__ import annotations

import hashlib
import io
import math

import numpy as np

from .errors import EmptySpectrum, UncoveredEigenvalue, WeylViolation

__all__ = [
    "ClusterDecomposition",
    "FrequencySpectrum",
    "StateVector",
    "build_clusters",
    "assign_clusters",
    "sobolev_norm",
    "super_actions",
    "project",
    "spectrum_to_text",
    "spectrum_from_text",
    "decomposition_to_text",
]


class ClusterDecomposition:
    """Boundary sequence (c_k) produced by the pigeonhole scan.

    Boundaries are stored 1-based: ``c(1) = 0`` and cluster k occupies
    the half-open interval [c(2k-1), c(2k)).
    """

    def __init__(self, boundaries, weyl_constant, dimension, chosen_subintervals=None):
        self._c = np.asarray(boundaries, dtype=float)
        self.weyl_constant = int(weyl_constant)
        self.dimension = int(dimension)
        self.chosen_subintervals = chosen_subintervals
        if self._c.size < 3 or self._c.size % 2 == 0:
            raise ValueError("boundary sequence must have odd length >= 3")
        if np.any(np.diff(self._c) <= 0):
            raise ValueError("boundary sequence must be strictly increasing")

    @property
    def num_clusters(self):
        return (self._c.size - 1) // 2

    @property
    def boundaries(self):
        return self._c.copy()

    def c(self, i):
        """1-based access to the boundary sequence."""
        return self._c[i - 1]

    def interval(self, k):
        """Half-open interval [c_{2k-1}, c_{2k}) of cluster k."""
        return self.c(2 * k - 1), self.c(2 * k)

    def gap(self, k):
        """Width of the certified empty gap above cluster k."""
        return self.c(2 * k + 1) - self.c(2 * k)

    def locate(self, value):
        """Cluster index containing ``value``; raises if it falls in a gap."""
        c = self._c
        pos = int(np.searchsorted(c, value, side="right"))  # c[pos-1] <= value < c[pos]
        if pos == 0 or pos >= c.size:
            raise UncoveredEigenvalue(f"eigenvalue {value} outside covered range")
        # value in [c_{2k-1}, c_{2k}) leaves 2k-1 boundaries at or below it
        if pos % 2 == 0:
            raise UncoveredEigenvalue(f"eigenvalue {value} lies in the gap below c_{pos + 1}")
        return (pos + 1) // 2

    def check_invariants(self):
        """Assert the exact gap bound and the [1/2, 3/2] spacing."""
        C, d = self.weyl_constant, self.dimension
        for k in range(1, self.num_clusters):
            gap = self.gap(k)
            lower = 1.0 / (4 * C * k**d)
            if gap < lower * (1 - 1e-12):
                raise AssertionError(f"gap at k={k}: {gap} < {lower}")
            spacing = self.c(2 * k + 2) - self.c(2 * k + 1)
            if not (0.5 - 1e-12 <= spacing <= 1.5 + 1e-12):
                raise AssertionError(f"spacing at k={k}: {spacing}")
        return True


def build_clusters(eigenvalues, weyl_constant, dimension, k_max=None):
    """Run the pigeonhole scan and return a ClusterDecomposition.

    Parameters
    ----------
    eigenvalues : array_like
        Sorted non-negative reals (multiplicities repeated).
    weyl_constant : int
        Positive integer C with #{j : lambda_j <= k} <= C*k^d.
    dimension : int
        Positive integer exponent d in the counting bound.
    k_max : int, optional
        Extend the boundary scan up to this window even if the data ends
        earlier.  Defaults to floor(max eigenvalue) + 1.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0:
        raise EmptySpectrum("no eigenvalues supplied")
    if np.any(lam < 0):
        raise ValueError("eigenvalues must be non-negative")
    if np.any(np.diff(lam) < 0):
        raise ValueError("eigenvalues must be sorted non-decreasingly")
    C = int(weyl_constant)
    d = int(dimension)
    if C <= 0 or d <= 0:
        raise ValueError("weyl_constant and dimension must be positive integers")

    K = int(math.floor(lam[-1])) + 1
    if k_max is not None:
        K = max(K, int(k_max))

    counts = np.searchsorted(lam, np.arange(1, K + 1), side="right")
    for k in range(1, K + 1):
        if counts[k - 1] > C * k**d:
            raise WeylViolation(
                f"count {counts[k - 1]} of eigenvalues <= {k} exceeds C*k^d = {C * k ** d}"
            )

    cs = [0.0]  # c_1
    chosen = []
    for k in range(1, K + 1):
        m = 4 * C * k**d          # inverse subinterval length
        nsub = 2 * C * k**d       # subintervals of [k - 1/2, k)
        lo = np.searchsorted(lam, k - 0.5, side="left")
        hi = np.searchsorted(lam, k, side="left")
        occupied = set()
        for x in lam[lo:hi]:
            t = (k - x) * m       # subinterval index ell satisfies ell-1 < t <= ell
            ell = int(math.ceil(t))
            occupied.add(ell)
            # guard against eigenvalues sitting on a subinterval edge in floats
            if abs(t - round(t)) < 1e-9:
                occupied.add(int(round(t)))
                occupied.add(int(round(t)) + 1)
        ell_k = next(ell for ell in range(1, nsub + 1) if ell not in occupied)
        chosen.append(ell_k)
        cs.append(k - ell_k / m)        # c_{2k}:   left edge of the empty gap
        cs.append(k - (ell_k - 1) / m)  # c_{2k+1}: right edge of the empty gap

    deco = ClusterDecomposition(cs, C, d, chosen_subintervals=tuple(chosen))
    deco.check_invariants()
    return deco


class FrequencySpectrum:
    """Sorted positive frequencies with their cluster assignment.

    Parameters
    ----------
    frequencies : array_like
        Non-decreasing positive reals omega_j.
    cluster_of : array_like
        1-based cluster index per eigenmode.
    alpha, upsilon, beta : float
        Clustering exponent, cluster spacing scale, Weyl exponent.
    eigenvalues : array_like, optional
        The lambda_j when the model supplies them.
    """

    def __init__(self, frequencies, cluster_of, alpha, upsilon, beta,
                 eigenvalues=None, mass=None, decomposition=None,
                 cluster_slack=None, num_clusters=None):
        om = np.asarray(frequencies, dtype=float)
        if om.size == 0:
            raise EmptySpectrum("no frequencies supplied")
        if np.any(om <= 0):
            raise ValueError("frequencies must be strictly positive")
        if np.any(np.diff(om) < -1e-12 * max(1.0, om[-1])):
            raise ValueError("frequencies must be non-decreasing")
        ks = np.asarray(cluster_of, dtype=int)
        if ks.shape != om.shape:
            raise ValueError("cluster_of must match frequencies in length")
        if np.any(ks < 1):
            raise ValueError("cluster indices are 1-based")

        self.omegas = om
        self.mode_cluster = ks
        self.alpha = float(alpha)
        self.upsilon = float(upsilon)
        self.beta = float(beta)
        self.eigenvalues = None if eigenvalues is None else np.asarray(eigenvalues, float)
        self.mass = mass
        self.decomposition = decomposition
        self.num_clusters = int(num_clusters) if num_clusters else int(ks.max())

        self.cluster_members = [np.nonzero(ks == k)[0] for k in range(1, self.num_clusters + 1)]
        self.cluster_dims = np.array([m.size for m in self.cluster_members])
        if cluster_slack is None:
            cluster_slack = float(np.max(np.abs(om ** (1.0 / self.alpha) - self.upsilon * ks)))
        self.cluster_slack = float(cluster_slack)

    @property
    def n_modes(self):
        return self.omegas.size

    def members(self, k):
        """Eigenmode indices (0-based) of cluster k (1-based)."""
        return self.cluster_members[k - 1]

    def dim(self, k):
        return int(self.cluster_dims[k - 1])

    def mode_weights(self, s):
        """Per-mode Sobolev weights max(k,1)^s."""
        w = np.maximum(self.mode_cluster, 1).astype(float)
        return w**s

    def check_partition(self):
        """Every eigenmode belongs to exactly one cluster."""
        seen = np.zeros(self.n_modes, dtype=int)
        for mem in self.cluster_members:
            seen[mem] += 1
        return bool(np.all(seen == 1))

    def content_hash(self):
        h = hashlib.sha256()
        h.update(self.omegas.tobytes())
        h.update(self.mode_cluster.tobytes())
        h.update(np.array([self.alpha, self.upsilon, self.beta]).tobytes())
        return h.hexdigest()[:16]

    def __repr__(self):
        return (f"FrequencySpectrum(n={self.n_modes}, K={self.num_clusters}, "
                f"alpha={self.alpha}, beta={self.beta}, slack={self.cluster_slack:.3g})")


def assign_clusters(decomposition, eigenvalues, frequencies, alpha, upsilon,
                    beta=1.0, mass=None):
    """Map each eigenmode to the unique cluster interval containing lambda_j."""
    lam = np.asarray(eigenvalues, dtype=float)
    om = np.asarray(frequencies, dtype=float)
    if lam.size != om.size:
        raise ValueError("eigenvalues and frequencies must have equal length")
    ks = np.array([decomposition.locate(x) for x in lam], dtype=int)
    return FrequencySpectrum(
        om, ks, alpha, upsilon, beta,
        eigenvalues=lam, mass=mass, decomposition=decomposition,
        num_clusters=decomposition.num_clusters,
    )


class StateVector:
    """Finite complex mode sequence tied to a FrequencySpectrum."""

    def __init__(self, modes, spectrum):
        u = np.asarray(modes)
        if not np.issubdtype(u.dtype, np.complexfloating):
            u = u.astype(complex)
        if u.shape != (spectrum.n_modes,):
            raise ValueError(f"expected {spectrum.n_modes} modes, got {u.shape}")
        self.modes = u
        self.spectrum = spectrum

    def copy(self):
        return StateVector(self.modes.copy(), self.spectrum)

    def __add__(self, other):
        return StateVector(self.modes + other.modes, self.spectrum)

    def __sub__(self, other):
        return StateVector(self.modes - other.modes, self.spectrum)

    def __mul__(self, t):
        return StateVector(self.modes * t, self.spectrum)

    __rmul__ = __mul__

    def l2_norm(self):
        return float(np.linalg.norm(self.modes))

    def sobolev_norm(self, s):
        return sobolev_norm(self, s)


def _modes_of(u):
    return u.modes if isinstance(u, StateVector) else np.asarray(u)


def super_actions(u, spectrum=None):
    """Per-cluster l2 mass J_k = sum_{j in C_k} |u_j|^2."""
    spec = u.spectrum if isinstance(u, StateVector) else spectrum
    m = _modes_of(u)
    power = (m.real.astype(float)) ** 2 + (m.imag.astype(float)) ** 2
    return np.bincount(spec.mode_cluster - 1, weights=power, minlength=spec.num_clusters)


def sobolev_norm(u, s):
    """H^s norm sqrt(sum_k max(k,1)^{2s} J_k(u))."""
    spec = u.spectrum if isinstance(u, StateVector) else None
    if spec is None:
        raise ValueError("sobolev_norm needs a StateVector")
    if not np.isfinite(s):
        raise ValueError("s must be finite")
    w = spec.mode_weights(s)
    m = u.modes
    return float(np.sqrt(np.sum((w * np.abs(m)) ** 2)))


def little_h_norm(u, sigma):
    """Eigenmode-indexed norm ||u||_{h^sigma}^2 = sum_j j^{2*sigma} |u_j|^2."""
    m = _modes_of(u)
    j = np.arange(1, m.size + 1, dtype=float)
    return float(np.sqrt(np.sum((j**sigma * np.abs(m)) ** 2)))


def project(u, cluster=None, at_most=None, above=None):
    """Zero all modes outside the selected clusters.

    Exactly one of ``cluster`` (a single k), ``at_most`` (keep k <= N) or
    ``above`` (keep k > N) must be given.
    """
    given = sum(x is not None for x in (cluster, at_most, above))
    if given != 1:
        raise ValueError("select exactly one of cluster / at_most / above")
    spec = u.spectrum
    ks = spec.mode_cluster
    if cluster is not None:
        mask = ks == cluster
    elif at_most is not None:
        mask = ks <= at_most
    else:
        mask = ks > above
    return StateVector(np.where(mask, u.modes, 0), spec)


# -- structured text round trip ------------------------------------------

def decomposition_to_text(deco):
    """Rows (k, c_{2k-1}, c_{2k}) of the cluster intervals."""
    out = io.StringIO()
    out.write(f"# clusters C={deco.weyl_constant} d={deco.dimension}\n")
    out.write("k\tc_lo\tc_hi\n")
    for k in range(1, deco.num_clusters + 1):
        lo, hi = deco.interval(k)
        out.write(f"{k}\t{lo!r}\t{hi!r}\n")
    return out.getvalue()


def spectrum_to_text(spec):
    """Structured text record: header plus rows (j, lambda_j, omega_j, k)."""
    out = io.StringIO()
    out.write("# frequency spectrum\n")
    mass = "" if spec.mass is None else repr(spec.mass)
    out.write(f"alpha={spec.alpha!r} upsilon={spec.upsilon!r} beta={spec.beta!r} "
              f"mass={mass} slack={spec.cluster_slack!r} K={spec.num_clusters}\n")
    out.write("j\tlambda\tomega\tk\n")
    lam = spec.eigenvalues
    for j in range(spec.n_modes):
        lj = "" if lam is None else repr(float(lam[j]))
        out.write(f"{j + 1}\t{lj}\t{spec.omegas[j]!r}\t{spec.mode_cluster[j]}\n")
    return out.getvalue()


def spectrum_from_text(text):
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    head = dict(tok.split("=", 1) for tok in lines[0].split())
    lam, om, ks = [], [], []
    has_lambda = True
    for ln in lines[2:]:
        parts = ln.split("\t")
        if parts[1]:
            lam.append(float(parts[1]))
        else:
            has_lambda = False
        om.append(float(parts[2]))
        ks.append(int(parts[3]))
    mass = float(head["mass"]) if head.get("mass") else None
    return FrequencySpectrum(
        om, ks, float(head["alpha"]), float(head["upsilon"]), float(head["beta"]),
        eigenvalues=lam if has_lambda else None, mass=mass,
        cluster_slack=float(head["slack"]), num_clusters=int(head["K"]),
    )
