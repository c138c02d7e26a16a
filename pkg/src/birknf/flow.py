"""Time integration and the long-time experiment harnesses.

The linear rotation is removed exactly by working in the rotating frame
y = exp(i Omega t) u, so the integrator only resolves the nonlinear
field; adaptivity then gives a clean tolerance contract with no
stiff-frequency step limit.  Float64 runs use scipy's DOP853; extended
precision runs (needed to resolve conjugation remainders far below the
energy scale) use a dtype-generic embedded Dormand-Prince 5(4) with
exact rational tableau entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BlowUp, OutsideSafetyRadius
from .spectrum import StateVector, project, sobolev_norm, super_actions

__all__ = [
    "FlowSafety",
    "TrajectoryLog",
    "flow_safety",
    "integrate",
    "chi_flow",
    "superaction_drift",
    "lifespan_experiment",
    "invariant_drift_experiment",
]


# -- adaptive embedded RK (Dormand-Prince 5(4)), dtype generic ---------------

def _dp45_tableau(realdtype):
    f = lambda a, b: realdtype(a) / realdtype(b)
    c = np.array([f(0, 1), f(1, 5), f(3, 10), f(4, 5), f(8, 9), f(1, 1), f(1, 1)],
                 dtype=realdtype)
    A = np.zeros((7, 7), dtype=realdtype)
    A[1, 0] = f(1, 5)
    A[2, :2] = [f(3, 40), f(9, 40)]
    A[3, :3] = [f(44, 45), f(-56, 15), f(32, 9)]
    A[4, :4] = [f(19372, 6561), f(-25360, 2187), f(64448, 6561), f(-212, 729)]
    A[5, :5] = [f(9017, 3168), f(-355, 33), f(46732, 5247), f(49, 176), f(-5103, 18656)]
    A[6, :6] = [f(35, 384), f(0, 1), f(500, 1113), f(125, 192), f(-2187, 6784), f(11, 84)]
    b5 = A[6].copy()
    b4 = np.array([f(5179, 57600), f(0, 1), f(7571, 16695), f(393, 640),
                   f(-92097, 339200), f(187, 2100), f(1, 40)], dtype=realdtype)
    return c, A, b5, b5 - b4


def rk45_adaptive(fun, t0, t1, y0, rtol, atol, max_step=np.inf,
                  sample_ts=None, max_steps=20_000_000):
    """Integrate y' = fun(t, y) with an embedded DP5(4) pair.

    Steps are clamped to land exactly on each requested sample time.
    Returns (sampled_ts, sampled_ys, stats).
    """
    y = np.asarray(y0).copy()
    realdtype = np.asarray(y.real).dtype.type
    c, A, b5, e = _dp45_tableau(realdtype)
    t = realdtype(t0)
    t_end = realdtype(t1)
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(float(t1 - t0))
    if span == 0:
        return [float(t0)], [y.copy()], {"nsteps": 0, "nfev": 0, "rejected": 0}

    samples = [] if sample_ts is None else [realdtype(s) for s in sample_ts]
    out_t, out_y = [], []
    si = 0
    if samples and float(samples[0]) == float(t0):
        out_t.append(float(t0))
        out_y.append(y.copy())
        si += 1

    f = fun(t, y)
    nfev = 1
    sc = atol + rtol * np.abs(y)
    d0 = float(np.sqrt(np.mean((np.abs(y) / sc) ** 2))) if y.size else 0.0
    d1 = float(np.sqrt(np.mean((np.abs(f) / sc) ** 2))) if y.size else 0.0
    h = 0.01 * d0 / d1 if d1 > 0 else span / 100.0
    h = min(h if h > 0 else span / 100.0, span / 10.0, float(max_step))

    K = np.empty((7, y.size), dtype=y.dtype)
    nsteps = rejected = 0
    while direction * float(t_end - t) > 0:
        if nsteps >= max_steps:
            raise RuntimeError("rk45_adaptive: step budget exhausted")
        h = min(h, abs(float(t_end - t)), float(max_step))
        if si < len(samples):
            h = min(h, abs(float(samples[si] - t)))
        hstep = realdtype(direction * h)
        K[0] = f
        for i in range(1, 7):
            yi = y + hstep * (A[i, :i] @ K[:i])
            K[i] = fun(t + c[i] * hstep, yi)
        nfev += 6
        y_new = yi  # stage 7 argument equals the 5th order solution (FSAL)
        err_vec = hstep * (e @ K)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((np.abs(err_vec) / sc) ** 2)))
        if err <= 1.0 or h <= 1e-14 * span:
            t = t + hstep
            y = y_new
            f = K[6]
            nsteps += 1
            if si < len(samples) and abs(float(samples[si] - t)) <= 1e-12 * max(1.0, abs(float(t))):
                out_t.append(float(t))
                out_y.append(y.copy())
                si += 1
        else:
            rejected += 1
        factor = 0.9 * err ** -0.2 if err > 0 else 5.0
        h = h * min(5.0, max(0.2, factor))
    if sample_ts is None:
        out_t.append(float(t))
        out_y.append(y.copy())
    return out_t, out_y, {"nsteps": nsteps, "nfev": nfev, "rejected": rejected}


# -- safety radius ------------------------------------------------------------

@dataclass
class FlowSafety:
    """Ball radius on which the generator flow is certified well posed."""

    radius: float
    chi_norm: float
    gamma: float
    c_const: float

    def as_dict(self):
        return {"radius": self.radius, "chi_norm": self.chi_norm,
                "gamma": self.gamma, "c_const": self.c_const}


def flow_safety(chi, gamma, c_const=0.125):
    """radius = c * min(1/||chi||_gamma, gamma), with c recorded."""
    norm = chi.norm(gamma)
    inv = np.inf if norm == 0 else 1.0 / norm
    return FlowSafety(float(c_const * min(inv, gamma)), float(norm),
                      float(gamma), float(c_const))


# -- trajectory log ------------------------------------------------------------

@dataclass
class TrajectoryLog:
    times: np.ndarray
    states: list
    h_sc: np.ndarray
    low_sc: np.ndarray
    high_sc: np.ndarray
    high_l2: np.ndarray
    actions: np.ndarray          # (n_samples, K)
    energy: np.ndarray
    s_c: float
    N: int
    tol: float
    stats: dict = field(default_factory=dict)
    censored: bool = False
    exit_time: float | None = None

    def to_csv(self):
        cols = ["t", "H_sc", "low_sc", "high_sc", "high_l2", "energy"]
        cols += [f"J_{k + 1}" for k in range(self.actions.shape[1])]
        lines = ["\t".join(cols)]
        for i, t in enumerate(self.times):
            row = [repr(float(t)), repr(float(self.h_sc[i])), repr(float(self.low_sc[i])),
                   repr(float(self.high_sc[i])), repr(float(self.high_l2[i])),
                   repr(float(self.energy[i]))]
            row += [repr(float(x)) for x in self.actions[i]]
            lines.append("\t".join(row))
        return "\n".join(lines) + "\n"


def _geometric_times(T, n_samples, t_first=None):
    if t_first is None:
        t_first = min(1.0, T / max(n_samples, 2))
    if T <= t_first:
        return np.linspace(0.0, T, n_samples)
    ts = np.geomspace(t_first, T, n_samples - 1)
    return np.concatenate([[0.0], ts])


def integrate(P, u0, T, tol=1e-10, s_c=1.0, N=None, rho0=1.0, s0=None,
              n_samples=200, atol_scale=0.01, method="dop853",
              stop_norm=None, max_steps=20_000_000):
    """Integrate i u' = Omega u + grad P(u) and log the bootstrap monitors.

    The linear part rotates exactly; P may be None (pure rotation).
    ``stop_norm`` ends the run once the H^{s_c} norm reaches it (first
    exit); ``rho0`` bounds the H^{s0} norm (BlowUp beyond it).
    """
    spec = u0.spectrum
    om = spec.omegas.astype(np.longdouble) if method == "rk45-extended" else spec.omegas
    if N is None:
        N = spec.num_clusters
    if s0 is None:
        s0 = s_c
    w_s0 = spec.mode_weights(s0)
    w_sc = spec.mode_weights(s_c)
    if np.sqrt(np.sum((w_s0 * np.abs(u0.modes)) ** 2)) > rho0:
        raise BlowUp("initial state already outside the domain ball")

    sample_ts = np.unique(np.clip(_geometric_times(T, n_samples), 0.0, T))
    atol = tol * atol_scale * max(float(np.linalg.norm(u0.modes)), 1e-12)

    if P is None:
        # pure rotation: actions and norms are exactly constant
        states = [StateVector(np.exp(-1j * om * t) * u0.modes, spec) for t in sample_ts]
        stats = {"nsteps": 0, "nfev": 0}
        return _build_log(states, sample_ts, spec, s_c, N, tol, stats, P)

    def rhs(t, y):
        phase = np.exp((-1j * t) * om)
        u = phase * y
        g = P.gradient_modes(u)
        return (-1j * np.conj(phase)) * g

    exit_time = None
    censored = False
    if method == "dop853":
        events = []

        def blow_event(t, y):
            u = np.exp(-1j * om * t) * y
            return rho0 - float(np.sqrt(np.sum((w_s0 * np.abs(u)) ** 2)))
        blow_event.terminal = True
        events.append(blow_event)
        if stop_norm is not None:
            def stop_event(t, y):
                u = np.exp(-1j * om * t) * y
                return float(np.sqrt(np.sum((w_sc * np.abs(u)) ** 2))) - stop_norm
            stop_event.terminal = True
            events.append(stop_event)
        sol = solve_ivp(rhs, (0.0, float(T)), u0.modes.astype(complex),
                        method="DOP853", rtol=tol, atol=atol,
                        t_eval=sample_ts, events=events, dense_output=False)
        if not sol.success and sol.status != 1:
            raise RuntimeError(f"integrator failed: {sol.message}")
        ts = list(sol.t)
        ys = [sol.y[:, i] for i in range(sol.y.shape[1])]
        if sol.status == 1:  # a terminal event fired
            if len(sol.t_events[0]):
                raise BlowUp(f"H^{s0} norm reached rho0 = {rho0} at t = {sol.t_events[0][0]}")
            exit_time = float(sol.t_events[1][0])
            ts.append(exit_time)
            ys.append(sol.y_events[1][0])
        elif stop_norm is not None:
            censored = True
        stats = {"nfev": sol.nfev, "status": int(sol.status)}
    else:
        dtype = np.complex256 if method == "rk45-extended" else complex
        ts, ys, stats = rk45_adaptive(rhs, 0.0, float(T), u0.modes.astype(dtype),
                                      rtol=tol, atol=atol, sample_ts=sample_ts,
                                      max_steps=max_steps)
        censored = stop_norm is not None

    states = []
    for t, y in zip(ts, ys):
        u = np.exp(-1j * np.asarray(om, dtype=np.asarray(y.real).dtype) * t) * y
        states.append(StateVector(u.astype(complex), spec))
    log = _build_log(states, np.array(ts), spec, s_c, N, tol, stats, P)
    log.exit_time = exit_time
    log.censored = censored and exit_time is None
    return log


def _build_log(states, ts, spec, s_c, N, tol, stats, P):
    h_sc, lo, hi, hil2, acts, energy = [], [], [], [], [], []
    for u in states:
        h_sc.append(sobolev_norm(u, s_c))
        lo.append(sobolev_norm(project(u, at_most=N), s_c))
        hi.append(sobolev_norm(project(u, above=N), s_c))
        hil2.append(project(u, above=N).l2_norm())
        acts.append(super_actions(u))
        e = 0.5 * float(np.sum(spec.omegas * np.abs(u.modes) ** 2))
        if P is not None:
            e += P(u.modes)
        energy.append(e)
    return TrajectoryLog(np.asarray(ts, float), states, np.array(h_sc), np.array(lo),
                         np.array(hi), np.array(hil2), np.array(acts),
                         np.array(energy), s_c, int(N), tol, stats)


# -- generator flows -----------------------------------------------------------

def chi_flow(chi, u0, t, tol=1e-12, dtype=None, radius=None, check_identity=False):
    """Phi_chi^t(u0): flow of i u' = grad chi(u) for |t| <= 1.

    Raises OutsideSafetyRadius when the H^{1+nu} norm of u0 is not inside
    twice the safety radius.
    """
    spec = u0.spectrum
    nu = max((p.nu for p in chi.parts.values()), default=0.0)
    if radius is None:
        radius = flow_safety(chi, chi.gamma).radius
    r0 = sobolev_norm(u0, 1.0 + nu)
    if r0 >= 2.0 * radius:
        raise OutsideSafetyRadius(
            f"H^(1+nu) norm {r0:.3g} outside the safety ball 2*{radius:.3g}")
    if dtype is None:
        dtype = complex
    y0 = u0.modes.astype(dtype)

    def rhs(tt, y):
        return -1j * chi.gradient_modes(y)

    if abs(float(t)) == 0.0:
        return u0.copy()
    _, ys, _ = rk45_adaptive(rhs, 0.0, float(t), y0, rtol=tol,
                             atol=tol * max(float(np.linalg.norm(u0.modes)), 1e-300) * 1e-2)
    out = StateVector(ys[-1], spec)
    if check_identity:
        drift = sobolev_norm(out - u0, 1.0 + nu)
        bound = (r0 / radius) * r0
        if drift > bound * (1 + 1e-9) + 1e-30:
            raise AssertionError(
                f"near-identity bound violated: {drift:.3g} > {bound:.3g}")
    return out


def superaction_drift(Q_or_result, u0, T, tol=1e-12, N=None, n_samples=200):
    """Integrate Z_2 + Q and report the worst super-action drift.

    Returns a dict with ``max_action_drift``, per-cluster drifts, the
    high-tail l2 drift, and the trajectory log.
    """
    Q = getattr(Q_or_result, "resonant", Q_or_result)
    log = integrate(Q if (Q is not None and Q.parts) else None, u0, T, tol=tol,
                    s_c=1.0, N=N, rho0=np.inf, n_samples=n_samples)
    drift = np.abs(log.actions - log.actions[0]).max(axis=0)
    tail = np.abs(log.high_l2**2 - log.high_l2[0] ** 2).max()
    return {
        "max_action_drift": float(drift.max()),
        "action_drift_per_cluster": drift,
        "tail_l2_sq_drift": float(tail),
        "log": log,
    }


def lifespan_experiment(P, profile, amplitudes, s_c, doubling=2.0, T_cap=1e3,
                        tol=1e-10, n_samples=120):
    """First-exit times of the H^{s_c} norm across an amplitude ladder.

    The profile is normalized to unit H^{s_c} norm; each run starts from
    eps * profile and stops when the norm reaches doubling * eps or at
    T_cap (censored).  Returns rows (eps, exit time, censored) plus the
    log-log slope fitted on the uncensored rows.
    """
    amplitudes = list(amplitudes)
    if any(a <= b for a, b in zip(amplitudes, amplitudes[1:])):
        raise ValueError("amplitude ladder must be strictly decreasing")
    spec = profile.spectrum
    base = sobolev_norm(profile, s_c)
    rows = []
    for eps in amplitudes:
        u0 = StateVector((eps / base) * profile.modes, spec)
        log = integrate(P, u0, T_cap, tol=tol, s_c=s_c, rho0=np.inf,
                        n_samples=n_samples, stop_norm=doubling * eps)
        rows.append({"eps": float(eps),
                     "T_exit": float(log.exit_time) if log.exit_time else float(T_cap),
                     "censored": log.exit_time is None})
    ok = [r for r in rows if not r["censored"]]
    slope = float("nan")
    if len(ok) >= 2:
        slope = float(np.polyfit(np.log([1.0 / r["eps"] for r in ok]),
                                 np.log([r["T_exit"] for r in ok]), 1)[0])
    return {"rows": rows, "slope": slope, "doubling": doubling, "T_cap": T_cap}


def invariant_drift_experiment(P, results, profile, amplitudes, T_obs,
                               s_c, tol=1e-13, n_samples=24, doubling=2.0,
                               flow_tol=1e-13):
    """Effective doubling-time exponents from adiabatic-invariant drift.

    For each amplitude the true flow of Z_2 + P runs once in extended
    precision; for each normal form result r the H^{s_c} norm of the
    transformed state v_r(t) = Phi_{chi_r}^1(u(t)) is tracked.  Its
    deviation D_r(eps) over the window scales like the conjugation
    remainder, so the extrapolated first time the deviation would reach
    (doubling - 1) * eps is T_hat = T_obs * (doubling - 1) * eps / D_r.
    The fitted exponent of T_hat against 1/eps increases with the normal
    form order; the direct first-exit experiment cannot see this regime.

    ``results`` maps the order r to its NormalFormResult.
    """
    spec = profile.spectrum
    base = sobolev_norm(profile, s_c)
    sample_ts = np.linspace(0.0, T_obs, n_samples)
    om = spec.omegas.astype(np.longdouble)
    drift = {r: [] for r in results}
    for eps in amplitudes:
        y0 = ((eps / base) * profile.modes).astype(np.complex256)

        def rhs(t, y):
            phase = np.exp((-1j * t) * om)
            u = phase * y
            return (-1j * np.conj(phase)) * P.gradient_modes(u)

        ts, ys, _ = rk45_adaptive(rhs, 0.0, float(T_obs), y0, rtol=tol,
                                  atol=tol * eps * 1e-2, sample_ts=sample_ts)
        states = [np.exp(-1j * om * t) * y for t, y in zip(ts, ys)]
        for r, result in results.items():
            safety = flow_safety(result.chi, result.gamma)
            norms = []
            for u in states:
                v = chi_flow(result.chi, StateVector(u, spec), 1.0,
                             tol=flow_tol, dtype=np.complex256,
                             radius=safety.radius).modes
                w = spec.mode_weights(s_c).astype(np.longdouble)
                norms.append(float(np.sqrt(np.sum((w * np.abs(v)) ** 2))))
            D = max(abs(x - norms[0]) for x in norms[1:])
            drift[r].append({"eps": float(eps), "drift": D,
                             "T_hat": T_obs * (doubling - 1.0) * eps / max(D, 1e-300)})
    out = {"rows": drift, "exponents": {}}
    for r, rows in drift.items():
        xs = np.log([1.0 / row["eps"] for row in rows])
        ys2 = np.log([row["T_hat"] for row in rows])
        out["exponents"][r] = float(np.polyfit(xs, ys2, 1)[0]) if len(rows) >= 2 else float("nan")
    return out
