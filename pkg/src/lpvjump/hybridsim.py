"""Hybrid trajectory simulation: flow between jumps, resets at jumps.

Parameter trajectories, jump-time sequences and closed-loop simulation
for both continuous gain-scheduled feedback (timer-dependent gain,
reset at jumps) and sampled-data feedback (input held between jumps,
updated through the jump map of the augmented state).  Integration is
classical fixed-step RK4 with the final sub-step of every interval
shortened to land exactly on the jump time, so jump maps are applied
atomically and never straddled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, IO, Sequence

import numpy as np

from .lpvcert.certify import Certificate, ControllerGain
from .lpvcert.system import LpvSystem

__all__ = [
    "ParamTrajectory",
    "make_param_trajectory",
    "make_jump_sequence",
    "HybridTrajectory",
    "simulate",
    "eval_lyapunov",
]


class ParamTrajectory:
    """Callable parameter signal with an optional redraw hook at jumps."""

    def __init__(self, fn: Callable[[float], np.ndarray], kind: str,
                 on_jump: Callable[[float], None] | None = None):
        self._fn = fn
        self.kind = kind
        self._on_jump = on_jump

    def value(self, t: float) -> np.ndarray:
        return self._fn(t)

    def jump_reset(self, t: float) -> None:
        if self._on_jump is not None:
            self._on_jump(t)


def make_param_trajectory(
    bounds: Sequence[tuple[float, float]],
    kind: str,
    nu: float | Sequence[float] = 0.0,
    phase: float | Sequence[float] = 0.0,
    seed: int | None = None,
    value: Sequence[float] | None = None,
    table: tuple[np.ndarray, np.ndarray] | None = None,
) -> ParamTrajectory:
    """Parameter signals staying inside the box with rate bounded by nu.

    kinds: 'constant', 'sinusoid' (mid + amp*sin(omega t + phase) with
    omega = nu/amp so the rate bound is tight), 'phase-jump' (same
    sinusoid, phase redrawn uniformly on [0, 2pi] at every jump) and
    'table' (linear interpolation of user samples).
    """
    bounds = [(float(lo), float(hi)) for lo, hi in bounds]
    npar = len(bounds)
    mid = np.array([(lo + hi) / 2 for lo, hi in bounds])
    amp = np.array([(hi - lo) / 2 for lo, hi in bounds])
    nus = np.broadcast_to(np.asarray(nu, dtype=float), (npar,)).copy()

    if kind == "constant":
        vals = mid if value is None else np.asarray(value, dtype=float)
        if len(vals) != npar:
            raise ValueError("constant value arity mismatch")
        return ParamTrajectory(lambda t: vals.copy(), kind)

    if kind in ("sinusoid", "phase-jump"):
        omega = np.where(amp > 0, nus / np.where(amp > 0, amp, 1.0), 0.0)
        if kind == "sinusoid":
            ph = np.broadcast_to(np.asarray(phase, dtype=float), (npar,)).copy()
            return ParamTrajectory(
                lambda t: mid + amp * np.sin(omega * t + ph), kind
            )
        if seed is None:
            raise ValueError("phase-jump trajectories need a seed")
        rng = np.random.default_rng(seed)
        state = {"ph": rng.uniform(0.0, 2 * np.pi, npar)}

        def fn(t: float) -> np.ndarray:
            return mid + amp * np.sin(omega * t + state["ph"])

        def on_jump(t: float) -> None:
            state["ph"] = rng.uniform(0.0, 2 * np.pi, npar)

        return ParamTrajectory(fn, kind, on_jump)

    if kind == "table":
        if table is None:
            raise ValueError("table trajectories need (times, values)")
        times = np.asarray(table[0], dtype=float)
        vals = np.atleast_2d(np.asarray(table[1], dtype=float))
        if vals.shape != (len(times), npar):
            raise ValueError("table shape must be (len(times), n_params)")

        def interp(t: float) -> np.ndarray:
            return np.array(
                [np.interp(t, times, vals[:, i]) for i in range(npar)]
            )

        return ParamTrajectory(interp, kind)

    raise ValueError(f"unknown trajectory kind {kind!r}")


def make_jump_sequence(
    kind: str,
    horizon: float,
    seed: int | None = None,
    tbar: float | None = None,
    tmin: float | None = None,
    tmax: float | None = None,
    times: Sequence[float] | None = None,
) -> np.ndarray:
    """Jump instants in (0, horizon]; no jump at t = 0.

    'min-dwell' draws gaps tbar*(1+U) with U uniform on [0,1);
    'range-dwell' draws gaps uniformly from [tmin, tmax]; 'explicit'
    validates user times; 'none' returns no jumps.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if kind == "none":
        return np.zeros(0)
    if kind == "explicit":
        ts = np.asarray(sorted(float(t) for t in (times or [])))
        if len(ts) and ts[0] <= 0:
            raise ValueError("no jump may occur at or before t = 0")
        return ts[ts <= horizon]
    if seed is None:
        raise ValueError(f"{kind} jump sequences need a seed")
    rng = np.random.default_rng(seed)
    out = []
    t = 0.0
    while True:
        if kind == "min-dwell":
            if tbar is None or tbar <= 0:
                raise ValueError("min-dwell sequences need tbar > 0")
            gap = tbar * (1.0 + rng.uniform())
        elif kind == "range-dwell":
            if tmin is None or tmax is None or not (0 < tmin <= tmax):
                raise ValueError("range-dwell sequences need 0 < tmin <= tmax")
            gap = rng.uniform(tmin, tmax)
        else:
            raise ValueError(f"unknown jump-sequence kind {kind!r}")
        t += gap
        if t > horizon:
            return np.array(out)
        out.append(t)


@dataclass
class HybridTrajectory:
    times: np.ndarray
    states: np.ndarray  # (S, n)
    params: np.ndarray  # (S, N)
    taus: np.ndarray  # time since the last jump, per sample
    next_jump: np.ndarray  # scheduled next jump time (nan on the tail)
    jump_flags: np.ndarray  # True for post-jump samples
    inputs: np.ndarray | None = None  # (S, m) for sampled-data runs
    v: np.ndarray | None = None
    diverged: bool = False

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, fh: IO[str]) -> None:
        n = self.states.shape[1]
        npar = self.params.shape[1]
        m = 0 if self.inputs is None else self.inputs.shape[1]
        header = (
            ["time"]
            + [f"x{i+1}" for i in range(n)]
            + [f"u{i+1}" for i in range(m)]
            + [f"p{i+1}" for i in range(npar)]
            + ["V", "jump"]
        )
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(len(self.times)):
            row = [repr(float(self.times[k]))]
            row += [repr(float(v)) for v in self.states[k]]
            if self.inputs is not None:
                row += [repr(float(v)) for v in self.inputs[k]]
            row += [repr(float(v)) for v in self.params[k]]
            row.append("" if self.v is None else repr(float(self.v[k])))
            row.append("1" if self.jump_flags[k] else "0")
            w.writerow(row)


def simulate(
    sys: LpvSystem,
    traj: ParamTrajectory,
    jumps: np.ndarray | Sequence[float],
    x0: Sequence[float],
    horizon: float,
    step: float = 1e-3,
    controller: ControllerGain | None = None,
    u0: Sequence[float] | None = None,
    timer_offset: float = 0.0,
    certificate: Certificate | None = None,
) -> HybridTrajectory:
    """Integrate the hybrid closed/open loop and sample it densely.

    Continuous controllers are fed u = K(t - t_k + timer_offset, p(t)) x;
    sampled-data controllers hold u constant between jumps and update it
    through u+ = K1 x + K2 u at each jump.  Non-finite states truncate
    the run and mark it diverged.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    jumps = np.asarray(sorted(float(t) for t in np.asarray(jumps).ravel()))
    jumps = jumps[(jumps > 0) & (jumps <= horizon)]
    x = np.asarray(x0, dtype=float)
    if x.shape != (sys.n,):
        raise ValueError(f"x0 must have length {sys.n}")

    sampled = controller is not None and controller.kind == "sampled-data"
    continuous = controller is not None and controller.kind == "continuous"
    u = np.zeros(sys.m)
    if u0 is not None:
        u = np.asarray(u0, dtype=float)

    av_cache: dict = {}

    def matrices(theta: np.ndarray):
        key = tuple(theta.tolist())
        got = av_cache.get(key)
        if got is None:
            pt = sys.full_points(theta[None, :])[0]
            a = sys.a.eval(pt)
            b = sys.b.eval(pt) if sys.b is not None else None
            got = (a, b)
            if len(av_cache) < 4096:
                av_cache[key] = got
        return got

    def flow_rhs(t: float, state: np.ndarray, t_last: float) -> np.ndarray:
        theta = traj.value(t)
        a, bmat = matrices(theta)
        if sampled:
            xs, us = state[: sys.n], state[sys.n :]
            dx = a @ xs + bmat @ us
            return np.concatenate([dx, np.zeros(sys.m)])
        xs = state
        dx = a @ xs
        if continuous:
            k = controller.at(t - t_last + timer_offset, theta)
            dx = dx + bmat @ (k @ xs)
        elif sys.m and bmat is not None and u0 is not None:
            dx = dx + bmat @ u
        return dx

    times = [0.0]
    states = [np.concatenate([x, u]) if sampled else x.copy()]
    params = [traj.value(0.0)]
    taus = [0.0]
    flags = [False]
    nexts = [jumps[0] if len(jumps) else np.nan]
    diverged = False

    t_last = 0.0
    t = 0.0
    state = states[0].copy()
    boundaries = list(jumps) + ([horizon] if (len(jumps) == 0 or jumps[-1] < horizon) else [])

    for bi, t_end in enumerate(boundaries):
        nxt = t_end if (bi < len(jumps)) else np.nan
        while t < t_end - 1e-15 and not diverged:
            h = min(step, t_end - t)
            k1 = flow_rhs(t, state, t_last)
            k2 = flow_rhs(t + h / 2, state + (h / 2) * k1, t_last)
            k3 = flow_rhs(t + h / 2, state + (h / 2) * k2, t_last)
            k4 = flow_rhs(t + h, state + h * k3, t_last)
            state = state + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            t = t + h
            if t >= t_end - 1e-15:
                t = t_end
            if not np.all(np.isfinite(state)):
                diverged = True
            times.append(t)
            states.append(state.copy())
            params.append(traj.value(t))
            taus.append(t - t_last)
            flags.append(False)
            nexts.append(nxt)
        if diverged or bi >= len(jumps):
            break
        # apply the jump map exactly at t_end
        theta = traj.value(t_end)
        pt = sys.full_points(theta[None, :])[0]
        jmat = sys.jump.eval(pt)
        if sampled:
            xs, us = state[: sys.n], state[sys.n :]
            k1m, k2m = controller.k1k2(theta)
            state = np.concatenate([jmat @ xs, k1m @ xs + k2m @ us])
        else:
            state = jmat @ state
        traj.jump_reset(t_end)
        t_last = t_end
        times.append(t_end)
        states.append(state.copy())
        params.append(traj.value(t_end + 0.0))
        taus.append(0.0)
        flags.append(True)
        nexts.append(jumps[bi + 1] if bi + 1 < len(jumps) else np.nan)
        if t_end >= horizon:
            break

    arr_states = np.array(states)
    out = HybridTrajectory(
        times=np.array(times),
        states=arr_states[:, : sys.n],
        params=np.array(params),
        taus=np.array(taus),
        next_jump=np.array(nexts),
        jump_flags=np.array(flags),
        inputs=arr_states[:, sys.n :] if sampled else None,
        diverged=diverged,
    )
    if certificate is not None:
        out.v = _lyapunov_series(sys, certificate, out)
    return out


def _lyapunov_series(sys: LpvSystem, cert: Certificate, traj: HybridTrajectory) -> np.ndarray:
    """V along the samples, with the clock clamped per the certificate mode."""
    mode = cert.mode
    n = sys.n
    if mode in ("min-dwell", "quadratic", "robust"):
        tbar = float(cert.dwell) if mode == "min-dwell" else 0.0
        tau = np.clip(traj.taus, 0.0, tbar) if mode == "min-dwell" else np.zeros_like(traj.taus)
        pts = sys.full_points(traj.params, tau=tau)
        sv = cert.S.eval_many(pts)
        x = traj.states
    elif mode == "synth-ct":
        tbar = float(cert.dwell)
        tau = np.clip(traj.taus, 0.0, tbar)
        pts = sys.full_points(traj.params, tau=tau)
        sv = np.linalg.inv(cert.R.eval_many(pts))
        x = traj.states
    elif mode in ("range-dwell", "synth-sd"):
        tmin, tmax = cert.dwell
        remaining = traj.next_jump - traj.times
        remaining = np.where(np.isfinite(remaining), remaining, tmax)
        tau = np.clip(remaining, 0.0, tmax)
        pts = sys.full_points(traj.params, tau=tau)
        if mode == "range-dwell":
            sv = cert.S.eval_many(pts)
            x = traj.states
        else:
            sv = np.linalg.inv(cert.R.eval_many(pts))
            x = np.hstack([traj.states, traj.inputs])
    else:
        raise ValueError(f"unknown certificate mode {mode!r}")
    return np.einsum("si,sij,sj->s", x, sv, x)


def eval_lyapunov(sys: LpvSystem, cert: Certificate, traj: HybridTrajectory) -> dict:
    """Empirical certificate check along a trajectory.

    Returns the V series, the worst finite-difference flow violation
    max(dV/dt + eps*|x|^2) over intra-interval sample pairs, and the worst
    jump violation max(V_post - V_pre) over jumps.
    """
    v = traj.v if traj.v is not None else _lyapunov_series(sys, cert, traj)
    x = traj.states if traj.inputs is None else np.hstack([traj.states, traj.inputs])
    flow_max = -np.inf
    jump_max = -np.inf
    jump_count = 0
    eps = cert.epsilon
    for k in range(len(v) - 1):
        dt = traj.times[k + 1] - traj.times[k]
        if traj.jump_flags[k + 1]:
            jump_count += 1
            jump_max = max(jump_max, v[k + 1] - v[k])
        elif dt > 0:
            rate = (v[k + 1] - v[k]) / dt + eps * float(x[k] @ x[k])
            flow_max = max(flow_max, rate)
    return {
        "v": v,
        "flow_violation_max": flow_max if np.isfinite(flow_max) else 0.0,
        "jump_violation_max": jump_max if jump_count else 0.0,
        "jump_count": jump_count,
    }
