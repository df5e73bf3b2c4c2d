"""Benchmark systems shared across the test suite."""

from __future__ import annotations

import numpy as np

from lpvjump.polyalg import Polynomial, PolyMatrix, VarEnv
from lpvjump.lpvcert import LpvSystem, RateBox, RateVertices


def scalar_jump() -> LpvSystem:
    """xdot = -x with the state doubled at every jump."""
    env = VarEnv.for_params(0)
    return LpvSystem(
        a=PolyMatrix.from_strings(env, [["-1"]]),
        bounds=[],
        jump=PolyMatrix.from_strings(env, [["2"]]),
        rate=RateBox(()),
        name="scalar-jump",
    )


def scalar_unstable_flow() -> LpvSystem:
    """xdot = +x, state quartered at every jump (range dwell-time benchmark)."""
    env = VarEnv.for_params(0)
    return LpvSystem(
        a=PolyMatrix.from_strings(env, [["1"]]),
        bounds=[],
        jump=PolyMatrix.from_strings(env, [["0.25"]]),
        rate=RateBox(()),
        name="scalar-range",
    )


def two_state(rho_max: float, nu: float | None = None) -> LpvSystem:
    """Two-state system, parameter-affine stiffness on [0, rho_max]."""
    env = VarEnv.for_params(1)
    return LpvSystem(
        a=PolyMatrix.from_strings(env, [["0", "1"], ["-2-p1", "-1"]]),
        bounds=[(0.0, rho_max)],
        rate=RateBox.symmetric([nu]) if nu is not None else None,
        name="two-state",
    )


def circle4(nu: float, upsilon: float = 15.0 / 4.0) -> LpvSystem:
    """Four-state system scheduled on the unit circle p1^2 + p2^2 = 1.

    The parameter rate set is given by the two tangent vertices
    (-nu*p2, nu*p1) and (nu*p2, -nu*p1).
    """
    env = VarEnv.for_params(2)
    u = upsilon
    a = PolyMatrix.from_strings(
        env,
        [
            ["0.75", "2", "p1", "p2"],
            ["0", "0.5", "-1*p2", "p1"],
            [f"-{3 * u / 4}*p1", f"{u}*p2 - {2 * u}*p1", f"-{u}", "0"],
            [f"-{3 * u / 4}*p2", f"{u}*p1 - {2 * u}*p2", "0", f"-{u}"],
        ],
    )
    mk = lambda s: Polynomial.parse(s, env)
    verts = [
        (mk(f"-{nu}*p2"), mk(f"{nu}*p1")),
        (mk(f"{nu}*p2"), mk(f"-{nu}*p1")),
    ]
    return LpvSystem(
        a=a,
        bounds=[(-1.0, 1.0), (-1.0, 1.0)],
        ineq=[],
        eq=[mk("p1^2 + p2^2 - 1")],
        rate=RateVertices(tuple(verts)),
        name="circle4",
    )


def ct_design(nu: float) -> LpvSystem:
    """Unstable two-state plant with scalar input for continuous synthesis."""
    env = VarEnv.for_params(1)
    return LpvSystem(
        a=PolyMatrix.from_strings(env, [["3-p1", "1"], ["1-p1", "2+p1"]]),
        b=PolyMatrix.from_strings(env, [["1"], ["1+p1"]]),
        bounds=[(0.0, 1.0)],
        rate=RateBox.symmetric([nu]),
        name="ct-design",
    )


def sd_design_a() -> LpvSystem:
    """Sampled-data benchmark, parameter on [-1, 1] with rate 0.2."""
    env = VarEnv.for_params(1)
    return LpvSystem(
        a=PolyMatrix.from_strings(
            env, [["2*p1", "1.1+p1"], ["-2.2+p1", "-3.3+0.1*p1"]]
        ),
        b=PolyMatrix.from_strings(env, [["2*p1"], ["0.1+p1"]]),
        bounds=[(-1.0, 1.0)],
        rate=RateBox.symmetric([0.2]),
        name="sd-design-a",
    )


def sd_design_b(nu: float) -> LpvSystem:
    """Sampled-data benchmark, double-integrator-like with damping drift."""
    env = VarEnv.for_params(1)
    return LpvSystem(
        a=PolyMatrix.from_strings(env, [["0", "1"], ["0.1", "0.4+0.6*p1"]]),
        b=PolyMatrix.from_strings(env, [["0"], ["1"]]),
        bounds=[(-1.0, 1.0)],
        rate=RateBox.symmetric([nu]),
        name="sd-design-b",
    )


def hurwitz_fixed() -> LpvSystem:
    """Constant stable dynamics with identity jumps (trivially certifiable)."""
    env = VarEnv.for_params(1)
    return LpvSystem(
        a=PolyMatrix.from_strings(env, [["-1", "0"], ["0", "-2"]]),
        bounds=[(0.0, 1.0)],
        rate=RateBox.symmetric([1.0]),
        name="hurwitz",
    )
