"""Combustion model, general triangular block systems, and their nonlinearities.

The model system couples a temperature u1 and a reactant mass fraction u2
through the ignition rate g(u1) = exp(-1/u1) for u1 > 0 (zero otherwise):

    u1_t = lap(u1) + u2 g(u1)
    u2_t = eps lap(u2) - kappa u2 g(u1)

In the frame moving with a front of speed c, the burned end state is
u_minus = (1/kappa, 0) and the unburned one is u_plus = (0, 1).  Everything
downstream (spectral symbols, simulation, norms) works with the perturbation
v = u - u_minus, whose nonlinear part is the closed-form quadratic

    H(v) = (1, -kappa)^T * v2 * (g(1/kappa + v1) - g(1/kappa)).

More general systems with the same block-triangular structure are described
by :class:`BlockSystem`; their nonlinear part is represented as N(v) v with
the matrix-valued N(v) = int_0^1 (Df(t v) - Df(0)) dt.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ModelParams",
    "BlockSystem",
    "EndStatePair",
    "combustion_end_states",
    "eval_g",
    "eval_g_prime",
    "eval_f_combustion",
    "jacobian_combustion",
    "jacobian_at_minus",
    "eval_H",
    "eval_N_times_v",
    "eval_N_times_v_exact",
    "make_combustion_system",
    "make_exo_endo_system",
    "make_gasless_system",
    "check_block_structure",
    "lipschitz_probe",
    "sample_ball",
    "divided_difference",
    "central_difference_jacobian",
]


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless constants of the combustion model plus the weight exponent.

    epsilon : reactant/temperature diffusion ratio, 0 <= epsilon < 1
    kappa   : reaction stoichiometry, kappa > 0
    c       : wave speed, c > 0
    alpha   : exponential weight exponent, inside the admissible band (0, c/2)
    """

    epsilon: float
    kappa: float
    c: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must satisfy 0 <= epsilon < 1, got {self.epsilon}")
        if not self.kappa > 0.0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.c > 0.0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not 0.0 < self.alpha < self.c / 2.0:
            raise ValueError(
                f"alpha must lie in the admissible band (0, c/2) = (0, {self.c / 2}), "
                f"got {self.alpha}"
            )

    @property
    def u_minus(self) -> np.ndarray:
        return np.array([1.0 / self.kappa, 0.0])

    @property
    def u_plus(self) -> np.ndarray:
        return np.array([0.0, 1.0])


@dataclass(frozen=True)
class EndStatePair:
    """The pair of constant steady states a front connects."""

    u_minus: np.ndarray
    u_plus: np.ndarray

    def residuals(self, f) -> tuple[float, float]:
        """Max-norm of f at each end state; both must vanish for a valid pair."""
        return (float(np.max(np.abs(f(self.u_minus)))),
                float(np.max(np.abs(f(self.u_plus)))))


def combustion_end_states(params: ModelParams) -> EndStatePair:
    """Burned state (1/kappa, 0) behind the front and unburned (0, 1) ahead."""
    return EndStatePair(u_minus=params.u_minus, u_plus=params.u_plus)


@dataclass
class BlockSystem:
    """General block-triangular reaction-diffusion system in shifted coordinates.

    The state v in R^(n1+n2) measures the deviation from the steady state, so
    f(0) = 0 and the first block satisfies f(v1, 0) = (A1 v1, 0) for a
    constant matrix A1 (checked by randomized probing at construction).

    f and jac must be stateless callables; f maps an array of shape
    (n, ...) to the same shape (broadcasting over trailing axes), jac maps a
    single state of shape (n,) to the (n, n) Jacobian.

    d1, d2 hold the diagonals of the nonnegative diffusion blocks.  A zero
    entry in d2 (e.g. gasless combustion) is allowed and flagged via
    :attr:`zero_diffusion` rather than rejected.
    """

    n1: int
    n2: int
    d1: np.ndarray
    d2: np.ndarray
    A1: np.ndarray
    f: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    c: float = 1.0
    alpha: float = 0.0
    name: str = "block-system"

    def __post_init__(self):
        self.d1 = np.atleast_1d(np.asarray(self.d1, dtype=float))
        self.d2 = np.atleast_1d(np.asarray(self.d2, dtype=float))
        self.A1 = np.atleast_2d(np.asarray(self.A1, dtype=float))
        if self.d1.shape != (self.n1,) or self.d2.shape != (self.n2,):
            raise ValueError("diffusion diagonals must match the block sizes")
        if np.any(self.d1 < 0.0) or np.any(self.d2 < 0.0):
            raise ValueError("diffusion coefficients must be nonnegative")
        if self.A1.shape != (self.n1, self.n1):
            raise ValueError("A1 must be n1 x n1")
        if not self.c > 0.0:
            raise ValueError("wave speed c must be positive")
        if self.alpha < 0.0:
            raise ValueError("weight exponent alpha must be nonnegative")

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def diffusion(self) -> np.ndarray:
        """Full diagonal of the diffusion matrix D."""
        return np.concatenate([self.d1, self.d2])

    @property
    def zero_diffusion(self) -> bool:
        """True when some diffusion coefficient vanishes (flagged, not rejected)."""
        return bool(np.any(self.diffusion == 0.0))

    @property
    def linearization(self) -> np.ndarray:
        """Jacobian of f at the steady state v = 0."""
        return self.jac(np.zeros(self.n))


def eval_g(u1):
    """Ignition rate g(u1) = exp(-1/u1) for u1 > 0, exactly 0 for u1 <= 0.

    Accepts scalars or arrays; smooth with flat contact at the cutoff.
    """
    u = np.asarray(u1, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0.0
    np.exp(np.divide(-1.0, u, out=np.full_like(u, -np.inf), where=pos), out=out, where=pos)
    if np.ndim(u1) == 0:
        return float(out)
    return out


def eval_g_prime(u1):
    """Derivative g'(u1) = exp(-1/u1)/u1^2 for u1 > 0, 0 otherwise."""
    u = np.asarray(u1, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0.0
    np.exp(np.divide(-1.0, u, out=np.full_like(u, -np.inf), where=pos), out=out, where=pos)
    np.divide(out, u * u, out=out, where=pos)
    if np.ndim(u1) == 0:
        return float(out)
    return out


def eval_f_combustion(params: ModelParams, u) -> np.ndarray:
    """Reaction term f(u) = (u2 g(u1), -kappa u2 g(u1)) of the model system.

    u has shape (2,) or (2, ...); the output matches.
    """
    u = np.asarray(u, dtype=float)
    r = u[1] * eval_g(u[0])
    return np.stack([r, -params.kappa * r])


def jacobian_combustion(params: ModelParams, u) -> np.ndarray:
    """Analytic Jacobian of the reaction term at a state u of shape (2,)."""
    u = np.asarray(u, dtype=float)
    g = eval_g(u[0])
    gp = eval_g_prime(u[0])
    return np.array(
        [
            [u[1] * gp, g],
            [-params.kappa * u[1] * gp, -params.kappa * g],
        ]
    )


def jacobian_at_minus(params: ModelParams) -> np.ndarray:
    """Jacobian of f at the burned end state u_minus = (1/kappa, 0).

    Closed form ((0, e^-kappa), (0, -kappa e^-kappa)); the zero first column
    is the source of the triangular structure.
    """
    ek = np.exp(-params.kappa)
    return np.array([[0.0, ek], [0.0, -params.kappa * ek]])


def eval_H(params: ModelParams, v) -> np.ndarray:
    """Quadratic nonlinearity of the perturbation equation about u_minus.

    H(v) = (1, -kappa)^T * v2 * (g(1/kappa + v1) - g(1/kappa)); vanishes to
    second order at v = 0 and identically when v1 = 0 or v2 = 0.
    v has shape (2,) or (2, ...).
    """
    v = np.asarray(v, dtype=float)
    m = eval_g(1.0 / params.kappa + v[0]) - np.exp(-params.kappa)
    r = np.asarray(m * v[1])
    return np.stack([r, -params.kappa * r])


def eval_N_times_v(sys: BlockSystem, v, quad_nodes: int = 32) -> np.ndarray:
    """Quadrature approximation of N(v) v with N(v) = int_0^1 (Df(tv) - Df(0)) dt.

    Gauss-Legendre nodes on [0, 1]; quad_nodes = 32 keeps the identity
    N(v) v = f(v) - f(0) - Df(0) v below 1e-10 over the unit ball (16 nodes
    leave ~1e-8 errors near the flat cutoff of the ignition rate).
    """
    if quad_nodes < 2:
        raise ValueError(f"quad_nodes must be >= 2, got {quad_nodes}")
    v = np.asarray(v, dtype=float)
    x, w = np.polynomial.legendre.leggauss(quad_nodes)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * w
    B = sys.linearization
    N = np.zeros((sys.n, sys.n))
    for ti, wi in zip(t, wt):
        N += wi * (sys.jac(ti * v) - B)
    return N @ v


def eval_N_times_v_exact(sys: BlockSystem, v) -> np.ndarray:
    """Closed form N(v) v = f(v) - f(0) - Df(0) v, the quadrature-free identity.

    Used where exactness matters more than exercising the integral form
    (simulation right-hand sides, Lipschitz probing).
    """
    v = np.asarray(v, dtype=float)
    zero = np.zeros(sys.n)
    B = sys.linearization
    fv = sys.f(v)
    lin = np.tensordot(B, v, axes=(1, 0))
    return fv - sys.f(zero).reshape((sys.n,) + (1,) * (v.ndim - 1)) - lin


def make_combustion_system(params: ModelParams) -> BlockSystem:
    """Combustion model as a BlockSystem in coordinates shifted to u_minus."""
    kappa = params.kappa
    u_minus = np.array([1.0 / kappa, 0.0])

    def f(v):
        v = np.asarray(v, dtype=float)
        shift = u_minus.reshape((2,) + (1,) * (v.ndim - 1))
        return eval_f_combustion(params, v + shift)

    def jac(v):
        return jacobian_combustion(params, np.asarray(v, dtype=float) + u_minus)

    sys = BlockSystem(
        n1=1,
        n2=1,
        d1=np.array([1.0]),
        d2=np.array([params.epsilon]),
        A1=np.zeros((1, 1)),
        f=f,
        jac=jac,
        c=params.c,
        alpha=params.alpha,
        name="combustion",
    )
    check_block_structure(sys)
    return sys


def _arrhenius(a: float, b: float):
    def fi(u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        pos = u > 0.0
        np.exp(np.divide(-b, u, out=np.full_like(u, -np.inf), where=pos), out=out, where=pos)
        return a * out

    def fip(u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        pos = u > 0.0
        np.exp(np.divide(-b, u, out=np.full_like(u, -np.inf), where=pos), out=out, where=pos)
        np.divide(out * b, u * u, out=out, where=pos)
        return a * out

    return fi, fip


def make_exo_endo_system(
    d2: float,
    d3: float,
    sigma: float,
    tau: float,
    a: Sequence[float],
    b: Sequence[float],
    c: float = 1.0,
    alpha: float = 0.0,
) -> BlockSystem:
    """Three-species system with one exothermic and one endothermic reactant.

    State (y1, y2, y3) = (temperature, exothermic reactant, endothermic
    reactant), rates f_i(u) = a_i exp(-b_i/u) for u > 0 (zero otherwise):

        y1_t = lap(y1) + y2 f2(y1) - sigma y3 f3(y1)
        y2_t = d2 lap(y2) - y2 f2(y1)
        y3_t = d3 lap(y3) - tau y3 f3(y1)

    Block split n1 = 1 (temperature), n2 = 2; A1 = 0 since the reactions
    switch off when the reactants vanish or the temperature is nonpositive.
    """
    a2, a3 = a
    b2, b3 = b
    for nm, val in (("d2", d2), ("d3", d3), ("sigma", sigma), ("tau", tau),
                    ("a2", a2), ("a3", a3), ("b2", b2), ("b3", b3)):
        if not val > 0.0:
            raise ValueError(f"{nm} must be positive, got {val}")
    f2, f2p = _arrhenius(a2, b2)
    f3, f3p = _arrhenius(a3, b3)

    def f(y):
        y = np.asarray(y, dtype=float)
        r2 = y[1] * f2(y[0])
        r3 = y[2] * f3(y[0])
        return np.stack([r2 - sigma * r3, -r2, -tau * r3])

    def jac(y):
        y = np.asarray(y, dtype=float)
        v2, v3 = f2(y[0]), f3(y[0])
        v2p, v3p = f2p(y[0]), f3p(y[0])
        return np.array(
            [
                [y[1] * v2p - sigma * y[2] * v3p, v2, -sigma * v3],
                [-y[1] * v2p, -v2, 0.0],
                [-tau * y[2] * v3p, 0.0, -tau * v3],
            ]
        )

    sys = BlockSystem(
        n1=1,
        n2=2,
        d1=np.array([1.0]),
        d2=np.array([d2, d3]),
        A1=np.zeros((1, 1)),
        f=f,
        jac=jac,
        c=c,
        alpha=alpha,
        name="exo-endo",
    )
    check_block_structure(sys)
    return sys


def make_gasless_system(beta: float, c: float = 1.0, alpha: float = 0.0) -> BlockSystem:
    """Gasless combustion u_t = lap(u) + v g(u), v_t = -beta v g(u).

    The fuel equation carries no diffusion, so the second diffusion block is
    zero; this is permitted and exposed through the zero_diffusion flag.
    Coordinates are shifted to the burned state (1/beta, 0).
    """
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    u_minus = np.array([1.0 / beta, 0.0])

    def f(v):
        v = np.asarray(v, dtype=float)
        shift = u_minus.reshape((2,) + (1,) * (v.ndim - 1))
        u = v + shift
        r = u[1] * eval_g(u[0])
        return np.stack([r, -beta * r])

    def jac(v):
        u = np.asarray(v, dtype=float) + u_minus
        g = eval_g(u[0])
        gp = eval_g_prime(u[0])
        return np.array([[u[1] * gp, g], [-beta * u[1] * gp, -beta * g]])

    sys = BlockSystem(
        n1=1,
        n2=1,
        d1=np.array([1.0]),
        d2=np.array([0.0]),
        A1=np.zeros((1, 1)),
        f=f,
        jac=jac,
        c=c,
        alpha=alpha,
        name="gasless",
    )
    check_block_structure(sys)
    return sys


def check_block_structure(sys: BlockSystem, trials: int = 1000, seed: int = 0,
                          tol: float = 1e-12) -> float:
    """Randomized probe of f(v1, 0) = (A1 v1, 0) over `trials` draws.

    Returns the largest residual found; raises if it exceeds tol.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        v1 = rng.normal(scale=2.0, size=sys.n1)
        v = np.concatenate([v1, np.zeros(sys.n2)])
        expect = np.concatenate([sys.A1 @ v1, np.zeros(sys.n2)])
        worst = max(worst, float(np.max(np.abs(sys.f(v) - expect))))
    if worst > tol:
        raise ValueError(
            f"block structure violated: f(v1, 0) differs from (A1 v1, 0) "
            f"by {worst:.3e} > {tol:.1e}"
        )
    return worst


def sample_ball(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    """Uniform draw from the n-ball: Gaussian direction times radius * U^(1/n)."""
    d = rng.normal(size=n)
    d /= np.linalg.norm(d)
    return d * radius * rng.random() ** (1.0 / n)


def lipschitz_probe(sys: BlockSystem, ball_radius: float, trials: int,
                    seed: int) -> float:
    """Sampled Lipschitz constant of v -> N(v) v on the ball of given radius.

    Max over `trials` pairs (v, w) of |N(v)v - N(w)w| / |v - w| in Euclidean
    norm, a finite-dimensional surrogate for the local Lipschitz property of
    the nonlinearity.  Deterministic for a fixed seed.
    """
    if not ball_radius > 0.0:
        raise ValueError(f"ball_radius must be positive, got {ball_radius}")
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        v = sample_ball(rng, sys.n, ball_radius)
        w = sample_ball(rng, sys.n, ball_radius)
        dvw = np.linalg.norm(v - w)
        if dvw == 0.0:
            continue
        dn = np.linalg.norm(eval_N_times_v_exact(sys, v) - eval_N_times_v_exact(sys, w))
        best = max(best, float(dn / dvw))
    return best


def divided_difference(func, x: float, order: int, h: float) -> float:
    """Forward divided difference of the given order at x with step h."""
    acc = 0.0
    for j in range(order + 1):
        acc += (-1.0) ** (order - j) * _binom(order, j) * func(x + j * h)
    return acc / h**order


def _binom(n: int, k: int) -> float:
    from math import comb

    return float(comb(n, k))


def central_difference_jacobian(f: Callable[[np.ndarray], np.ndarray],
                                u: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian, step 1e-6 (1 + |u|).

    Testing fallback only; verification paths require the analytic Jacobian
    because differencing noise would pollute the quadrature and the
    Lipschitz probes.
    """
    u = np.asarray(u, dtype=float)
    n = u.size
    h = 1e-6 * (1.0 + np.linalg.norm(u))
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        cols.append((np.asarray(f(u + e)) - np.asarray(f(u - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)
