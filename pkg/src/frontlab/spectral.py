"""Fourier symbols, essential-spectrum sweeps, and exact per-mode propagators.

The constant-coefficient linearization about an end state acts per Fourier
frequency xi as the matrix

    S(xi) = -|xi|^2 D + (i c xi_1 - alpha c) I + (alpha^2 - 2 i xi_1 alpha) D + B

where D is the diagonal diffusion matrix, c the frame speed, B the Jacobian
of the reaction term at the end state, and alpha the exponent of the weight
exp(alpha z) (alpha = 0 recovers the unweighted symbol).  Its eigenvalue
curves over xi in R^d are the essential spectrum; their largest real part is
the spectral abscissa that controls linear decay.

For the combustion model B is upper triangular with real diagonal and the
curves are two explicit parabolas in |xi|:

    lambda_1(xi) = -|xi|^2        + (c - 2 alpha) i xi_1 + alpha^2 - alpha c
    lambda_2(xi) = -eps |xi|^2    + (c - 2 eps alpha) i xi_1
                   + eps alpha^2 - alpha c - kappa e^(-kappa)

so abscissas are closed-form and the grid sweep is confirmation, not the
source of truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import BlockSystem, ModelParams, jacobian_at_minus

__all__ = [
    "SymbolMatrix",
    "SpectrumSweep",
    "eval_symbol",
    "eigvals_symbol",
    "family_real_parts",
    "closed_form_abscissa",
    "abscissa_unweighted",
    "abscissa_weighted",
    "optimal_weight",
    "block_abscissas",
    "auto_extent",
    "sweep_symbol",
    "tensor_sum_check",
    "expm_triangular_2x2",
    "phi_difference_quotient",
    "semigroup_envelope",
    "write_spectrum_csv",
]

CONFLUENT_THRESHOLD = 1e-12


@dataclass(frozen=True)
class SymbolMatrix:
    """Evaluation rule xi -> S(xi) for one linearized end-state operator.

    d     : space dimension (>= 1); xi_1 is the frame/weight axis
    D     : diagonal of the diffusion matrix, shape (n,)
    c     : frame speed
    B     : reaction Jacobian at the end state, shape (n, n)
    alpha : weight exponent (0 for the unweighted symbol)
    """

    d: int
    D: tuple
    c: float
    B: tuple
    alpha: float = 0.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("space dimension must be >= 1")
        if self.alpha < 0.0:
            raise ValueError("alpha must be nonnegative")

    @classmethod
    def from_params(cls, params: ModelParams, d: int = 1,
                    alpha: Optional[float] = None) -> "SymbolMatrix":
        """Combustion-model symbol about u_minus; alpha = None means unweighted."""
        a = params.alpha if alpha is None else float(alpha)
        return cls(d=d, D=(1.0, params.epsilon), c=params.c,
                   B=_freeze(jacobian_at_minus(params)), alpha=a)

    @classmethod
    def from_system(cls, sys: BlockSystem, d: int = 1,
                    alpha: Optional[float] = None) -> "SymbolMatrix":
        a = sys.alpha if alpha is None else float(alpha)
        return cls(d=d, D=tuple(float(x) for x in sys.diffusion), c=sys.c,
                   B=_freeze(sys.linearization), alpha=a)

    @property
    def n(self) -> int:
        return len(self.D)

    @property
    def D_array(self) -> np.ndarray:
        return np.asarray(self.D, dtype=float)

    @property
    def B_array(self) -> np.ndarray:
        return np.asarray(self.B, dtype=float)

    @property
    def is_triangular(self) -> bool:
        """Upper-triangular B makes S(xi) upper triangular for every xi."""
        return bool(np.all(np.tril(self.B_array, -1) == 0.0))


def _freeze(mat: np.ndarray) -> tuple:
    return tuple(tuple(float(x) for x in row) for row in np.atleast_2d(mat))


def eval_symbol(sym: SymbolMatrix, xi) -> np.ndarray:
    """Symbol matrix S(xi) as a complex (n, n) array.

    Raises ValueError when the frequency dimension does not match sym.d.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (sym.d,):
        raise ValueError(f"expected frequency of dimension {sym.d}, got shape {xi.shape}")
    xi2 = float(np.dot(xi, xi))
    xi1 = float(xi[0])
    D = np.diag(sym.D_array).astype(complex)
    n = sym.n
    out = -xi2 * D
    out += (1j * sym.c * xi1 - sym.alpha * sym.c) * np.eye(n)
    out += (sym.alpha**2 - 2j * xi1 * sym.alpha) * D
    out += sym.B_array
    return out


def _diagonal_curves(sym: SymbolMatrix, xi2, xi1):
    """Diagonal entries of S(xi) for broadcastable |xi|^2 and xi_1 arrays."""
    D = sym.D_array
    Bdiag = np.diag(sym.B_array)
    xi2 = np.atleast_1d(np.asarray(xi2, dtype=float))[..., None]
    xi1 = np.atleast_1d(np.asarray(xi1, dtype=float))[..., None]
    return (-xi2 * D + (1j * sym.c * xi1 - sym.alpha * sym.c)
            + (sym.alpha**2 - 2j * xi1 * sym.alpha) * D + Bdiag)


def eigvals_symbol(sym: SymbolMatrix, xi) -> np.ndarray:
    """Eigenvalues of S(xi), sorted by descending real part.

    Triangular symbols return their diagonal entries exactly; otherwise a
    dense eigenvalue solve is used and any non-convergence is surfaced as
    numpy.linalg.LinAlgError.
    """
    if sym.is_triangular:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if xi.shape != (sym.d,):
            raise ValueError(f"expected frequency of dimension {sym.d}, got shape {xi.shape}")
        vals = _diagonal_curves(sym, np.dot(xi, xi), xi[0])[0]
    else:
        vals = np.linalg.eigvals(eval_symbol(sym, xi))
    order = np.argsort(-vals.real, kind="stable")
    return vals[order]


def family_real_parts(sym: SymbolMatrix) -> np.ndarray:
    """Per-family abscissas of a triangular symbol (vertex of each parabola).

    Family j has real part -D_j |xi|^2 + alpha^2 D_j - alpha c + B_jj, maximal
    at xi = 0; a zero diffusion entry makes the family constant in |xi|.
    """
    if not sym.is_triangular:
        raise ValueError("closed-form family abscissas require a triangular symbol")
    return sym.alpha**2 * sym.D_array - sym.alpha * sym.c + np.diag(sym.B_array)


def closed_form_abscissa(sym: SymbolMatrix) -> Optional[float]:
    """Exact spectral abscissa for triangular symbols, None otherwise."""
    if not sym.is_triangular:
        return None
    return float(np.max(family_real_parts(sym)))


def abscissa_unweighted(params: ModelParams) -> float:
    """Abscissa of the unweighted essential spectrum: exactly 0.

    The first curve family -|xi|^2 + i c xi_1 touches the imaginary axis at
    xi = 0; the second sits strictly to the left for kappa > 0.
    """
    return float(max(0.0, -params.kappa * np.exp(-params.kappa)))


def abscissa_weighted(params: ModelParams, alpha: Optional[float] = None) -> float:
    """Abscissa in the weighted space: max of the two family vertices.

    Evaluates max(alpha^2 - c alpha, eps alpha^2 - c alpha - kappa e^-kappa)
    for any alpha >= 0 (not only the admissible band), which equals
    alpha^2 - c alpha whenever eps < 1 and kappa > 0.
    """
    a = params.alpha if alpha is None else float(alpha)
    if a < 0.0:
        raise ValueError("alpha must be nonnegative")
    first = a**2 - params.c * a
    second = params.epsilon * a**2 - params.c * a - params.kappa * np.exp(-params.kappa)
    return float(max(first, second))


def optimal_weight(c: float) -> tuple[float, float]:
    """Minimizer of alpha -> alpha^2 - c alpha: alpha* = c/2, value -c^2/4.

    alpha* sits at the closure of the admissible band (0, c/2).
    """
    if not c > 0.0:
        raise ValueError(f"c must be positive, got {c}")
    return c / 2.0, -(c**2) / 4.0


def block_abscissas(params: ModelParams) -> tuple[float, float]:
    """Unweighted abscissas of the two diagonal block operators.

    The first block (heat plus drift) gives 0; the second gives
    -kappa e^-kappa < 0, the sharp unweighted decay rate of the v2 block.
    """
    return 0.0, float(-params.kappa * np.exp(-params.kappa))


@dataclass
class SpectrumSweep:
    """Sampled eigenvalue curves of a symbol over a frequency grid."""

    xi: np.ndarray          # (n_samples, d)
    eigvals: np.ndarray     # (n_samples, n), sorted by descending real part
    realized_abscissa: float
    closed_form_abscissa: Optional[float]
    extent: float
    m: int
    grid_spacing: float
    certified: bool         # extent large enough that the tail cannot move the abscissa

    @property
    def abscissa_uncertainty(self) -> float:
        """Resolution-limited uncertainty for symbols without a closed form."""
        return self.grid_spacing


def auto_extent(sym: SymbolMatrix, margin: float = 1e-9,
                floor: float = 4.0) -> tuple[float, bool]:
    """Per-axis extent R such that frequencies beyond R cannot raise the abscissa.

    Triangular symbols: each family is a parabola in |xi| with vertex at 0,
    so any family with positive diffusion drops below the overall abscissa by
    |xi|^2 D_j; families with zero diffusion are constant and never exceed it.
    General symbols: the numerical-abscissa bound
    Re lambda(S(xi)) <= -min(D) |xi|^2 + alpha^2 max(D) - alpha c + lam_max(Herm B)
    is inverted when min(D) > 0; otherwise the floor is used and the sweep is
    reported as uncertified.
    """
    D = sym.D_array
    if sym.is_triangular:
        fams = family_real_parts(sym)
        A = float(np.max(fams))
        r2 = 0.0
        for fam, dj in zip(fams, D):
            if dj > 0.0:
                r2 = max(r2, (fam - A + margin) / dj)
        return max(floor, float(np.sqrt(max(r2, 0.0)))), True
    dmin = float(np.min(D))
    B = sym.B_array
    herm_top = float(np.max(np.linalg.eigvalsh(0.5 * (B + B.T))))
    a0 = float(np.max(np.linalg.eigvals(eval_symbol(sym, np.zeros(sym.d))).real))
    if dmin <= 0.0:
        return floor, False
    r2 = (sym.alpha**2 * float(np.max(D)) - sym.alpha * sym.c + herm_top - a0 + margin) / dmin
    return max(floor, float(np.sqrt(max(r2, 0.0)))), True


def sweep_symbol(sym: SymbolMatrix, R: Optional[float] = None, m: int = 401) -> SpectrumSweep:
    """Sample the eigenvalue curves on a symmetric per-axis grid of m points.

    m must be odd (>= 3) so the grid contains xi = 0, where the closed-form
    abscissa of the triangular families is attained exactly.
    """
    if m < 3 or m % 2 == 0:
        raise ValueError(f"m must be an odd integer >= 3, got {m}")
    if R is None:
        R, certified = auto_extent(sym)
    else:
        R = float(R)
        certified = sym.is_triangular
        if R <= 0.0:
            raise ValueError("extent R must be positive")
    axis = np.linspace(-R, R, m)
    grids = np.meshgrid(*([axis] * sym.d), indexing="ij")
    xi = np.stack([g.ravel() for g in grids], axis=-1)
    if sym.is_triangular:
        xi2 = np.sum(xi**2, axis=-1)
        vals = _diagonal_curves(sym, xi2, xi[:, 0])
        order = np.argsort(-vals.real, axis=-1, kind="stable")
        vals = np.take_along_axis(vals, order, axis=-1)
    else:
        vals = np.stack([eigvals_symbol(sym, x) for x in xi])
    return SpectrumSweep(
        xi=xi,
        eigvals=vals,
        realized_abscissa=float(np.max(vals.real)),
        closed_form_abscissa=closed_form_abscissa(sym),
        extent=R,
        m=m,
        grid_spacing=float(axis[1] - axis[0]),
        certified=certified,
    )


def tensor_sum_check(params: ModelParams, R: float = 20.0, m: int = 41,
                     d: int = 2) -> dict:
    """Compare the d-dimensional weighted sweep abscissa with the 1-dimensional one.

    Transverse frequencies only append -(sum of squares) scaled by the
    diffusion entries, i.e. the spectrum gains the semiline (-inf, 0] and the
    abscissa is unchanged; both grids contain xi = 0 so the realized values
    agree to rounding.
    """
    if d < 2:
        raise ValueError("tensor-sum comparison needs d >= 2")
    if not R > 0.0 or m < 3:
        raise ValueError("need R > 0 and m >= 3")
    sym1 = SymbolMatrix.from_params(params, d=1)
    symd = SymbolMatrix.from_params(params, d=d)
    sw1 = sweep_symbol(sym1, R=R, m=m)
    swd = sweep_symbol(symd, R=R, m=m)
    return {
        "d": d,
        "abscissa_1d": sw1.realized_abscissa,
        "abscissa_dd": swd.realized_abscissa,
        "difference": abs(sw1.realized_abscissa - swd.realized_abscissa),
        "closed_form": closed_form_abscissa(sym1),
        "extent": R,
        "m": m,
    }


def phi_difference_quotient(a, d, t):
    """Stable (e^(a t) - e^(d t)) / (a - d) for complex scalars or arrays.

    Written as t e^(d t) phi1((a - d) t) with phi1(z) = (e^z - 1)/z evaluated
    through expm1, which is cancellation-free for all separations.
    """
    a = np.asarray(a, dtype=complex)
    d = np.asarray(d, dtype=complex)
    t = np.asarray(t, dtype=float)
    return t * np.exp(d * t) * _phi1((a - d) * t)


def _phi1(z: np.ndarray) -> np.ndarray:
    """(e^z - 1)/z elementwise, series for small |z|, expm1-based otherwise."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-4
    zs = z[small]
    out[small] = 1.0 + zs / 2.0 + zs**2 / 6.0 + zs**3 / 24.0
    zb = z[~small]
    x, y = zb.real, zb.imag
    expm1c = (np.expm1(x) * np.cos(y) - 2.0 * np.sin(y / 2.0) ** 2
              ) + 1j * np.exp(x) * np.sin(y)
    out[~small] = expm1c / zb
    return out


def expm_triangular_2x2(a: complex, b: complex, d: complex, t: float) -> np.ndarray:
    """Exact exponential of t * ((a, b), (0, d)).

    Off-diagonal entry b (e^(a t) - e^(d t)) / (a - d), replaced by its
    confluent limit b t e^(a t) (1 - (a - d) t / 2) when |a - d| < 1e-12;
    the retained first-order term keeps 1e-10 accuracy across the switch.
    """
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    a = complex(a)
    d = complex(d)
    b = complex(b)
    eat = np.exp(a * t)
    edt = np.exp(d * t)
    if abs(a - d) < CONFLUENT_THRESHOLD:
        off = b * t * eat * (1.0 - (a - d) * t / 2.0)
    else:
        off = b * complex(phi_difference_quotient(a, d, t))
    return np.array([[eat, off], [0.0, edt]], dtype=complex)


def _specnorm_upper_2x2(e11, e12, e22):
    """Largest singular value of ((e11, e12), (0, e22)), vectorized."""
    f2 = np.abs(e11) ** 2 + np.abs(e12) ** 2 + np.abs(e22) ** 2
    det2 = np.abs(e11 * e22) ** 2
    disc = np.sqrt(np.maximum(f2**2 - 4.0 * det2, 0.0))
    return np.sqrt(0.5 * (f2 + disc))


def semigroup_envelope(params: ModelParams, t_grid, xi_grid,
                       cap: float = 1e6,
                       alpha: Optional[float] = None) -> tuple[float, float]:
    """Measured constant K in |e^(t L_alpha)| <= K e^(-nu t) with the sharp nu.

    nu is the negated weighted abscissa (positive inside the admissible
    band and at its closure); K_est is the max over the (t, xi) samples of
    e^(nu t) |exp(t S(xi))| in spectral norm, computed with the exact
    triangular propagator.  A value beyond `cap` indicates nu was taken
    outside the valid band and is reported as an error.
    """
    al = params.alpha if alpha is None else float(alpha)
    nu = -abscissa_weighted(params, alpha=al)
    if not nu > 0.0:
        raise ValueError("weighted abscissa is not negative; alpha outside the valid band")
    t = np.asarray(t_grid, dtype=float).reshape(-1, 1)
    if np.any(t < 0.0):
        raise ValueError("t_grid must be nonnegative")
    xi = np.asarray(xi_grid, dtype=float).reshape(1, -1)
    sym = SymbolMatrix.from_params(params, d=1, alpha=al)
    D = sym.D_array
    Bd = np.diag(sym.B_array)
    a = (-xi**2 * D[0] + (1j * params.c * xi - al * params.c)
         + (al**2 - 2j * xi * al) * D[0] + Bd[0])
    d = (-xi**2 * D[1] + (1j * params.c * xi - al * params.c)
         + (al**2 - 2j * xi * al) * D[1] + Bd[1])
    b = sym.B_array[0][1]
    e11 = np.exp(a * t)
    e22 = np.exp(d * t)
    e12 = b * t * e22 * _phi1((a - d) * t)
    env = np.exp(nu * t) * _specnorm_upper_2x2(e11, e12, e22)
    K = float(np.max(env))
    if K > cap:
        raise RuntimeError(
            f"semigroup envelope exceeded the cap {cap:g} (K_est = {K:.3e}); "
            "the decay rate nu appears to be outside the valid weight band"
        )
    return K, float(nu)


def write_spectrum_csv(path, sweep: SpectrumSweep) -> None:
    """Spectrum CSV: xi_1..xi_d, then re/im of each eigenvalue, 17 significant digits."""
    d = sweep.xi.shape[1]
    n = sweep.eigvals.shape[1]
    cols = [f"xi_{i + 1}" for i in range(d)]
    for j in range(n):
        cols += [f"re_lambda_{j + 1}", f"im_lambda_{j + 1}"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for xi_row, ev_row in zip(sweep.xi, sweep.eigvals):
            vals = [f"{x:.17g}" for x in xi_row]
            for ev in ev_row:
                vals += [f"{ev.real:.17g}", f"{ev.imag:.17g}"]
            fh.write(",".join(vals) + "\n")
