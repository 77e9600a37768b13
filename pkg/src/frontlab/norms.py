"""Discrete unweighted/weighted/intersection norms, decay fits, and verdicts.

Norm conventions on a periodic grid: the squared discrete L2 norm is the
cell volume times the sum of squares over all components and grid points;
the H1 variant adds the squared spectral gradient.  The weighted norm
applies the pointwise factor exp(alpha z) along the first grid axis before
measuring, and the intersection norm is the max of the two:

    |v|_E = max(|v|_0, |v|_alpha).

Weighting is a measurement device only: the evolution itself is always the
unweighted equation, and these functions are applied in post-processing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "NormSeries",
    "DecayFit",
    "VerdictReport",
    "norm_unweighted",
    "norm_weighted",
    "norm_E",
    "fit_decay",
    "verify_stability_theorem",
    "write_norms_csv",
]

WEIGHT_OVERFLOW_LIMIT = 700.0
SUPPORT_CUTOFF = 1e-300


def _component_view(data: np.ndarray, grid) -> np.ndarray:
    """Reshape to (ncomp, *grid.shape), accepting bare single-component fields."""
    data = np.asarray(data, dtype=float)
    if data.shape == grid.shape:
        return data.reshape((1,) + grid.shape)
    if data.shape[-len(grid.shape):] == grid.shape:
        return data.reshape((-1,) + grid.shape)
    raise ValueError(f"field shape {data.shape} does not match grid shape {grid.shape}")


def _gradient_sq_sum(grid, comps: np.ndarray) -> float:
    """Sum of squared spectral derivatives over all axes and components."""
    d = len(grid.shape)
    axes = tuple(range(1, d + 1))
    vh = np.fft.fftn(comps, axes=axes)
    npoints = float(np.prod(grid.shape))
    total = 0.0
    for ax in range(d):
        xi = grid.xi(ax)
        shape = [1] * (d + 1)
        shape[ax + 1] = xi.size
        dvh = 1j * xi.reshape(shape) * vh
        # discrete Parseval: sum |dv|^2 = sum |dvh|^2 / npoints
        total += float(np.sum(np.abs(dvh) ** 2)) / npoints
    return total


def norm_unweighted(grid, data, k: int = 0) -> float:
    """Discrete H^k norm (k in {0, 1}) of a (multi-component) field.

    k = 0 is the cell-volume-scaled root sum of squares; k = 1 adds the
    squared gradient obtained by spectral differentiation.
    """
    if k not in (0, 1):
        raise ValueError(f"Sobolev index k must be 0 or 1, got {k}")
    comps = _component_view(data, grid)
    total = float(np.sum(comps**2))
    if k == 1:
        total += _gradient_sq_sum(grid, comps)
    return math.sqrt(grid.cell_volume * total)


def norm_weighted(grid, data, alpha: float, k: int = 0) -> float:
    """Weighted norm |exp(alpha z) v|_{H^k} along the first grid axis.

    Rejects fields whose support reaches weights beyond exp(700): such a
    field is boundary-contaminated and the measurement meaningless.
    """
    if alpha < 0.0:
        raise ValueError("alpha must be nonnegative")
    comps = _component_view(data, grid)
    z = grid.coords(0)
    if alpha > 0.0:
        support = np.any(np.abs(comps) > SUPPORT_CUTOFF, axis=0)
        if np.any(support):
            axes = tuple(range(1, len(grid.shape)))
            support_z = np.any(support, axis=axes) if axes else support
            max_az = alpha * float(np.max(z[support_z]))
            if max_az > WEIGHT_OVERFLOW_LIMIT:
                raise ValueError(
                    f"weighted norm overflow: alpha * z reaches {max_az:.1f} > "
                    f"{WEIGHT_OVERFLOW_LIMIT:g} on the field support "
                    "(field is boundary-contaminated)"
                )
    shape = [1] * comps.ndim
    shape[1] = z.size
    gamma = np.exp(alpha * z).reshape(shape)
    return norm_unweighted(grid, comps * gamma, k)


def norm_E(grid, data, alpha: float, k: int = 0) -> float:
    """Intersection-space norm max(|v|_0, |v|_alpha)."""
    return max(norm_unweighted(grid, data, k), norm_weighted(grid, data, alpha, k))


@dataclass
class NormSeries:
    """Norm table of a simulation run: one row per (time, Sobolev index)."""

    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    columns: dict = field(default_factory=dict)   # (name, k) -> np.ndarray

    NAMES = ("norm0_v1", "norm0_v2", "norm0_v", "normalpha_v", "normE_v")

    @classmethod
    def from_records(cls, times: Sequence[float], records: Sequence[dict]) -> "NormSeries":
        times = np.asarray(times, dtype=float)
        cols = {}
        for key in records[0]:
            cols[key] = np.array([r[key] for r in records])
        return cls(times=times, columns=cols)

    def column(self, name: str, k: int = 0) -> np.ndarray:
        return self.columns[(name, k)]

    def __len__(self) -> int:
        return len(self.times)

    def validate(self) -> None:
        """Assert the structural identities every record must satisfy."""
        for k in (0, 1):
            v = self.column("norm0_v", k)
            v1 = self.column("norm0_v1", k)
            v2 = self.column("norm0_v2", k)
            va = self.column("normalpha_v", k)
            ve = self.column("normE_v", k)
            if not np.all(ve == np.maximum(v, va)):
                raise AssertionError("norm_E is not the max of the two norms")
            if np.any(v1 > v + 1e-15) or np.any(v2 > v + 1e-15):
                raise AssertionError("component norm exceeds the full norm")
            if np.any(v < 0) or np.any(va < 0):
                raise AssertionError("negative norm recorded")


@dataclass
class DecayFit:
    """Least-squares exponential fit log(value) ~ log(K) - nu t."""

    nu: float
    K: float
    r_squared: float
    window: tuple[float, float]
    n_samples: int
    decayed_to_zero: bool = False
    first_nonpositive_t: Optional[float] = None


def fit_decay(times, values, window: Optional[tuple] = None,
              skip_fraction: float = 0.1) -> DecayFit:
    """Fit an exponential decay rate on a time window of a positive series.

    The window defaults to the full range with the first `skip_fraction` of
    samples dropped (initial transient).  Nonpositive values inside the
    window mean the series decayed below measurability: the fit is reported
    with the +inf rate sentinel instead of failing.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("times and values must be 1-d arrays of equal length")
    if window is None:
        lo = t[0] + skip_fraction * (t[-1] - t[0])
        window = (lo, t[-1])
    sel = (t >= window[0]) & (t <= window[1])
    if int(np.sum(sel)) < 10:
        raise ValueError(f"need at least 10 samples in the fit window, got {int(np.sum(sel))}")
    tw, yw = t[sel], y[sel]
    if np.any(yw <= 0.0):
        first_bad = float(tw[np.argmax(yw <= 0.0)])
        return DecayFit(nu=math.inf, K=0.0, r_squared=0.0,
                        window=(float(window[0]), float(window[1])),
                        n_samples=int(np.sum(sel)),
                        decayed_to_zero=True, first_nonpositive_t=first_bad)
    ly = np.log(yw)
    slope, intercept = np.polyfit(tw, ly, 1)
    resid = ly - (slope * tw + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return DecayFit(nu=float(-slope), K=float(np.exp(intercept)), r_squared=r2,
                    window=(float(window[0]), float(window[1])),
                    n_samples=int(np.sum(sel)))


@dataclass
class VerdictReport:
    """Pass/fail per theorem item with the measured constants."""

    items: dict
    overall: bool
    context: dict

    def to_text(self) -> str:
        lines = []
        for key, val in self.context.items():
            lines.append(f"{key}: {_fmt(val)}")
        for name in sorted(self.items):
            item = self.items[name]
            for key, val in item.items():
                lines.append(f"{name}_{key}: {_fmt(val)}")
        lines.append(f"overall_pass: {str(self.overall).lower()}")
        return "\n".join(lines) + "\n"


def _fmt(val) -> str:
    if isinstance(val, bool):
        return str(val).lower()
    if isinstance(val, float):
        return f"{val:.17g}"
    return str(val)


def verify_stability_theorem(series: NormSeries, params, eta: float, delta: float,
                       nu_expected: Optional[float] = None,
                       rho_expected: Optional[float] = None,
                       rate_floor: float = 0.8,
                       c1_cap: float = 10.0,
                       window: Optional[tuple] = None,
                       k: int = 0) -> VerdictReport:
    """Evaluate the stability-theorem items on a recorded norm series.

    (2) sup_t |v(t)|_E <= delta;
    (3) fitted weighted decay rate >= rate_floor * (c alpha - alpha^2), with
        the pointwise constant C3 = max_t |v(t)|_alpha e^(nu_fit t) / |v0|_alpha
        reported;
    (4) sup_t |v1(t)|_0 <= c1_cap * |v0|_E;
    (5) fitted |v2|_0 decay rate >= rate_floor * kappa e^(-kappa).

    The theorem's constants are existential, so measured values are always
    reported; failures are verdicts, never errors.  The two sharp linear
    rates (c alpha - alpha^2 for item 3, kappa e^-kappa for item 5) are
    tracked separately and never conflated.
    """
    if nu_expected is None:
        nu_expected = params.c * params.alpha - params.alpha**2
    if rho_expected is None:
        rho_expected = params.kappa * math.exp(-params.kappa)

    t = series.times
    vE = series.column("normE_v", k)
    valpha = series.column("normalpha_v", k)
    v1 = series.column("norm0_v1", k)
    v2 = series.column("norm0_v2", k)
    e0 = float(vE[0])

    items = {}
    if np.all(vE == 0.0):
        # zero initial data: the zero solution satisfies everything with
        # zero constants
        items["item2"] = dict(sup_E=0.0, delta=float(delta), passed=True)
        items["item3"] = dict(rate=math.inf, expected=float(nu_expected),
                              floor=rate_floor * float(nu_expected), C=0.0,
                              passed=True)
        items["item4"] = dict(C=0.0, cap=float(c1_cap), passed=True)
        items["item5"] = dict(rate=math.inf, expected=float(rho_expected),
                              floor=rate_floor * float(rho_expected), passed=True)
        overall = True
    else:
        sup_E = float(np.max(vE))
        items["item2"] = dict(sup_E=sup_E, delta=float(delta),
                              passed=bool(sup_E <= delta))

        fit3 = fit_decay(t, valpha, window=window)
        if fit3.decayed_to_zero:
            c3 = 0.0
        else:
            with np.errstate(over="ignore"):
                growth = valpha * np.exp(np.minimum(fit3.nu * t, 700.0))
            c3 = float(np.max(growth) / valpha[0]) if valpha[0] > 0 else math.inf
        items["item3"] = dict(rate=fit3.nu, expected=float(nu_expected),
                              floor=rate_floor * float(nu_expected),
                              C=c3, r_squared=fit3.r_squared,
                              passed=bool(fit3.nu >= rate_floor * nu_expected))

        c4 = float(np.max(v1)) / e0
        items["item4"] = dict(C=c4, cap=float(c1_cap), passed=bool(c4 <= c1_cap))

        fit5 = fit_decay(t, v2, window=window)
        items["item5"] = dict(rate=fit5.nu, expected=float(rho_expected),
                              floor=rate_floor * float(rho_expected),
                              r_squared=fit5.r_squared,
                              passed=bool(fit5.nu >= rate_floor * rho_expected))
        overall = all(it["passed"] for it in items.values())

    context = dict(eta=float(eta), initial_E_norm=e0, rate_floor=rate_floor,
                   sobolev_k=k)
    return VerdictReport(items=items, overall=overall, context=context)


def write_norms_csv(path, series: NormSeries) -> None:
    """Norm-series CSV, one row per (time, k), 17 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write("t,norm0_v1,norm0_v2,norm0_v,normalpha_v,normE_v,k\n")
        for k in (0, 1):
            cols = [series.column(name, k) for name in NormSeries.NAMES]
            for i, t in enumerate(series.times):
                row = [t] + [col[i] for col in cols]
                fh.write(",".join(f"{x:.17g}" for x in row) + f",{k}\n")
