"""Accuracy, empirical fits, p* thresholds, speedup and resource counts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

FORMS = ("exp-linear", "exp-sqrt")
CLASSICAL_GUARANTEE_R = 0.8785
DEFAULT_R_STAR = 0.99

# which empirical form describes which curve: (ensemble, mode, quantity) -> form
FIT_FORMS = {
    ("w3r", "standard", "accuracy"): "exp-sqrt",
    ("w3r", "standard", "infidelity"): "exp-linear",
    ("w3r", "adaptive", "accuracy"): "exp-sqrt",
    ("w3r", "adaptive", "infidelity"): "exp-sqrt",
    ("u3r", "standard", "accuracy"): "exp-linear",
    ("u3r", "standard", "infidelity"): "exp-linear",
    ("u3r", "adaptive", "accuracy"): "exp-sqrt",
    ("u3r", "adaptive", "infidelity"): "exp-sqrt",
}


class FitError(ValueError):
    pass


class UnreachableError(ValueError):
    pass


def accuracy(e_opt: float, e_max: float) -> float:
    """Ratio of the achieved cut expectation to the maximum cut."""
    if e_max <= 0:
        raise ValueError(f"e_max must be positive, got {e_max}")
    return e_opt / e_max


@dataclass(frozen=True)
class FitResult:
    form: str
    p0: float
    c: float
    residual: float

    def predict(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        x = p / self.p0
        return np.exp(-(np.sqrt(x) if self.form == "exp-sqrt" else x) + self.c)


def _abscissa(p: np.ndarray, form: str) -> np.ndarray:
    if form not in FORMS:
        raise ValueError(f"unknown form {form!r}; expected one of {FORMS}")
    return np.sqrt(p) if form == "exp-sqrt" else p


def fit_curve(points: Iterable[tuple[float, float]], form: str, sigma: Sequence[float] | None = None) -> FitResult:
    """Least-squares fit of ln y against p (exp-linear) or sqrt(p) (exp-sqrt).

    ``sigma`` optionally gives the standard deviation of each y; the fit is
    then weighted by y/sigma, the inverse error of ln y.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or len(pts) < 3:
        raise FitError("need at least 3 (p, y) points")
    # y >= 1 is allowed: noiseless synthetics with c > 0 start above 1
    p, y = pts[:, 0], pts[:, 1]
    if np.any(y <= 0):
        raise FitError(f"y values must be positive for a log-space fit: {y}")
    x = _abscissa(p, form)
    ly = np.log(y)
    w = np.ones_like(y) if sigma is None else y / np.asarray(sigma, dtype=float)
    a = np.column_stack([x, np.ones_like(x)]) * w[:, None]
    (slope, intercept), *_ = np.linalg.lstsq(a, ly * w, rcond=None)
    if slope >= 0:
        raise FitError(f"fitted slope {slope} is not decreasing")
    p0 = 1.0 / slope**2 if form == "exp-sqrt" else -1.0 / slope
    resid = ly - (slope * x + intercept)
    return FitResult(form, float(p0), float(intercept), float(np.sqrt(np.mean(resid**2))))


@dataclass(frozen=True)
class CurvePoint:
    p: int
    mean_infidelity_r: float
    std_infidelity_r: float
    mean_infidelity_f: float
    std_infidelity_f: float


@dataclass(frozen=True)
class EnsembleCurve:
    n: int
    mode: str
    points: tuple[CurvePoint, ...]
    ensemble_size: int

    def accuracy_points(self) -> list[tuple[int, float]]:
        return [(pt.p, pt.mean_infidelity_r) for pt in self.points]

    def fidelity_points(self) -> list[tuple[int, float]]:
        return [(pt.p, pt.mean_infidelity_f) for pt in self.points]


def p_star(source: FitResult | EnsembleCurve, r_star: float = DEFAULT_R_STAR) -> int:
    """Level at which the accuracy first reaches ``r_star``.

    From a fit, the crossing of the fitted curve rounded to the nearest
    integer; from measured data, the smallest level whose mean r >= r_star.
    """
    if not 0 < r_star < 1:
        raise ValueError("r_star must lie in (0, 1)")
    if isinstance(source, FitResult):
        depth = source.c - math.log(1 - r_star)
        if depth <= 0:
            raise UnreachableError(f"fit never reaches r*={r_star} (c={source.c})")
        p = source.p0 * (depth**2 if source.form == "exp-sqrt" else depth)
        return max(1, int(math.floor(p + 0.5)))
    for pt in source.points:
        if 1.0 - pt.mean_infidelity_r >= r_star - 1e-12:
            return pt.p
    raise UnreachableError(f"no measured level reaches r*={r_star}")


def speedup(p_star_standard: int, p_star_adaptive: int) -> float:
    if p_star_standard < 1 or p_star_adaptive < 1:
        raise ValueError("p* values must be >= 1")
    return (p_star_standard / p_star_adaptive) ** 2


def state_prep_gate_count(n: int, regularity: int, p: int) -> int:
    """Gates in one circuit: 3 per ZZ term and 1 mixer rotation per qubit per layer, plus n for the initial state."""
    return p * (3 * n * regularity // 2 + n) + n


def total_gate_count(n: int, regularity: int, p: int, n_ite: int, m_zz: int) -> int:
    """Gates for a fully optimized run: iterations x (2p+1) energies x shots x ZZ terms x circuit size."""
    return n_ite * (2 * p + 1) * m_zz * (n * regularity // 2) * state_prep_gate_count(n, regularity, p)


def scan_landscape(d, base_point, u_range=None, v_range=None, resolution: int = 41):
    """Energy on a (u_1, v_1) grid with the bias fixed at the base point's.

    Returns ``(u_values, v_values, energies)`` with ``energies[i, j]`` at
    ``(u_values[i], v_values[j])``. A resolution of 0 or 1 evaluates the base
    point alone.
    """
    from .optimizer import CostEvaluator

    if base_point.level != 1:
        raise ValueError("landscape scans are defined for level-1 points")
    if resolution <= 1:
        us = base_point.u.copy()
        vs = base_point.v.copy()
    else:
        u_range = u_range or (-math.sqrt(2) * math.pi / 2, math.sqrt(2) * math.pi / 2)
        v_range = v_range or (-math.sqrt(2) * math.pi / 4, math.sqrt(2) * math.pi / 4)
        us = np.linspace(*u_range, resolution)
        vs = np.linspace(*v_range, resolution)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    energies = CostEvaluator(d)(uu.reshape(-1, 1), vv.reshape(-1, 1), base_point.bias)
    return us, vs, energies.reshape(uu.shape)


def aggregate_ensemble(records, n: int, mode: str) -> EnsembleCurve:
    """Per-level mean and population standard deviation of 1-r and 1-F.

    ``records`` is one sequence per graph of objects with ``level``, ``r``
    and ``f`` attributes; every graph must cover the same levels.
    """
    per_graph = [sorted(rec, key=lambda x: x.level) for rec in records]
    if not per_graph:
        raise ValueError("empty ensemble")
    grid = [x.level for x in per_graph[0]]
    for recs in per_graph[1:]:
        if [x.level for x in recs] != grid:
            raise ValueError("graphs in the ensemble have different level grids")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("duplicate levels in a sweep")
    one_minus_r = np.array([[1.0 - x.r for x in recs] for recs in per_graph])
    one_minus_f = np.array([[1.0 - x.f for x in recs] for recs in per_graph])
    pts = tuple(
        CurvePoint(
            p=level,
            mean_infidelity_r=float(one_minus_r[:, i].mean()),
            std_infidelity_r=float(one_minus_r[:, i].std()),
            mean_infidelity_f=float(one_minus_f[:, i].mean()),
            std_infidelity_f=float(one_minus_f[:, i].std()),
        )
        for i, level in enumerate(grid)
    )
    return EnsembleCurve(n=n, mode=mode, points=pts, ensemble_size=len(per_graph))
