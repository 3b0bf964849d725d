"""Damped Gauss-Newton (Levenberg-Marquardt) least squares with covariance
reporting, plus the small model library used by the analysis modules.

Models are plain callables ``f(x, p) -> y``.  An analytic Jacobian
``jac(x, p) -> (len(x), len(p))`` may be supplied; otherwise central
differences are used.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

ModelFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class FitError(RuntimeError):
    """Raised when a fit cannot be carried out or does not converge."""


@dataclass
class FitProblem:
    model: ModelFn
    p0: Sequence[float]
    x: np.ndarray
    y: np.ndarray
    y_err: Optional[np.ndarray] = None
    names: Optional[Sequence[str]] = None
    jac: Optional[ModelFn] = None
    # per-parameter (lo, hi); None entries mean unbounded on that side
    bounds: Optional[Sequence[tuple]] = None
    max_iter: int = 200
    tol: float = 1e-12

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.p0 = np.asarray(self.p0, dtype=float)
        if self.y_err is not None:
            self.y_err = np.asarray(self.y_err, dtype=float)
            if self.y_err.shape != self.y.shape:
                raise ValueError("y_err must match y in length")
            if np.any(self.y_err <= 0) or not np.all(np.isfinite(self.y_err)):
                raise ValueError("y_err must be finite and > 0")
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("x and y lengths differ")
        if self.y.shape[0] < self.p0.shape[0]:
            raise ValueError("fewer data points than parameters")
        if self.names is None:
            self.names = tuple(f"p{i}" for i in range(self.p0.shape[0]))
        self.names = tuple(self.names)
        if len(self.names) != self.p0.shape[0]:
            raise ValueError("names must match p0 in length")


@dataclass
class FitResult:
    names: tuple
    params: np.ndarray
    sigma: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    chi2_red: float
    converged: bool
    n_iter: int
    n_points: int
    warnings: list = field(default_factory=list)

    def __getitem__(self, name):
        return float(self.params[self.names.index(name)])

    def err(self, name):
        return float(self.sigma[self.names.index(name)])

    def correlation(self):
        d = np.sqrt(np.diag(self.covariance))
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.covariance / np.outer(d, d)

    def to_records(self):
        """JSON-ready list of per-parameter records."""
        out = []
        for i, name in enumerate(self.names):
            out.append({
                "parameter": name,
                "estimate": float(self.params[i]),
                "sigma": float(self.sigma[i]),
                "covariance_row": [float(v) for v in self.covariance[i]],
            })
        return out

    def to_dict(self):
        return {
            "parameters": self.to_records(),
            "covariance": [float(v) for v in self.covariance.ravel()],
            "residual_norm": float(self.residual_norm),
            "chi2_red": None if not np.isfinite(self.chi2_red) else float(self.chi2_red),
            "converged": bool(self.converged),
            "iterations": int(self.n_iter),
            "n_points": int(self.n_points),
            "warnings": list(self.warnings),
        }


def numeric_jacobian(model, params, x, rel_step=1e-6, abs_floor=1e-12):
    """Central-difference Jacobian of ``model(x, params)``."""
    p = np.asarray(params, dtype=float)
    cols = []
    for i in range(p.shape[0]):
        h = max(rel_step * abs(p[i]), abs_floor)
        up = p.copy()
        dn = p.copy()
        up[i] += h
        dn[i] -= h
        fu = np.asarray(model(x, up), dtype=float)
        fd = np.asarray(model(x, dn), dtype=float)
        if not (np.all(np.isfinite(fu)) and np.all(np.isfinite(fd))):
            raise FitError(f"non-finite model output near parameter point {p.tolist()}")
        cols.append((fu - fd) / (2.0 * h))
    return np.stack(cols, axis=-1)


class _Transform:
    """Maps unconstrained internal coordinates u to bounded parameters p."""

    def __init__(self, bounds, n):
        self.kinds = []
        for i in range(n):
            lo, hi = (None, None) if bounds is None else bounds[i]
            lo = None if lo is None or not np.isfinite(lo) else float(lo)
            hi = None if hi is None or not np.isfinite(hi) else float(hi)
            self.kinds.append((lo, hi))

    def to_u(self, p):
        u = np.empty_like(p)
        for i, (lo, hi) in enumerate(self.kinds):
            if lo is None and hi is None:
                u[i] = p[i]
            elif hi is None:
                if p[i] <= lo:
                    raise FitError(f"initial value of parameter {i} violates its lower bound")
                u[i] = np.log(p[i] - lo)
            elif lo is None:
                if p[i] >= hi:
                    raise FitError(f"initial value of parameter {i} violates its upper bound")
                u[i] = -np.log(hi - p[i])
            else:
                if not lo < p[i] < hi:
                    raise FitError(f"initial value of parameter {i} outside its bounds")
                s = (p[i] - lo) / (hi - lo)
                u[i] = np.log(s / (1.0 - s))
        return u

    def to_p(self, u):
        p = np.empty_like(u)
        for i, (lo, hi) in enumerate(self.kinds):
            if lo is None and hi is None:
                p[i] = u[i]
            elif hi is None:
                p[i] = lo + np.exp(u[i])
            elif lo is None:
                p[i] = hi - np.exp(-u[i])
            else:
                p[i] = lo + (hi - lo) / (1.0 + np.exp(-u[i]))
        return p

    def dp_du(self, u):
        d = np.empty_like(u)
        for i, (lo, hi) in enumerate(self.kinds):
            if lo is None and hi is None:
                d[i] = 1.0
            elif hi is None:
                d[i] = np.exp(u[i])
            elif lo is None:
                d[i] = np.exp(-u[i])
            else:
                e = np.exp(-u[i])
                d[i] = (hi - lo) * e / (1.0 + e) ** 2
        return d


def least_squares(problem: FitProblem) -> FitResult:
    """Minimize the weighted squared residuals of ``problem``.

    Damping follows Marquardt on the column-normalized normal matrix:
    start at 1e-3 times its largest diagonal entry, x3 after a rejected
    step, /2 after an accepted one.  Covariance is the inverse normal
    matrix at the optimum, scaled by the reduced chi-square when no
    ``y_err`` is given.
    """
    pb = problem
    w = 1.0 / pb.y_err if pb.y_err is not None else np.ones_like(pb.y)
    tr = _Transform(pb.bounds, pb.p0.shape[0])
    u = tr.to_u(pb.p0.copy())

    def residuals(p):
        f = np.asarray(pb.model(pb.x, p), dtype=float)
        if not np.all(np.isfinite(f)):
            raise FitError(f"non-finite model output at parameter point {p.tolist()}")
        return (pb.y - f) * w

    def jac_p(p):
        if pb.jac is not None:
            j = np.asarray(pb.jac(pb.x, p), dtype=float)
        else:
            j = numeric_jacobian(pb.model, p, pb.x)
        return j * w[:, None]

    p = tr.to_p(u)
    r = residuals(p)
    cost = float(r @ r)
    mu = None
    converged = False
    n_iter = 0
    while n_iter < pb.max_iter:
        n_iter += 1
        j = jac_p(p) * tr.dp_du(u)[None, :]
        d = np.sqrt(np.sum(j * j, axis=0))
        d[d == 0.0] = 1.0
        js = j / d
        a = js.T @ js
        g = js.T @ r
        if mu is None:
            mu = 1e-3 * float(np.max(np.diag(a)))
        accepted = False
        while not accepted:
            try:
                step = np.linalg.solve(a + mu * np.eye(a.shape[0]), g)
            except np.linalg.LinAlgError:
                mu *= 3.0
                continue
            u_new = u + step / d
            p_new = tr.to_p(u_new)
            r_new = residuals(p_new)
            cost_new = float(r_new @ r_new)
            if cost_new <= cost:
                accepted = True
            else:
                mu *= 3.0
                if mu > 1e20:
                    break
        if not accepted:
            # no descent direction left at working precision
            converged = True
            break
        rel = (cost - cost_new) / cost if cost > 0 else 0.0
        u, p, r, cost = u_new, p_new, r_new, cost_new
        mu /= 2.0
        if cost == 0.0 or rel < pb.tol:
            converged = True
            break

    n = pb.y.shape[0]
    k = p.shape[0]
    jp = jac_p(p)
    normal = jp.T @ jp
    scale = np.sqrt(np.diag(normal))
    if np.any(scale == 0.0) or not np.all(np.isfinite(normal)):
        raise FitError("singular normal matrix (a parameter has no influence on the model); "
                       "rescale or fix that parameter")
    ns = normal / np.outer(scale, scale)
    if np.linalg.cond(ns) > 1e14:
        raise FitError("singular normal matrix at the optimum; rescale or reparameterize")
    cov = np.linalg.inv(ns) / np.outer(scale, scale)
    cov = 0.5 * (cov + cov.T)
    dof = n - k
    chi2_red = cost / dof if dof > 0 else float("nan")
    if pb.y_err is None:
        cov = cov * (chi2_red if dof > 0 else 0.0)
    sigma = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    result = FitResult(
        names=pb.names, params=p, sigma=sigma, covariance=cov,
        residual_norm=float(np.sqrt(cost)), chi2_red=chi2_red,
        converged=converged, n_iter=n_iter, n_points=n,
    )
    if not converged:
        result.warnings.append(f"not converged after {n_iter} iterations (cost {cost:.6g})")
    return result


def fit(model, x, y, p0, y_err=None, names=None, jac=None, bounds=None, **kw) -> FitResult:
    """Convenience wrapper building a :class:`FitProblem`; raises on non-convergence."""
    res = least_squares(FitProblem(model=model, p0=p0, x=x, y=y, y_err=y_err, names=names,
                                   jac=jac, bounds=bounds, **kw))
    if not res.converged:
        raise FitError(res.warnings[-1])
    return res


# model library ---------------------------------------------------------------

def line(x, p):
    return p[0] + p[1] * x


def line_jac(x, p):
    return np.stack([np.ones_like(x), x], axis=-1)


def lorentzian_dip(x, p):
    """Inverted Lorentzian on a constant baseline; p = (baseline, depth, center, fwhm)."""
    b, depth, x0, w = p
    hw2 = (0.5 * w) ** 2
    return b - depth * hw2 / ((x - x0) ** 2 + hw2)


def lorentzian_dip_jac(x, p):
    b, depth, x0, w = p
    hw2 = (0.5 * w) ** 2
    den = (x - x0) ** 2 + hw2
    shape = hw2 / den
    d_x0 = -depth * hw2 * 2.0 * (x - x0) / den ** 2
    d_w = -depth * (0.5 * w) * (x - x0) ** 2 / den ** 2
    return np.stack([np.ones_like(x), -shape, d_x0, d_w], axis=-1)


def lorentzian_dip_sloped(x, p):
    """Dip with a linear background; p = (baseline, depth, center, fwhm, slope)."""
    return lorentzian_dip(x, p[:4]) + p[4] * (x - p[2])


def lorentzian_dip_sloped_jac(x, p):
    j = lorentzian_dip_jac(x, p[:4])
    j[:, 2] -= p[4]
    return np.concatenate([j, (x - p[2])[:, None]], axis=-1)


def exp_recovery(x, p):
    """R(t) = A - (A - R0) exp(-t / T1); p = (R0, T1, A)."""
    r0, t1, a = p
    return a - (a - r0) * np.exp(-x / t1)


def exp_recovery_jac(x, p):
    r0, t1, a = p
    e = np.exp(-x / t1)
    return np.stack([e, -(a - r0) * e * x / t1 ** 2, 1.0 - e], axis=-1)


MODELS = {
    "line": (line, line_jac),
    "lorentzian_dip": (lorentzian_dip, lorentzian_dip_jac),
    "lorentzian_dip_sloped": (lorentzian_dip_sloped, lorentzian_dip_sloped_jac),
    "exp_recovery": (exp_recovery, exp_recovery_jac),
}
