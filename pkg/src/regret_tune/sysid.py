"""Least-squares FIR identification and the confidence-ellipsoid
uncertainty set over the estimated impulse-response coefficients."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import qr, solve_triangular, toeplitz
from scipy.special import betainc

from .lti import Dataset

__all__ = [
    "FirEstimate",
    "UncertaintySet",
    "build_regressor",
    "least_squares_fir",
    "f_cdf",
    "f_quantile",
    "uncertainty_set",
    "membership",
    "mahalanobis_sq",
    "estimate_to_dict",
    "estimate_from_dict",
    "read_dataset_csv",
    "write_dataset_csv",
]


@dataclass(frozen=True)
class FirEstimate:
    """Least-squares FIR fit: coefficients, covariance and noise variance.

    ``sigma_chol`` is the lower Cholesky factor of ``sigma_hat``; it is
    None when the residual is numerically zero (exact fit), in which case
    set construction and sampling are meaningless and will refuse to run.
    """

    g_hat: np.ndarray
    sigma_hat: np.ndarray
    sigma_v_sq_hat: float
    n: int
    N: int
    sigma_chol: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.N <= self.n + 1:
            raise ValueError("need N > n + 1 for the variance estimate")
        asym = np.max(np.abs(self.sigma_hat - self.sigma_hat.T))
        if asym > 1e-12 * max(1.0, float(np.max(np.abs(self.sigma_hat)))):
            raise ValueError("covariance matrix is not symmetric")
        if self.sigma_chol is None and self.sigma_v_sq_hat > 0:
            try:
                chol = np.linalg.cholesky(self.sigma_hat)
            except np.linalg.LinAlgError as exc:
                raise ValueError("covariance matrix is not positive definite") from exc
            object.__setattr__(self, "sigma_chol", chol)


@dataclass(frozen=True)
class UncertaintySet:
    """Ellipsoid {g : (g - g_hat)^T Sigma^-1 (g - g_hat) <= radius_sq}."""

    center: FirEstimate
    radius_sq: float
    alpha: float
    scale_by_n: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.radius_sq <= 0:
            raise ValueError("radius_sq must be positive")


def build_regressor(u, n: int, N: int | None = None) -> np.ndarray:
    """N x n matrix whose row t is [u_t, u_{t-1}, ..., u_{t-n+1}], with the
    pre-experiment input taken as zero."""
    u = np.asarray(u, dtype=float)
    if N is None:
        N = u.size
    if N < 1 or n < 1:
        raise ValueError("need N >= 1 and n >= 1")
    u = u[:N]
    first_row = np.zeros(n)
    first_row[0] = u[0]
    return toeplitz(u, first_row)


def least_squares_fir(data: Dataset, n: int) -> FirEstimate:
    """Fit an order-n FIR model by least squares.

    Solves the normal equations through a QR factorization of the
    regressor (never by explicit inversion) and returns the coefficient
    estimate together with the estimated covariance
    sigma_v_sq_hat * (Phi^T Phi)^-1.
    """
    N = data.N
    if N <= n + 1:
        raise ValueError(f"insufficient data: need N > n + 1 (N={N}, n={n})")
    phi = build_regressor(data.u, n)
    q, r = qr(phi, mode="economic")
    rdiag = np.abs(np.diag(r))
    if rdiag.min() <= max(N, n) * np.finfo(float).eps * rdiag.max():
        raise ValueError("insufficient excitation: regressor is rank deficient")
    g_hat = solve_triangular(r, q.T @ data.y)
    resid = data.y - phi @ g_hat
    sigma_v_sq = float(resid @ resid) / (N - n - 1)
    r_inv = solve_triangular(r, np.eye(n))
    gram_inv = r_inv @ r_inv.T
    sigma = sigma_v_sq * gram_inv
    sigma = 0.5 * (sigma + sigma.T)
    return FirEstimate(
        g_hat=g_hat, sigma_hat=sigma, sigma_v_sq_hat=sigma_v_sq, n=n, N=N
    )


def f_cdf(x: float, d1: int, d2: int) -> float:
    """CDF of the F distribution via the regularized incomplete beta."""
    if x <= 0:
        return 0.0
    return float(betainc(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2)))


def f_quantile(prob: float, d1: int, d2: int, tol: float = 1e-10) -> float:
    """Inverse F CDF by bisection on the incomplete-beta representation."""
    if not 0 < prob < 1:
        raise ValueError("prob must lie in (0, 1)")
    if d1 < 1 or d2 < 1:
        raise ValueError("degrees of freedom must be positive")
    lo, hi = 0.0, 1.0
    while f_cdf(hi, d1, d2) < prob:
        hi *= 2.0
        if hi > 1e30:
            raise RuntimeError("failed to bracket the F quantile")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f_cdf(mid, d1, d2) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def uncertainty_set(
    est: FirEstimate, alpha: float, scale_by_n: bool = False
) -> UncertaintySet:
    """Confidence ellipsoid with radius set by the upper-tail F quantile.

    With ``scale_by_n`` the radius is n * F_{1-alpha}(n, N-n), the exact
    classical confidence region for the coefficient vector; without it the
    bare quantile is used.  The bare radius shrinks roughly like 1/n
    relative to the exact region, so for n beyond a handful of taps it
    carries essentially no coverage; the studies shipped with this package
    therefore enable the scaled radius.
    """
    if est.sigma_chol is None:
        raise ValueError(
            "estimate has zero residual variance; the uncertainty set is empty"
        )
    radius = f_quantile(1.0 - alpha, est.n, est.N - est.n)
    if scale_by_n:
        radius *= est.n
    return UncertaintySet(
        center=est, radius_sq=radius, alpha=alpha, scale_by_n=scale_by_n
    )


def mahalanobis_sq(uset: UncertaintySet, g) -> float:
    g = np.asarray(g, dtype=float)
    if g.shape != uset.center.g_hat.shape:
        raise ValueError(
            f"dimension mismatch: expected {uset.center.g_hat.size}, got {g.size}"
        )
    z = solve_triangular(uset.center.sigma_chol, g - uset.center.g_hat, lower=True)
    return float(z @ z)


def membership(uset: UncertaintySet, g) -> bool:
    """Whether g lies in the ellipsoid, evaluated via the Cholesky factor."""
    return mahalanobis_sq(uset, g) <= uset.radius_sq


def estimate_to_dict(est: FirEstimate, uset: UncertaintySet | None = None) -> dict:
    out = {
        "g_hat": est.g_hat.tolist(),
        "sigma_chol": est.sigma_chol.tolist() if est.sigma_chol is not None else None,
        "sigma_v_sq_hat": est.sigma_v_sq_hat,
        "n": est.n,
        "N": est.N,
    }
    if uset is not None:
        out["alpha"] = uset.alpha
        out["radius_sq"] = uset.radius_sq
        out["scale_by_n"] = uset.scale_by_n
    return out


def write_dataset_csv(data: Dataset, path) -> None:
    lines = ["u,y"]
    lines += [f"{float(u)!r},{float(y)!r}" for u, y in zip(data.u, data.y)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset_csv(path) -> Dataset:
    """Parse a two-column u,y file; errors carry the offending line number."""
    lines = Path(path).read_text().splitlines()
    if not lines or [c.strip() for c in lines[0].split(",")] != ["u", "y"]:
        raise ValueError(f"{path}: line 1: expected header 'u,y'")
    u, y = [], []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ValueError(f"{path}: line {i}: expected two columns")
        try:
            u.append(float(parts[0]))
            y.append(float(parts[1]))
        except ValueError as exc:
            raise ValueError(f"{path}: line {i}: {exc}") from exc
    if not u:
        raise ValueError(f"{path}: no data rows")
    return Dataset(u=np.asarray(u), y=np.asarray(y))


def estimate_from_dict(obj: dict) -> tuple[FirEstimate, UncertaintySet | None]:
    chol = None if obj["sigma_chol"] is None else np.asarray(obj["sigma_chol"])
    if chol is None:
        raise ValueError("serialized estimate carries no covariance factor")
    sigma = chol @ chol.T
    est = FirEstimate(
        g_hat=np.asarray(obj["g_hat"], dtype=float),
        sigma_hat=0.5 * (sigma + sigma.T),
        sigma_v_sq_hat=float(obj["sigma_v_sq_hat"]),
        n=int(obj["n"]),
        N=int(obj["N"]),
        sigma_chol=chol,
    )
    uset = None
    if "radius_sq" in obj:
        uset = UncertaintySet(
            center=est,
            radius_sq=float(obj["radius_sq"]),
            alpha=float(obj["alpha"]),
            scale_by_n=bool(obj.get("scale_by_n", False)),
        )
    return est, uset
