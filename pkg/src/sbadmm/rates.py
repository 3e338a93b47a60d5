"""Spectral convergence-rate analysis of the two-split recursion.

Per-frequency rate functions for the three analyzable parameter regimes:

  Case I   (rho = 1, the split Bregman method):
             s1(d) = eta/(eta+alpha) * (alpha + eta^2 d)/(eta + eta^2 d)
  Case II  (eta = alpha, single data split):
             s2(d) = rho/(rho+1) * (rho^2 + alpha d)/(rho^2 + alpha rho d)
  Case III (rho = eta/alpha, matched penalties):
             s3    = eta/(eta+alpha), uniform over frequencies

where d = omega_i / lambda_i is the per-frequency ratio of the two Gram
spectra (extended to +inf where lambda_i = 0).  The pivot gamma is the
median of {d_min, d_max, 1/alpha} in the extended-real order, giving the
optimal penalties eta* = sqrt(alpha/gamma) and rho* = sqrt(alpha*gamma).

A dense brute-force oracle on tiny grids materializes the transition
matrices and cross-checks the analytic radii by eigendecomposition.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .grids import ConvolutionKernel
from .operators import (BccbSpectrum, diff_gram_spectrum, gram_spectrum,
                        sparse_blur_matrix, sparse_diff_matrix)

CASES = ("I", "II", "III")


@dataclass(frozen=True)
class DeltaSpectrum:
    """Per-frequency ratio of the regularizer and data Gram spectra."""

    deltas: np.ndarray
    alpha: float

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=float).ravel()
        if d.size == 0:
            raise ValueError("empty delta spectrum")
        if np.any(np.isnan(d)) or np.any(d < 0):
            raise ValueError("deltas must be nonnegative (or +inf)")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "deltas", d)

    @property
    def delta_min(self):
        return float(self.deltas.min())

    @property
    def delta_max(self):
        return float(self.deltas.max())


def delta_spectrum(lam: BccbSpectrum, omega: BccbSpectrum,
                   alpha: float) -> DeltaSpectrum:
    """Elementwise omega/lambda with +inf where only lambda vanishes.

    A frequency where both spectra vanish breaks the full-rank premise and
    is rejected.
    """
    if lam.shape != omega.shape:
        raise ValueError("spectra live on different grids")
    lv = lam.eigenvalues.ravel()
    ov = omega.eigenvalues.ravel()
    both_zero = (lv == 0) & (ov == 0)
    if np.any(both_zero):
        raise ValueError("both spectra vanish at %d frequencies; "
                         "the split operator is rank deficient there"
                         % int(both_zero.sum()))
    with np.errstate(divide="ignore"):
        d = np.where(lv > 0, ov / np.where(lv > 0, lv, 1.0), np.inf)
    return DeltaSpectrum(d, alpha)


def rate_s1(delta, eta, alpha):
    """Case I per-frequency rate; handles delta = +inf by its limit."""
    _check_positive(eta=eta, alpha=alpha)
    delta = np.asarray(delta, dtype=float)
    limit = eta / (eta + alpha)
    finite = np.where(np.isinf(delta), 0.0, delta)
    val = limit * (alpha + eta ** 2 * finite) / (eta + eta ** 2 * finite)
    out = np.where(np.isinf(delta), limit, val)
    return float(out) if out.ndim == 0 else out


def rate_s2(delta, rho, alpha):
    """Case II per-frequency rate; delta = +inf gives 1/(rho+1)."""
    _check_positive(rho=rho, alpha=alpha)
    delta = np.asarray(delta, dtype=float)
    finite = np.where(np.isinf(delta), 0.0, delta)
    val = (rho / (rho + 1.0)) * (rho ** 2 + alpha * finite) \
        / (rho ** 2 + alpha * rho * finite)
    out = np.where(np.isinf(delta), 1.0 / (rho + 1.0), val)
    return float(out) if out.ndim == 0 else out


def rate_s3(eta, alpha):
    """Case III rate, uniform over frequencies."""
    _check_positive(eta=eta, alpha=alpha)
    return eta / (eta + alpha)


def _check_positive(**kwargs):
    for name, value in kwargs.items():
        if not value > 0:
            raise ValueError("%s must be positive" % name)


def gamma_pivot(spectrum: DeltaSpectrum) -> float:
    """median{delta_min, delta_max, 1/alpha} in the extended-real order."""
    return float(np.median([spectrum.delta_min, spectrum.delta_max,
                            1.0 / spectrum.alpha]))


def optimal_eta_sb(spectrum: DeltaSpectrum):
    """Optimal split Bregman penalty eta* = sqrt(alpha/gamma).

    Returns (eta_star, gamma).  gamma = 1/alpha (the typical huge-dynamic-
    range situation) yields eta* = alpha.
    """
    gamma = gamma_pivot(spectrum)
    if gamma == 0.0 or np.isinf(gamma):
        raise ValueError("degenerate delta spectrum: gamma = %g" % gamma)
    return float(np.sqrt(spectrum.alpha / gamma)), gamma


def optimal_rho_al(spectrum: DeltaSpectrum) -> float:
    """Optimal data-split penalty rho* = sqrt(alpha*gamma) for Case II."""
    gamma = gamma_pivot(spectrum)
    if gamma == 0.0 or np.isinf(gamma):
        raise ValueError("degenerate delta spectrum: gamma = %g" % gamma)
    return float(np.sqrt(spectrum.alpha * gamma))


@dataclass(frozen=True)
class RateReport:
    case: str
    rates: np.ndarray
    spectral_radius: float
    eta: float
    rho: float
    alpha: float
    optimal_eta: float
    optimal_rho: float
    gamma: float


def predict(case: str, spectrum: DeltaSpectrum, rho: float = None,
            eta: float = None, rtol: float = 1e-9) -> RateReport:
    """Predicted per-frequency rates and spectral radius for one case.

    Parameter combinations outside the three analyzable cases are rejected
    rather than extrapolated.
    """
    alpha = spectrum.alpha
    if case == "I":
        if eta is None:
            raise ValueError("Case I needs eta")
        if rho is not None and not np.isclose(rho, 1.0, rtol=rtol):
            raise ValueError("Case I requires rho == 1 (got rho = %g)" % rho)
        rho = 1.0
        rates = rate_s1(spectrum.deltas, eta, alpha)
    elif case == "II":
        if rho is None:
            raise ValueError("Case II needs rho")
        if eta is not None and not np.isclose(eta, alpha, rtol=rtol):
            raise ValueError("Case II requires eta == alpha (got eta = %g, "
                             "alpha = %g)" % (eta, alpha))
        eta = alpha
        rates = rate_s2(spectrum.deltas, rho, alpha)
    elif case == "III":
        if eta is None:
            raise ValueError("Case III needs eta")
        if rho is not None and not np.isclose(rho, eta / alpha, rtol=rtol):
            raise ValueError("Case III requires rho == eta/alpha "
                             "(got rho = %g, eta/alpha = %g)" % (rho, eta / alpha))
        rho = eta / alpha
        rates = np.full(spectrum.deltas.shape, rate_s3(eta, alpha))
    else:
        raise ValueError("case must be one of %s" % (CASES,))
    eta_star, gamma = optimal_eta_sb(spectrum)
    return RateReport(case=case, rates=np.asarray(rates, dtype=float),
                      spectral_radius=float(np.max(rates)), eta=float(eta),
                      rho=float(rho), alpha=float(alpha),
                      optimal_eta=eta_star, optimal_rho=optimal_rho_al(spectrum),
                      gamma=gamma)


@dataclass(frozen=True)
class Comparison:
    faster: str
    rho_recommended: float
    radius_sb: float
    radius_admm: float
    note: str = ""


def compare_sb_vs_admm(eta: float, alpha: float,
                       spectrum: DeltaSpectrum) -> Comparison:
    """Compare the split Bregman rate at eta with the matched two-split
    recursion (rho = eta/alpha) at the same eta."""
    _check_positive(eta=eta, alpha=alpha)
    radius_sb = float(np.max(rate_s1(spectrum.deltas, eta, alpha)))
    radius_admm = rate_s3(eta, alpha)
    if eta < alpha:
        faster, note = "admm_matched", "under-estimated eta: matched split wins"
    elif eta > alpha:
        faster, note = "tie", ("equal predicted radii; split Bregman is "
                               "empirically slightly faster below the radius")
    else:
        faster, note = "tie", "eta = alpha: both rates 1/2"
    return Comparison(faster=faster, rho_recommended=eta / alpha,
                      radius_sb=radius_sb, radius_admm=radius_admm, note=note)


def rate_report_to_csv(report: RateReport, spectrum: DeltaSpectrum, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "delta", "rate"])
        for i, (d, r) in enumerate(zip(spectrum.deltas, report.rates)):
            writer.writerow([i, "%.17g" % d, "%.17g" % r])
        writer.writerow(["# radius", "%.17g" % report.spectral_radius, ""])
        writer.writerow(["# eta_star", "%.17g" % report.optimal_eta, ""])
        writer.writerow(["# rho_star", "%.17g" % report.optimal_rho, ""])
        writer.writerow(["# gamma", "%.17g" % report.gamma, ""])


# ---------------------------------------------------------------------------
# Dense brute-force oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CaseRadii:
    H: np.ndarray
    radius_dense: float
    radius_analytic: float


@dataclass(frozen=True)
class TransitionOracle:
    """Dense transition machinery of the quadratic recursion on a tiny grid."""

    A: np.ndarray
    C: np.ndarray
    s: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    G: np.ndarray
    offset: np.ndarray
    cases: dict


def dense_transition_oracle(kernel: ConvolutionKernel, shape, rho: float,
                            eta: float, alpha: float,
                            y: np.ndarray = None) -> TransitionOracle:
    """Materialize s, P, Q, the split transition matrix G and the
    applicable per-case x transition matrices as explicit dense matrices.

    Restricted to periodic operators on grids of at most 16x16 pixels;
    intended purely as a ground-truth check of the per-frequency formulas.
    """
    h, w = shape
    n = h * w
    if n > 256:
        raise ValueError("dense oracle is restricted to grids <= 16x16")
    _check_positive(rho=rho, eta=eta, alpha=alpha)
    A = sparse_blur_matrix(kernel, shape).toarray()
    C = sparse_diff_matrix(shape, "periodic").toarray()
    hess = rho * (A.T @ A) + eta * (C.T @ C)
    if np.linalg.matrix_rank(hess) < n:
        raise ValueError("singular dense Hessian rho*A'A + eta*C'C")
    inv = np.linalg.inv(hess)
    yv = np.zeros(n) if y is None else np.asarray(y, dtype=float).ravel()
    s = inv @ (A.T @ yv)
    P = (rho - 1.0) * (inv @ A.T)
    Q = (eta - alpha) * (inv @ C.T)
    m = C.shape[0]
    cu = rho / (rho + 1.0)
    cv = eta / (eta + alpha)
    G = np.block([
        [cu * (A @ P) + np.eye(n) / (rho + 1.0), cu * (A @ Q)],
        [cv * (C @ P), cv * (C @ Q) + (alpha / (eta + alpha)) * np.eye(m)],
    ])
    offset = np.concatenate([cu * (A @ s), cv * (C @ s)])

    lam = gram_spectrum(kernel, shape)
    om = diff_gram_spectrum(shape)
    deltas = delta_spectrum(lam, om, alpha)

    cases = {}
    if np.isclose(rho, 1.0):
        H1 = cv * (Q @ C) + (alpha / (eta + alpha)) * np.eye(n)
        cases["I"] = CaseRadii(H1, _radius(H1),
                               float(np.max(rate_s1(deltas.deltas, eta, alpha))))
    if np.isclose(eta, alpha):
        H2 = cu * (P @ A) + np.eye(n) / (rho + 1.0)
        cases["II"] = CaseRadii(H2, _radius(H2),
                                float(np.max(rate_s2(deltas.deltas, rho, alpha))))
    if np.isclose(rho, eta / alpha):
        H3 = cv * (P @ A + Q @ C) + (alpha / (eta + alpha)) * np.eye(n)
        cases["III"] = CaseRadii(H3, _radius(H3), rate_s3(eta, alpha))
    return TransitionOracle(A=A, C=C, s=s, P=P, Q=Q, G=G, offset=offset,
                            cases=cases)


def _radius(mat):
    return float(np.max(np.abs(np.linalg.eigvals(mat))))
