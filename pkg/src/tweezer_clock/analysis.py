"""Fringe fitting, redshift extraction and coherence verification."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import stats

from .errors import FitError, InvalidInputError
from .montecarlo import EnsembleTable, ExperimentPlan, simulate_ensemble, stream


@dataclass(frozen=True)
class FringeFit:
    amplitude: float
    phase: float
    rms_residual: float
    epsilon_hat: float
    t_ref: float
    saturated: bool = False
    amplitude_stderr: float = float("nan")
    offset: float = 0.5

    def model(self, T, drive_detuning: float) -> np.ndarray:
        """Fitted curve 1/2 + A (T / t_ref) sin(Delta T + phase)."""
        T = np.asarray(T, dtype=float)
        arg = np.mod(drive_detuning * T, 2 * np.pi) + self.phase
        return self.offset + self.amplitude * (T / self.t_ref) * np.sin(arg)

    def to_dict(self) -> dict:
        return asdict(self)


def extract_epsilon(fit: FringeFit | float, t_ref: float) -> tuple[float, bool]:
    """Invert the visibility law: eps = (2 / t_ref) arcsin(2 A).

    Returns ``(epsilon_hat, saturated)``; a visibility estimate above 1 is
    clamped and flagged.
    """
    if not t_ref > 0:
        raise InvalidInputError("t_ref must be positive")
    amplitude = fit.amplitude if isinstance(fit, FringeFit) else float(fit)
    v = 2 * abs(amplitude)
    saturated = v > 1
    return 2 / t_ref * math.asin(min(v, 1.0)), saturated


def fit_fringe(durations, pg_means, pg_stderrs, drive_detuning: float,
               t_ref: float | None = None) -> FringeFit:
    """Weighted linear least squares for the ground-state fringe.

    Model: P(T) = 1/2 + (T / t_ref) [a sin(Delta T) + b cos(Delta T)].
    The frequency is held at the drive detuning, leaving amplitude and phase
    as the only free parameters. The T / t_ref envelope follows the linear
    growth of the visibility with T, so the fitted amplitude refers to
    t_ref exactly. ``t_ref`` defaults to the middle of the scanned fringe
    period (first duration + pi/Delta).
    """
    T = np.asarray(durations, dtype=float)
    y = np.asarray(pg_means, dtype=float) - 0.5
    if T.size < 3:
        raise FitError("need at least 3 durations")
    if not drive_detuning > 0:
        raise InvalidInputError("drive detuning must be positive")
    if t_ref is None:
        t_ref = float(T.min()) + math.pi / drive_detuning
    err = np.asarray(pg_stderrs, dtype=float) if pg_stderrs is not None else np.ones_like(T)
    weighted = pg_stderrs is not None and bool(np.all(err > 0))
    # zero error bars (noiseless data) fall back to equal weights
    w = 1 / err if weighted else np.ones_like(T)

    phase_arg = np.mod(drive_detuning * T, 2 * math.pi)
    envelope = T / t_ref
    X = np.column_stack([np.sin(phase_arg), np.cos(phase_arg)]) * envelope[:, None]
    Xw, yw = X * w[:, None], y * w
    if np.linalg.matrix_rank(Xw, tol=1e-10 * max(1.0, np.abs(Xw).max())) < 2:
        raise FitError("singular design matrix; durations do not resolve the fringe phase")
    (a, b), *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    resid = y - X @ np.array([a, b])

    cov = np.linalg.inv(Xw.T @ Xw)
    if not weighted:
        # no usable error bars: scale by the residual variance instead
        cov *= float(resid @ resid) / max(T.size - 2, 1)
    amplitude = math.hypot(a, b)
    if amplitude > 0:
        grad = np.array([a, b]) / amplitude
        amp_err = math.sqrt(float(grad @ cov @ grad))
    else:
        amp_err = math.sqrt(float(np.trace(cov)) / 2)

    eps, saturated = extract_epsilon(amplitude, t_ref)
    return FringeFit(
        amplitude=amplitude,
        # a sin + b cos = A sin(x + phase)
        phase=math.atan2(b, a),
        rms_residual=float(np.sqrt(np.mean(resid**2))),
        epsilon_hat=eps,
        t_ref=t_ref,
        saturated=saturated,
        amplitude_stderr=amp_err,
    )


def fit_table(table: EnsembleTable, drive_detuning: float) -> FringeFit:
    s = table.summary()
    return fit_fringe(s["T_s"], s["pg_mean"], s["pg_stderr"], drive_detuning)


@dataclass(frozen=True)
class AccuracyReport:
    epsilon_true: float
    mean_epsilon_hat: float
    std_epsilon_hat: float
    relative_accuracy: float
    n_ensembles: int
    n_saturated: int = 0
    n_failed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _ensemble_epsilon(args) -> tuple[float, bool]:
    plan, k = args
    fit = fit_table(simulate_ensemble(plan, ensemble=k), plan.drive_detuning)
    return fit.epsilon_hat, fit.saturated


def epsilon_estimates(plan: ExperimentPlan, n_ensembles: int, jobs: int = 1):
    """Fitted redshift for each of ``n_ensembles`` independent replicas.

    Returns (estimates, saturated flags, failure count). Failed fits yield NaN.
    """
    tasks = [(plan, k) for k in range(n_ensembles)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_safe_ensemble, tasks, chunksize=max(1, n_ensembles // (4 * jobs))))
    else:
        results = [_safe_ensemble(t) for t in tasks]
    eps = np.array([r[0] for r in results])
    sat = np.array([r[1] for r in results])
    return eps, sat, int(np.isnan(eps).sum())


def _safe_ensemble(args):
    try:
        return _ensemble_epsilon(args)
    except FitError:
        return float("nan"), False


def relative_accuracy(plan: ExperimentPlan, n_ensembles: int = 1000, jobs: int = 1) -> AccuracyReport:
    """One-standard-deviation spread of the extracted redshift, relative to truth."""
    if n_ensembles < 2:
        raise InvalidInputError("need at least 2 ensembles")
    if not plan.epsilon > 0:
        raise InvalidInputError("plan epsilon must be positive to normalize the accuracy")
    eps, sat, failed = epsilon_estimates(plan, n_ensembles, jobs)
    good = eps[~np.isnan(eps)]
    if good.size < 2:
        raise FitError("fewer than 2 ensembles produced a fit")
    std = float(good.std(ddof=1))
    return AccuracyReport(
        epsilon_true=plan.epsilon,
        mean_epsilon_hat=float(good.mean()),
        std_epsilon_hat=std,
        relative_accuracy=std / plan.epsilon,
        n_ensembles=n_ensembles,
        n_saturated=int(sat.sum()),
        n_failed=failed,
    )


def arcsine_pdf(x, A: float):
    """Density of 1/2 - A sin(phi) for phi uniform on [0, 2 pi)."""
    if not 0 < A <= 0.5:
        raise InvalidInputError("A must lie in (0, 0.5]")
    x = np.asarray(x, dtype=float)
    u2 = A**2 - (0.5 - x) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(u2 > 0, 1 / (np.pi * np.sqrt(np.where(u2 > 0, u2, 1.0))), 0.0)
    return out if out.ndim else float(out)


def histogram_edges(n_atoms: int) -> np.ndarray:
    """One bin per attainable estimator value k/n_atoms up to 100 atoms, else 50 bins."""
    if n_atoms <= 100:
        return (np.arange(n_atoms + 2) - 0.5) / n_atoms
    return np.linspace(0.0, 1.0, 51)


def convolved_p1_probabilities(A: float, n_atoms: int, edges: np.ndarray,
                               n_samples: int = 1_000_000, seed: int = 0) -> np.ndarray:
    """Bin probabilities of the P1 estimator under coherent splitting.

    Monte Carlo: the per-run P1 follows the arcsine law, then n_atoms
    binomial draws turn it into the estimator.
    """
    rng = stream(seed, 0xA5C)
    p = 0.5 - A * np.sin(rng.uniform(0, 2 * np.pi, n_samples))
    est = rng.binomial(n_atoms, np.clip(p, 0, 1)) / n_atoms
    hist, _ = np.histogram(est, bins=edges)
    return hist / n_samples


@dataclass(frozen=True)
class CoherenceReport:
    edges: list[float]
    histogram_coherent: list[float]
    histogram_incoherent: list[float]
    expected_coherent: list[float]
    ks_statistic: float
    ks_pvalue: float
    chi2_arcsine: float
    chi2_pvalue: float
    incoherent_std: float
    verdict: str
    ks_threshold: float = 1e-3

    def to_dict(self) -> dict:
        return asdict(self)


def _chi2_merged(observed: np.ndarray, expected: np.ndarray, min_expected: float = 5.0):
    """Chi-square with adjacent sparse bins pooled until each expects >= min_expected."""
    obs_m, exp_m = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs_m.append(o_acc)
            exp_m.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if exp_m:
            obs_m[-1] += o_acc
            exp_m[-1] += e_acc
        else:
            obs_m.append(o_acc)
            exp_m.append(e_acc)
    obs_m, exp_m = np.array(obs_m), np.array(exp_m)
    exp_m *= obs_m.sum() / exp_m.sum()
    chi2 = float(((obs_m - exp_m) ** 2 / exp_m).sum())
    dof = max(len(obs_m) - 1, 1)
    return chi2, float(stats.chi2.sf(chi2, dof))


def coherence_test(coherent: EnsembleTable, incoherent: EnsembleTable, A: float,
                   ks_threshold: float = 1e-3, n_reference: int = 1_000_000,
                   seed: int = 0) -> CoherenceReport:
    """Compare P1-estimator histograms of coherent and collapsed splitting."""
    if coherent.counts.size == 0 or incoherent.counts.size == 0:
        raise InvalidInputError("empty ensemble table")
    n = coherent.n_atoms
    if incoherent.n_atoms != n:
        raise InvalidInputError("coherent and incoherent tables use different atom numbers")
    x_coh = coherent.p1_hat.ravel()
    x_inc = incoherent.p1_hat.ravel()
    edges = histogram_edges(n)
    h_coh, _ = np.histogram(x_coh, bins=edges)
    h_inc, _ = np.histogram(x_inc, bins=edges)
    ks = stats.ks_2samp(x_coh, x_inc)
    expected = convolved_p1_probabilities(A, n, edges, n_reference, seed)
    chi2, chi2_p = _chi2_merged(h_coh.astype(float), expected * x_coh.size)
    return CoherenceReport(
        edges=edges.tolist(),
        histogram_coherent=(h_coh / x_coh.size).tolist(),
        histogram_incoherent=(h_inc / x_inc.size).tolist(),
        expected_coherent=expected.tolist(),
        ks_statistic=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        chi2_arcsine=chi2,
        chi2_pvalue=chi2_p,
        incoherent_std=float(x_inc.std(ddof=1)),
        verdict="distinguishable" if ks.pvalue < ks_threshold else "not-distinguishable",
        ks_threshold=ks_threshold,
    )


TABLE1_ROWS = (
    # (N_a, N_2, T [s], total runtime [days], relative accuracy)
    (100, 5000, 1, 2.8, 0.381),
    (100, 10000, 1, 5.6, 0.284),
    (20, 5000, 3, 3.7, 0.289),
    (100, 5000, 3, 3.7, 0.129),
    (100, 10000, 3, 7.4, 0.098),
    (10, 1000, 10, 1.4, 0.284),
    (10, 5000, 10, 7.0, 0.124),
    (20, 5000, 10, 7.0, 0.088),
    (100, 1000, 10, 1.4, 0.09),
    (100, 5000, 10, 7.0, 0.038),
    (100, 10000, 10, 13.9, 0.027),
)


def table1_plan(n_atoms: int, n_reps: int, T: float, epsilon: float, seed: int,
                base: ExperimentPlan | None = None) -> ExperimentPlan:
    base = base or ExperimentPlan()
    return replace(base, n_atoms=n_atoms, n_reps=n_reps, t0=T, epsilon=epsilon, seed=seed)
