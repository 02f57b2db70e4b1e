"""Small estimators shared by the verifiers."""
from __future__ import annotations

import numpy as np
from scipy import stats


def mean_se(x) -> tuple[float, float]:
    """Sample mean and its standard error for i.i.d. draws."""
    x = np.asarray(x, float)
    if x.size < 2:
        return float(x.mean()) if x.size else 0.0, float("nan")
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


def batch_means_se(x, n_batches: int = 20) -> tuple[float, float]:
    """Mean and standard error from non-overlapping batch means (autocorrelated chains)."""
    x = np.asarray(x, float)
    b = x.size // n_batches
    if b < 2:
        return mean_se(x)
    means = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / np.sqrt(n_batches))


def autocorr(x, max_lag: int | None = None) -> np.ndarray:
    x = np.asarray(x, float) - np.mean(x)
    n = x.size
    max_lag = min(max_lag or n // 2, n - 1)
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[: max_lag + 1]
    return acf / acf[0] if acf[0] > 0 else np.zeros(max_lag + 1)


def ess(x) -> float:
    """Effective sample size with Geyer's initial positive sequence truncation."""
    x = np.asarray(x, float)
    if x.size < 4 or np.var(x) == 0:
        return float(x.size)
    rho = autocorr(x)
    tau = 1.0
    for k in range(1, rho.size - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(x.size / tau)


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor over equal-length chains."""
    c = np.asarray(chains, float)
    m, n = c.shape
    means = c.mean(axis=1)
    W = c.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    var = (n - 1) / n * W + B / n
    return float(np.sqrt(var / W)) if W > 0 else float("nan")


def poisson_chi2(counts, mean: float, min_expected: float = 5.0) -> tuple[float, float]:
    """Chi-squared goodness of fit of integer counts against Poisson(mean); bins pooled to ``min_expected``."""
    counts = np.asarray(counts, int)
    n = counts.size
    k_hi = int(max(counts.max(), stats.poisson.ppf(1 - 1e-9, mean))) + 1
    ks = np.arange(k_hi + 1)
    expected = n * stats.poisson.pmf(ks, mean)
    expected[-1] += n * stats.poisson.sf(k_hi, mean)
    observed = np.bincount(np.minimum(counts, k_hi), minlength=k_hi + 1).astype(float)
    obs, exp = pool_bins(observed, expected, min_expected)
    chi2 = float(np.sum((obs - exp) ** 2 / exp))
    return chi2, float(stats.chi2.sf(chi2, obs.size - 1))


def pool_bins(observed, expected, min_expected: float = 5.0):
    """Merge adjacent bins left to right until each expected count reaches ``min_expected``."""
    obs, exp = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs.append(o_acc)
            exp.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if exp:
            obs[-1] += o_acc
            exp[-1] += e_acc
        else:
            obs.append(o_acc)
            exp.append(e_acc)
    return np.array(obs), np.array(exp)


def tv_distance(p, q) -> float:
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    n = max(p.size, q.size)
    p = np.pad(p, (0, n - p.size)) / p.sum()
    q = np.pad(q, (0, n - q.size)) / q.sum()
    return 0.5 * float(np.abs(p - q).sum())
