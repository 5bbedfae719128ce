"""Pure-Python (numpy) versions of the rolling-window kernels.

Same contract as the compiled ``_kernels`` module; used when the extension
is not built or when ``EPIPHASE_PURE_PYTHON`` is set.
"""

import numpy as np

# std below this fraction of |mean| counts as a flat window
FLAT_RTOL = 1e-12


def _windows(x, window):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return np.lib.stride_tricks.sliding_window_view(x, window)


def rolling_moments(x, window):
    """Population mean, std, skewness and raw kurtosis of every trailing window.

    Returns four arrays of length ``len(x) - window + 1``. Skewness and
    kurtosis are NaN on flat windows.
    """
    w = _windows(x, window)
    # rescale each window by a power of two near its max (exact) so tiny
    # values do not square into subnormals
    _, e = np.frexp(np.abs(w).max(axis=1))
    w = np.ldexp(w, -e[:, None])
    mean_hi = w.mean(axis=1)
    r = w - mean_hi[:, None]
    # low-order part of the mean; the deviations then carry no rounding bias
    mean_lo = r.mean(axis=1)
    d = r - mean_lo[:, None]
    mean = mean_hi + mean_lo
    m2 = (d * d).mean(axis=1)
    std = np.sqrt(m2)
    flat = std <= FLAT_RTOL * np.abs(mean)
    flat |= m2 == 0.0
    # standardize first so tiny-scale windows do not underflow in m2**2
    with np.errstate(divide="ignore", invalid="ignore"):
        z = d / std[:, None]
        z2 = z * z
        skew = np.where(flat, np.nan, (z2 * z).mean(axis=1))
        kurt = np.where(flat, np.nan, (z2 * z2).mean(axis=1))
    std = np.ldexp(np.where(flat, 0.0, std), e)
    return np.ldexp(mean, e), std, skew, kurt


def apen(w, m, r):
    """Approximate entropy of one sequence with tolerance ``r`` (self-matches counted)."""
    w = np.asarray(w, dtype=np.float64)
    n = len(w)

    def phi(k):
        emb = np.lib.stride_tricks.sliding_window_view(w, k)
        dist = np.abs(emb[:, None, :] - emb[None, :, :]).max(axis=2)
        counts = (dist <= r).sum(axis=1)
        return np.log(counts / (n - k + 1)).mean()

    return float(phi(m) - phi(m + 1))


def rolling_apen(x, window, m, r_factor):
    """ApEn of every trailing window with ``r = r_factor * std(window)``.

    Flat windows give 0.
    """
    w = _windows(x, window)
    out = np.empty(len(w))
    for i, row in enumerate(w):
        sd = row.std()
        if sd <= FLAT_RTOL * abs(row.mean()) or sd == 0.0:
            out[i] = 0.0
        else:
            out[i] = apen(row, m, r_factor * sd)
    return out


def bin_counts(w, bins):
    """Counts over ``bins`` equal-width intervals spanning ``[min, max]``.

    The last interval is closed. A zero-width range puts everything in bin 0.
    """
    w = np.asarray(w, dtype=np.float64)
    lo, hi = w.min(), w.max()
    counts = np.zeros(bins, dtype=np.int64)
    if hi <= lo:
        counts[0] = len(w)
        return counts
    idx = ((w - lo) / (hi - lo) * bins).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    np.add.at(counts, idx, 1)
    return counts


def rolling_shannon(x, window, bins):
    """Shannon entropy (nats) of the equal-width histogram of every trailing window."""
    w = _windows(x, window)
    out = np.empty(len(w))
    for i, row in enumerate(w):
        p = bin_counts(row, bins) / window
        p = p[p > 0]
        out[i] = 0.0 - float((p * np.log(p)).sum())
    return out
