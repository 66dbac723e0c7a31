"""Perceptual subband decomposition on the ERB-rate scale.

Band centers are spaced uniformly in ERB-rate between the band edges and
each band applies a squared-cosine weight to the STFT bins within one
center spacing, so interior bins see weights that sum to one.  A second
copy of the weights, normalized per bin across bands, is kept for
recombining per-band decisions back to per-bin values.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "erb_rate",
    "Filterbank",
    "build_filterbank",
    "allocate_targets",
    "load_band_importance",
]


def erb_rate(freq_hz):
    """Map frequency in Hz to the ERB-rate scale (Glasberg and Moore)."""
    return 21.4 * np.log10(1.0 + 0.00437 * np.asarray(freq_hz, dtype=float))


@dataclass
class Filterbank:
    """Squared-cosine band weights over STFT bins.

    weight[j, k] is the analysis weight of bin k in band j; recomb[j, k]
    is the same weight normalized per bin so that columns with any
    coverage sum to one.  importance[j] sums to one across bands.
    """

    centers_hz: np.ndarray
    weight: np.ndarray
    recomb: np.ndarray
    importance: np.ndarray
    bin_freqs: np.ndarray
    members: list = field(repr=False, default_factory=list)

    @property
    def n_bands(self):
        return self.weight.shape[0]

    @property
    def n_bins(self):
        return self.weight.shape[1]

    def covered(self):
        """Boolean mask of bins claimed by at least one band."""
        return self.weight.sum(axis=0) > 0.0


def build_filterbank(params, n_bands=30, f_lo=150.0, f_hi=8000.0,
                     importance=None):
    """Construct the ERB-spaced filterbank for the given frame parameters.

    Arguments
    ---------
    params: FrameParams giving the bin grid.
    n_bands: number of bands spaced on the ERB-rate scale.
    f_lo, f_hi: band center range in Hz.
    importance: optional per-band weights, either an array of length
        n_bands or a two-column (center_hz, weight) table; normalized to
        sum to one.  Default is uniform.
    """
    if n_bands < 2:
        raise ValueError("need at least two bands")
    if not (0.0 < f_lo < f_hi):
        raise ValueError("band edges must satisfy 0 < f_lo < f_hi")
    if f_hi > params.sample_rate / 2.0 + 1e-9:
        raise ValueError("f_hi exceeds the Nyquist frequency")

    freqs = params.freqs
    e_bins = erb_rate(freqs)
    e_lo, e_hi = erb_rate(f_lo), erb_rate(f_hi)
    e_centers = np.linspace(e_lo, e_hi, n_bands)
    spacing = (e_hi - e_lo) / (n_bands - 1)
    centers_hz = (10.0 ** (e_centers / 21.4) - 1.0) / 0.00437

    dist = np.abs(e_bins[None, :] - e_centers[:, None]) / spacing
    weight = np.where(dist < 1.0, np.cos(0.5 * np.pi * dist) ** 2, 0.0)

    members = [np.flatnonzero(weight[j] > 0.0) for j in range(n_bands)]
    if any(m.size == 0 for m in members):
        raise ValueError("empty band")

    colsum = weight.sum(axis=0)
    recomb = np.divide(weight, colsum, out=np.zeros_like(weight),
                       where=colsum > 0.0)

    gamma = _resolve_importance(importance, n_bands, centers_hz)
    return Filterbank(centers_hz, weight, recomb, gamma, freqs, members)


def _resolve_importance(importance, n_bands, centers_hz):
    if importance is None:
        return np.full(n_bands, 1.0 / n_bands)
    table = np.asarray(importance, dtype=float)
    if table.ndim == 1:
        if table.size != n_bands:
            raise ValueError("importance length does not match band count")
        values = table
    elif table.ndim == 2 and table.shape[1] == 2:
        order = np.argsort(table[:, 0])
        values = np.interp(centers_hz, table[order, 0], table[order, 1])
    else:
        raise ValueError("importance must be 1-D or a (center_hz, weight) table")
    if np.any(values < 0.0) or values.sum() <= 0.0:
        raise ValueError("importance weights must be nonnegative with positive sum")
    return values / values.sum()


def load_band_importance(path):
    """Load a two-column (center_hz, weight) text table."""
    table = np.loadtxt(path, ndmin=2)
    if table.shape[1] != 2:
        raise ValueError("importance table must have two columns")
    return table


def allocate_targets(a_star, fb):
    """Per-band intelligibility targets and their SNR-domain equivalents.

    Every band receives the same target a_star in [0, 1); the SNR form is
    the saturation inverse t / (1 - t), which diverges as the target
    approaches one.  Returns (targets, target_snrs).
    """
    if not (0.0 <= a_star):
        raise ValueError("target must be nonnegative")
    if a_star >= 1.0:
        raise ValueError("target SNR unbounded")
    targets = np.full(fb.n_bands, float(a_star))
    target_snrs = targets / (1.0 - targets)
    return targets, target_snrs
