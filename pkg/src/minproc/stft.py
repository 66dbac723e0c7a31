"""STFT analysis/synthesis and long-term spectral statistics.

Square-root Hann windows are used on both the analysis and the synthesis
side at 50% overlap, so the overlapped window product sums to one and the
round trip is exact up to float rounding.  Signals are zero-padded by one
hop on either side before framing, which keeps every input sample under
full window coverage (no edge taper on the reconstruction).
"""

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

__all__ = [
    "FrameParams",
    "Spectrogram",
    "sqrt_hann",
    "analyze",
    "synthesize",
    "long_term_psd",
    "read_wav",
    "write_wav",
]


@dataclass(frozen=True)
class FrameParams:
    """STFT framing parameters (50% overlap is required)."""

    sample_rate: int
    frame_len: int
    hop: int

    def __post_init__(self):
        if self.frame_len <= 0 or self.hop <= 0:
            raise ValueError("frame_len and hop must be positive")
        if self.frame_len != 2 * self.hop:
            raise ValueError("50% overlap required (frame_len = 2*hop)")

    @classmethod
    def from_ms(cls, sample_rate, frame_ms=32.0):
        frame_len = int(round(sample_rate * frame_ms / 1000.0))
        if frame_len % 2:
            frame_len += 1
        return cls(sample_rate, frame_len, frame_len // 2)

    @property
    def fft_len(self):
        return self.frame_len

    @property
    def bins(self):
        return self.fft_len // 2 + 1

    @property
    def freqs(self):
        """Center frequency of each one-sided bin in Hz."""
        return np.fft.rfftfreq(self.fft_len, 1.0 / self.sample_rate)


@dataclass
class Spectrogram:
    """One-sided STFT data with shape (channels, frames, bins)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim == 2:
            self.data = self.data[None, :, :]
        if self.data.ndim != 3:
            raise ValueError("spectrogram data must be (channels, frames, bins)")

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def frames(self):
        return self.data.shape[1]

    @property
    def bins(self):
        return self.data.shape[2]


def sqrt_hann(frame_len):
    """Square root of the periodic Hann window: w[n] = sin(pi*n/N).

    The squared window overlap-adds to exactly one at 50% hop because
    sin^2 + cos^2 = 1 for half-frame shifts.
    """
    n = np.arange(frame_len)
    return np.sin(np.pi * n / frame_len)


def _pad_layout(n_samples, params):
    """Return (pad_front, n_frames, total) covering every sample fully."""
    pad = params.frame_len - params.hop
    n_frames = int(np.ceil(n_samples / params.hop)) + 1
    total = (n_frames - 1) * params.hop + params.frame_len
    return pad, n_frames, total


def analyze(signal, params):
    """STFT of a mono (n,) or multichannel (channels, n) signal.

    Returns a Spectrogram with data shaped (channels, frames, bins).
    """
    x = np.atleast_2d(np.asarray(signal, dtype=np.float64))
    if x.ndim != 2:
        raise ValueError("signal must be 1-D or 2-D")
    n = x.shape[1]
    if n < params.frame_len:
        raise ValueError("insufficient samples")

    pad, n_frames, total = _pad_layout(n, params)
    padded = np.zeros((x.shape[0], total))
    padded[:, pad:pad + n] = x

    window = sqrt_hann(params.frame_len)
    frames = np.lib.stride_tricks.sliding_window_view(
        padded, params.frame_len, axis=1)[:, ::params.hop, :]
    frames = frames[:, :n_frames, :] * window
    return Spectrogram(np.fft.rfft(frames, n=params.fft_len, axis=2))


def synthesize(spec, params, num_samples=None):
    """Overlap-add inverse STFT.

    ``num_samples`` trims or zero-extends the output; by default the
    maximum number of fully covered samples is returned.
    """
    data = spec.data if isinstance(spec, Spectrogram) else np.atleast_3d(spec)
    channels, n_frames, bins = data.shape
    if bins != params.bins:
        raise ValueError("bin count does not match frame parameters")

    window = sqrt_hann(params.frame_len)
    frames = np.fft.irfft(data, n=params.fft_len, axis=2) * window

    pad = params.frame_len - params.hop
    total = (n_frames - 1) * params.hop + params.frame_len
    out = np.zeros((channels, total))
    for t in range(n_frames):
        start = t * params.hop
        out[:, start:start + params.frame_len] += frames[:, t, :]

    covered = total - 2 * pad
    if num_samples is None:
        num_samples = covered
    y = np.zeros((channels, num_samples))
    m = min(num_samples, total - pad)
    y[:, :m] = out[:, pad:pad + m]
    if y.shape[0] == 1:
        return y[0]
    return y


def long_term_psd(spec):
    """Per-bin long-term PSD matrix, the mean of x[t,k] x[t,k]^H over frames.

    Returns an array of shape (bins, channels, channels); Hermitian and
    positive semi-definite per bin by construction.
    """
    data = spec.data if isinstance(spec, Spectrogram) else np.asarray(spec)
    # mean over t of the outer product across channels
    psd = np.einsum("mtk,ntk->kmn", data, np.conj(data)) / data.shape[1]
    return 0.5 * (psd + np.conj(psd).transpose(0, 2, 1))


def read_wav(path):
    """Read a WAV file, returning (sample_rate, float64 data (channels, n)).

    16-bit PCM is scaled to [-1, 1); 32-bit float is passed through.
    """
    rate, data = wavfile.read(path)
    data = np.asarray(data)
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    else:
        data = data.astype(np.float64)
    if data.ndim == 1:
        data = data[None, :]
    else:
        data = data.T
    return rate, data


def write_wav(path, rate, data, dtype="float32"):
    """Write mono (n,) or multichannel (channels, n) audio as WAV."""
    data = np.atleast_2d(np.asarray(data))
    out = data.T if data.shape[0] > 1 else data[0]
    if dtype == "float32":
        wavfile.write(path, rate, out.astype(np.float32))
    elif dtype == "int16":
        clipped = np.clip(out, -1.0, 32767.0 / 32768.0)
        wavfile.write(path, rate, np.round(clipped * 32768.0).astype(np.int16))
    else:
        raise ValueError("dtype must be 'float32' or 'int16'")
