"""
Per-subband sensing processor.

DFnT filtering turns the received chirp samples back into (delayed) payload
symbols; dividing by the known payload leaves a two-dimensional complex
sinusoid

    Z[m, n] ~ h~ * exp(j*2*pi*(n*theta*f_c*T - m*tau*delta_f)),

whose oversampled periodogram peaks at m'/M_per = tau*delta_f and
n'/N_per = theta*f_c*T (theta = v/c).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft

from .constants import SPEED_OF_LIGHT
from .errors import InvalidParameterError
from .channel import ReceivedCube
from .waveform import FresnelBasis, SubbandParams, SymbolMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RadarCube:
    samples: np.ndarray
    params: SubbandParams | None = None


@dataclass(frozen=True)
class PeriodogramMap:
    """Squared magnitude of the oversampled 2D transform.

    ``values[i, j]`` is the delay bin ``m' = i`` and the signed Doppler bin
    ``n' = j - n_per // 2``.
    """

    values: np.ndarray
    m_per: int
    n_per: int
    params: SubbandParams | None = None
    cube: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class Peak:
    """Periodogram peak on a (possibly refined) M_grid x N_grid search grid."""

    m_bin: int
    n_bin: int
    m_grid: int
    n_grid: int
    value: float


@dataclass(frozen=True)
class SubbandEstimate:
    subband_index: int
    range_est: float
    velocity_est: float
    var_range: float
    var_velocity: float
    peak_power: float
    amp_est: float


@dataclass(frozen=True)
class SensingOptions:
    """Knobs of the sensing processor.

    ``oversampling`` sets M_per/M and N_per/N of the full periodogram.
    After the grid argmax the periodogram is re-evaluated ``refine_levels``
    times on a local grid ``refine_factor`` times finer; ``refine_levels=0``
    keeps the plain oversampled-grid estimate.
    """

    oversampling: tuple[int, int] = (4, 4)
    guard: int = 3
    refine_factor: int = 8
    refine_levels: int = 3
    p_avg: float = 1.0

    def __post_init__(self):
        if min(self.oversampling) < 2:
            raise InvalidParameterError("oversampling factors must be >= 2")
        if self.guard < 0 or self.refine_levels < 0 or self.refine_factor < 2:
            raise InvalidParameterError("guard/refine_levels must be >= 0, refine_factor >= 2")


def _samples(Y) -> np.ndarray:
    return Y.samples if hasattr(Y, "samples") else np.asarray(Y)


def dfnt_filter(Y: ReceivedCube | np.ndarray, basis: FresnelBasis) -> np.ndarray:
    """Apply the unitary DFnT ``Phi`` to every column of ``Y``.

    Uses the circulant factorization Phi = F^H diag(Gamma) F, so the cost is
    O(M log M) per column.
    """
    y = _samples(Y)
    if y.ndim != 2 or y.shape[0] != basis.order:
        raise InvalidParameterError(f"cube shape {y.shape} does not match DFnT order {basis.order}")
    return np.fft.ifft(basis.gamma[:, None] * np.fft.fft(y, axis=0), axis=0)


def dfnt_filter_direct(Y: ReceivedCube | np.ndarray, basis: FresnelBasis) -> np.ndarray:
    """Direct double sum ``sum_l Y[l, n] exp(-j*pi/4) exp(j*pi*(m-l)**2/M) / sqrt(M)``."""
    y = _samples(Y)
    M = basis.order
    m = np.arange(M)
    kernel = np.exp(-1j * np.pi / 4) * np.exp(1j * np.pi * (m[:, None] - m[None, :]) ** 2 / M)
    return kernel @ y / np.sqrt(M)


def remove_payload(Yf: np.ndarray, X: SymbolMatrix | np.ndarray,
                   params: SubbandParams | None = None) -> RadarCube:
    """Elementwise division by the known payload."""
    x = X.entries if isinstance(X, SymbolMatrix) else np.asarray(X)
    if x.shape != np.shape(Yf):
        raise InvalidParameterError(f"payload shape {x.shape} != cube shape {np.shape(Yf)}")
    if np.any(np.abs(x) == 0):
        raise InvalidParameterError("payload contains zero-modulus symbols")
    return RadarCube(samples=np.asarray(Yf) / x, params=params)


def periodogram(Z: RadarCube | np.ndarray, m_per: int, n_per: int) -> PeriodogramMap:
    """Zero-padded 2D periodogram; inverse transform along chirps, forward along symbols."""
    z = _samples(Z)
    M, N = z.shape
    if m_per <= M or n_per <= N:
        raise InvalidParameterError(
            f"periodogram grid ({m_per}, {n_per}) must exceed cube size ({M}, {N})"
        )
    if n_per % 2 == 0:
        # (-1)^n modulation centres the Doppler axis without an fftshift copy
        spec = sp_fft.ifft(z * (-1.0) ** np.arange(N), n=m_per, axis=0, norm="forward")
        spec = sp_fft.fft(spec, n=n_per, axis=1)
    else:
        spec = sp_fft.ifft(z, n=m_per, axis=0, norm="forward")
        spec = np.fft.fftshift(sp_fft.fft(spec, n=n_per, axis=1), axes=1)
    values = spec.real ** 2 + spec.imag ** 2
    return PeriodogramMap(values=values, m_per=m_per, n_per=n_per,
                          params=getattr(Z, "params", None), cube=z)


def evaluate_periodogram(z: np.ndarray, m_bins: np.ndarray, n_bins: np.ndarray,
                         m_grid: int, n_grid: int) -> np.ndarray:
    """Periodogram of ``z`` at arbitrary bins of an ``m_grid`` x ``n_grid`` search grid."""
    M, N = z.shape
    # integer products reduced mod grid keep the phase arguments small
    u = np.exp(2j * np.pi * np.mod(np.outer(np.arange(M), m_bins), m_grid) / m_grid)
    w = np.exp(-2j * np.pi * np.mod(np.outer(np.arange(N), n_bins), n_grid) / n_grid)
    a = u.T @ z @ w
    return a.real ** 2 + a.imag ** 2


def _wrap_signed(n: int, n_grid: int) -> int:
    return (n + n_grid // 2) % n_grid - n_grid // 2


def peak_search(pmap: PeriodogramMap, num_targets: int, guard: int = 3) -> list[Peak]:
    """Successive maxima with a cyclic (2*guard+1)^2 exclusion zone.

    Ties go to the lowest delay bin, then the lowest (most negative) Doppler bin.
    """
    if num_targets < 1:
        raise InvalidParameterError("num_targets must be >= 1")
    work = np.array(pmap.values, dtype=float, copy=True)
    offset = pmap.n_per // 2
    peaks = []
    for _ in range(num_targets):
        flat = int(np.argmax(work))
        i, j = divmod(flat, work.shape[1])
        if not np.isfinite(work[i, j]):
            raise InvalidParameterError(
                f"cannot place {num_targets} peaks with guard {guard} on a "
                f"{pmap.m_per}x{pmap.n_per} grid"
            )
        peaks.append(Peak(m_bin=i, n_bin=j - offset, m_grid=pmap.m_per, n_grid=pmap.n_per,
                          value=float(pmap.values[i, j])))
        rows = np.arange(i - guard, i + guard + 1) % pmap.m_per
        cols = np.arange(j - guard, j + guard + 1) % pmap.n_per
        work[np.ix_(rows, cols)] = -np.inf
    return peaks


def refine_peak(z: np.ndarray, peak: Peak, factor: int = 8, levels: int = 3) -> Peak:
    """Re-locate a peak on successively ``factor``-times finer local grids.

    Each level searches +-1 cell of the previous grid around the current
    peak, i.e. the argmax over (2*factor+1)^2 points of the finer grid.
    """
    m_bin, n_bin, m_grid, n_grid, value = peak.m_bin, peak.n_bin, peak.m_grid, peak.n_grid, peak.value
    offsets = np.arange(-factor, factor + 1)
    for _ in range(levels):
        m_grid *= factor
        n_grid *= factor
        m_cand = m_bin * factor + offsets
        n_cand = n_bin * factor + offsets
        vals = evaluate_periodogram(z, m_cand, n_cand, m_grid, n_grid)
        i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
        m_bin = int(m_cand[i]) % m_grid
        n_bin = _wrap_signed(int(n_cand[j]), n_grid)
        value = float(vals[i, j])
    return Peak(m_bin=m_bin, n_bin=n_bin, m_grid=m_grid, n_grid=n_grid, value=value)


def bins_to_params(m_hat: int, n_hat: int, m_per: int, n_per: int,
                   params: SubbandParams) -> tuple[float, float]:
    """Map a (delay bin, signed Doppler bin) pair to (range in m, velocity in m/s)."""
    tau = m_hat / (params.delta_f * m_per)
    theta = n_hat / (params.f_c * params.T * n_per)
    return SPEED_OF_LIGHT * tau, SPEED_OF_LIGHT * theta


def crlb(params: SubbandParams, amp: float, p_avg: float = 1.0) -> tuple[float, float]:
    """High-SNR variance bounds (range m^2, velocity (m/s)^2) of one subband estimate."""
    if not amp > 0:
        raise InvalidParameterError(f"amplitude must be positive for a finite bound, got {amp}")
    M, N = params.M, params.N
    common = 6 * params.noise_var / ((2 * np.pi) ** 2 * M * N * amp ** 2 * p_avg)
    var_r = common / (N ** 2 - 1) * (SPEED_OF_LIGHT / params.delta_f) ** 2
    var_v = common / (M ** 2 - 1) * (SPEED_OF_LIGHT / (params.T * params.f_c)) ** 2
    return float(var_r), float(var_v)


def estimate_amplitude(pmap: PeriodogramMap, peak: Peak) -> float:
    """|h~| estimate ``sqrt(peak value) / (M*N)``."""
    M, N = pmap.cube.shape if pmap.cube is not None else (pmap.params.M, pmap.params.N)
    return float(np.sqrt(peak.value) / (M * N))


def process_subband(Y: ReceivedCube, X: SymbolMatrix | np.ndarray, basis: FresnelBasis,
                    num_targets: int = 1, options: SensingOptions = SensingOptions()) -> list[SubbandEstimate]:
    """Full sensing chain of one subband: filter, payload removal, periodogram, peaks."""
    params = Y.params
    Z = remove_payload(dfnt_filter(Y, basis), X, params)
    pmap = periodogram(Z, options.oversampling[0] * params.M, options.oversampling[1] * params.N)
    estimates = []
    for peak in peak_search(pmap, num_targets, options.guard):
        if options.refine_levels:
            peak = refine_peak(Z.samples, peak, options.refine_factor, options.refine_levels)
        r_hat, v_hat = bins_to_params(peak.m_bin, peak.n_bin, peak.m_grid, peak.n_grid, params)
        amp = estimate_amplitude(pmap, peak)
        if amp == 0:
            logger.warning("subband %d: empty periodogram peak", params.index)
            continue
        var_r, var_v = crlb(params, amp, options.p_avg)
        estimates.append(SubbandEstimate(
            subband_index=params.index, range_est=r_hat, velocity_est=v_hat,
            var_range=var_r, var_velocity=var_v, peak_power=peak.value, amp_est=amp,
        ))
    return estimates
