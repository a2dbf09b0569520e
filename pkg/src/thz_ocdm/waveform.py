"""
OCDM chirp basis and modulator.

The discrete Fresnel transform (DFnT) of even order M is the circulant
unitary matrix

    Phi[u, v] = exp(-j*pi/4) * exp(j*pi*(u - v)**2 / M) / sqrt(M),

which factors as Theta1 @ F @ Theta2 / sqrt(M) (F the unnormalized DFT) and
is diagonalized by the unitary DFT with the root Zadoff-Chu eigenvalues
Gamma(m) = exp(-j*pi*m**2 / M). A payload matrix X (chirps x symbols) is
modulated as S = Phi^H X, either by a dense product or by the equivalent
DFT-precoded path ifft(conj(Gamma) * fft(X)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InvalidParameterError

QPSK = "qpsk"
_QPSK_ALPHABET = np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))


@dataclass(frozen=True)
class SubbandParams:
    """Configuration of one OCDM subband.

    Parameters
    ----------
    index : int
        Subband id.
    f_c : float
        Center frequency in Hz.
    delta_f : float
        Chirp spacing in Hz. The symbol duration is ``T = 1 / delta_f``.
    M : int
        Chirps per symbol (even).
    N : int
        Symbols per frame.
    k_abs : float
        Molecular absorption coefficient at ``f_c`` in 1/m.
    noise_var : float
        Receiver noise variance (per complex sample).
    """

    index: int
    f_c: float
    delta_f: float
    M: int
    N: int
    k_abs: float = 0.0
    noise_var: float = 1.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2 or self.M % 2:
            raise InvalidParameterError(f"M must be an even integer >= 2, got {self.M}")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidParameterError(f"N must be a positive integer, got {self.N}")
        if not self.f_c > 0:
            raise InvalidParameterError(f"f_c must be positive, got {self.f_c}")
        if not self.delta_f > 0:
            raise InvalidParameterError(f"delta_f must be positive, got {self.delta_f}")
        if not self.k_abs >= 0:
            raise InvalidParameterError(f"k_abs must be nonnegative, got {self.k_abs}")
        if not self.noise_var > 0:
            raise InvalidParameterError(f"noise_var must be positive, got {self.noise_var}")

    @property
    def T(self) -> float:
        """Symbol duration in seconds."""
        return 1.0 / self.delta_f

    @property
    def bandwidth(self) -> float:
        return self.M * self.delta_f


@dataclass(frozen=True)
class SymbolMatrix:
    entries: np.ndarray
    constellation: str = QPSK
    average_power: float = 1.0

    @property
    def shape(self):
        return self.entries.shape


@dataclass(frozen=True)
class FresnelBasis:
    order: int
    phi: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class OcdmFrame:
    samples: np.ndarray
    params: SubbandParams | None = None


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def zadoff_chu_eigenvalues(M: int) -> np.ndarray:
    """Eigenvalues ``exp(-j*pi*m**2/M)`` of the order-M DFnT."""
    m = np.arange(M, dtype=float)
    # m**2 mod 2M keeps the phase argument small for large M
    return np.exp(-1j * np.pi * np.mod(m * m, 2 * M) / M)


@lru_cache(maxsize=16)
def _cached_basis(M: int) -> FresnelBasis:
    u = np.arange(M, dtype=float)
    theta1 = np.exp(-1j * np.pi / 4) * np.exp(1j * np.pi * np.mod(u * u, 2 * M) / M)
    theta2 = np.exp(1j * np.pi * np.mod(u * u, 2 * M) / M)
    dft = np.exp(-2j * np.pi * np.mod(np.outer(u, u), M) / M)
    phi = theta1[:, None] * dft * theta2[None, :] / np.sqrt(M)
    return FresnelBasis(order=M, phi=_readonly(phi), gamma=_readonly(zadoff_chu_eigenvalues(M)))


def build_fresnel_basis(M: int) -> FresnelBasis:
    """Build the DFnT matrix and its Zadoff-Chu eigenvalues for even ``M``.

    Raises
    ------
    InvalidParameterError
        If ``M`` is odd or smaller than 2; the eigenvalue formula only holds
        for even orders.
    """
    if int(M) != M or M < 2 or M % 2:
        raise InvalidParameterError(f"DFnT order must be an even integer >= 2, got {M}")
    return _cached_basis(int(M))


def _check_dims(X: SymbolMatrix | np.ndarray, basis: FresnelBasis) -> np.ndarray:
    entries = X.entries if isinstance(X, SymbolMatrix) else np.asarray(X)
    if entries.ndim != 2 or entries.shape[0] != basis.order:
        raise InvalidParameterError(
            f"payload has shape {entries.shape}, expected {basis.order} rows"
        )
    return entries


def modulate_direct(X: SymbolMatrix | np.ndarray, basis: FresnelBasis,
                    params: SubbandParams | None = None) -> OcdmFrame:
    """Reference modulator: dense product ``S = Phi^H X``."""
    entries = _check_dims(X, basis)
    return OcdmFrame(samples=basis.phi.conj().T @ entries, params=params)


def modulate_fft(X: SymbolMatrix | np.ndarray, basis: FresnelBasis,
                 params: SubbandParams | None = None) -> OcdmFrame:
    """DFT-precoded modulator: per column fft, times conj(Gamma), ifft."""
    entries = _check_dims(X, basis)
    spectrum = np.fft.fft(entries, axis=0) * np.conj(basis.gamma)[:, None]
    return OcdmFrame(samples=np.fft.ifft(spectrum, axis=0), params=params)


def generate_payload(params: SubbandParams, seed, average_power: float = 1.0) -> SymbolMatrix:
    """Draw a seeded M x N QPSK payload with every ``|entry|**2 == average_power``."""
    rng = np.random.default_rng(seed)
    k = rng.integers(0, 4, size=(params.M, params.N))
    entries = np.sqrt(average_power) * _QPSK_ALPHABET[k]
    return SymbolMatrix(entries=entries, constellation=QPSK, average_power=average_power)
