"""
Embedded invariant suite run by ``thz-ocdm selftest``.

Each check returns ``(ok, detail)``. The DFnT basis is obtained through a
factory argument so that a corrupted basis can be injected and the failing
check observed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import (
    Reference,
    SceneConfig,
    TargetTruth,
    apply_radar_channel,
    calibrated,
    path_loss,
    radar_echo,
    radar_echo_direct,
)
from .constants import SPEED_OF_LIGHT
from .fusion import combine, combined_variance, optimal_weights
from .sensing import (
    SensingOptions,
    crlb,
    dfnt_filter,
    dfnt_filter_direct,
    peak_search,
    periodogram,
    process_subband,
)
from .waveform import (
    SubbandParams,
    build_fresnel_basis,
    generate_payload,
    modulate_direct,
    modulate_fft,
)

ORDERS = (2, 4, 8, 16, 64, 256)
TOL = 1e-10


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def _dft(M: int) -> np.ndarray:
    return np.fft.fft(np.eye(M), axis=0) / np.sqrt(M)


def _random_cube(rng, M, N):
    return rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))


def on_grid_target(params: SubbandParams, m_bin: int, n_bin: int,
                   oversampling=(4, 4)) -> TargetTruth:
    """Target whose delay and Doppler fall exactly on periodogram bins (m_bin, n_bin)."""
    m_per, n_per = oversampling[0] * params.M, oversampling[1] * params.N
    r = SPEED_OF_LIGHT * m_bin / (params.delta_f * m_per)
    v = SPEED_OF_LIGHT * n_bin / (params.f_c * params.T * n_per)
    return TargetTruth(range=r, velocity=v)


def check_unitarity(factory):
    worst = max(np.abs(b.phi.conj().T @ b.phi - np.eye(M)).max()
                for M in ORDERS for b in [factory(M)])
    return worst < TOL, f"max |Phi^H Phi - I| = {worst:.2e}"


def check_circulant(factory):
    worst = 0.0
    for M in ORDERS:
        phi = factory(M).phi
        shifted = np.roll(np.roll(phi, 1, axis=0), 1, axis=1)
        worst = max(worst, np.abs(shifted - phi).max())
    return worst < TOL, f"max circulant residual = {worst:.2e}"


def check_gamma_modulus(factory):
    worst = max(np.abs(np.abs(factory(M).gamma) - 1).max() for M in ORDERS)
    return worst < TOL, f"max ||Gamma| - 1| = {worst:.2e}"


def check_eigen_consistency(factory):
    worst = 0.0
    for M in ORDERS:
        b = factory(M)
        F = _dft(M)
        worst = max(worst, np.abs(F @ b.phi @ F.conj().T - np.diag(b.gamma)).max())
    return worst < TOL, f"max |F Phi F^H - diag(Gamma)| = {worst:.2e}"


def check_modulation_paths(factory):
    rng = np.random.default_rng(1)
    worst = 0.0
    for M in ORDERS:
        b = factory(M)
        X = _random_cube(rng, M, 3)
        worst = max(worst, np.abs(modulate_fft(X, b).samples - modulate_direct(X, b).samples).max())
    return worst < TOL, f"max |fft - direct| = {worst:.2e}"


def check_energy(factory):
    rng = np.random.default_rng(2)
    worst = 0.0
    for M in ORDERS:
        X = _random_cube(rng, M, 4)
        S = modulate_fft(X, factory(M)).samples
        worst = max(worst, abs(np.linalg.norm(S) - np.linalg.norm(X)) / np.linalg.norm(X))
    return worst < TOL, f"max relative energy change = {worst:.2e}"


def check_filter_paths(factory):
    rng = np.random.default_rng(3)
    worst = 0.0
    for M in ORDERS:
        b = factory(M)
        Y = _random_cube(rng, M, 3)
        worst = max(worst, np.abs(dfnt_filter(Y, b) - dfnt_filter_direct(Y, b)).max())
    return worst < TOL, f"max |fft filter - direct| = {worst:.2e}"


def check_echo_paths(factory):
    rng = np.random.default_rng(4)
    sb = SubbandParams(index=0, f_c=0.3e12, delta_f=3.9e6, M=32, N=8)
    b = factory(sb.M)
    X = generate_payload(sb, 5).entries
    worst = 0.0
    for r in rng.uniform(0.01, 3.0, 5):
        t = TargetTruth(range=float(r), velocity=float(rng.uniform(-50, 50)))
        fast = radar_echo(X, b, sb, t, 0.7 - 0.2j)
        worst = max(worst, np.abs(fast - radar_echo_direct(X, sb, t, 0.7 - 0.2j)).max())
    return worst < 1e-9, f"max |fast echo - direct| = {worst:.2e}"


def check_path_loss(factory):
    got = path_loss(0.3e12, 1.0, 0.05)
    want = (4 * np.pi * 0.3e12 / SPEED_OF_LIGHT) ** 2 * np.exp(0.05)
    return abs(got - want) <= 1e-12 * want, f"PL(0.3 THz, 1 m) = {got:.6e}"


def check_crlb_closed_form(factory):
    sb = SubbandParams(index=0, f_c=0.3e12, delta_f=3.9e6, M=256, N=256)
    var_r, var_v = crlb(sb, 1.0)
    ok = abs(np.sqrt(var_r) - 4.58e-4) < 5e-6 and abs(np.sqrt(var_v) - 2.32e-2) < 5e-4
    return ok, f"sqrt bounds = ({np.sqrt(var_r):.3e} m, {np.sqrt(var_v):.3e} m/s)"


def check_weights(factory):
    var = np.array([1.0, 2.0, 4.0, 8.0])
    w = optimal_weights(var)
    best = float(np.sum(w ** 2 * var))
    rng = np.random.default_rng(6)
    trial = rng.dirichlet(np.ones(len(var)), 1000)
    rival = float(np.min(trial ** 2 @ var))
    ok = abs(w.sum() - 1) < 1e-12 and best <= rival and abs(best - combined_variance(var)) < 1e-12
    return ok, f"optimal {best:.4f} vs best random {rival:.4f}"


def check_fused_variance(factory):
    rng = np.random.default_rng(7)
    var = np.array([1.0, 2.0, 4.0, 8.0])
    draws = rng.standard_normal((100_000, 4)) * np.sqrt(var)
    fused = np.array([combine(row, optimal_weights(var)) for row in draws[:2000]])
    w = optimal_weights(var)
    emp = float(np.var(draws @ w))
    ok = abs(emp / combined_variance(var) - 1) < 0.05 and np.allclose(fused, draws[:2000] @ w)
    return ok, f"empirical {emp:.4f} vs {combined_variance(var):.4f}"


def check_periodogram_dc(factory):
    pmap = periodogram(np.ones((8, 8)), 32, 32)
    peak = peak_search(pmap, 1, guard=1)[0]
    ok = (peak.m_bin, peak.n_bin) == (0, 0) and abs(peak.value - 64 ** 2) < 1e-9
    return ok, f"peak at ({peak.m_bin}, {peak.n_bin}), value {peak.value:.1f}"


def check_noise_free_exactness(factory):
    sb = SubbandParams(index=0, f_c=0.3e12, delta_f=3.9e6, M=64, N=64)
    options = SensingOptions(refine_levels=0)
    target = on_grid_target(sb, 1, 5)
    scene = calibrated(SceneConfig(targets=(target,), subbands=(sb,),
                                   reference=Reference(snr_db=15.0, range=target.range)))
    b = factory(sb.M)
    X = generate_payload(sb, 8)
    Y = apply_radar_channel(X, b, scene, sb, 9, include_noise=False)
    est = process_subband(Y, X, b, 1, options)[0]
    ok = (abs(est.range_est - target.range) < 1e-12 * max(1.0, target.range)
          and abs(est.velocity_est - target.velocity) < 1e-9)
    return ok, f"range error {est.range_est - target.range:.2e} m, velocity error {est.velocity_est - target.velocity:.2e} m/s"


CHECKS: tuple[tuple[str, Callable], ...] = (
    ("dfnt-unitarity", check_unitarity),
    ("dfnt-circulant", check_circulant),
    ("zadoff-chu-unit-modulus", check_gamma_modulus),
    ("eigen-consistency", check_eigen_consistency),
    ("modulation-path-equivalence", check_modulation_paths),
    ("modulation-energy", check_energy),
    ("filter-path-equivalence", check_filter_paths),
    ("echo-path-equivalence", check_echo_paths),
    ("path-loss-closed-form", check_path_loss),
    ("crlb-closed-form", check_crlb_closed_form),
    ("weight-optimality", check_weights),
    ("fused-variance", check_fused_variance),
    ("periodogram-dc-peak", check_periodogram_dc),
    ("noise-free-exactness", check_noise_free_exactness),
)


def run_selftest(basis_factory: Callable | None = None) -> list[CheckResult]:
    """Run every check; ``basis_factory(M)`` defaults to ``build_fresnel_basis``."""
    basis_factory = basis_factory or build_fresnel_basis
    results = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn(basis_factory)
        except Exception as exc:  # a crash is a failed check, not a crashed suite
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append(CheckResult(name=name, ok=bool(ok), detail=detail))
    return results
