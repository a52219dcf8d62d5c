"""Periodic pseudo-spectral solvers for the viscous Burgers and KdV benchmarks."""

from __future__ import annotations

import numpy as np

from ..errors import SolverError
from ..field_data import GridMeta, from_grid
from .truth import GroundTruth


def _smooth_random_field(rng, n_modes: int, shape, length: float, amplitude: float):
    """Sum of low-wavenumber Fourier modes with random phases, scaled to max |value| = amplitude."""
    dims = len(shape)
    axes = [np.arange(n) * (length / n) for n in shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    out = np.zeros(shape)
    k0 = 2 * np.pi / length
    for _ in range(n_modes):
        ks = rng.integers(-3, 4, size=dims)
        if not ks.any():
            ks[0] = 1
        phase = rng.uniform(0, 2 * np.pi)
        out += rng.normal() * np.cos(sum(k * k0 * m for k, m in zip(ks, mesh)) + phase)
    peak = np.max(np.abs(out))
    return out * (amplitude / peak) if peak > 0 else out


def gen_burgers2d(nx: int = 100, ny: int = 100, nt: int = 200, viscosity: float = 0.005, seed: int = 0,
                  length: float = 2 * np.pi, t_end: float = 0.5, amplitude: float = 0.5, cfl: float = 0.2,
                  initial=None):
    """Coupled 2D viscous Burgers system on a periodic square, RK4 in time.

        u_t = nu (u_xx + u_yy) - u u_x - v u_y
        v_t = nu (v_xx + v_yy) - u v_x - v v_y
    """
    if min(nx, ny, nt) < 16:
        raise ValueError("grid sizes must be >= 16")
    rng = np.random.default_rng(seed)
    if initial is None:
        u0 = _smooth_random_field(rng, 4, (ny, nx), length, amplitude)
        v0 = _smooth_random_field(rng, 4, (ny, nx), length, amplitude)
    else:
        u0, v0 = (np.asarray(a, dtype=np.float64) for a in initial)
    kx = np.fft.fftfreq(nx, d=length / nx) * 2 * np.pi
    ky = np.fft.fftfreq(ny, d=length / ny) * 2 * np.pi
    KX, KY = np.meshgrid(kx, ky)
    lap = -(KX**2 + KY**2)
    dealias = (np.abs(KX) < (2 / 3) * np.abs(kx).max()) & (np.abs(KY) < (2 / 3) * np.abs(ky).max())

    def rhs(uh, vh):
        u, v = np.fft.ifft2(uh).real, np.fft.ifft2(vh).real
        ux, uy = np.fft.ifft2(1j * KX * uh).real, np.fft.ifft2(1j * KY * uh).real
        vx, vy = np.fft.ifft2(1j * KX * vh).real, np.fft.ifft2(1j * KY * vh).real
        nu_ = np.fft.fft2(-(u * ux + v * uy)) * dealias
        nv_ = np.fft.fft2(-(u * vx + v * vy)) * dealias
        return viscosity * lap * uh + nu_, viscosity * lap * vh + nv_

    dt_out = t_end / (nt - 1)
    h = length / nx
    peak0 = max(np.abs(u0).max(), np.abs(v0).max())
    uh, vh = np.fft.fft2(u0), np.fft.fft2(v0)
    U, V = [u0.copy()], [v0.copy()]
    for _ in range(nt - 1):
        speed = max(np.abs(U[-1]).max(), np.abs(V[-1]).max(), 1e-12)
        dt_stable = min(cfl * h / speed, 0.25 * h * h / viscosity)
        nsub = max(1, int(np.ceil(dt_out / dt_stable)))
        dt = dt_out / nsub
        for _ in range(nsub):
            a1 = rhs(uh, vh)
            a2 = rhs(uh + 0.5 * dt * a1[0], vh + 0.5 * dt * a1[1])
            a3 = rhs(uh + 0.5 * dt * a2[0], vh + 0.5 * dt * a2[1])
            a4 = rhs(uh + dt * a3[0], vh + dt * a3[1])
            uh = uh + dt / 6 * (a1[0] + 2 * a2[0] + 2 * a3[0] + a4[0])
            vh = vh + dt / 6 * (a1[1] + 2 * a2[1] + 2 * a3[1] + a4[1])
        u, v = np.fft.ifft2(uh).real, np.fft.ifft2(vh).real
        peak = max(np.abs(u).max(), np.abs(v).max())
        if not np.isfinite(peak) or (peak0 > 0 and peak > 10 * peak0):
            raise SolverError("Burgers solution grew more than 10x; reduce the time step (cfl)")
        U.append(u)
        V.append(v)
    grid = GridMeta(nx=nx, ny=ny, nt=nt, dx=length / nx, dy=length / ny, dt=dt_out)
    samples = from_grid(grid, {"u": np.array(U), "v": np.array(V)})
    truth = GroundTruth(
        equations={
            "u_t": {"lap(u)": viscosity, "u*u_x": -1.0, "v*u_y": -1.0},
            "v_t": {"lap(v)": viscosity, "u*v_x": -1.0, "v*v_y": -1.0},
        },
        description=f"2D viscous Burgers, nu={viscosity}, seed {seed}",
    )
    return samples, truth


def soliton(x, c: float, x0: float, delta: float):
    """Single KdV soliton of u_t + u u_x + delta u_xxx = 0 moving at speed c."""
    return 3 * c / np.cosh(0.5 * np.sqrt(c / delta) * (x - x0)) ** 2


def gen_kdv(nx: int = 512, nt: int = 201, seed: int = 0, delta: float = 0.0025, t_end: float = 1.0,
            length: float = 2.0, initial=None, dt_max: float = 2e-4):
    """KdV ``u_t = -u u_x - delta u_xxx`` on a periodic domain [-1, 1), integrating-factor RK4.

    The default initial condition is a two-soliton profile whose speeds and
    positions are jittered by ``seed``.
    """
    if nx < 16 or nt < 16:
        raise ValueError("grid sizes must be >= 16")
    x = -length / 2 + np.arange(nx) * (length / nx)
    if initial is None:
        rng = np.random.default_rng(seed)
        c1, c2 = 1.0 + 0.1 * rng.uniform(-1, 1), 0.5 + 0.05 * rng.uniform(-1, 1)
        x1, x2 = -0.7 + 0.05 * rng.uniform(-1, 1), -0.3 + 0.05 * rng.uniform(-1, 1)
        # periodic images keep the profile smooth across the wrap-around
        u0 = sum(soliton(x + m * length, c, x0, delta) for m in (-2, -1, 0, 1, 2) for c, x0 in ((c1, x1), (c2, x2)))
    else:
        u0 = np.asarray(initial, dtype=np.float64)
    k = np.fft.fftfreq(nx, d=length / nx) * 2 * np.pi
    lin = 1j * delta * k**3  # Fourier symbol of -delta d^3/dx^3
    dt_out = t_end / (nt - 1)
    nsub = max(1, int(np.ceil(dt_out / dt_max)))
    dt = dt_out / nsub
    E, E2 = np.exp(lin * dt), np.exp(lin * dt / 2)

    def nonlin(uh):
        u = np.fft.ifft(uh).real
        return -0.5j * k * np.fft.fft(u * u)

    uh = np.fft.fft(u0)
    peak0 = np.abs(u0).max()
    U = [u0.copy()]
    for _ in range(nt - 1):
        for _ in range(nsub):
            a = nonlin(uh)
            b = nonlin(E2 * (uh + 0.5 * dt * a))
            c = nonlin(E2 * uh + 0.5 * dt * b)
            d = nonlin(E * uh + dt * E2 * c)
            uh = E * uh + dt / 6 * (E * a + 2 * E2 * (b + c) + d)
        u = np.fft.ifft(uh).real
        if not np.all(np.isfinite(u)) or (peak0 > 0 and np.abs(u).max() > 10 * peak0):
            raise SolverError("KdV solution grew more than 10x; reduce dt_max")
        U.append(u)
    grid = GridMeta(nx=nx, nt=nt, dx=length / nx, dt=dt_out, x0=float(x[0]))
    samples = from_grid(grid, {"u": np.array(U)})
    truth = GroundTruth(
        equations={"u_t": {"u*u_x": -1.0, "u_xxx": -delta}},
        description=f"KdV, delta={delta}, seed {seed}",
    )
    return samples, truth
