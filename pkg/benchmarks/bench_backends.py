"""Benchmark the compiled kernels against the pure-Python fallback.

Usage:
    python benchmarks/bench_backends.py [--trajectories N] [--steps N]

Times the block-propagation kernel both through the active backend
(numba unless TWEEZERSIM_BACKEND=numpy) and through the uncompiled
fallback functions, on the same workload: a noisy blue-sideband pi pulse
over the full Fock ladder, repeated over many noise trajectories.
"""

import argparse
import time

import numpy as np

from tweezersim import kernels
from tweezersim.dynamics import (
    NoiseModel,
    PulseSpec,
    QuasiStatic,
    SpectralDensity,
    _pair_tables,
    _static_vectors,
    sample_noise,
)
from tweezersim.states import ElectronicLevel, TrapSpec, prepare_state

ETA, RABI = 0.36, 2 * np.pi * 2e3
TRAP = TrapSpec(
    omega_t=2 * np.pi * 35e3, mass=88 * 1.66053906892e-27, k=2 * np.pi / 698e-9, eta=ETA
)


def build_workload(n_traj, n_steps, n_max=12):
    pulse = PulseSpec.bsb_pi(ETA, RABI)
    model = NoiseModel(
        trap_frequency=QuasiStatic(0.05 * ETA * RABI),
        laser_frequency=SpectralDensity(np.array([0.0, 5e3]), np.array([2e3, 2e3])),
    )
    dt = pulse.duration / n_steps
    trap = np.empty((n_traj, n_steps))
    freq = np.empty((n_traj, n_steps))
    for i in range(n_traj):
        r = sample_noise(model, pulse.duration, dt, seed=i)
        trap[i], freq[i] = r.trap_frequency, r.laser_frequency
    ampf = np.ones_like(trap)
    pg, pe, coup, singles, _ = _pair_tables(pulse, ETA, n_max, "rwa-ladder")
    static, nvec, zvec = _static_vectors(pulse, n_max)
    amps0 = prepare_state(ElectronicLevel.DOWN, 0, n_max=n_max).amps.reshape(-1)
    return (amps0, pg, pe, coup, singles, static, nvec, zvec, trap, freq, ampf, dt)


def run(batch_fn, work, n_traj):
    amps0, pg, pe, coup, singles, static, nvec, zvec, trap, freq, ampf, dt = work
    out = np.empty((n_traj, amps0.size), dtype=np.complex128)
    t0 = time.perf_counter()
    batch_fn(amps0, pg, pe, coup, singles, static, nvec, zvec, trap, freq, ampf, dt, out)
    return time.perf_counter() - t0, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trajectories", type=int, default=500)
    parser.add_argument("--steps", type=int, default=2000)
    args = parser.parse_args()

    work = build_workload(args.trajectories, args.steps)
    print(f"active backend: {kernels.BACKEND}")
    print(f"workload: {args.trajectories} trajectories x {args.steps} steps, n_max=12\n")

    if kernels.USE_NUMBA:
        run(kernels.evolve_blocks_batch, work, 2)  # compile outside the timing
    t_active, out_active = run(kernels.evolve_blocks_batch, work, args.trajectories)

    n_py = max(args.trajectories // 50, 2)
    work_py = build_workload(n_py, args.steps)
    t_py, out_py = run(kernels.evolve_blocks_batch_py, work_py, n_py)
    t_py_scaled = t_py * args.trajectories / n_py

    np.testing.assert_allclose(
        out_active[:n_py],
        run(kernels.evolve_blocks_batch_py, build_workload(n_py, args.steps), n_py)[1],
        atol=1e-12,
    )

    print(f"{'path':<28}{'time':>12}{'per trajectory':>18}")
    print(f"{kernels.BACKEND + ' (active)':<28}{t_active:>10.3f} s{t_active / args.trajectories * 1e3:>14.2f} ms")
    print(
        f"{'python fallback (scaled)':<28}{t_py_scaled:>10.3f} s"
        f"{t_py / n_py * 1e3:>14.2f} ms"
    )
    if kernels.USE_NUMBA:
        print(f"\nspeedup: {t_py_scaled / t_active:.0f}x (results bit-identical)")
    else:
        print("\nset TWEEZERSIM_BACKEND=numba (default) for the compiled path")


if __name__ == "__main__":
    main()
