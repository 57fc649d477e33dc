"""Hot numerical kernels: piecewise-constant block propagation.

Every drive considered here (carrier, red/blue sideband, free) couples
disjoint pairs of basis states, so the Hamiltonian is block-diagonal in
2x2 blocks plus uncoupled singletons. Each time step applies the exact
2x2 matrix exponential per block, which keeps the propagator unitary to
machine precision.

Kernels are numba-compiled unless TWEEZERSIM_BACKEND=numpy; the
uncompiled functions are the fallback path and are exported with a
``_py`` suffix for equivalence tests and benchmarks.
"""

import numpy as np

from ._compat import BACKEND, USE_NUMBA, njit

__all__ = [
    "BACKEND",
    "USE_NUMBA",
    "evolve_blocks",
    "evolve_blocks_py",
    "evolve_blocks_batch",
    "evolve_blocks_batch_py",
]


def _evolve_blocks_impl(
    amps,
    pair_g,
    pair_e,
    coup,
    singles,
    static_diag,
    nvec,
    zvec,
    trap_series,
    freq_series,
    amp_factor,
    dt,
):
    """Propagate flat amplitudes in place through all time steps.

    Per step i the block Hamiltonian entries are
        diag(s) = static_diag[s] + dwt(i) * nvec[s] + 0.5 * fdot(i) * zvec[s]
        <e|H|g> = coup[p] * amp_factor[i]
    and exp(-i H dt) is applied in closed form.
    """
    n_steps = trap_series.shape[0]
    n_pairs = pair_g.shape[0]
    n_singles = singles.shape[0]
    for i in range(n_steps):
        dwt = trap_series[i]
        half_fdot = 0.5 * freq_series[i]
        af = amp_factor[i]
        for p in range(n_pairs):
            g = pair_g[p]
            e = pair_e[p]
            dg = static_diag[g] + dwt * nvec[g] + half_fdot * zvec[g]
            de = static_diag[e] + dwt * nvec[e] + half_fdot * zvec[e]
            c = coup[p] * af
            a = 0.5 * (dg + de)
            h = 0.5 * (de - dg)
            r = np.sqrt(c.real * c.real + c.imag * c.imag + h * h)
            ph = np.exp(-1j * a * dt)
            pg = amps[g]
            pe = amps[e]
            if r == 0.0:
                amps[g] = ph * pg
                amps[e] = ph * pe
                continue
            cos_ = np.cos(r * dt)
            sin_ = np.sin(r * dt)
            # (v.sigma) with v = (Re c, Im c, -h) / r in the (g, e) basis
            sg = (c.conjugate() * pe - h * pg) / r
            se = (c * pg + h * pe) / r
            amps[g] = ph * (cos_ * pg - 1j * sin_ * sg)
            amps[e] = ph * (cos_ * pe - 1j * sin_ * se)
        for s in range(n_singles):
            idx = singles[s]
            d = static_diag[idx] + dwt * nvec[idx] + half_fdot * zvec[idx]
            amps[idx] *= np.exp(-1j * d * dt)
    return amps


evolve_blocks_py = _evolve_blocks_impl
evolve_blocks = njit(cache=True)(_evolve_blocks_impl) if USE_NUMBA else _evolve_blocks_impl


def _make_batch(step_fn):
    def _evolve_blocks_batch_impl(
        amps0,
        pair_g,
        pair_e,
        coup,
        singles,
        static_diag,
        nvec,
        zvec,
        trap_2d,
        freq_2d,
        ampf_2d,
        dt,
        out,
    ):
        """Evolve one shared initial state under many noise realizations."""
        for t in range(out.shape[0]):
            amps = amps0.copy()
            step_fn(
                amps,
                pair_g,
                pair_e,
                coup,
                singles,
                static_diag,
                nvec,
                zvec,
                trap_2d[t],
                freq_2d[t],
                ampf_2d[t],
                dt,
            )
            out[t] = amps
        return out

    return _evolve_blocks_batch_impl


evolve_blocks_batch_py = _make_batch(evolve_blocks_py)
if USE_NUMBA:
    evolve_blocks_batch = njit(cache=True)(_make_batch(evolve_blocks))
else:
    evolve_blocks_batch = evolve_blocks_batch_py
