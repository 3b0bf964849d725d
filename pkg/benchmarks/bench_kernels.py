"""Compiled versus pure-numpy timing of the hot kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Times ``integrate_linear`` on a T1 readout pulse (the workload of the
pulse-sequence simulations) and ``solve_pivoted`` on the steady-state
system of a CPT spectrum point, once through the numba-compiled function
and once through its ``.py_func`` (the same source run by the interpreter,
which is what ``SIVCPT_NUMBA=0`` selects).  Compilation happens in a
warm-up call and is reported separately.
"""

import argparse
import time

import numpy as np

from sivcpt import _jit, dynamics, kernels, pulses


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    seq = pulses.PulseSequence(exchange_rate=1 / 0.3e-6)
    m = dynamics.real_generator(seq.pulse_params())
    y0 = dynamics.to_coords(seq.thermal_state())
    t_out = seq.pulse_times()

    ss = dynamics.LambdaParams(2e7, 2e7, 1.5e9, 1.5e6, 5.9e8, omega_b=1.9e10, two_photon_delta=1.9e10)
    a = dynamics.real_generator(ss)
    a = a / np.max(np.abs(a))
    a[0] = 0.0
    a[0, :3] = 1.0
    b = np.zeros(9)
    b[0] = 1.0

    cases = {
        "integrate_linear (500 ns pulse, 1000 samples)": (
            kernels.integrate_linear, (m, y0, t_out, 1e-8, 1e-10, 10_000_000), 1),
        "solve_pivoted (9x9 steady state) x1000": (kernels.solve_pivoted, (a, b), 1000),
    }
    print(f"numba enabled: {_jit.USE_NUMBA}")
    print(f"{'kernel':48s} {'compiled [ms]':>14s} {'python [ms]':>12s} {'speed-up':>9s}")
    for name, (fn, fargs, loops) in cases.items():
        t0 = time.perf_counter()
        fn(*fargs)
        warm = time.perf_counter() - t0

        def run(f=fn):
            for _ in range(loops):
                f(*fargs)

        def run_py(f=fn.py_func):
            for _ in range(loops):
                f(*fargs)

        fast = _time(run, args.repeat)
        slow = _time(run_py, max(1, args.repeat // 2))
        print(f"{name:48s} {1e3 * fast:14.3f} {1e3 * slow:12.3f} {slow / fast:9.1f}x   (first call {warm:.2f} s)")


if __name__ == "__main__":
    main()
