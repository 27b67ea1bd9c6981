"""Time one structured transit with the compiled and the numpy propagators.

    python benchmarks/bench_kernel.py --repeat 3 --n-max-b 12
"""

import argparse
import time

import numpy as np

from cavity_raman import _backend
from cavity_raman.evolve import StepperSettings, evolve_structured
from cavity_raman.fockspace import FockSpaceConfig, compose_initial_state, make_field_state
from cavity_raman.model import DetuningSchedule, SystemParams, build_lindblad_model, khz


def transit(backend, space, params):
    rho = compose_initial_state("e", make_field_state("thermal", 0.3, space.n_max_a),
                                make_field_state("coherent", 1.5, space.n_max_b), space)
    t0, t1 = params.window()
    model = build_lindblad_model(params, DetuningSchedule.constant(khz(80), t0, t1), space)
    return evolve_structured(rho, model, t0, t1, StepperSettings(backend=backend))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--n-max-a", type=int, default=6)
    parser.add_argument("--n-max-b", type=int, default=12)
    args = parser.parse_args()

    space = FockSpaceConfig(args.n_max_a, args.n_max_b)
    params = SystemParams()
    print(f"space {space.dims}, dim {space.dim}")
    results = {}
    for backend in ("compiled", "python"):
        if backend == "compiled" and not _backend.COMPILED_AVAILABLE:
            print("compiled  not built")
            continue
        t, state = best_of(lambda: transit(backend, space, params), args.repeat)
        results[backend] = (t, state)
        print(f"{backend:9s} {t * 1e3:9.1f} ms")
    if len(results) == 2:
        (tc, sc), (tp, sp) = results["compiled"], results["python"]
        print(f"speed-up  {tp / tc:9.1f}x")
        print(f"max diff  {np.max(np.abs(sc.flat - sp.flat)):9.1e}")


if __name__ == "__main__":
    main()
