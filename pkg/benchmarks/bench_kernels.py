"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Each kernel is checked for agreement before timing.
"""
import argparse
import timeit

import numpy as np

from qzeno import DetectorParams, MeasuredSystemSpec, _backend, fock


def rhs_case(N, S=None):
    det = DetectorParams(omega=0.3, gamma_phase=0.5, gamma_down=2.0, nbar=1.0)
    if S is None:
        spec = fock.LindbladSpec.sector(det, N, 5.0, 1.0, -1.0, 1.0, -1.0)
        S = 1
    else:
        system = MeasuredSystemSpec.two_level(1.0, -1.0, 0.1, 5.0, e1_f=2.0)
        spec = fock.LindbladSpec.coupled(system, det, N)
        S = spec.dim_system
    rng = np.random.default_rng(0)
    rho = rng.normal(size=(S, N, S, N)) + 1j * rng.normal(size=(S, N, S, N))
    return (rho, *spec.kernel_args())


def cosine_case(n_u, n_delta):
    u = np.linspace(0.0, 5.0, n_u)
    wh = np.exp(-u) / n_u
    delta = np.linspace(-20.0, 20.0, n_delta)
    return u, wh, delta


def bench(fn, args, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(*args), number=1), 1e-6)))
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    py, cc = _backend.fallback, _backend.compiled
    if cc is None:
        print("compiled extension not built; only the numpy fallback is available")
        return
    print(f"{'kernel':<32}{'python [s]':>14}{'compiled [s]':>14}{'speedup':>10}")
    cases = [(f"lindblad_rhs sector N={N}", "lindblad_rhs", rhs_case(N)) for N in (16, 32, 64, 128)]
    cases += [(f"lindblad_rhs coupled N={N}", "lindblad_rhs", rhs_case(N, S=2)) for N in (16, 32, 64)]
    cases += [(f"cosine_transform {nu}x{nd}", "cosine_transform", cosine_case(nu, nd))
              for nu, nd in ((1600, 400), (6400, 1600), (25600, 3200))]
    for label, name, call_args in cases:
        f_py, f_cc = getattr(py, name), getattr(cc, name)
        ref, got = f_py(*call_args), f_cc(*call_args)
        err = np.max(np.abs(ref - got)) / max(np.max(np.abs(ref)), 1e-300)
        assert err < 1e-10, f"{label}: backends disagree ({err:.2e})"
        tp, tc = bench(f_py, call_args, args.repeat), bench(f_cc, call_args, args.repeat)
        print(f"{label:<32}{tp:>14.3e}{tc:>14.3e}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
