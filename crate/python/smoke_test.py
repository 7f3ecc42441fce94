#!/usr/bin/env python3
"""Smoke test for the pamfract_py extension module.

Builds nothing itself: expects `cargo build --release -p pamfract-py` to have
produced target/release/libpamfract_py.so. Copies the cdylib under an
importable name and exercises the main types and operations end to end.

Run from the repository root:

    cargo build --release -p pamfract-py
    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def locate_extension() -> Path:
    candidates = [
        REPO / "target" / "release" / "libpamfract_py.so",
        REPO / "target" / "debug" / "libpamfract_py.so",
        REPO / "target" / "release" / "libpamfract_py.dylib",
        REPO / "target" / "debug" / "libpamfract_py.dylib",
    ]
    for c in candidates:
        if c.exists():
            return c
    sys.exit("extension not found; run: cargo build --release -p pamfract-py")


def main() -> None:
    lib = locate_extension()
    staging = Path(tempfile.mkdtemp(prefix="pamfract_py_"))
    suffix = ".so" if lib.suffix == ".so" else ".so"
    shutil.copy2(lib, staging / ("pamfract_py" + suffix))
    sys.path.insert(0, str(staging))
    import pamfract_py as pf

    checks = 0

    def ok(name: str, cond: bool) -> None:
        nonlocal checks
        if not cond:
            sys.exit(f"[FAIL] {name}")
        checks += 1
        print(f"[PASS] {name}")

    # Noise: determinism and moments.
    ns = pf.NoiseStream(1, 0)
    ok("noise determinism", ns.gaussian(0, 0) == pf.NoiseStream(1, 0).gaussian(0, 0))
    draws = ns.plane(0, 0, 100_000)
    mean = sum(draws) / len(draws)
    var = sum(d * d for d in draws) / len(draws) - mean * mean
    ok("noise mean", abs(mean) < 3.0 / math.sqrt(len(draws)))
    ok("noise variance", abs(var - 1.0) < 0.02)
    ok("noise plane matches elementwise", draws[:3] == [ns.gaussian(0, i) for i in range(3)])

    # Zero-noise dirac solve reproduces the heat kernel at x = 0.
    grid = pf.Grid(0.01, 0.005, -4.0, 4.0, 0.5, [0.5])
    traj = pf.solve(grid, "dirac", 0.0, 1, 0, noise=False)
    xs = grid.xs()
    u = traj.values(0.5)
    center = min(range(len(xs)), key=lambda i: abs(xs[i]))
    exact = 1.0 / math.sqrt(2.0 * math.pi * 0.5)
    ok("heat kernel", abs(u[center] - exact) / exact < 1e-2)

    # Stochastic solve: positivity and Cole-Hopf round trip.
    grid = pf.Grid(0.05, 0.0025, -4.0, 4.0, 1.0, [1.0])
    traj = pf.solve(grid, "dirac", 0.0, 42, 7)
    xs = grid.xs()
    center = min(range(len(xs)), key=lambda i: abs(xs[i]))
    u = traj.values(1.0)
    ok("positivity", all(v > 0.0 for v in u))
    h = traj.heights(1.0)
    ok("cole-hopf", all(abs(math.exp(hv) - uv) < 1e-12 * max(1.0, uv) for hv, uv in zip(h, u)))

    # Upsilon identity at t = 1 and the sup functional.
    ups = traj.upsilon(1.0, [0.0])
    ok("upsilon identity", abs(ups[0] - (h[center] + 1.0 / 24.0)) < 1e-9)
    sup, argsup = traj.sup_parabola(1.0, 0.5, 2.0)
    ok("sup within window", -2.0 <= argsup <= 2.0)
    ok("sup dominates center", sup >= ups[0])

    # Localized solve with the full window agrees with the full solve.
    local = pf.localized_solve(grid, "dirac", 0.0, 42, 7, 0.0, 4.0)
    ok("localized full window", local.values(1.0) == u)

    # Checkpoint round trip through bytes.
    back = pf.restore_trajectory(traj.checkpoint())
    ok("checkpoint round trip", back.values(1.0) == u)

    # Level sets: stretch and pixelate.
    pts = pf.stretch([(2.0, 3.0)], 1.0)
    ok("stretch formula", abs(pts[0][0] - math.exp(2.0)) < 1e-9 and pts[0][1] == 3.0)
    ok("pixelate floors", pf.pixelate([(2.3, 0.7), (2.9, 0.1)]) == [(2, 0)])

    # Synthetic sets and the dimension machinery.
    xi2 = pf.xi_q(2.0, 3)
    brute = sum(
        1
        for s in range(1, 30)
        for j in range(1, 30)
        if s < math.exp(3) and j < math.exp(3) and j >= s**2
    )
    ok("xi_q count vs brute force", len(xi2) == brute)
    ok("mu_n hand value", pf.mu_n([(3, 0)], 1, 0.5) == 1)
    ok(
        "density bound",
        abs(pf.density_lower_bound([(3, 0)], 1, 0.5) - math.exp(-1.5)) < 1e-12,
    )
    one_pixel = pf.nu_content([(4, 0)], 2, 1.0, "exact_small")
    ok("single pixel content", abs(one_pixel - math.exp(-2.0)) < 1e-12)

    est = pf.dimension_of_region("xi", 4, 12, q=2.0)
    ok("xi_2 dimension", abs(est["rho_star"] - 1.0) < 0.15)
    est = pf.dimension_of_region("quadrant", 4, 12)
    ok("quadrant dimension", abs(est["rho_star"] - 2.0) < 0.1)

    print(f"\nall {checks} smoke checks passed")


if __name__ == "__main__":
    main()
