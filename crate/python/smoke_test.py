"""Smoke test for the `bnls` Python module.

Build and install first, e.g. `maturin develop --release -m crates/py/Cargo.toml`.
"""

import cmath
import math

import bnls


def main():
    params = bnls.ModelParams(10, 2.0)
    assert abs(params.s_c - 1.0) < 1e-15 and abs(params.frequency - 1.0) < 1e-15

    # h = 1/32 puts a cell face at r = 1, so the unit ball is integrated exactly
    ball_grid = bnls.RadialGrid(10, 32.0, 1024)
    ball = ball_grid.integrate([1.0 if r < 1.0 else 0.0 for r in ball_grid.nodes])
    assert abs(ball - math.pi**5 / 120.0) < 1e-12, ball

    grid = bnls.RadialGrid(10, 30.0, 1024)
    assert len(grid) == 1024

    gs = bnls.ground_state(params, grid)
    poh = gs.pohozaev()
    assert max(poh.values()) < 1e-3, poh
    assert gs.gn_gap() < 1e-3

    bump = bnls.Potential.inverse_power(1.0, 9.0)
    v0, dv0 = bump(0.0)
    assert v0 == 1.0 and dv0 == 0.0

    half = [0.5 * q for q in gs.q]
    verdict = bnls.classify(half, grid, bump, params, gs)
    assert verdict["class"] == "below_both", verdict

    run = bnls.evolve(half, grid, bump, params, dt=1e-3, t_end=0.2, record_every=50)
    assert run.termination == "completed" and len(run) == 5
    cols = bnls.Trajectory.columns()
    mass = [row[cols.index("mass")] for row in run.records]
    assert max(abs(m / mass[0] - 1.0) for m in mass) < 1e-10

    big = bnls.evolve([1.5 * q for q in gs.q], grid, bump, params, dt=1e-3, t_end=5.0, record_every=10)
    assert big.termination == "blowup_detected" and big.t_termination < 5.0

    zero = bnls.Potential.zero()
    sol = bnls.evolve(list(gs.q), grid, zero, params, dt=2.5e-4, t_end=0.5, record_every=2000)
    norm = sum(w * q * q for w, q in zip(grid.weights, gs.q))
    overlap = sum(w * u * q for w, u, q in zip(grid.weights, sol.final_state, gs.q)) / norm
    assert abs(overlap - cmath.exp(-0.5j * gs.m)) < 1e-2, overlap

    assert "10/3" in bnls.pairs(10, "B", q="2")
    assert "rejected" in bnls.pairs(4, "B", q="2", r="inf")

    try:
        bnls.ModelParams(10, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("p = 1 accepted")

    print("ok: Q0 = %.6f, E0 = %.6e, blow-up at t = %.4f" % (gs.q[0], gs.e0, big.t_termination))
    assert math.isfinite(gs.e0)


if __name__ == "__main__":
    main()
