"""Smoke test for the fbac Python extension.

Build and install first, e.g. `pip install ./crates/py` or
`maturin develop -m crates/py/Cargo.toml`, then run this script.
"""

import math
import os
import sys
import tempfile

import fbac


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    eps = 0.05
    g = fbac.Grid.cube(2, 0.0, 1.0, 321)
    assert g.dim == 2 and g.nodes == [321, 321] and len(g) == 321 * 321

    # one flat sheet carries energy 4 per unit length
    u = fbac.Field.exact_profile(g, eps, [0.0, 1.0], 0.5)
    e = fbac.energy(u, eps)
    assert close(e["total"], 4.0, 0.02), e
    assert fbac.cs_lower_bound_check(u, eps)["holds"]

    # three sheets: energy 12, density 4N with N = 3
    h = 0.02 / 8
    g3 = fbac.Grid.cube(2, 0.0, 1.0, round(1 / h) + 1)
    offsets = [0.50125 + k * 0.02 for k in (-4.25, 0.0, 4.25)]
    u3 = fbac.Field.multi_sheet(g3, 0.02, offsets, [1.0, -1.0, 1.0])
    assert close(fbac.energy(u3, 0.02)["total"], 12.0, 0.03)
    d = fbac.density_and_sheets(u3, 0.02, [0.5, 0.5], (0.35, 0.49))
    assert d["sheets"] == 3, d

    # recovery field of a disc: energy close to 4 * perimeter
    r = fbac.Field.recovery(g, eps, {"type": "disc", "center": [0.5, 0.5], "radius": 0.25})
    four_p = 4 * 2 * math.pi * 0.25
    assert close(fbac.energy(r, eps)["total"], four_p, 0.05)

    # descent from a tilted step with flat boundary data
    gs = fbac.Grid.cube(2, 0.0, 1.0, 81)
    vals = []
    for i in range(len(gs)):
        x, y = gs.coord(i)
        vals.append(1.0 if y > 0.4 + 0.2 * x else -1.0)
    init = fbac.Field(gs, vals)
    sol, trace = fbac.minimize(init, 0.1, boundary="flat", safety=0.8)
    assert trace["converged"], trace["stages"]
    assert close(trace["report"]["total"], 4.0, 0.05), trace["report"]
    band = sol.transition_band()
    line = [[i / 100, 0.5] for i in range(101)]
    assert fbac.hausdorff(band, line) <= 2 * 0.1
    assert math.isfinite(fbac.stationarity_residual(sol, 0.1))

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "field.bin")
        sol.save(path)
        assert fbac.Field.load(path).values() == sol.values()

    try:
        fbac.Field(gs, [2.0] * len(gs))
    except ValueError:
        pass
    else:
        raise AssertionError("values outside [-1, 1] were accepted")

    print("fbac smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
