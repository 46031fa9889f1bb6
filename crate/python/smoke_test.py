"""Smoke test for the sigdyn extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/sigdyn-*.whl
"""

import math

import sigdyn


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol


def main():
    u = sigdyn.Measure.uniform(2, 2)
    assert u.shape == (2, 2)
    assert close(u.potential(), 1.0)
    assert u.in_gamma() and u.in_lambda()
    report = u.classify()
    assert report["classification"] == "Unstable", report
    assert report["property_p"] is False

    diag = sigdyn.Measure([[0.5, 0.0], [0.0, 0.5]])
    assert close(diag.potential(), 2.0)
    assert diag.classify()["classification"] == "Stable"
    assert diag.classify()["signaling_system"] is True

    x = sigdyn.Measure([[0.4, 0.1], [0.2, 0.3]])
    forms = x.lyapunov()
    assert forms["dissipation"] >= 0.0
    assert close(forms["dissipation"], forms["centered"], 1e-12)
    assert close(sum(map(sum, x.field())), 0.0)
    assert sigdyn.Measure.from_json(x.to_json()).rows() == x.rows()

    flow = sigdyn.integrate(x, dt=0.01, steps=5000, stride=100)
    h = flow["potentials"]
    assert all(b >= a - 1e-12 for a, b in zip(h, h[1:]))
    assert h[-1] > h[0]

    eq = sigdyn.block_equilibrium([0, 1, 1], [0, 1], [1.0, 0.4, 0.6], [1.0, 1.0])
    assert eq.in_gamma(1e-12)
    assert close(eq.potential(), 2.0)

    g = sigdyn.Game(2, 2, seed=42)
    assert close(g.success_probability(), g.potential() / 2)
    inc = g.expected_increment()
    assert inc["p_term"] >= 0 and inc["q_term"] >= 0
    wins = g.step(10_000)
    assert g.rounds == 10_000
    assert g.grand_total == 4 + wins
    again = sigdyn.Game(2, 2, seed=42)
    again.step(10_000)
    assert again.counts() == g.counts()

    rep = sigdyn.run_replication(2, 2, 20_000, seed=7)
    assert rep["steps"] == 20_000
    assert rep["sample_steps"][-1] == 20_000

    stats = sigdyn.run_ensemble(2, 2, 5_000, 40, seed=3)
    freq = sum(c["frequency"] for c in stats["census"]["classes"])
    assert close(freq, 1.0)

    assert close(sigdyn.azuma_bound([1.0], 1.0), math.exp(-0.5))

    try:
        sigdyn.Measure([[0.5, 0.1]])
    except ValueError:
        pass
    else:
        raise AssertionError("weights off the simplex must be rejected")

    print("smoke test passed")


if __name__ == "__main__":
    main()
