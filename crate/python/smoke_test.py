#!/usr/bin/env python3
"""Smoke test for the sgmsched Python extension.

Build the extension first:

    cargo build --release -p sgmsched-py

then run this script from the repository root:

    python3 python/smoke_test.py
"""

import math
import os
import shutil
import sys
import tempfile


def load_module():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    candidates = [
        os.path.join(root, "target", "release", "libsgmsched.so"),
        os.path.join(root, "target", "release", "libsgmsched.dylib"),
        os.path.join(root, "target", "debug", "libsgmsched.so"),
        os.path.join(root, "target", "debug", "libsgmsched.dylib"),
    ]
    built = next((c for c in candidates if os.path.exists(c)), None)
    if built is None:
        sys.exit("extension not built; run: cargo build --release -p sgmsched-py")
    stage = tempfile.mkdtemp(prefix="sgmsched-py-")
    shutil.copy(built, os.path.join(stage, "sgmsched.so"))
    sys.path.insert(0, stage)
    import sgmsched

    return sgmsched


def approx(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    sgm = load_module()

    # schedules
    lin = sgm.Schedule.standard_parametric(0.0)
    approx(lin.beta(0.0), 0.1, 1e-12)
    approx(lin.beta(1.0), 20.0, 1e-9)
    approx(lin.beta(0.5), 10.05, 1e-12)
    approx(lin.beta_integral(0.0, 1.0), 10.05, 1e-10)
    m, v = lin.m_sigma(1.0)
    approx(m * m + v, 1.0, 1e-14)
    cos = sgm.Schedule.standard_cosine()
    approx(cos.beta(0.0), 0.1, 1e-3)

    # targets and sampling determinism
    iso = sgm.Target.iso(3)
    assert iso.dim == 3
    s1 = iso.sample(50, 7)
    s2 = iso.sample(50, 7)
    assert s1 == s2
    assert len(s1) == 50 and len(s1[0]) == 3

    # closed forms
    p = sgm.Target.gaussian([1.0], [[0.5]])
    q = sgm.Target.gaussian([0.0], [[1.0]])
    kl, w2 = sgm.closed_form_divergences(p, q)
    approx(kl, 0.5 * (math.log(2.0) + 0.5), 1e-12)
    approx(p.fisher_to_stationary(1.0), 1.5, 1e-12)

    # contraction constants at t=0 for the iso covariance 0.5
    c0, l0 = sgm.Target.iso(4).contraction_constants(lin, 0.0)
    approx(c0, 1.0, 1e-12)
    approx(l0, 3.0, 1e-12)

    # forward / backward sampling
    fwd = sgm.forward_exact(iso, lin, 0.5, 200, 3)
    assert len(fwd) == 200
    gen = sgm.generate(iso, lin, steps=100, n=500, seed=4, scheme="ei", score="exact")
    fitted = sgm.fit_gaussian(gen)
    kl_gen, _ = sgm.closed_form_divergences(iso, fitted)
    assert kl_gen < 0.2, kl_gen

    # metrics
    assert sgm.sliced_w2(gen, gen, n_proj=32, seed=1) == 0.0
    n = sgm.nll(q, [[0.0]])
    approx(n, 0.5 * math.log(2 * math.pi), 1e-12)

    # training plus the learned-score sampler
    net, losses = sgm.train(
        sgm.Target.iso(2), lin, "explicit", epochs=10, lr=1e-3, n_train=2000, seed=5, width=32
    )
    assert len(losses) == 10
    assert losses[-1] < losses[0]
    out = net.forward(0.5, [0.1, -0.2])
    assert len(out) == 2
    gen_net = sgm.generate(
        sgm.Target.iso(2), lin, steps=100, n=64, seed=6, score="net", net=net
    )
    assert len(gen_net) == 64

    # bounds
    report = sgm.kl_bound(sgm.Target.iso(5), lin, steps=200, refined=True)
    assert report["e2"] == 0.0
    assert report["e1_refined"] <= report["e1"]
    assert report["h3_assumed"] is True
    w2rep = sgm.w2_bound(sgm.Target.iso(5), lin, steps=100)
    assert w2rep["total"] > 0.0
    assert abs(
        w2rep["total"]
        - (w2rep["e1"] + w2rep["e2_discretization"] + w2rep["e2_eps"] + w2rep["e2_time"])
    ) < 1e-12

    # preprocessing round trip
    raw = sgm.Target.heterosc(6).sample(2000, 9)
    transform, scaled = sgm.fit_transform(raw)
    back = transform.inverse(scaled)
    err = max(
        abs(a - b) for row_a, row_b in zip(raw, back) for a, b in zip(row_a, row_b)
    )
    assert err < 1e-10, err
    approx(transform.transfer_bound(0.0), 0.0, 0.0)

    # sweep helper has an interior structure over a
    rows = sgm.sweep_bound("w2", sgm.Target.iso(10), 100, [-5.0, 0.0, 5.0])
    assert [r["a"] for r in rows] == [-5.0, 0.0, 5.0]
    assert all(r["total"] > 0 for r in rows)

    print("smoke test passed")


if __name__ == "__main__":
    main()
