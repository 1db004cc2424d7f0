"""Smoke test for the cgfuzz extension module.

Build and run from the repository root:

    cargo build --release -p cgfuzz-py --features extension-module
    cp target/release/libcgfuzz.so python/cgfuzz.so
    python3 python/smoke_test.py
"""

import math

import cgfuzz


def main():
    passes = cgfuzz.pass_names()
    assert len(passes) == 7, passes

    catalog = cgfuzz.mutants()
    assert len(catalog) >= 10
    names = {m["name"] for m in catalog}
    assert "fusion-null-deref" in names

    seeds = cgfuzz.seed_graphs(8)
    assert len(seeds) == 8
    for g in seeds:
        assert g.validate() == [], g.validate()
        back = cgfuzz.Graph.parse(g.to_json())
        assert back == g and back.hash() == g.hash()

    g = seeds[0]
    optimized = g.optimize()
    assert optimized.validate() == []
    for (dt, shape, want), (_, _, got) in zip(g.execute(3), optimized.execute(3)):
        assert cgfuzz.chebyshev(want, got) <= 1e-3, (dt, shape)

    try:
        cgfuzz.Graph.parse("{not json")
    except ValueError:
        pass
    else:
        raise AssertionError("malformed graph accepted")

    patterns = cgfuzz.extract_patterns()
    assert {p.target for p in patterns} == set(passes)
    made = [cgfuzz.synthesize(g, p, 0, rng_seed=i) for i, p in enumerate(patterns)]
    made = [m for m in made if m is not None]
    assert made, "no synthesis attempt succeeded"
    assert all(m.validate() == [] for m in made)

    assert cgfuzz.chebyshev([1.0, 2.0], [1.0, 2.5]) == 0.5
    assert math.isinf(cgfuzz.chebyshev([float("nan")], [0.0]))

    clean = cgfuzz.campaign(64)
    assert clean["metrics"]["tests_generated"] == 64 and clean["bugs"] == []
    buggy = cgfuzz.campaign(256, mutant="fusion-null-deref")
    assert buggy["bugs"], buggy["metrics"]

    print("smoke test passed")


if __name__ == "__main__":
    main()
