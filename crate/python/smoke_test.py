"""Smoke test for the subdiff Python extension.

Build and install first:
    pip install --no-build-isolation ./crates/python
"""

import math

import subdiff


def main():
    cfg = subdiff.ExperimentConfig.validation_setting(1, "white", "theta1", 0.01).with_overrides(runs=10, iters=300)
    assert cfg.variant == "alg1" and cfg.n_runs == 10
    assert subdiff.ExperimentConfig.from_toml(cfg.to_toml()).to_toml() == cfg.to_toml()

    exp = cfg.build()
    assert exp.n_agents == 12 and exp.dim == 5

    sim = exp.monte_carlo_msd()
    pred = exp.predict()
    assert len(sim["msd_db"]) == len(pred["msd_db"]) == 301
    assert sim["diverged_runs"] == []
    assert pred["spectral_radius"] < 1.0
    assert sim["msd_db"][-1] < sim["msd_db"][0]
    print(f"simulated tail {sim['tail_msd_db']:.2f} dB, predicted steady state {pred['steady_state_db']:.2f} dB")

    report = exp.certify()
    assert report["lemma1_positive_definite"] and report["mean_stable"]

    theta = subdiff.ula_subspace(5, [math.pi / 6, math.pi / 4, math.pi / 3], 0.5)
    identity = [[complex(i == j) for j in range(5)] for i in range(5)]
    cert = subdiff.lemma1_certificate(theta, [identity])
    assert cert["positive_definite"] and cert["min_eigenvalue"] > 1e-10
    cert2 = subdiff.lemma2_certificate(theta, [identity], 0.1)
    assert cert2["positive_definite"]

    loc = subdiff.run_localization("alg1", n_iterations=200, n_runs=2)
    assert len(loc["estimates"]) == 100 and math.isfinite(loc["mean_line_distance"])

    try:
        subdiff.ExperimentConfig.from_toml("schema_version = 99")
    except subdiff.SubdiffError as e:
        message, kind = e.args
        assert kind == "config", kind
    else:
        raise AssertionError("bad config accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
