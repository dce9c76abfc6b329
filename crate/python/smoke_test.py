"""Smoke test for the pysegmerge extension.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml -o dist && pip install dist/pysegmerge-*.whl
"""

import json
import math
import os
import tempfile

import pysegmerge as sm


def main():
    cfg = sm.ModelConfig.toy()
    assert cfg.variant == "sra"
    hq = cfg.with_preset("hq")
    assert hq.variant == "segformerpp"
    assert hq.rates[0] == (0.0, 0.6)
    assert json.loads(hq.to_json())["variant"] == "segformerpp"

    assert sm.cost_vanilla(2, 1) == 8.0
    assert sm.cost_vanilla(4096, 64) / sm.cost_sra(4096, 64, 8) == 64.0
    assert sm.cost_vanilla(64, 8) / sm.cost_tome_sd(64, 8, 0.5) == 2.0
    factor = sm.cost_vanilla(64, 8) / sm.cost_segformerpp(64, 8, 2, 0.0, 0.6)
    assert abs(factor - 1 / 0.365625) < 1e-9
    report = sm.model_cost(cfg, 512, 512)
    assert report["per_stage_factors"] == [64.0, 16.0, 4.0, 1.0]
    assert "per_stage" in report["text"]

    a = sm.random_tensor([2, 3], 7).tolist()
    assert a == sm.random_tensor([2, 3], 7).tolist()
    assert a != sm.random_tensor([2, 3], 8).tolist()

    grid = sm.Tensor([1, 4, 2], [1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0, 3.0])
    assert sm.bipartite_soft_matching(grid, 0.25) == [(3, 2)]
    merged, sizes = sm.merge_tokens(grid, 0.25)
    assert merged.shape == [3, 2] and sizes == [1, 1, 2]

    small = sm.ModelConfig.from_json(
        json.dumps(
            {
                **json.loads(cfg.to_json()),
                "stages": [
                    {"channels": c, "depth": 1, "heads": 1, "sr_ratio": r, "r_q": 0.0, "r_kv": 0.0}
                    for c, r in zip([8, 16, 24, 32], [8, 4, 2, 1])
                ],
                "decoder_dim": 8,
                "num_classes": 3,
            }
        )
    )
    assert small.stage_dims(128, 128) == [(32, 32, 8), (16, 16, 16), (8, 8, 24), (4, 4, 32)]
    model = sm.Model.random(small.with_preset("fast"), 1)
    image = sm.random_tensor([128, 128, 3], 2)
    logits = model.forward(image)
    assert logits.shape == [32, 32, 3]
    assert all(math.isfinite(v) for v in logits.tolist())

    with tempfile.TemporaryDirectory() as d:
        manifest, weights, config = model.save(d, "toy")
        assert os.path.basename(manifest) == "toy.manifest.json"
        loaded = sm.Model.load(manifest, weights, model.config)
        assert loaded.forward(image).tolist() == logits.tolist()

    rec = sm.bench("original", 128, 128, warmup=0, reps=3, config=small)
    assert rec["speedup"] == 1.0 and rec["timed_runs"] == 3

    try:
        sm.bench("fast", 100, 128, config=small)
    except ValueError as e:
        assert "multiple of 64" in str(e)
    else:
        raise AssertionError("expected ValueError")

    print("pysegmerge smoke test passed")


if __name__ == "__main__":
    main()
