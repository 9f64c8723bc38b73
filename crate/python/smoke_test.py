#!/usr/bin/env python3
"""End-to-end smoke test for the survlda_py extension module.

Builds the extension if cargo is available, loads it straight from
target/debug, and walks the pipeline: simulate -> train -> infer ->
survival curves -> save/load, plus the KM and mixture helpers and the
error mapping.
"""

import math
import random
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module(tmp):
    so = ROOT / "target" / "debug" / "libsurvlda_py.so"
    try:
        subprocess.run(["cargo", "build", "-p", "survlda-py"], cwd=ROOT, check=True)
    except FileNotFoundError:
        if not so.exists():
            raise
    shutil.copy(so, tmp / "survlda_py.so")
    sys.path.insert(0, str(tmp))
    import survlda_py

    return survlda_py


def approx(a, b, tol=1e-9):
    return abs(a - b) <= tol * (1.0 + abs(b))


def expect_value_error(fn):
    try:
        fn()
    except ValueError:
        return
    raise AssertionError("expected ValueError")


def main():
    with tempfile.TemporaryDirectory() as td:
        tmp = Path(td)
        m = load_module(tmp)

        corpus, truth = m.simulate(
            3, 12, 60, 20,
            beta=[0.9, -0.9, 0.0],
            hazard="exponential:0.5",
            censor="exponential:0.25",
            seed=42,
        )
        assert len(corpus) == 60
        assert len(corpus.vocabulary()) == 12
        assert corpus.fully_observed()
        assert len(truth["theta"]) == 60
        assert all(approx(sum(row), 1.0) for row in truth["tau"])
        assert 0.0 < truth["censoring_rate_target"] < 1.0

        model = m.train(
            corpus, 3,
            mode="survlda",
            hazard_family="exponential",
            reference_topic=2,
            em_max_iters=10,
            seed=1,
            restarts=1,
        )
        assert model.n_topics == 3
        assert len(model.beta) == 3
        assert model.hazard.startswith("exponential:")
        trace = model.elbo_trace
        assert trace and all(b >= a - 1e-6 * abs(a) for a, b in zip(trace, trace[1:]))

        preds = m.infer(corpus, model)
        assert len(preds) == 60
        for p in preds[:5]:
            assert approx(sum(p["theta_hat"]), 1.0)
            assert math.isfinite(p["linear_predictor"])
            assert p["median_lifetime"] > 0.0

        # save/load round trips reproduce the numbers exactly
        corpus.save(str(tmp / "corpus.jsonl"))
        model.save(str(tmp / "model.json"))
        corpus2 = m.Corpus.load(str(tmp / "corpus.jsonl"))
        model2 = m.TrainedModel.load(str(tmp / "model.json"))
        assert corpus2.document_ids() == corpus.document_ids()
        assert model2.tau == model.tau
        assert m.infer(corpus2, model2)[0]["linear_predictor"] == preds[0]["linear_predictor"]

        # classical KM on three uncensored times drops by 1/3 at each
        km = m.weighted_km([1.0, 2.0, 3.0], [True, True, True])
        expect = [(0.0, 1.0), (1.0, 2 / 3), (2.0, 1 / 3), (3.0, 0.0)]
        assert len(km) == len(expect)
        for (t, s), (te, se) in zip(km, expect):
            assert t == te and approx(s, se)

        curves = m.topic_km(model, corpus)
        assert len(curves) == 3
        for c in curves:
            assert c[0] == (0.0, 1.0)
            assert all(b[1] <= a[1] + 1e-12 for a, b in zip(c, c[1:]))

        rng = random.Random(7)
        bimodal = [rng.gauss(0.0, 0.5) for _ in range(40)]
        bimodal += [rng.gauss(4.0, 0.5) for _ in range(40)]
        flat = [rng.gauss(0.0, 1.0) for _ in range(80)]
        assert m.fit_mixture(bimodal, seed=3)["multimodal"]
        assert not m.fit_mixture(flat, seed=3)["multimodal"]

        top = model.top_words(4)
        assert len(top) == 3 and all(len(t) == 4 for t in top)

        expect_value_error(lambda: m.simulate(0, 12, 5, 5))
        expect_value_error(lambda: m.train(corpus, 3, mode="bogus"))
        expect_value_error(lambda: m.Corpus.load(str(tmp / "missing.jsonl")))

        lda = m.train(corpus, 2, mode="lda", em_max_iters=5, seed=2, restarts=1)
        assert lda.hazard is None
        assert m.infer(corpus, lda)[0]["median_lifetime"] is None

    print("smoke test passed")


if __name__ == "__main__":
    main()
