"""Smoke test for the `learned_rsa` extension module.

Build and install it first:  pip install --no-build-isolation -e crates/python
Then run:  python python/smoke_test.py   (or pytest python/)
"""

import os
import tempfile

import learned_rsa as lr

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")


def close(a, b, tol=1e-9):
    return abs(a - b) < tol


def test_pure_chain_tables():
    corpus = lr.Corpus.load(os.path.join(DATA, "glasses_tie.jsonl"))
    tables = corpus.chain(0)
    s1 = next(layer for layer in tables["layers"] if layer["name"] == "s1")
    r2 = s1["rows"][tables["entities"].index("r2")]
    assert all(close(p, q) for p, q in zip(r2, [0.0, 0.6, 0.4]))
    assert "s1" in tables["text"]


def test_dice():
    assert close(lr.dice(["colour:blue", "size:small", "type:fan"], ["colour:blue", "type:fan"]), 0.8)


def test_train_save_load_roundtrip():
    corpus = lr.Corpus.load(os.path.join(DATA, "toy_train.jsonl"))
    model = lr.train(corpus, seed=0, features="basic", cross_value="count",
                     alpha=1.0, l2=0.0, epochs=1, order="in-order")
    assert len(model.theta) == len(model.features) > 0
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "toy.model")
        model.save(path)
        again = lr.Model.load(path)
    assert again.theta == model.theta
    tables = again.tables(corpus, 0)
    assert [layer["name"] for layer in tables["layers"]] == ["S0", "L1", "S1"]
    assert model.predict(corpus, 0)


def test_evaluate_and_gradcheck():
    corpus = lr.Corpus.synthetic(seed=1, trials=30)
    result = lr.evaluate(corpus, ["S1", "s1"], "speaker-first", seed=2, folds=2, epochs=2)
    assert len(result["reports"]) == 2
    assert all(len(r["rows"]) == len(corpus) for r in result["reports"])
    check = lr.gradcheck(seed=5, instances=10)
    assert check["passed"] and check["worst"]["s1"] < 1e-6


def test_errors_are_python_exceptions():
    try:
        lr.Corpus.load(os.path.join(DATA, "missing.jsonl"))
    except OSError:
        pass
    else:
        raise AssertionError("missing file loaded")
    try:
        lr.dice(["not-an-attribute"], [])
    except ValueError:
        pass
    else:
        raise AssertionError("bad attribute accepted")


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_"):
            fn()
            print("ok", name)
