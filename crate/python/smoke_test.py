"""Smoke test for the swishnet_py extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/swishnet-*.whl
"""

import math
import os
import tempfile

import swishnet_py as sn


def main():
    assert set(sn.activation_names()) == {"relu", "elu", "selu", "tanh", "swish", "swishrelu"}

    xs = [-3.0, -1.0, 0.0, 0.5, 2.0]
    ys = sn.activate("swishrelu", xs)
    for x, y in zip(xs, ys):
        want = x if x >= 0 else x / (1 + math.exp(-x))
        assert abs(y - want) < 1e-15, (x, y, want)
    assert abs(sn.derivative("swishrelu", [2.0])[0] - 1.0) < 1e-15

    train, test = sn.Dataset.synthetic(256, 64, shape=[1, 28, 28], class_count=10, seed=3)
    assert len(train) == 256 and train.shape == [256, 1, 28, 28]

    model = sn.Model("fcnn", act="swishrelu", seed=3)
    assert model.param_count == 266_610
    metrics, status = model.fit(train, test, epochs=3, batch_size=32, seed=3)
    assert status == "completed" and len(metrics) == 3
    acc, loss = model.evaluate(test)
    assert acc > 0.9 and math.isfinite(loss), (acc, loss)

    probs = model.predict(test.images()[: 2 * 784], 2)
    assert len(probs) == 2 and all(abs(sum(row) - 1) < 1e-4 for row in probs)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.swnn")
        model.save(path)
        other = sn.Model("fcnn", act="swishrelu", seed=99)
        other.load(path)
        assert other.evaluate(test) == (acc, loss)

    vgg = sn.Model("vgg16", class_count=10)
    assert (vgg.conv_count, vgg.dense_count) == (13, 3)

    passed, worst = sn.gradcheck("fcnn", "swishrelu")
    assert passed and worst < 1e-4, worst

    rows = sn.bench(["relu", "swishrelu"], elements=1_000_000, reps=5)
    assert {r["kind"] for r in rows} == {"relu", "swishrelu"}

    try:
        sn.Model("fcnn", act="gelu")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown activation accepted")

    print("python smoke test ok")


if __name__ == "__main__":
    main()
