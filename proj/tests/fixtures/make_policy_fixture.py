"""Writes the neural-policy fixture used by the C++ tests.

policy_fixture.qmw   [11, 64, 64, 1] tanh actor with input normalization
policy_fixture.csv   1000 rows: 11 observation values, then the actor mean

The forward pass here is plain numpy and serves as the reference the C++
inference is compared against. Run from any directory:

    python3 make_policy_fixture.py
"""

import os
import struct

import numpy as np

SIZES = [11, 64, 64, 1]
HERE = os.path.dirname(os.path.abspath(__file__))


def record(tag, dtype, dims, payload):
    head = tag.encode("ascii").ljust(16, b"\0")
    head += struct.pack("<II", dtype, len(dims))
    head += b"".join(struct.pack("<Q", d) for d in dims)
    return head + payload


def f64(a):
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def main():
    rng = np.random.default_rng(20240611)
    ws, bs = [], []
    for k in range(len(SIZES) - 1):
        fan_in = SIZES[k]
        ws.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(SIZES[k + 1], fan_in)))
        bs.append(rng.normal(0.0, 0.1, size=SIZES[k + 1]))
    offset = rng.normal(0.0, 0.5, size=SIZES[0])
    scale = rng.uniform(0.5, 3.0, size=SIZES[0])
    clip = 5.0
    log_std = -1.5

    recs = [
        record("sizes", 2, [len(SIZES)], np.asarray(SIZES, dtype="<u4").tobytes()),
        record("activation", 3, [4], b"tanh"),
        record("obs_layout", 2, [1], struct.pack("<I", 1)),
    ]
    for k, (w, b) in enumerate(zip(ws, bs)):
        recs.append(record(f"w{k}", 1, list(w.shape), f64(w)))
        recs.append(record(f"b{k}", 1, [b.size], f64(b)))
    recs.append(record("log_std", 1, [1], f64([log_std])))
    recs.append(record("obs_offset", 1, [offset.size], f64(offset)))
    recs.append(record("obs_scale", 1, [scale.size], f64(scale)))
    recs.append(record("obs_clip", 1, [1], f64([clip])))
    blob = b"QMWT" + struct.pack("<II", 1, len(recs)) + b"".join(recs)
    with open(os.path.join(HERE, "policy_fixture.qmw"), "wb") as f:
        f.write(blob)

    # Observations spanning the ranges seen in training episodes.
    n = 1000
    obs = np.empty((n, 11))
    obs[:, 0:2] = rng.uniform(-3.0, 3.0, size=(n, 2))
    obs[:, 2] = rng.uniform(0.1, 11.0, size=n)
    obs[:, 3] = rng.uniform(-2.0, 2.0, size=n)
    obs[:, 4] = rng.uniform(0.5, 60.0, size=n)
    obs[:, 5:7] = rng.normal(0.0, 5.0, size=(n, 2))
    obs[:, 7:10] = rng.normal(0.0, 20.0, size=(n, 3))
    obs[:, 10] = rng.normal(0.0, 0.03, size=n)

    x = np.clip((obs - offset) / scale, -clip, clip)
    for k in range(len(ws)):
        x = x @ ws[k].T + bs[k]
        if k < len(ws) - 1:
            x = np.tanh(x)
    with open(os.path.join(HERE, "policy_fixture.csv"), "w") as f:
        for row, a in zip(obs, x[:, 0]):
            f.write(",".join(repr(float(v)) for v in row) + "," + repr(float(a)) + "\n")


if __name__ == "__main__":
    main()
