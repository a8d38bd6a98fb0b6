# Copyright 2026 The karlm Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Reference trace of one KAR forward pass, written from the math with numpy.

Shares nothing with the C++ code except the instance definition below.
Run from the repository root:

    python3 docs/worked_example.py > docs/kar_worked_example.json
"""

import json
import math

import numpy as np

D, E, N = 4, 3, 4
FFN, HIDDEN = 2, 2
THRESHOLD = -0.5
SPAN = (1, 2)  # inclusive word-piece range
CANDIDATES = [(0, 0.75), (2, 0.25)]  # entity 0, then NULL (K = 2)
KB = np.array([[0.5, -0.25, 1.0], [-1.0, 0.5, 0.25]])


def tag(name):
    return sum(name.encode()) % 97


def value(name, r, c):
    return 0.5 * math.sin(1.0 + 0.7 * r + 1.3 * c + 0.9 * r * c + 0.37 * tag(name))


def fill(name, rows, cols):
    m = np.array([[value(name, r, c) for c in range(cols)] for r in range(rows)])
    if name.endswith(".gain"):
        m = 1.0 + m
    return m


def hidden_states():
    return np.array([[math.sin(1.0 + i + 0.5 * j + 0.3 * i * j) for j in range(D)]
                     for i in range(N)])


def linear(name, x, i, o):
    return x @ fill(name + ".weight", i, o) + fill(name + ".bias", 1, o)


def layer_norm(name, x):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    g = fill(name + ".gain", 1, x.shape[1])
    b = fill(name + ".bias", 1, x.shape[1])
    return (x - mu) / np.sqrt(var + 1e-12) * g + b


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def gelu(x):
    return 0.5 * x * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))


def block(name, q_in, mem):
    q = linear(name + ".attn.query", q_in, E, E)
    k = linear(name + ".attn.key", mem, E, E)
    v = linear(name + ".attn.value", mem, E, E)
    att = softmax(q @ k.T / math.sqrt(E)) @ v
    att = linear(name + ".attn.output", att, E, E)
    x1 = layer_norm(name + ".attn_norm", q_in + att)
    ff = linear(name + ".ffn.inner", x1, E, FFN)
    ff = linear(name + ".ffn.outer", gelu(ff), FFN, E)
    return layer_norm(name + ".out_norm", x1 + ff)


def main():
    h = hidden_states()
    w1 = fill("kar.down.weight", D, E)
    h_proj = h @ w1 + fill("kar.down.bias", 1, E)

    pieces = h_proj[SPAN[0]:SPAN[1] + 1]
    alpha = softmax(fill("kar.pool", 1, E) @ pieces.T)
    s = alpha @ pieces

    s_e = block("kar.span", s, s)

    reserved = fill("kar.reserved", 2, E)
    emb = np.stack([KB[e] if e < 2 else reserved[e - 2] for e, _ in CANDIDATES])
    feats = np.array([[p, emb[k] @ s_e[0]] for k, (_, p) in enumerate(CANDIDATES)])
    hid = np.maximum(linear("kar.score.hidden", feats, 2, HIDDEN), 0.0)
    psi = linear("kar.score.out", hid, HIDDEN, 1)[:, 0]

    keep = psi >= THRESHOLD
    psi_tilde = np.zeros_like(psi)
    if keep.any():
        psi_tilde[keep] = softmax(psi[keep])
        e_tilde = psi_tilde @ emb
    else:
        e_tilde = reserved[0]
    e_tilde = e_tilde[None, :]

    s_prime = s_e + e_tilde
    h_prime_proj = block("kar.recontext", h_proj, s_prime)
    w2 = np.linalg.pinv(w1)
    h_prime = h_prime_proj @ w2 + h

    out = {
        "instance": {
            "model_dim": D, "entity_dim": E, "pieces": N, "ffn_dim": FFN,
            "scorer_hidden": HIDDEN, "heads": 1, "threshold": THRESHOLD,
            "span": list(SPAN),
            "candidates": [[e, p] for e, p in CANDIDATES],
            "kb_embeddings": KB.tolist(),
            "H": h.tolist(),
        },
        "H_proj": h_proj.tolist(),
        "S": s.tolist(),
        "S_e": s_e.tolist(),
        "psi": [psi.tolist()],
        "psi_tilde": [psi_tilde.tolist()],
        "null_fallback": [not bool(keep.any())],
        "e_tilde": e_tilde.tolist(),
        "S_prime_e": s_prime.tolist(),
        "H_prime_proj": h_prime_proj.tolist(),
        "H_prime": h_prime.tolist(),
    }
    print(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
