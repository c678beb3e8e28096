"""Reference values frozen into the unit tests. Plain numpy / math, no project code.

Run: python3 tests/unit/oracle_gen.py
"""
import math
import zlib

import numpy as np

np.set_printoptions(precision=17)


def show(name, v):
    v = np.asarray(v, dtype=np.float64).ravel()
    print(f"{name}: " + ", ".join(repr(float(x)) for x in v))


# gelu(x) = x * Phi(x)
xs = [-2.0, -0.5, 0.0, 0.5, 2.0]
show("gelu", [x * 0.5 * (1 + math.erf(x / math.sqrt(2))) for x in xs])
show("gelu'", [0.5 * (1 + math.erf(x / math.sqrt(2))) + x * math.exp(-x * x / 2) / math.sqrt(2 * math.pi) for x in xs])

# softmax along the last axis
z = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
e = np.exp(z - z.max(axis=1, keepdims=True))
show("softmax", e / e.sum(axis=1, keepdims=True))

# layer norm, eps 1e-5
x = np.array([[1.0, 2.0, 3.0, 4.0]])
g = np.array([2.0, -1.0, 0.5, 0.25])
b = np.array([0.1, 0.2, 0.3, 0.4])
mu = x.mean(axis=1, keepdims=True)
var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
show("layer_norm", (x - mu) / np.sqrt(var + 1e-5) * g + b)

# cross entropy, mean over rows
L = np.array([[1.0, 2.0, 3.0], [1.0, 0.0, -1.0]])
y = [2, 0]
lse = np.log(np.exp(L).sum(axis=1))
show("cross_entropy", np.mean(lse - L[np.arange(2), y]))

# attention: 4 rows, group 2, C = 4, 2 heads, qkv = [Q | K | V]
qkv = np.arange(4 * 12, dtype=np.float64).reshape(4, 12)
qkv = np.sin(qkv * 0.37) * 1.5
C, H = 4, 2
dh = C // H
out = np.zeros((4, C))
for s in range(2):
    rows = slice(2 * s, 2 * s + 2)
    for h in range(H):
        q = qkv[rows, h * dh:(h + 1) * dh]
        k = qkv[rows, C + h * dh:C + (h + 1) * dh]
        v = qkv[rows, 2 * C + h * dh:2 * C + (h + 1) * dh]
        a = q @ k.T / math.sqrt(dh)
        a = np.exp(a - a.max(axis=1, keepdims=True))
        a /= a.sum(axis=1, keepdims=True)
        out[rows, h * dh:(h + 1) * dh] = a @ v
show("attention", out)


# Chamfer: per patch mean_r min_g |r-g|^2 + mean_g min_r |r-g|^2, averaged over patches
def chamfer(r, g):
    d = ((r[:, None, :] - g[None, :, :]) ** 2).sum(-1)
    return d.min(axis=1).mean() + d.min(axis=0).mean()


P1 = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
G1 = np.array([[0.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
P2 = np.array([[0.5, -0.5, 0.25], [0.0, 0.0, 0.0], [-1.0, 0.0, 1.0]])
G2 = np.array([[0.5, -0.5, 0.0], [-1.0, 0.5, 1.0]])
show("chamfer_single", chamfer(P1, G1))
show("chamfer_batch", (chamfer(P1, G1) + chamfer(P2, G2)) / 2)
# gradient of the single-patch value w.r.t. P1 (pairings fixed)
h = 1e-6
grad = np.zeros_like(P1)
for i in range(3):
    for j in range(3):
        up, dn = P1.copy(), P1.copy()
        up[i, j] += h
        dn[i, j] -= h
        grad[i, j] = (chamfer(up, G1) - chamfer(dn, G1)) / (2 * h)
show("chamfer_grad_pred", np.round(grad, 6))

# contrastive: mean over co-mask rows of 1 - cos
h1 = np.array([[1.0, 0.0], [0.3, 0.4], [1.0, 2.0]])
h2 = np.array([[1.0, 1.0], [9.0, 9.0], [-2.0, 1.0]])
cm = [0, 2]
cos = [(h1[i] @ h2[i]) / (np.linalg.norm(h1[i]) * np.linalg.norm(h2[i])) for i in cm]
show("contrastive", np.mean([1 - c for c in cos]))

# lr schedule: linear warmup over W steps, half-cosine to min at T
def lr(step, T, W, base, lo):
    if step < W:
        return base * step / W
    p = (step - W) / (T - W)
    return lo + 0.5 * (base - lo) * (1 + math.cos(math.pi * p))


show("lr", [lr(s, 100, 10, 1e-3, 1e-6) for s in (0, 5, 10, 55, 100)])

# AdamW, two steps, decoupled decay, bias-corrected
theta = np.array([1.0, -2.0])
m = np.zeros(2)
v = np.zeros(2)
lr_, wd, b1, b2, eps = 0.1, 0.05, 0.9, 0.999, 1e-8
for t, gr in enumerate([np.array([0.5, 0.1]), np.array([-0.25, 0.3])], start=1):
    m = b1 * m + (1 - b1) * gr
    v = b2 * v + (1 - b2) * gr * gr
    theta = theta * (1 - lr_ * wd)
    theta = theta - lr_ * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
show("adamw_decay", theta)
theta = np.array([1.0, -2.0])
m = np.zeros(2)
v = np.zeros(2)
for t, gr in enumerate([np.array([0.5, 0.1]), np.array([-0.25, 0.3])], start=1):
    m = b1 * m + (1 - b1) * gr
    v = b2 * v + (1 - b2) * gr * gr
    theta = theta - lr_ * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
show("adamw_nodecay", theta)

show("comask_p_64_0.6_one_minus", (1 - 0.36) ** 64)
show("comask_p_16_0.25", 1 - (1 - 0.0625) ** 16)
show("sample_std_1234", np.std([1, 2, 3, 4], ddof=1))
print("crc32('123456789') = %08x" % zlib.crc32(b"123456789"))
