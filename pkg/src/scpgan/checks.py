"""Randomized property suites behind ``scpgan check``.

Each suite draws its cases from a seeded generator, counts passes and
failures, and keeps a few failure descriptions for the report.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import dsp, losses, surgery
from .autonn import ParamSet, flatten_grads
from .autonn import ops as T

SHIPPED_STFT = (
    dsp.StftParams(512, 256, "sqrt_hann"),
    dsp.StftParams(512, 128, "sqrt_hann"),
    dsp.StftParams(512, 256, "hann"),
)


@dataclass
class SuiteResult:
    name: str
    seed: int
    passed: int = 0
    failed: int = 0
    seconds: float = 0.0
    failures: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.failed == 0 and self.passed > 0

    def check(self, cond, what):
        if cond:
            self.passed += 1
        else:
            self.failed += 1
            if len(self.failures) < 10:
                self.failures.append(what)

    def summary(self):
        return (f"{self.name}: {'PASS' if self.ok else 'FAIL'} "
                f"({self.passed} passed, {self.failed} failed, seed {self.seed}, {self.seconds:.1f}s)")


# -- surgery ---------------------------------------------------------------------

def random_triple(rng):
    """Three gradient vectors with random dimension, scales spanning 1e-6..1e6 and
    angles spread over [0, pi] so every branch of the weighting occurs."""
    dim = int(np.exp(rng.uniform(np.log(2), np.log(2000))))
    dim = min(max(dim, 2), 2000)
    gc = rng.standard_normal(dim)
    gc /= np.linalg.norm(gc)

    def near(base):
        other = rng.standard_normal(dim)
        other -= (other @ base) * base
        n = np.linalg.norm(other)
        other = other / n if n > 0 else other
        theta = rng.uniform(0, np.pi)
        return np.cos(theta) * base + np.sin(theta) * other

    ge = near(gc)
    gn = near(gc if rng.random() < 0.5 else ge)
    scales = 10.0 ** rng.uniform(-6, 6, size=3)
    return gc * scales[0], ge * scales[1], gn * scales[2]


def _oracle_weight(target, base):
    """w minimizing |base + w * target|, i.e. making the sum orthogonal to target."""
    sol, *_ = np.linalg.lstsq(target[:, None], -base, rcond=None)
    return float(sol[0])


def _rel(a, b, scale):
    return abs(a - b) / max(abs(b), scale, 1e-300)


def surgery_suite(n=10_000, seed=0) -> SuiteResult:
    res = SuiteResult("surgery", seed)
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = {"w_e": 0.0, "w_n": 0.0}
    for i in range(n):
        gc, ge, gn = random_triple(rng)
        w2 = surgery.sc2_weights(gc, ge)
        g2 = surgery.combine(gc, ge, None, w2)
        tau2 = surgery.tolerance(g2, gc, ge)
        res.check(g2 @ gc >= -tau2 and g2 @ ge >= -tau2, f"case {i}: sc2 direction obtuse to C or E")
        w3 = surgery.sc3_weights(gc, ge, gn)
        g3 = surgery.combine(gc, ge, gn, w3)
        tau3 = surgery.tolerance(g3, gc, ge, gn)
        res.check(g3 @ gn >= -tau3, f"case {i}: sc3 direction obtuse to N")
        if w2.branch == "two_part_obtuse" and not w2.degenerate:
            o = _oracle_weight(ge, gc)
            err = _rel(w2.w_e, o, 0.0)
            worst["w_e"] = max(worst["w_e"], err)
            res.check(err < 1e-9, f"case {i}: w_e {w2.w_e!r} vs oracle {o!r}")
        if w3.w_n is not None and w3.branch.endswith("obtuse") and not w3.degenerate:
            comb = w3.w_c * gc + w3.w_e * ge
            o = _oracle_weight(gn, comb)
            # Relative to the terms being cancelled: when they nearly cancel the
            # oracle value itself is tiny and only their magnitude is resolvable.
            nn = gn @ gn
            scale = (abs(gc @ gn) + abs(w3.w_e) * abs(ge @ gn)) / nn
            err = _rel(w3.w_n, o, scale)
            worst["w_n"] = max(worst["w_n"], err)
            res.check(err < 1e-9, f"case {i}: w_n {w3.w_n!r} vs oracle {o!r}")
    res.stats = {f"max_rel_err_{k}": v for k, v in worst.items()}
    res.seconds = time.perf_counter() - t0
    return res


# -- dsp -------------------------------------------------------------------------

def dsp_suite(n=100, seed=0) -> SuiteResult:
    res = SuiteResult("dsp", seed)
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = {"round_trip": 0.0, "idempotence": 0.0, "linearity": 0.0, "cola": 0.0}
    for p in SHIPPED_STFT:
        dev = dsp.check_cola(p)
        worst["cola"] = max(worst["cola"], dev)
        res.check(dev < 1e-10, f"COLA deviation {dev:.3g} for {p}")
    for i in range(n):
        p = SHIPPED_STFT[i % len(SHIPPED_STFT)]
        length = int(rng.integers(256, 32_001))
        x = rng.standard_normal(length) * 10.0 ** rng.uniform(-3, 0)
        y = dsp.round_trip(x, p)
        err = np.linalg.norm(y - x) / np.linalg.norm(x)
        worst["round_trip"] = max(worst["round_trip"], err)
        res.check(err < 1e-6, f"case {i}: round trip error {err:.3g} (L={length}, {p})")

        shape = (dsp.n_frames(length, p), p.n_bins)
        s1 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        s2 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

        def proj(s):
            return dsp.analysis(dsp.synthesis(s, p, length), p)

        ps1 = proj(s1)
        idem = np.linalg.norm(proj(ps1) - ps1) / max(np.linalg.norm(ps1), 1e-300)
        worst["idempotence"] = max(worst["idempotence"], idem)
        res.check(idem < 1e-6, f"case {i}: projection not idempotent ({idem:.3g})")
        a, b = rng.standard_normal(2)
        lhs = proj(a * s1 + b * s2)
        rhs = a * ps1 + b * proj(s2)
        lin = np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300)
        worst["linearity"] = max(worst["linearity"], lin)
        res.check(lin < 1e-6, f"case {i}: projection not linear ({lin:.3g})")
    res.stats = {f"max_{k}": v for k, v in worst.items()}
    res.seconds = time.perf_counter() - t0
    return res


# -- autodiff --------------------------------------------------------------------

def _param(rng, shape, scale=0.5):
    return T.tensor(rng.standard_normal(shape) * scale)


def _mlp(rng):
    d_in, d_h = int(rng.integers(2, 12)), int(rng.integers(2, 16))
    x = rng.standard_normal((int(rng.integers(1, 6)), d_in))
    y = rng.standard_normal((x.shape[0], 1))
    act = [T.sigmoid, T.tanh][int(rng.integers(2))]
    p = ParamSet([("w1", _param(rng, (d_in, d_h))), ("b1", _param(rng, (d_h,))),
                  ("w2", _param(rng, (d_h, 1))), ("b2", _param(rng, (1,)))])

    def loss():
        h = act(T.add(T.matmul(x, p["w1"]), p["b1"]))
        out = T.add(T.matmul(h, p["w2"]), p["b2"])
        return T.mean(T.square(T.sub(out, y)))
    return "mlp", p, loss


def _conv(rng):
    c_in, c_out, k = int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.choice([1, 3, 5]))
    x = rng.standard_normal((2, int(rng.integers(3, 7)), int(rng.integers(3, 9)), c_in))
    p = ParamSet([("w", _param(rng, (k, k, c_in, c_out))), ("b", _param(rng, (c_out,))),
                  ("v", _param(rng, (c_out, 1)))])

    def loss():
        h = T.tanh(T.conv2d(x, p["w"], p["b"]))
        h = T.avgpool(h, 2, axis=2) if x.shape[2] % 2 == 0 else h
        return T.mean(T.square(T.matmul(T.mean(h, axis=(1, 2)), p["v"])))
    return "conv", p, loss


def _cp_path(rng):
    """Mask a noisy spectrogram, go through istft -> stft, compare power spectra."""
    params = dsp.StftParams(16, 8, "sqrt_hann")
    length = int(rng.integers(20, 60))
    noisy = dsp.analysis(rng.standard_normal(length), params)
    clean = dsp.analysis(rng.standard_normal(length), params)
    feats = np.abs(noisy) ** 0.3
    f = feats.shape[-1]
    p = ParamSet([("w", _param(rng, (f, f), 0.3)), ("b", _param(rng, (f,), 0.3))])

    def loss():
        mask = T.sigmoid(T.add(T.matmul(feats, p["w"]), p["b"]))
        enh = losses.enhanced_spec(mask, noisy)
        wave = T.istft(enh, params, length)
        spec = T.stft(wave, params)
        # Power spectra rather than |S|^0.3: the compressed magnitude has
        # unbounded curvature at empty bins, which central differences cannot follow.
        diff = T.sub(T.abs2(spec), np.abs(clean) ** 2)
        return T.add(T.mean(T.square(diff)), T.mean(T.square(wave)))
    return "cp_path", p, loss


BUILDERS = (_mlp, _conv, _cp_path)


def fd_check(p: ParamSet, loss, h=1e-4, guard=1e-8):
    """Max relative error between backprop and central differences over all parameters."""
    p.zero_grad()
    loss().backward()
    g = flatten_grads(p)
    theta = p.flatten()
    num = np.empty_like(theta)
    for j in range(theta.size):
        e = theta.copy()
        e[j] += h
        p.assign(e)
        up = loss().item()
        e[j] -= 2 * h
        p.assign(e)
        down = loss().item()
        num[j] = (up - down) / (2 * h)
    p.assign(theta)
    err = np.abs(g - num) / np.maximum(np.maximum(np.abs(g), np.abs(num)), guard)
    return float(err.max())


def autodiff_suite(n=20, seed=0) -> SuiteResult:
    res = SuiteResult("autodiff", seed)
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(n):
        # Always include the consistency-preserving path at least once.
        build = _cp_path if i == 0 else BUILDERS[int(rng.integers(len(BUILDERS)))]
        kind, p, loss = build(rng)
        err = fd_check(p, loss)
        worst = max(worst, err)
        res.check(err < 1e-4, f"net {i} ({kind}, {p.size} params): max rel error {err:.3g}")
    res.stats = {"max_rel_err": worst}
    res.seconds = time.perf_counter() - t0
    return res


SUITES = {"surgery": surgery_suite, "dsp": dsp_suite, "autodiff": autodiff_suite}


def run(suite="all", seed=0):
    names = list(SUITES) if suite == "all" else [suite]
    return [SUITES[name](seed=seed) for name in names]
