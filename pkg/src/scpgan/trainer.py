"""GAN training loop: alternating discriminator / generator steps per batch.

Each batch runs the generator once.  The discriminator step uses that output
as a constant and computes the gradient of every loss part separately at the
same parameters, combines them (plain sum or self-correcting weights) and
takes one Adam step along the result.  The generator step then reuses the
same generator graph against the updated, frozen discriminator.  The
generator parameters do not change in between, so sharing the forward pass
is exact.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp, losses, surgery
from .autonn import (AdamState, Discriminator, Generator, adam_step, flatten_grads, frozen,
                     load_checkpoint, save_checkpoint)
from .autonn import ops as T
from .config import TrainConfig, from_dict
from .data import CleanStarCache, Manifest, load_pair
from .errors import BadCheckpoint, NonFinite
from .metrics import q_score, ssnr

log = logging.getLogger("scpgan.trainer")

G_INPUT_COMPRESSION = 0.3
EVAL_COLUMNS = ("clip_id", "snr_db", "ssnr_noisy", "ssnr_enh", "q_noisy", "q_enh")


@dataclass
class StepRecord:
    step: int
    epoch: int
    l_c: float
    l_e: float
    l_n: float | None
    w_c: float
    w_e: float
    w_n: float | None
    branch: str
    degenerate: bool
    norm_c: float
    norm_e: float
    norm_n: float | None
    dot_c: float
    dot_e: float
    dot_n: float | None
    tau: float
    sc_ok: bool
    final_obtuse_ce: bool   # final direction obtuse to C or E (possible after the N correction)
    g_adv: float = float("nan")
    g_time: float = float("nan")
    g_mag: float = float("nan")
    g_total: float = float("nan")
    g_grad_norm: float = float("nan")

    def finite(self):
        vals = [v for v in dataclasses.astuple(self) if isinstance(v, float)]
        return all(math.isfinite(v) for v in vals)


STEP_FIELDS = [f.name for f in dataclasses.fields(StepRecord)]


@dataclass
class Split:
    ids: list
    snr_db: np.ndarray
    noisy: np.ndarray       # [n, L]
    clean: np.ndarray       # [n, L]
    ref: np.ndarray         # Clean* when CP is on, else clean
    noisy_spec: np.ndarray  # [n, T, F] complex
    ref_spec: np.ndarray
    noisy_d_in: np.ndarray  # noisy spectrogram as the discriminator sees it

    def __len__(self):
        return len(self.ids)


def load_split(manifest: Manifest, name, params: dsp.StftParams, cp: bool) -> Split:
    entries = manifest.split(name)
    if not entries:
        raise ValueError(f"manifest has no {name!r} entries")
    pairs = [load_pair(manifest, e) for e in entries]
    noisy = np.stack([p[0] for p in pairs])
    clean = np.stack([p[1] for p in pairs])
    if cp:
        cache = CleanStarCache(manifest.root, params)
        ref = np.stack([cache.get(e, c) for e, c in zip(entries, clean)])
        noisy_d_in = dsp.analysis(dsp.round_trip(noisy, params), params)
    else:
        ref = clean
        noisy_d_in = None
    noisy_spec = dsp.analysis(noisy, params)
    return Split(
        ids=[e.clean_id for e in entries], snr_db=np.array([e.snr_db for e in entries]),
        noisy=noisy, clean=clean, ref=ref, noisy_spec=noisy_spec,
        ref_spec=dsp.analysis(ref, params),
        noisy_d_in=noisy_spec if noisy_d_in is None else noisy_d_in)


def g_features(noisy_spec):
    return (np.abs(noisy_spec) ** 2 + losses.MAG_EPS) ** (G_INPUT_COMPRESSION / 2)


def build_nets(cfg: TrainConfig):
    n = cfg.nets
    gen = Generator(channels=n.gen_channels, kernel=n.kernel, seed=cfg.seed * 2 + 11)
    disc = Discriminator(channels=n.disc_channels, kernel=n.kernel, freq_pool=n.disc_freq_pool,
                         seed=cfg.seed * 2 + 12)
    return gen, disc


def _adam(params, o):
    return AdamState(params.size, lr=o.lr, beta1=o.beta1, beta2=o.beta2, eps=o.eps)


class Trainer:
    def __init__(self, cfg: TrainConfig, manifest: Manifest, out_dir=None, grad_hook=None):
        self.cfg = cfg
        self.manifest = manifest
        self.params = cfg.stft
        self.gen_cfg = cfg.gen_loss_config()
        self.out_dir = Path(out_dir or cfg.checkpoint_dir)
        self.gen, self.disc = build_nets(cfg)
        self.opt_g = _adam(self.gen.params, cfg.optimizer)
        self.opt_d = _adam(self.disc.params, cfg.optimizer)
        self.rng = np.random.default_rng(cfg.seed)
        self.grad_hook = grad_hook
        self.records: list[StepRecord] = []
        self.reports: list[surgery.ConflictReport] = []
        self.evals: list[dict] = []
        self.step = 0
        self.epoch = 0
        self._train = None
        self._eval = None

    @property
    def train_split(self):
        if self._train is None:
            self._train = load_split(self.manifest, "train", self.params, self.cfg.mode.cp)
        return self._train

    @property
    def eval_split(self):
        if self._eval is None:
            self._eval = load_split(self.manifest, self.cfg.eval_split, self.params, self.cfg.mode.cp)
        return self._eval

    # -- one batch -----------------------------------------------------------------

    def generate(self, data: Split, idx):
        """Generator forward with graph; returns (mask, enhanced spectrogram) tensors."""
        mask = self.gen(T.tensor(g_features(data.noisy_spec[idx])))
        return mask, losses.enhanced_spec(mask, data.noisy_spec[idx])

    def _enhanced_for_d(self, enh_spec, length):
        wave = dsp.synthesis(enh_spec, self.params, length)
        spec = dsp.analysis(wave, self.params) if self.cfg.mode.cp else enh_spec
        return spec, wave

    def disc_step(self, data: Split, idx, enh_spec: np.ndarray) -> StepRecord:
        """One discriminator update; ``enh_spec`` is the (constant) generator output."""
        mode = self.cfg.mode
        length = data.noisy.shape[-1]
        ref_feat = losses.d_features(data.ref_spec[idx]).data
        spec, wave = self._enhanced_for_d(enh_spec, length)
        q_e = losses.q_targets(wave, data.ref[idx])
        part_losses = {
            "c": lambda: losses.loss_clean(self.disc, ref_feat),
            "e": lambda: losses.loss_enhanced(self.disc, losses.d_features(spec).data, ref_feat, q_e),
        }
        if mode.nd:
            noisy_wave = dsp.synthesis(data.noisy_d_in[idx], self.params, length) if mode.cp else data.noisy[idx]
            q_n = losses.q_targets(noisy_wave, data.ref[idx])
            noisy_feat = losses.d_features(data.noisy_d_in[idx]).data
            part_losses["n"] = lambda: losses.loss_noisy(self.disc, noisy_feat, ref_feat, q_n)
        values, grads = {}, {}
        for key, fn in part_losses.items():
            self.disc.params.zero_grad()
            loss = fn()
            loss.backward()
            values[key] = loss.item()
            grads[key] = flatten_grads(self.disc.params)
        self.disc.params.zero_grad()
        if self.grad_hook is not None:
            grads = self.grad_hook(self.step, grads)
        direction, w = losses.discriminator_direction(grads, mode.disc_mode)
        adam_step(self.disc.params, direction, self.opt_d)
        return self._record(values, grads, direction, w)

    def _record(self, values, grads, direction, w) -> StepRecord:
        gc, ge, gn = grads["c"], grads["e"], grads.get("n")
        rep = surgery.conflict_report(gc, ge, gn)
        self.reports.append(rep)
        dot_c, dot_e = float(direction @ gc), float(direction @ ge)
        dot_n = None if gn is None else float(direction @ gn)
        tau = surgery.tolerance(direction, gc, ge, gn)
        sc = self.cfg.mode.sc
        ok = True
        if sc != "off":
            # C/E guarantee is a property of the two-part stage; N of the final direction.
            two = direction if sc == "sc2" else w.w_c * gc + w.w_e * ge
            t2 = surgery.tolerance(two, gc, ge)
            ok = float(two @ gc) >= -t2 and float(two @ ge) >= -t2
            if sc == "sc3":
                ok = ok and dot_n >= -tau
        return StepRecord(
            step=self.step, epoch=self.epoch, l_c=values["c"], l_e=values["e"], l_n=values.get("n"),
            w_c=1.0 if w is None else w.w_c, w_e=1.0 if w is None else w.w_e,
            w_n=(None if gn is None else 1.0) if w is None else w.w_n,
            branch="baseline" if w is None else w.branch, degenerate=False if w is None else w.degenerate,
            norm_c=rep.norm_c, norm_e=rep.norm_e, norm_n=rep.norm_n,
            dot_c=dot_c, dot_e=dot_e, dot_n=dot_n, tau=tau, sc_ok=ok,
            final_obtuse_ce=dot_c < -tau or dot_e < -tau)

    def gen_step(self, data: Split, idx, enh_spec_t, rec: StepRecord | None = None):
        """One generator update against the frozen discriminator."""
        ref = losses.Reference(data.ref[idx], data.ref_spec[idx])
        with frozen(self.disc.params):
            out = losses.generator_losses(self.disc, enh_spec_t, ref, self.gen_cfg, self.params)
            self.gen.params.zero_grad()
            out["total"].backward()
        g = flatten_grads(self.gen.params)
        adam_step(self.gen.params, g, self.opt_g)
        vals = {k: out[k].item() for k in ("adv", "time", "mag", "total")}
        if rec is not None:
            rec.g_adv, rec.g_time, rec.g_mag, rec.g_total = vals["adv"], vals["time"], vals["mag"], vals["total"]
            rec.g_grad_norm = float(np.linalg.norm(g))
        return vals

    def train_batch(self, idx) -> StepRecord:
        data = self.train_split
        rec = None
        for i in range(self.cfg.d_steps):
            if i == 0:
                mask, enh = self.generate(data, idx)
                enh_data = enh.data
            rec = self.disc_step(data, idx, enh_data)
        for i in range(self.cfg.g_steps):
            if i > 0:
                mask, enh = self.generate(data, idx)
            self.gen_step(data, idx, enh, rec)
        if not rec.finite():
            raise NonFinite(f"non-finite values at step {self.step}")
        self.records.append(rec)
        self.step += 1
        return rec

    # -- loops ---------------------------------------------------------------------

    def train(self) -> dict:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        n = len(self.train_split)
        best = -math.inf
        best_epoch = None
        step_log = self._open_csv("steps.csv", STEP_FIELDS)
        conflict_log = self._open_csv("conflicts.csv", surgery.ConflictReport.CSV_FIELDS)
        eval_log = self._open_csv("eval.csv", ("epoch", "ssnr_noisy", "ssnr_enh", "q_noisy", "q_enh"))
        try:
            for epoch in range(self.cfg.epochs):
                self.epoch = epoch
                t0 = time.perf_counter()
                order = self.rng.permutation(n)
                for start in range(0, n, self.cfg.batch_size):
                    rec = self.train_batch(order[start:start + self.cfg.batch_size])
                    step_log[1].writerow({k: _fmt(v) for k, v in dataclasses.asdict(rec).items()})
                    conflict_log[1].writerow(self.reports[-1].csv_row(rec.step))
                log.info("epoch %d done in %.1fs (l_c %.4f l_e %.4f g_total %.4f)", epoch,
                         time.perf_counter() - t0, rec.l_c, rec.l_e, rec.g_total)
                if (epoch + 1) % self.cfg.eval_every == 0 or epoch + 1 == self.cfg.epochs:
                    summary = summarize(self.evaluate_split(self.eval_split))
                    summary["epoch"] = epoch
                    self.evals.append(summary)
                    eval_log[1].writerow({k: _fmt(summary[k]) for k in eval_log[1].fieldnames})
                    log.info("epoch %d eval: ssnr noisy %.3f enh %.3f", epoch,
                             summary["ssnr_noisy"], summary["ssnr_enh"])
                    if summary["ssnr_enh"] > best:
                        best, best_epoch = summary["ssnr_enh"], epoch
                        self.save(self.out_dir / "best.ckpt", extra={"eval": summary})
        finally:
            for fh, _ in (step_log, conflict_log, eval_log):
                fh.close()
        self.save(self.out_dir / "final.ckpt")
        best_eval = next(e for e in self.evals if e["epoch"] == best_epoch)
        return {"best_epoch": best_epoch, "best": best_eval, "final": self.evals[-1],
                "steps": self.step, "sc_violations": sum(not r.sc_ok for r in self.records),
                "final_obtuse_ce": sum(r.final_obtuse_ce for r in self.records),
                "out_dir": str(self.out_dir)}

    def _open_csv(self, name, fields):
        fh = open(self.out_dir / name, "w", newline="", encoding="utf-8")
        writer = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        return fh, writer

    def enhance(self, noisy_spec, batch=8):
        out = []
        for s in range(0, noisy_spec.shape[0], batch):
            spec = noisy_spec[s:s + batch]
            mask = self.gen(T.tensor(g_features(spec)))
            out.append(mask.data * spec)
        return np.concatenate(out)

    def evaluate_split(self, data: Split):
        return evaluate_masks(data, self.enhance(data.noisy_spec), self.params)

    # -- checkpoints ---------------------------------------------------------------

    def save(self, path, extra=None):
        arrays = {}
        arrays.update({f"gen/{k}": v for k, v in self.gen.params.state().items()})
        arrays.update({f"disc/{k}": v for k, v in self.disc.params.state().items()})
        for name, st in (("opt_g", self.opt_g), ("opt_d", self.opt_d)):
            arrays[f"{name}/m"] = st.m
            arrays[f"{name}/v"] = st.v
        meta = {"config": self.cfg.to_dict(), "epoch": self.epoch, "step": self.step,
                "opt_g_step": self.opt_g.step, "opt_d_step": self.opt_d.step}
        meta.update(extra or {})
        save_checkpoint(path, arrays, meta)

    @classmethod
    def from_checkpoint(cls, path, manifest: Manifest):
        arrays, meta = load_checkpoint(path)
        try:
            cfg = from_dict(meta["config"])
            tr = cls(cfg, manifest)
            tr.gen.params.load_state({k[4:]: v for k, v in arrays.items() if k.startswith("gen/")})
            tr.disc.params.load_state({k[5:]: v for k, v in arrays.items() if k.startswith("disc/")})
            for name, st in (("opt_g", tr.opt_g), ("opt_d", tr.opt_d)):
                st.m, st.v = arrays[f"{name}/m"].copy(), arrays[f"{name}/v"].copy()
            tr.opt_g.step, tr.opt_d.step = meta["opt_g_step"], meta["opt_d_step"]
            tr.step, tr.epoch = meta["step"], meta["epoch"]
        except (KeyError, ValueError) as exc:
            raise BadCheckpoint(f"{path}: {exc}") from exc
        return tr


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def evaluate_masks(data: Split, enh_spec: np.ndarray, params: dsp.StftParams):
    """Per-clip SSNR / q_ssnr rows for noisy and enhanced signals against the clean reference."""
    enh = dsp.synthesis(enh_spec, params, data.noisy.shape[-1])
    rows = []
    for i, clip in enumerate(data.ids):
        rows.append({
            "clip_id": clip, "snr_db": float(data.snr_db[i]),
            "ssnr_noisy": ssnr(data.noisy[i], data.clean[i]), "ssnr_enh": ssnr(enh[i], data.clean[i]),
            "q_noisy": q_score(data.noisy[i], data.clean[i]), "q_enh": q_score(enh[i], data.clean[i]),
        })
    return rows


def summarize(rows):
    return {k: float(np.mean([r[k] for r in rows])) for k in EVAL_COLUMNS[2:]}


def train(cfg: TrainConfig, manifest: Manifest, out_dir=None, grad_hook=None) -> dict:
    tr = Trainer(cfg, manifest, out_dir=out_dir, grad_hook=grad_hook)
    result = tr.train()
    result["trainer"] = tr
    return result


def evaluate(checkpoint, manifest: Manifest, split="test", out_csv=None):
    """Load a checkpoint, score ``split`` and optionally write the metrics CSV."""
    tr = Trainer.from_checkpoint(checkpoint, manifest)
    data = load_split(manifest, split, tr.params, cp=False)
    rows = tr.evaluate_split(data)
    if out_csv is not None:
        write_eval_csv(out_csv, rows)
    return rows


def write_eval_csv(path, rows):
    summary = summarize(rows)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(EVAL_COLUMNS), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt(v) for k, v in r.items()})
        writer.writerow({"clip_id": "mean", "snr_db": "", **{k: repr(v) for k, v in summary.items()}})
    return summary
