"""Discriminator and generator losses, and the consistency-preserving wrapper.

Discriminator parts are squared errors between the discriminator's score and
the metric target: 1 for (clean, clean), ``q_score(enhanced, clean)`` for the
enhanced part and ``q_score(noisy, clean)`` for the noisy part.  The metric is
a constant target; no gradient flows through it.

With CP enabled every signal reaching a time or TF-magnitude loss has made
the same iSTFT -> STFT round trip: the enhanced spectrogram is synthesized,
re-analyzed, and compared against Clean*, the clean signal after
STFT -> iSTFT (computed once at preprocessing time).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp, surgery
from .autonn import ops as T
from .errors import ConfigError, LengthMismatch, ModeMismatch, ShapeMismatch
from .metrics import DEFAULT_SSNR, q_batch

MAG_EPS = 1e-10
D_COMPRESSION = 0.3
SC_MODES = ("baseline", "sc2", "sc3")


@dataclass(frozen=True)
class LossParts:
    l_c: float
    l_e: float
    l_n: float | None = None


@dataclass(frozen=True)
class GenLossConfig:
    lambda_adv: float = 1.0
    lambda_time: float = 10.0
    lambda_mag: float = 1.0
    cp_enabled: bool = False
    mag_compression: float = 0.3

    def __post_init__(self):
        for name in ("lambda_adv", "lambda_time", "lambda_mag"):
            if getattr(self, name) < 0:
                raise ConfigError(f"gen_loss.{name}", "must be nonnegative")
        if max(self.lambda_adv, self.lambda_time, self.lambda_mag) <= 0:
            raise ConfigError("gen_loss", "at least one loss weight must be positive")
        if not 0 < self.mag_compression <= 1:
            raise ConfigError("gen_loss.mag_compression", "must lie in (0, 1]")


def compressed_mag(spec, c: float):
    """(|S|^2 + eps)^(c/2) as a tensor; differentiable in S."""
    return T.power(T.add(T.abs2(spec), MAG_EPS), c / 2)


def d_features(spec):
    """Discriminator input features for a complex spectrogram (tensor or array)."""
    return compressed_mag(spec, D_COMPRESSION)


def q_targets(cand_wave, ref_wave, ssnr_params=DEFAULT_SSNR) -> np.ndarray:
    """Per-example metric targets; plain arrays, never part of the graph."""
    cand = cand_wave.data if isinstance(cand_wave, T.Tensor) else np.asarray(cand_wave)
    ref = ref_wave.data if isinstance(ref_wave, T.Tensor) else np.asarray(ref_wave)
    return q_batch(np.atleast_2d(cand), np.atleast_2d(ref), ssnr_params)


def loss_clean(d, y_feat):
    """mean (D(y, y) - 1)^2, using Q(y, y) = 1."""
    return T.mean(T.square(T.sub(d(y_feat, y_feat), 1.0)))


def loss_enhanced(d, enh_feat, ref_feat, q_target):
    """mean (D(enh, y) - Q(enh, y))^2 with ``q_target`` held constant."""
    score = d(enh_feat, ref_feat)
    return T.mean(T.square(T.sub(score, np.asarray(q_target, dtype=np.float64))))


def loss_noisy(d, noisy_feat, ref_feat, q_target):
    """Same form as the enhanced part, with the noisy input in place of G(x)."""
    return loss_enhanced(d, noisy_feat, ref_feat, q_target)


def discriminator_direction(parts: dict, mode: str):
    """Combine per-part gradients {'c', 'e'[, 'n']} into one descent direction.

    Returns ``(direction, weights)``; ``weights`` is None for the baseline.
    """
    gc, ge, gn = parts["c"], parts["e"], parts.get("n")
    if mode == "baseline":
        out = gc + ge
        return (out if gn is None else out + gn), None
    if mode == "sc2":
        if gn is not None:
            raise ModeMismatch("sc2 weighs exactly two parts; drop the noisy gradient or use sc3")
        w = surgery.sc2_weights(gc, ge)
        return surgery.combine(gc, ge, None, w), w
    if mode == "sc3":
        if gn is None:
            raise ModeMismatch("sc3 requires the noisy-part gradient")
        w = surgery.sc3_weights(gc, ge, gn)
        return surgery.combine(gc, ge, gn, w), w
    raise ModeMismatch(f"unknown discriminator mode {mode!r}; expected one of {SC_MODES}")


def gen_adv_loss(d, enh_feat, ref_feat):
    return T.mean(T.square(T.sub(d(enh_feat, ref_feat), 1.0)))


def time_loss(enh_wave, ref_wave):
    """Mean absolute sample difference."""
    if tuple(np.shape(getattr(enh_wave, "data", enh_wave))) != tuple(np.shape(getattr(ref_wave, "data", ref_wave))):
        raise LengthMismatch("time loss operands differ in length")
    return T.mean(T.absolute(T.sub(enh_wave, ref_wave)))


def tf_mag_loss(enh_spec, ref_spec, compression=0.3):
    """Mean squared difference of compressed magnitudes |S|^c."""
    if tuple(np.shape(getattr(enh_spec, "data", enh_spec))) != tuple(np.shape(getattr(ref_spec, "data", ref_spec))):
        raise ShapeMismatch("TF-magnitude loss operands differ in shape")
    diff = T.sub(compressed_mag(enh_spec, compression), compressed_mag(ref_spec, compression).data)
    return T.mean(T.square(diff))


@dataclass(frozen=True, eq=False)
class Reference:
    """What the generator losses compare against: a waveform and its spectrogram."""
    wave: np.ndarray
    spec: np.ndarray


def clean_star(y: np.ndarray, params: dsp.StftParams) -> Reference:
    """Clean* reference: y after STFT -> iSTFT, plus the STFT of that signal."""
    wave = dsp.round_trip(y, params)
    return Reference(wave, dsp.analysis(wave, params))


def plain_reference(y: np.ndarray, params: dsp.StftParams) -> Reference:
    y = np.asarray(y, dtype=np.float64)
    return Reference(y, dsp.analysis(y, params))


def enhanced_spec(mask, noisy_spec):
    """Mask applied to the noisy magnitude with the noisy phase kept."""
    return T.mul(mask, noisy_spec)


def cp_wrap(enh_spec, clean_star_ref: Reference, params: dsp.StftParams):
    """Route the enhanced spectrogram through iSTFT -> STFT.

    Returns ``(consistent_spec, enh_wave, refs)``; losses should consume only
    these outputs so every input has seen the same transforms.
    """
    length = clean_star_ref.wave.shape[-1]
    wave = T.istft(enh_spec, params, length)
    return T.stft(wave, params), wave, clean_star_ref


def plain_wrap(enh_spec, clean_ref: Reference, params: dsp.StftParams):
    """The traditional path: spectral losses see the raw generator output."""
    length = clean_ref.wave.shape[-1]
    return enh_spec, T.istft(enh_spec, params, length), clean_ref


def generator_losses(d, enh_spec, ref: Reference, cfg: GenLossConfig, params: dsp.StftParams):
    """All generator loss terms for one batch.

    ``ref`` must be Clean* when ``cfg.cp_enabled`` and the plain clean signal
    otherwise.  Returns a dict of tensors: adv, time, mag, total, plus the
    spectrogram and waveform the losses were computed on.
    """
    wrap = cp_wrap if cfg.cp_enabled else plain_wrap
    spec, wave, ref = wrap(enh_spec, ref, params)
    ref_feat = d_features(ref.spec).data
    adv = gen_adv_loss(d, d_features(spec), ref_feat)
    tl = time_loss(wave, ref.wave)
    ml = tf_mag_loss(spec, ref.spec, cfg.mag_compression)
    total = T.add(T.add(T.scale(adv, cfg.lambda_adv), T.scale(tl, cfg.lambda_time)),
                  T.scale(ml, cfg.lambda_mag))
    return {"adv": adv, "time": tl, "mag": ml, "total": total, "spec": spec, "wave": wave}
