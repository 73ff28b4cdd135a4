"""Training objectives: per-pixel NLL, loss max-pooling, direction-field L2.

The combined objective is the sum of three parts:

* fg/bg: per-pixel multinomial NLL pooled over the hardest pixels of the
  minibatch (loss max-pooling, keeping the top ``kept_fraction``), or a
  20x foreground-weighted mean for the ablation baseline;
* finger class: NLL restricted to annotated nail pixels, summed and
  divided by the full pixel count;
* direction field: squared L2 on base-to-tip unit vectors inside nails,
  divided by the full pixel count.

Auxiliary-scale heads contribute the same three terms with weight 1;
labels are nearest-neighbor downsampled (fields: block mean, then
renormalized).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import tensor as T
from .errors import ContractViolation, DataValidationError
from .model import SegOutput
from .tensor import Tensor

DEFAULT_KEPT_FRACTION = 0.1


@dataclass
class LossBundle:
    fgbg: float
    class_: float
    field: float
    total: float
    tau: float
    kept_fraction: float
    total_tensor: Tensor = dc_field(repr=False, default=None)

    def backward(self) -> None:
        self.total_tensor.backward()


# ---------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------

def nll_loss(logits: Tensor, target: np.ndarray, valid_mask: np.ndarray | None = None) -> Tensor:
    """Per-pixel -log softmax(logits)[target]; masked pixels contribute 0."""
    target = np.asarray(target)
    lp = T.log_softmax(logits, axis=1)
    per_pixel = -T.gather_channel(lp, target.astype(np.int64))
    if valid_mask is not None:
        if valid_mask.shape != target.shape:
            raise ContractViolation(
                f"valid_mask shape {valid_mask.shape} != target shape {target.shape}"
            )
        per_pixel = T.mul(per_pixel, Tensor(valid_mask.astype(logits.dtype)))
    return per_pixel


def lmp_select(values: np.ndarray, kept_fraction: float) -> tuple[np.ndarray, float]:
    """Indices of the k hardest entries (ties broken by flat index) and tau.

    k = max(1, floor(kept_fraction * n)); tau is the k-th highest value.
    """
    flat = values.ravel()
    n = flat.size
    if n == 0:
        raise ContractViolation("loss max-pooling over an empty tensor")
    k = max(1, int(np.floor(kept_fraction * n)))
    order = np.lexsort((np.arange(n), -flat))
    kept = order[:k]
    tau = float(flat[order[k - 1]])
    return kept, tau


def lmp_loss(per_pixel: Tensor, kept_fraction: float = DEFAULT_KEPT_FRACTION) -> tuple[Tensor, float]:
    """Mean of the hardest-pixel losses across the whole minibatch."""
    kept, tau = lmp_select(per_pixel.data, kept_fraction)
    flat = T.reshape(per_pixel, (per_pixel.data.size,))
    picked = T.gather_flat(flat, kept)
    scale = np.asarray(1.0 / kept.size, dtype=per_pixel.dtype)
    return T.mul(T.sum_all(picked), Tensor(scale)), tau


def weighted_ce_loss(per_pixel: Tensor, fg_mask: np.ndarray, fg_weight: float = 20.0) -> Tensor:
    """Foreground-upweighted mean CE, the ablation baseline for LMP."""
    w = np.where(fg_mask > 0, fg_weight, 1.0).astype(per_pixel.dtype)
    total_w = np.asarray(1.0 / w.sum(), dtype=per_pixel.dtype)
    return T.mul(T.sum_all(T.mul(per_pixel, Tensor(w))), Tensor(total_w))


def field_loss(
    pred: Tensor,
    target: np.ndarray,
    valid_mask: np.ndarray,
    normalize_by_valid: bool = False,
) -> Tensor:
    """Masked squared-L2 on unit direction vectors, divided by H*W (per image)."""
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ContractViolation(f"pred shape {pred.shape} != target shape {target.shape}")
    n, c, h, w = pred.shape
    valid = valid_mask.astype(bool)
    if valid.any():
        norms = np.sqrt((target ** 2).sum(axis=1))[valid]
        bad = np.abs(norms - 1.0) > 1e-3
        if bad.any():
            raise DataValidationError(
                f"{int(bad.sum())} valid field labels are not unit norm (worst {norms[bad][0]:.4f})"
            )
    diff = pred - Tensor(target)
    sq = T.mul(T.square(diff), Tensor(valid_mask.astype(pred.dtype)[:, None, :, :]))
    denom = max(float(valid.sum()) if normalize_by_valid else n * h * w, 1.0)
    return T.mul(T.sum_all(sq), Tensor(np.asarray(1.0 / denom, dtype=pred.dtype)))


# ---------------------------------------------------------------------
# label downsampling for auxiliary scales
# ---------------------------------------------------------------------

def _nearest_indices(size: int, factor: int) -> np.ndarray:
    return np.minimum(np.arange(size // factor) * factor + factor // 2, size - 1)


def downsample_labels(
    fgbg: np.ndarray, classes: np.ndarray, field: np.ndarray, factor: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest-neighbor for masks; block-mean + renormalize for fields."""
    if factor == 1:
        return fgbg, classes, field
    n, h, w = fgbg.shape
    hi = _nearest_indices(h, factor)
    wi = _nearest_indices(w, factor)
    fg_s = fgbg[:, hi][:, :, wi]
    cl_s = classes[:, hi][:, :, wi]

    hs, ws = h // factor, w // factor
    fm = field[:, :, : hs * factor, : ws * factor]
    block = fm.reshape(n, 2, hs, factor, ws, factor).mean(axis=(3, 5))
    norms = np.sqrt((block ** 2).sum(axis=1, keepdims=True))
    nearest = field[:, :, hi][:, :, :, wi]
    unit = np.where(norms > 1e-6, block / np.maximum(norms, 1e-12), nearest)
    field_s = np.where(fg_s[:, None] > 0, unit, 0.0).astype(field.dtype)
    return fg_s, cl_s, field_s


# ---------------------------------------------------------------------
# combined objective
# ---------------------------------------------------------------------

def total_loss(
    output: SegOutput,
    fgbg: np.ndarray,
    classes: np.ndarray,
    field: np.ndarray,
    kept_fraction: float = DEFAULT_KEPT_FRACTION,
    use_lmp: bool = True,
    fg_weight: float = 20.0,
    normalize_field_by_valid: bool = False,
) -> LossBundle:
    """Sum of fg/bg, class and field losses over the final and auxiliary scales.

    ``use_lmp=False`` swaps loss max-pooling for the 20x-weighted CE baseline.
    """
    dtype = output.fgbg_logits.dtype
    n, _, h, w = output.fgbg_logits.shape
    if fgbg.shape != (n, h, w):
        raise ContractViolation(f"fgbg labels {fgbg.shape} != {(n, h, w)}")

    scales = [(1, output.fgbg_logits, output.class_logits, output.field)]
    for factor, fg_l, cl_l, fl_l in output.aux:
        scales.append((factor, fg_l, cl_l, fl_l))

    fgbg_terms: list[Tensor] = []
    class_terms: list[Tensor] = []
    field_terms: list[Tensor] = []
    tau_full = 0.0

    for factor, fg_logits, cl_logits, fl_pred in scales:
        fg_s, cl_s, fl_s = downsample_labels(fgbg, classes, field, factor)
        hs, ws = fg_s.shape[1:]

        per_pixel = nll_loss(fg_logits, fg_s)
        if use_lmp:
            term, tau = lmp_loss(per_pixel, kept_fraction)
            if factor == 1:
                tau_full = tau
        else:
            term = weighted_ce_loss(per_pixel, fg_s, fg_weight)
        fgbg_terms.append(term)

        valid = fg_s > 0
        if valid.any():
            cl_target = np.maximum(cl_s.astype(np.int64) - 1, 0)  # head channels are classes 1..K
            cl_pp = nll_loss(cl_logits, cl_target, valid_mask=valid)
            class_terms.append(
                T.mul(T.sum_all(cl_pp), Tensor(np.asarray(1.0 / (n * hs * ws), dtype=dtype)))
            )
            field_terms.append(
                field_loss(fl_pred, fl_s, valid, normalize_by_valid=normalize_field_by_valid)
            )

    def _accumulate(terms: list[Tensor]) -> Tensor:
        if not terms:
            return Tensor(np.asarray(0.0, dtype=dtype))
        acc = terms[0]
        for t in terms[1:]:
            acc = T.add(acc, t)
        return acc

    fgbg_t = _accumulate(fgbg_terms)
    class_t = _accumulate(class_terms)
    field_t = _accumulate(field_terms)
    total_t = T.add(T.add(fgbg_t, class_t), field_t)
    def _scalar(t: Tensor) -> float:
        return float(np.asarray(t.data).reshape(-1)[0])

    return LossBundle(
        fgbg=_scalar(fgbg_t),
        class_=_scalar(class_t),
        field=_scalar(field_t),
        total=_scalar(total_t),
        tau=tau_full,
        kept_fraction=kept_fraction,
        total_tensor=total_t,
    )
