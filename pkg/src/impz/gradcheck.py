"""Finite-difference verification of analytic gradients.

``grad_check`` compares the tape's gradients for a scalar-valued
closure against central differences, element by element. The relative
error uses a floored denominator,

    err = |analytic - numeric| / max(|analytic|, |numeric|, 1e-3)

so near-zero gradients are judged on an absolute scale instead of
amplifying finite-difference noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Tensor, backward

DENOM_FLOOR = 1e-3


@dataclass
class GradCheckReport:
    name: str
    max_rel_err: float
    tol: float
    per_input: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def grad_check(closure, inputs, h: float = 1e-6, tol: float = 1e-4,
               name: str = "closure") -> GradCheckReport:
    """Check d(closure())/d(input) for every element of every input.

    The closure takes no arguments, reads the given tensors, and
    returns a scalar Tensor. It must be re-evaluable: the harness
    perturbs input values in place and calls it repeatedly.
    """
    inputs = list(inputs)
    with Tape():
        loss = closure()
        backward(loss)
    analytic = []
    for t in inputs:
        if t.grad is None:
            analytic.append(np.zeros(t.values.shape))
        else:
            analytic.append(t.grad.copy())
        t.grad = None

    per_input = []
    for t, a in zip(inputs, analytic):
        flat = t.values.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(closure().values)
            flat[i] = orig - h
            down = float(closure().values)
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            ai = a.reshape(-1)[i]
            err = abs(ai - numeric) / max(abs(ai), abs(numeric), DENOM_FLOOR)
            if err > worst:
                worst = err
        per_input.append(worst)

    max_err = max(per_input) if per_input else 0.0
    return GradCheckReport(name=name, max_rel_err=max_err, tol=tol, per_input=per_input)


def check_many(cases, h: float = 1e-6, tol: float = 1e-4,
               verbose: bool = False) -> list[GradCheckReport]:
    """Run (name, closure, inputs) cases; returns all reports."""
    reports = []
    for case_name, closure, inputs in cases:
        rep = grad_check(closure, inputs, h=h, tol=tol, name=case_name)
        reports.append(rep)
        if verbose:
            status = "ok" if rep.passed else "FAIL"
            print(f"  gradcheck {case_name}: max rel err {rep.max_rel_err:.3e} [{status}]")
    return reports


def _rand(rng, *shape) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def default_suite(seed: int = 0):
    """Gradient-check cases covering every differentiable op."""
    from . import autodiff as ad

    rng = np.random.default_rng(seed)
    cases = []

    a = _rand(rng, 3, 4)
    b = _rand(rng, 3, 4)
    tgt = rng.standard_normal((3, 4))
    cases.append(("add", lambda: ad.mse(ad.add(a, b), tgt), [a, b]))
    cases.append(("sub", lambda: ad.mse(ad.sub(a, b), tgt), [a, b]))
    cases.append(("mul", lambda: ad.mse(ad.mul(a, b), tgt), [a, b]))
    cases.append(("scale", lambda: ad.mse(ad.scale(a, 1.7), tgt), [a]))
    cases.append(("tanh", lambda: ad.mse(ad.tanh(a), tgt), [a]))
    cases.append(("sigmoid", lambda: ad.mse(ad.sigmoid(a), tgt), [a]))
    cases.append(("mean", lambda: ad.mean(ad.mul(a, a)), [a]))
    cases.append(("sum", lambda: ad.mean(ad.mul(ad.sum_(a, axis=1, keepdims=True), b)), [a, b]))

    x2 = _rand(rng, 3, 4)
    w2 = _rand(rng, 4, 2)
    t2 = rng.standard_normal((3, 2))
    cases.append(("matmul", lambda: ad.mse(ad.matmul(x2, w2), t2), [x2, w2]))

    xc = _rand(rng, 2, 3, 12)
    wc = _rand(rng, 4, 3, 3)
    bc = _rand(rng, 4)
    tc = rng.standard_normal((2, 4, 12))
    cases.append((
        "conv1d_same",
        lambda: ad.mse(ad.conv1d(xc, wc, bc, dilation=1, padding=1, stride=1), tc),
        [xc, wc, bc],
    ))
    tc2 = rng.standard_normal((2, 4, 4))
    cases.append((
        "conv1d_dilated_strided",
        lambda: ad.mse(ad.conv1d(xc, wc, bc, dilation=2, padding=2, stride=3), tc2),
        [xc, wc, bc],
    ))

    xt = _rand(rng, 2, 3, 6)
    wt = _rand(rng, 3, 2, 4)
    bt = _rand(rng, 2)
    tt = rng.standard_normal((2, 2, 12))
    cases.append((
        "conv_transpose1d",
        lambda: ad.mse(ad.conv_transpose1d(xt, wt, bt, stride=2, padding=1), tt),
        [xt, wt, bt],
    ))

    xg = _rand(rng, 2, 4, 5)
    gg = _rand(rng, 4)
    bg = _rand(rng, 4)
    tg = rng.standard_normal((2, 4, 5))
    cases.append((
        "group_norm",
        lambda: ad.mse(ad.group_norm(xg, gg, bg, groups=2), tg),
        [xg, gg, bg],
    ))

    gx = _rand(rng, 3, 12)
    h0 = _rand(rng, 3, 4)
    u = _rand(rng, 4, 12)
    th = rng.standard_normal((3, 4))
    cases.append(("gru_cell", lambda: ad.mse(ad.gru_cell(gx, h0, u), th), [gx, h0, u]))

    xs = _rand(rng, 2, 3, 5)
    ts = rng.standard_normal((2, 5, 3))
    cases.append((
        "reshape_transpose",
        lambda: ad.mse(ad.transpose(ad.reshape(xs, (2, 3, 5)), (0, 2, 1)), ts),
        [xs],
    ))
    tr = rng.standard_normal((2, 3, 5))
    cases.append(("reverse", lambda: ad.mse(ad.reverse(xs, axis=2), tr), [xs]))
    tcat = rng.standard_normal((2, 6, 5))
    cases.append((
        "concat_slice",
        lambda: ad.mse(ad.concat([xs, ad.slice_axis(xs, 1, 0, 3)], axis=1), tcat),
        [xs],
    ))

    return cases


def composite_suite(seed: int = 1):
    """End-to-end checks through the inverse and forward models (L=16)."""
    from . import forward_model as fm
    from . import inverse_model as im
    from .params import ParamStore

    rng = np.random.default_rng(seed)
    inv_cfg = im.InverseModelConfig(
        gru_hidden=2, lpa_channels=2, dilation_set=(1, 2),
        upsample_factor=2, regression_hidden=2,
    )
    fwd_cfg = fm.ForwardModelConfig(
        feat_channels=2, feat_kernel=3, wavelet_kernel_length=7, downsample_stride=2,
    )
    store = ParamStore()
    im.add_inverse_params(store, inv_cfg, rng)
    fm.add_forward_params(store, fwd_cfg, rng)

    d = Tensor(rng.standard_normal((2, 1, 16)))
    m_true = rng.standard_normal((2, 1, 32))
    params = store.tensors()

    def invert_loss():
        from .autodiff import mse
        return mse(im.invert(d, inv_cfg, store), m_true)

    def synth_loss():
        from .autodiff import mse
        m_hat = im.invert(d, inv_cfg, store)
        d_hat = fm.synthesize(m_hat, fwd_cfg, store)
        return mse(d_hat, d.values)

    return [
        ("invert_composite", invert_loss, params),
        ("synthesize_composite", synth_loss, params),
    ]


def run_default_suite(verbose: bool = True, seed: int = 0) -> bool:
    """Every op plus composite model graphs; True when all pass."""
    reports = check_many(default_suite(seed), verbose=verbose)
    reports += check_many(composite_suite(seed + 1), verbose=verbose)
    return all(r.passed for r in reports)
