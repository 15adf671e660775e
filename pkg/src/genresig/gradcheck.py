"""Central finite-difference verification of the engine's gradients."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tape, Tensor, backward

DEFAULT_EPS = 1e-5


def _relative_error(analytic, numeric) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))


def grad_check(fn, point, eps: float = DEFAULT_EPS) -> float:
    """Max relative error between fn's taped gradient and central differences.

    fn maps one Tensor to a scalar Tensor and must be evaluable at every
    +-eps coordinate perturbation of `point`.
    """
    point = np.asarray(point, dtype=np.float64)
    leaf = Tensor(point.copy(), requires_grad=True)
    with Tape() as tape:
        loss = fn(leaf)
    backward(loss, tape)
    analytic = np.zeros_like(point) if leaf.grad is None else leaf.grad

    numeric = np.zeros_like(point)
    flat = point.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + eps
        hi = fn(Tensor(point)).item()
        flat[i] = saved - eps
        lo = fn(Tensor(point)).item()
        flat[i] = saved
        numeric.reshape(-1)[i] = (hi - lo) / (2.0 * eps)

    return float(_relative_error(analytic, numeric).max())


def grad_check_params(loss_fn, params, samples: int, rng, eps: float = DEFAULT_EPS) -> float:
    """Spot-check a composed model: compares the taped gradient of
    loss_fn() against central differences at `samples` randomly chosen
    parameter coordinates."""
    params = list(params)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    backward(loss, tape)
    analytic = {p.name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for p in params}
    for p in params:
        p.zero_grad()

    sizes = np.array([p.data.size for p in params])
    picks = rng.choice(sizes.sum(), size=min(samples, sizes.sum()), replace=False)
    worst = 0.0
    for pick in np.sort(picks):
        which = int(np.searchsorted(sizes.cumsum(), pick, side="right"))
        index = int(pick - sizes.cumsum()[which] + sizes[which])
        p = params[which]
        saved = p.data.reshape(-1)[index]
        p.data.reshape(-1)[index] = saved + eps
        hi = loss_fn().item()
        p.data.reshape(-1)[index] = saved - eps
        lo = loss_fn().item()
        p.data.reshape(-1)[index] = saved
        numeric = (hi - lo) / (2.0 * eps)
        err = float(_relative_error(analytic[p.name].reshape(-1)[index], numeric))
        worst = max(worst, err)
    return worst


def _away_from_kinks(x, margin=0.1):
    small = np.abs(x) < margin
    return x + np.where(small, np.where(x >= 0, margin * 1.5, -margin * 1.5), 0.0)


def run_suite(seed: int = 0, points: int = 10):
    """Gradient checks for every differentiable op plus composites.

    Returns a list of (name, max_relative_error, threshold) triples; the
    caller decides about pass/fail printing.
    """
    from .model import ModelConfig, forward, init_params

    rng = np.random.default_rng(seed)
    results = []

    def check(name, threshold, make_case):
        worst = 0.0
        for _ in range(points):
            fn, point = make_case()
            worst = max(worst, grad_check(fn, point))
        results.append((name, worst, threshold))

    def weighted_sum(out, weights):
        flat = T.reshape(out, (-1,))
        return T.sum_all(T.mul(flat, Tensor(weights.reshape(-1))))

    def relu_case():
        point = _away_from_kinks(rng.normal(size=(4, 5)))
        w = rng.normal(size=20)
        return (lambda x: weighted_sum(T.relu(x), w)), point

    def affine_case():
        weight = Tensor(rng.normal(size=(3, 6)))
        bias = Tensor(rng.normal(size=3))
        w = rng.normal(size=3)
        return (lambda x: weighted_sum(T.affine(x, weight, bias), w)), rng.normal(size=6)

    def affine_weight_case():
        x = Tensor(rng.normal(size=(4, 6)))
        bias = Tensor(rng.normal(size=3))
        w = rng.normal(size=12)
        return (lambda weight: weighted_sum(T.affine(x, weight, bias), w)), rng.normal(size=(3, 6))

    def matmul_case():
        b = Tensor(rng.normal(size=(4, 3)))
        w = rng.normal(size=6)
        return (lambda a: weighted_sum(T.matmul(a, b), w)), rng.normal(size=(2, 4))

    def softmax_case():
        w = rng.normal(size=7)
        return (lambda x: weighted_sum(T.softmax(x), w)), rng.normal(size=7)

    def cross_entropy_case():
        label = int(rng.integers(10))
        return (lambda x: T.cross_entropy(x, label)), rng.normal(size=10)

    def conv_input_case():
        kernels = Tensor(rng.normal(size=(3, 2, 3, 3)))
        bias = Tensor(rng.normal(size=3))
        w = rng.normal(size=3 * 5 * 4)
        return (lambda x: weighted_sum(T.conv2d(x, kernels, bias), w)), rng.normal(size=(2, 5, 4))

    def conv_kernel_case():
        x = Tensor(rng.normal(size=(2, 5, 4)))
        bias = Tensor(rng.normal(size=3))
        w = rng.normal(size=3 * 5 * 4)
        return (lambda k: weighted_sum(T.conv2d(x, k, bias), w)), rng.normal(size=(3, 2, 3, 3))

    def pool_chain_case():
        # conv -> relu -> pool -> affine composite
        kernels = Tensor(rng.normal(size=(2, 1, 3, 3)))
        bias = Tensor(rng.normal(size=2))
        weight = Tensor(rng.normal(size=(3, 2 * 3 * 2)))
        w = rng.normal(size=3)

        def fn(x):
            y = T.maxpool2d(T.relu(T.conv2d(x, kernels, bias)))
            return weighted_sum(T.affine(T.reshape(y, (1, -1)), weight, None), w)

        return fn, rng.normal(size=(1, 6, 5))

    def attention_case():
        cfg = ModelConfig(token_count=4, token_bins=16, token_frames=8,
                          conv_channels=(2, 2, 2), embed_dim=8, heads=2,
                          class_count=3)
        params = init_params(cfg, seed=int(rng.integers(2 ** 31)))
        from .model import multi_head_attention
        w = rng.normal(size=4 * 8)

        def fn(e):
            attended, _ = multi_head_attention(e, params)
            return weighted_sum(attended, w)

        return fn, rng.normal(size=(4, 8))

    check("relu", 1e-6, relu_case)
    check("affine(x)", 1e-6, affine_case)
    check("affine(W)", 1e-6, affine_weight_case)
    check("matmul", 1e-6, matmul_case)
    check("softmax", 1e-6, softmax_case)
    check("softmax+cross_entropy", 1e-6, cross_entropy_case)
    check("conv2d(x)", 1e-4, conv_input_case)
    check("conv2d(kernels)", 1e-4, conv_kernel_case)
    check("conv->relu->pool->affine", 1e-4, pool_chain_case)
    check("multi_head_attention", 1e-4, attention_case)

    # Full composed model at production geometry. Each draw spot-checks 25
    # random parameter coordinates, so two draws give 50 random points.
    cfg = ModelConfig()
    worst = 0.0
    for draw in range(2):
        params = init_params(cfg, seed=seed * 1000 + draw)
        tokens = rng.random(size=(cfg.token_count, cfg.token_bins, cfg.token_frames))
        label = int(rng.integers(cfg.class_count))

        def loss_fn():
            out = forward(tokens, params)
            return T.cross_entropy(out.logits, label)

        err = grad_check_params(loss_fn, params.parameters(), samples=25, rng=rng)
        worst = max(worst, err)
    results.append(("full model", worst, 1e-4))

    return results
