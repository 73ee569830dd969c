"""Differentiable building blocks shared by the paraphrase model and the classifier.

Gradients come from torch autograd; :func:`check_gradients` verifies them
against central finite differences.  LSTM gate order is fixed as
(input, forget, cell, output) along the first weight axis.
"""
from __future__ import annotations

import math
import random
from typing import Callable, Iterable, Optional

import torch
from torch import nn

from .errors import NonFiniteLoss, ScpnError, ShapeMismatch

INIT_SCALE = 0.08
FORGET_BIAS = 1.0


class EmptyKeys(ScpnError):
    pass


class LstmCell(nn.Module):
    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.weight_ih = nn.Parameter(torch.zeros(4 * hidden_size, input_size))
        self.weight_hh = nn.Parameter(torch.zeros(4 * hidden_size, hidden_size))
        self.bias = nn.Parameter(torch.zeros(4 * hidden_size))

    def forward(self, x, h, c):
        return lstm_step(self, x, h, c)


def lstm_step(w: LstmCell, x, h_prev, c_prev, x_proj=None):
    """One LSTM update.  ``x_proj`` may carry a precomputed ``x @ W_ih^T + b``."""
    hs = w.hidden_size
    if x_proj is None:
        if x.shape[-1] != w.input_size:
            raise ShapeMismatch(f"input has size {x.shape[-1]}, cell expects {w.input_size}")
        x_proj = x @ w.weight_ih.t() + w.bias
    if h_prev.shape[-1] != hs or c_prev.shape[-1] != hs:
        raise ShapeMismatch(f"state size {h_prev.shape[-1]}/{c_prev.shape[-1]} != {hs}")
    gates = x_proj + h_prev @ w.weight_hh.t()
    i, f, g, o = gates.split(hs, dim=-1)
    i = torch.sigmoid(i)
    f = torch.sigmoid(f)
    g = torch.tanh(g)
    o = torch.sigmoid(o)
    c = f * c_prev + i * g
    h = o * torch.tanh(c)
    return h, c


def run_lstm(cell: LstmCell, inputs, mask=None, reverse: bool = False, state=None):
    """Run over a padded batch ``inputs`` (B, T, d).

    Padded steps (mask 0) leave the state untouched, so the final state of a
    reverse pass starts at each sequence's own last token.
    Returns (outputs (B, T, h), (h_final, c_final)).
    """
    bsz, steps, _ = inputs.shape
    if state is None:
        h = inputs.new_zeros(bsz, cell.hidden_size)
        c = inputs.new_zeros(bsz, cell.hidden_size)
    else:
        h, c = state
    proj = inputs @ cell.weight_ih.t() + cell.bias
    outputs = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        h_new, c_new = lstm_step(cell, None, h, c, x_proj=proj[:, t])
        if mask is not None:
            m = mask[:, t].unsqueeze(1).to(inputs.dtype)
            h = m * h_new + (1 - m) * h
            c = m * c_new + (1 - m) * c
        else:
            h, c = h_new, c_new
        outputs[t] = h
    return torch.stack(outputs, dim=1), (h, c)


class BilinearAttention(nn.Module):
    """Scores ``query^T W key``."""

    def __init__(self, query_size: int, key_size: int):
        super().__init__()
        self.W = nn.Parameter(torch.zeros(query_size, key_size))

    def forward(self, query, keys, values, mask=None):
        return bilinear_attention(self, query, keys, values, mask)


def bilinear_attention(att: BilinearAttention, query, keys, values, mask=None):
    """Softmax-weighted average of ``values``.

    Unbatched: query (dq,), keys (T, dk), values (T, dv).
    Batched: query (B, dq), keys (B, T, dk), values (B, T, dv), mask (B, T).
    """
    if keys.shape[-2] == 0:
        raise EmptyKeys("attention needs at least one key")
    if keys.shape[-2] != values.shape[-2]:
        raise ShapeMismatch("keys and values differ in length")
    if query.dim() == 1:
        scores = keys @ (att.W.t() @ query)
        weights = torch.softmax(scores, dim=-1)
        return weights @ values, weights
    projected = query @ att.W  # (B, dk)
    scores = torch.bmm(keys, projected.unsqueeze(2)).squeeze(2)
    if mask is not None:
        scores = scores.masked_fill(mask == 0, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    context = torch.bmm(weights.unsqueeze(1), values).squeeze(1)
    return context, weights


def init_uniform(module: nn.Module, seed: int, scale: float = INIT_SCALE) -> None:
    """Uniform(-scale, scale) from a seeded generator in parameter-name order;
    LSTM forget-gate biases start at +1."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in sorted(module.named_parameters(), key=lambda kv: kv[0]):
            p.copy_((torch.rand(p.shape, generator=gen, dtype=torch.float64) * 2 - 1) * scale)
        for sub in module.modules():
            if isinstance(sub, LstmCell):
                hs = sub.hidden_size
                sub.bias[hs : 2 * hs] += FORGET_BIAS


def check_gradients(
    loss_fn: Callable[[], torch.Tensor],
    params: Iterable[tuple[str, nn.Parameter]] | Iterable[nn.Parameter],
    eps: float = 1e-4,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Worst relative error between autograd and central differences.

    ``loss_fn`` must rebuild the loss from the current parameter values.  When
    ``max_entries`` is given, a seeded sample of that many entries is checked
    (at least one from every parameter tensor).
    """
    named = []
    for k, p in enumerate(params):
        named.append(p if isinstance(p, tuple) else (f"param{k}", p))
    loss = loss_fn()
    if not torch.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss.item()}")
    grads = torch.autograd.grad(loss, [p for _, p in named], allow_unused=True)
    entries = [(pi, j) for pi, (_, p) in enumerate(named) for j in range(p.numel())]
    if max_entries is not None and len(entries) > max_entries:
        rng = random.Random(seed)
        firsts = {}
        for e in entries:
            firsts.setdefault(e[0], []).append(e)
        chosen = {rng.choice(v) for v in firsts.values()}
        rest = [e for e in entries if e not in chosen]
        chosen |= set(rng.sample(rest, max(0, max_entries - len(chosen))))
        entries = sorted(chosen)
    worst = 0.0
    with torch.no_grad():
        for pi, j in entries:
            p = named[pi][1]
            flat = p.data.view(-1)
            orig = flat[j].item()
            flat[j] = orig + eps
            up = loss_fn().item()
            flat[j] = orig - eps
            down = loss_fn().item()
            flat[j] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise NonFiniteLoss(f"non-finite loss perturbing {named[pi][0]}[{j}]")
            numeric = (up - down) / (2 * eps)
            g = grads[pi]
            analytic = 0.0 if g is None else g.reshape(-1)[j].item()
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
