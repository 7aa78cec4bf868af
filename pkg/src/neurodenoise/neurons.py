"""Spiking neuron dynamics: LIF, gated spiking neuron (GSN), PLIF and ALIF.

All step functions operate on torch tensors with an arbitrary leading batch
shape and a trailing neuron axis. The hard spike uses the triangular
surrogate ``max(0, 1 - |u - theta|)`` on the backward pass; the "relaxed"
mode swaps the step for its C1 antiderivative so that finite differences
see the same derivative the surrogate claims.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

NEURON_KINDS = ("gsn", "lif", "plif", "alif")
SPIKE_MODES = ("hard", "relaxed")


class NeuronError(RuntimeError):
    pass


def surrogate_grad(u, theta=1.0):
    """Triangular pseudo-derivative of the spike w.r.t. membrane potential."""
    if isinstance(u, torch.Tensor):
        return torch.clamp(1.0 - torch.abs(u - theta), min=0.0)
    return max(0.0, 1.0 - abs(u - theta))


class _TriangleSpike(torch.autograd.Function):
    @staticmethod
    def forward(ctx, v):
        ctx.save_for_backward(v)
        return (v >= 0).to(v.dtype)

    @staticmethod
    def backward(ctx, grad_out):
        (v,) = ctx.saved_tensors
        return grad_out * torch.clamp(1.0 - v.abs(), min=0.0)


def relaxed_spike(v: torch.Tensor) -> torch.Tensor:
    """Piecewise-quadratic ramp whose derivative is exactly the triangle."""
    c = torch.clamp(v, -1.0, 1.0)
    return torch.where(c < 0, 0.5 * (c + 1.0) ** 2, 1.0 - 0.5 * (1.0 - c) ** 2)


def spike(v: torch.Tensor, mode: str = "hard") -> torch.Tensor:
    """Spike on ``v = u - theta >= 0``."""
    if mode == "hard":
        return _TriangleSpike.apply(v)
    if mode == "relaxed":
        return relaxed_spike(v)
    raise ValueError(f"unknown spike mode {mode!r}")


@dataclass
class LayerState:
    u: torch.Tensor
    o_prev: torch.Tensor
    a: Optional[torch.Tensor] = None  # ALIF adaptation variable

    @classmethod
    def zeros(cls, batch_shape, n: int, dtype=torch.float32, adaptive: bool = False):
        z = torch.zeros(*batch_shape, n, dtype=dtype)
        return cls(u=z, o_prev=z.clone(), a=z.clone() if adaptive else None)


@dataclass
class GsnLayerParams:
    w_mn: torch.Tensor
    w_nn: torch.Tensor
    b: torch.Tensor
    b_tilde: torch.Tensor
    theta: float = 1.0


@dataclass
class LifLayerParams:
    w_mn: torch.Tensor
    w_nn: torch.Tensor
    b: torch.Tensor
    lam: float = 0.5
    theta: float = 1.0

    def __post_init__(self):
        if not 0.0 < float(self.lam) < 1.0:
            raise NeuronError(f"LIF decay must lie in (0, 1), got {self.lam}")


@dataclass
class PlifLayerParams:
    w_mn: torch.Tensor
    w_nn: torch.Tensor
    b: torch.Tensor
    raw_decay: torch.Tensor  # scalar; decay = sigmoid(raw_decay)
    theta: float = 1.0


@dataclass
class AlifLayerParams:
    w_mn: torch.Tensor
    w_nn: torch.Tensor
    b: torch.Tensor
    lam: float = 0.5
    theta: float = 1.0
    beta: float = 1.8
    rho: float = math.exp(-1.0 / 200.0)


class StepTrace(NamedTuple):
    i: torch.Tensor
    lambda_t: Optional[torch.Tensor]
    u_pre: torch.Tensor
    o: torch.Tensor


def _open_unit(lam: torch.Tensor) -> torch.Tensor:
    """Keep a saturated sigmoid strictly inside (0, 1)."""
    eps = torch.finfo(lam.dtype).eps
    return lam.clamp(eps, 1.0 - eps)


# -- update kernels; ``ff`` is the already-projected feed-forward drive W_mn @ o_in

def _gsn_kernel(p: GsnLayerParams, u, o_prev, ff, mode):
    pre = ff + F.linear(o_prev, p.w_nn)
    i = pre + p.b
    lam = _open_unit(torch.sigmoid(pre + p.b_tilde))
    u = lam * u + (1.0 - lam) * i
    v = u - p.theta
    o = spike(v, mode)
    return u - p.theta * o, o, lam, i, v


def _lif_kernel(p, lam, u, o_prev, ff, mode):
    i = ff + F.linear(o_prev, p.w_nn) + p.b
    u = lam * u + i
    v = u - p.theta
    o = spike(v, mode)
    return u - p.theta * o, o, i, v


def _alif_kernel(p: AlifLayerParams, u, o_prev, a, ff, mode):
    a = p.rho * a + o_prev
    theta_t = p.theta + p.beta * a
    i = ff + F.linear(o_prev, p.w_nn) + p.b
    u = p.lam * u + i
    v = u - theta_t
    o = spike(v, mode)
    return u - theta_t * o, o, a, i, v


def _check(*tensors):
    for t in tensors:
        if not torch.all(torch.isfinite(t)):
            raise NeuronError("non-finite membrane state")


def lif_step(params: LifLayerParams, state: LayerState, o_in, mode: str = "hard"):
    u, o, _, _ = _lif_kernel(params, params.lam, state.u, state.o_prev,
                             F.linear(o_in, params.w_mn), mode)
    _check(u)
    return LayerState(u=u, o_prev=o), o


def gsn_step(params: GsnLayerParams, state: LayerState, o_in, mode: str = "hard"):
    u, o, lam, _, _ = _gsn_kernel(params, state.u, state.o_prev,
                                  F.linear(o_in, params.w_mn), mode)
    _check(u)
    return LayerState(u=u, o_prev=o), o, lam


def plif_step(params: PlifLayerParams, state: LayerState, o_in, mode: str = "hard"):
    lam = torch.sigmoid(params.raw_decay)
    u, o, _, _ = _lif_kernel(params, lam, state.u, state.o_prev,
                             F.linear(o_in, params.w_mn), mode)
    _check(u)
    return LayerState(u=u, o_prev=o), o


def alif_step(params: AlifLayerParams, state: LayerState, o_in, mode: str = "hard"):
    a = state.a if state.a is not None else torch.zeros_like(state.u)
    u, o, a, _, _ = _alif_kernel(params, state.u, state.o_prev, a,
                                 F.linear(o_in, params.w_mn), mode)
    _check(u, a)
    return LayerState(u=u, o_prev=o, a=a), o


def simulate(layer: "SpikingLayer", inputs: torch.Tensor,
             state: Optional[LayerState] = None) -> tuple[StepTrace, LayerState]:
    """Step a layer through (T, ..., n_in) inputs recording i, lambda, u_pre and o."""
    p, mode = layer.params(), layer.spike_mode
    state = state or layer.init_state(inputs.shape[1:-1], inputs.dtype)
    u, o, a = state.u, state.o_prev, state.a
    rec = {"i": [], "lambda_t": [], "u_pre": [], "o": []}
    for x in inputs:
        ff = F.linear(x, p.w_mn)
        if layer.kind == "gsn":
            u, o, lam, i, v = _gsn_kernel(p, u, o, ff, mode)
            rec["lambda_t"].append(lam)
            theta = p.theta
        elif layer.kind == "alif":
            u, o, a, i, v = _alif_kernel(p, u, o, a, ff, mode)
            theta = p.theta + p.beta * a
        else:
            lam = p.lam if layer.kind == "lif" else torch.sigmoid(p.raw_decay)
            u, o, i, v = _lif_kernel(p, lam, u, o, ff, mode)
            theta = p.theta
        _check(u)
        rec["i"].append(i)
        rec["u_pre"].append(v + theta)
        rec["o"].append(o)
    trace = StepTrace(
        i=torch.stack(rec["i"]),
        lambda_t=torch.stack(rec["lambda_t"]) if rec["lambda_t"] else None,
        u_pre=torch.stack(rec["u_pre"]),
        o=torch.stack(rec["o"]),
    )
    return trace, LayerState(u=u, o_prev=o, a=a)


class LayerRun(NamedTuple):
    spikes: torch.Tensor          # (T, ..., n)
    decay: Optional[torch.Tensor]  # (T, ..., n), GSN only
    v: torch.Tensor               # (T, ..., n) pre-reset potential minus threshold
    state: LayerState


class SpikingLayer(nn.Module):
    """One recurrent spiking layer of a selectable neuron kind."""

    def __init__(self, n_in: int, n_out: int, kind: str = "gsn", theta: float = 1.0,
                 lif_decay: float = 0.5, alif_beta: float = 1.8,
                 alif_rho: float = math.exp(-1.0 / 200.0), plif_init: float = 0.0):
        super().__init__()
        if kind not in NEURON_KINDS:
            raise ValueError(f"unknown neuron kind {kind!r}")
        self.kind, self.n_in, self.n_out = kind, n_in, n_out
        self.theta, self.lif_decay = theta, lif_decay
        self.alif_beta, self.alif_rho = alif_beta, alif_rho
        self.spike_mode = "hard"
        bound_in, bound_rec = 1.0 / math.sqrt(n_in), 1.0 / math.sqrt(n_out)
        self.w_mn = nn.Parameter(torch.empty(n_out, n_in).uniform_(-bound_in, bound_in))
        self.w_nn = nn.Parameter(torch.empty(n_out, n_out).uniform_(-bound_rec, bound_rec))
        self.b = nn.Parameter(torch.zeros(n_out))
        if kind == "gsn":
            self.b_tilde = nn.Parameter(torch.zeros(n_out))
        elif kind == "plif":
            self.raw_decay = nn.Parameter(torch.tensor(float(plif_init)))

    def params(self):
        common = dict(w_mn=self.w_mn, w_nn=self.w_nn, b=self.b, theta=self.theta)
        if self.kind == "gsn":
            return GsnLayerParams(b_tilde=self.b_tilde, **common)
        if self.kind == "lif":
            return LifLayerParams(lam=self.lif_decay, **common)
        if self.kind == "plif":
            return PlifLayerParams(raw_decay=self.raw_decay, **common)
        return AlifLayerParams(lam=self.lif_decay, beta=self.alif_beta, rho=self.alif_rho, **common)

    def init_state(self, batch_shape, dtype=None) -> LayerState:
        dtype = dtype or self.w_mn.dtype
        return LayerState.zeros(batch_shape, self.n_out, dtype, adaptive=self.kind == "alif")

    def step(self, x, state: LayerState):
        """Advance one frame; returns (state, spikes, decay-or-None)."""
        p, mode = self.params(), self.spike_mode
        if self.kind == "gsn":
            return gsn_step(p, state, x, mode)
        if self.kind == "lif":
            return (*lif_step(p, state, x, mode), None)
        if self.kind == "plif":
            return (*plif_step(p, state, x, mode), None)
        return (*alif_step(p, state, x, mode), None)

    def forward(self, x_seq: torch.Tensor, state: Optional[LayerState] = None) -> LayerRun:
        """Run a (T, ..., n_in) sequence; the input projection is batched over time."""
        T = x_seq.shape[0]
        if state is None:
            state = self.init_state(x_seq.shape[1:-1], x_seq.dtype)
        p, mode = self.params(), self.spike_mode
        ff = F.linear(x_seq, p.w_mn)
        u, o, a = state.u, state.o_prev, state.a
        if self.kind == "plif":
            lam_c = torch.sigmoid(p.raw_decay)
        spikes, decays, vs = [], [], []
        for t in range(T):
            if self.kind == "gsn":
                u, o, lam, _, v = _gsn_kernel(p, u, o, ff[t], mode)
                decays.append(lam)
            elif self.kind == "alif":
                u, o, a, _, v = _alif_kernel(p, u, o, a, ff[t], mode)
            else:
                lam = p.lam if self.kind == "lif" else lam_c
                u, o, _, v = _lif_kernel(p, lam, u, o, ff[t], mode)
            spikes.append(o)
            vs.append(v)
        return LayerRun(
            spikes=torch.stack(spikes),
            decay=torch.stack(decays) if decays else None,
            v=torch.stack(vs),
            state=LayerState(u=u, o_prev=o, a=a),
        )


class LeakyReadout(nn.Module):
    """Non-spiking leaky integrator: u <- d*u + (1-d)*(W x + b), emits u."""

    def __init__(self, n_in: int, n_out: int, decay_init: float = 0.2):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        bound = 1.0 / math.sqrt(n_in)
        self.w = nn.Parameter(torch.empty(n_out, n_in).uniform_(-bound, bound))
        self.b = nn.Parameter(torch.zeros(n_out))
        self.decay = nn.Parameter(torch.full((n_out,), float(decay_init)))

    def leak(self) -> torch.Tensor:
        return torch.clamp(self.decay, 0.0, 0.99)

    def init_state(self, batch_shape, dtype=None) -> torch.Tensor:
        return torch.zeros(*batch_shape, self.n_out, dtype=dtype or self.w.dtype)

    def step(self, x, u):
        d = self.leak()
        return d * u + (1.0 - d) * F.linear(x, self.w, self.b)

    def forward(self, x_seq: torch.Tensor, u: Optional[torch.Tensor] = None):
        if u is None:
            u = self.init_state(x_seq.shape[1:-1], x_seq.dtype)
        d = self.leak()
        drive = (1.0 - d) * F.linear(x_seq, self.w, self.b)
        out = []
        for t in range(x_seq.shape[0]):
            u = d * u + drive[t]
            out.append(u)
        return torch.stack(out), u
