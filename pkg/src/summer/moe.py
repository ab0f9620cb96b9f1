"""Sparse dynamic mixture of experts over dialogue sequences.

A bank of bidirectional GRU experts encodes the embedded sequence; a gating
network (mean-pooled sequence through one linear map) produces per-expert
weights. Experts whose weight falls outside the band (mean - alpha*std,
mean + alpha*std) are deactivated, and the surviving weights are softmaxed
at temperature tau with Gumbel noise added in train mode so the routing
decision stays differentiable. The module output is the routing-weighted
sum of the active experts' encodings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ContractError, ParameterError
from .layers import Linear


@dataclass
class GateDecision:
    """Routing diagnostics for one forward pass (plain numpy, no grad)."""

    raw_weights: np.ndarray        # gating weights W_g, length n
    mean: float
    std: float
    active_mask: np.ndarray        # booleans, length n
    routing: np.ndarray            # final distribution, zeros at inactive experts


class GRUDirection:
    """One recurrence direction: update/reset gates plus candidate state."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_h: int):
        bound = 1.0 / np.sqrt(d_h)

        def init(*shape):
            return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

        self.w_z, self.u_z, self.b_z = init(d_in, d_h), init(d_h, d_h), init(d_h)
        self.w_r, self.u_r, self.b_r = init(d_in, d_h), init(d_h, d_h), init(d_h)
        self.w_n, self.u_n, self.b_n = init(d_in, d_h), init(d_h, d_h), init(d_h)
        self.d_h = d_h

    def __call__(self, sequence: Tensor) -> Tensor:
        """Run the recurrence over (length, d_in); returns (length, d_h)."""
        length = sequence.shape[0]
        h = Tensor(np.zeros((1, self.d_h)))
        outputs = []
        for t in range(length):
            x = ag.reshape(sequence[t], (1, -1))
            z = ag.sigmoid(x @ self.w_z + h @ self.u_z + self.b_z)
            r = ag.sigmoid(x @ self.w_r + h @ self.u_r + self.b_r)
            n = ag.tanh(x @ self.w_n + (r * h) @ self.u_n + self.b_n)
            h = (Tensor(1.0) - z) * n + z * h
            outputs.append(h)
        return ag.concat(outputs, axis=0)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        names = ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_n", "u_n", "b_n")
        return {f"{prefix}.{name}": getattr(self, name) for name in names}


class BiGRUExpert:
    """Forward + backward GRU, concatenated then projected back to d_out."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_h: int, d_out: int):
        self.forward_dir = GRUDirection(rng, d_in, d_h)
        self.backward_dir = GRUDirection(rng, d_in, d_h)
        self.proj = Linear(rng, 2 * d_h, d_out)

    def __call__(self, sequence: Tensor) -> Tensor:
        fwd = self.forward_dir(sequence)
        bwd = ag.flip(self.backward_dir(ag.flip(sequence, axis=0)), axis=0)
        return self.proj(ag.concat([fwd, bwd], axis=1))

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {
            **self.forward_dir.parameters(f"{prefix}.fwd"),
            **self.backward_dir.parameters(f"{prefix}.bwd"),
            **self.proj.parameters(f"{prefix}.proj"),
        }


def expert_forward(experts: list[BiGRUExpert], sequence: Tensor) -> list[Tensor]:
    """Encode the sequence independently with every expert."""
    if sequence.shape[0] < 1:
        raise ContractError("expert_forward requires a sequence of length >= 1")
    return [expert(sequence) for expert in experts]


def gate_statistics(
    weights: np.ndarray, alpha: float, one_sided: bool = False
) -> tuple[float, float, np.ndarray]:
    """Mean, population std, and the active-expert mask for gating weights.

    Strict band: an expert stays active iff mean - alpha*std < w < mean +
    alpha*std (one-sided mode drops only the upper cut). Degenerate rule:
    zero std or an all-false mask leaves every expert active.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 1 or weights.size < 1:
        raise ParameterError("gating weights must be a nonempty vector")
    if alpha <= 0:
        raise ParameterError("alpha must be > 0")
    mu = float(weights.mean())
    sigma = float(weights.std())
    if sigma == 0.0:
        return mu, sigma, np.ones_like(weights, dtype=bool)
    mask = weights > mu - alpha * sigma
    if not one_sided:
        mask &= weights < mu + alpha * sigma
    if not mask.any():
        mask = np.ones_like(weights, dtype=bool)
    return mu, sigma, mask


def gumbel_noise(uniform_samples: np.ndarray) -> np.ndarray:
    """-log(-log(R)) for R strictly inside (0, 1)."""
    r = np.asarray(uniform_samples, dtype=np.float64)
    if np.any(r <= 0.0) or np.any(r >= 1.0):
        raise ParameterError("uniform samples must lie strictly in (0, 1)")
    return -np.log(-np.log(r))


class SDMoE:
    """Expert bank plus gating network for one modality."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_h: int, n_experts: int,
                 tau: float, alpha: float, one_sided: bool = False):
        if tau <= 0:
            raise ParameterError("tau must be > 0")
        if alpha <= 0:
            raise ParameterError("alpha must be > 0")
        self.experts = [BiGRUExpert(rng, d_in, d_h, d_in) for _ in range(n_experts)]
        # zero init -> uniform routing at the start of training
        self.gate = Linear(rng, d_in, n_experts, zero_init=True)
        self.tau = tau
        self.alpha = alpha
        self.one_sided = one_sided

    @property
    def n_experts(self) -> int:
        return len(self.experts)

    def __call__(self, sequence: Tensor, train: bool,
                 rng: np.random.Generator | None = None) -> tuple[Tensor, GateDecision]:
        return sdmoe_forward(self, sequence, train=train, rng=rng)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        params = self.gate.parameters(f"{prefix}.gate")
        for i, expert in enumerate(self.experts):
            params.update(expert.parameters(f"{prefix}.expert{i}"))
        return params


def sdmoe_forward(
    moe: SDMoE,
    sequence: Tensor,
    train: bool,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, GateDecision]:
    """Route the sequence through the expert bank.

    Train mode draws one Gumbel noise vector from ``rng`` (required); eval
    mode uses zero noise. The active mask is computed from the noiseless
    gating weights; noise enters only the softmax. Returns the weighted
    expert mixture and the gate diagnostics.
    """
    n = moe.n_experts
    pooled = ag.reshape(ag.tmean(sequence, axis=0), (1, -1))
    logits = moe.gate(pooled)                       # (1, n)
    raw = logits.values.reshape(-1).copy()

    mu, sigma, mask = gate_statistics(raw, moe.alpha, moe.one_sided)

    if train:
        if rng is None:
            raise ContractError("train-mode routing requires an rng for Gumbel noise")
        uniforms = rng.random(n) * (1.0 - 2e-12) + 1e-12
        noise = gumbel_noise(uniforms)
    else:
        noise = np.zeros(n)

    active = np.flatnonzero(mask)
    noisy = logits + Tensor(noise.reshape(1, -1))
    routing_active = ag.softmax(noisy[0, active], axis=-1, temperature=moe.tau)

    expert_outputs = expert_forward(moe.experts, sequence)
    mixed = None
    for j, idx in enumerate(active):
        term = routing_active[j] * expert_outputs[idx]
        mixed = term if mixed is None else mixed + term

    routing_full = np.zeros(n)
    routing_full[active] = routing_active.values
    decision = GateDecision(
        raw_weights=raw,
        mean=mu,
        std=sigma,
        active_mask=mask,
        routing=routing_full,
    )
    return mixed, decision
