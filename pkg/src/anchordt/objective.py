"""Loss terms for adversarial transfer-map training and their combination.

All losses are scalar graph nodes built through MlpBindings, so several
terms can share one network's parameter nodes and a single backward pass
accumulates the combined gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .nets import MlpBinding
from .sparsity import ProbeSpec, activation_masks, batched_jvp_graph, draw_probe

DEFAULT_CLAMP_EPS = 1e-7

SPARSITY_MODES = ("exact-jacobian-l1", "masked-fd")


@dataclass
class LossWeights:
    anchor: float = 1.0
    sparsity: float = 0.1
    inv: float = 1.0

    def __post_init__(self):
        if min(self.anchor, self.sparsity, self.inv) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class AnchorSet:
    """Aligned pairs, stored as (D, E) column blocks."""
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=np.float64))
        if self.x.shape[1] != self.y.shape[1]:
            raise ValueError("anchor x and y counts differ")

    @property
    def size(self) -> int:
        return self.x.shape[1]


def _as_batch(batch) -> np.ndarray:
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise ValueError(f"expected a nonempty (D, N) batch, got shape {arr.shape}")
    return arr


def gan_losses(generator: MlpBinding, discriminator: MlpBinding,
               x_batch, y_batch, clamp_eps: float = DEFAULT_CLAMP_EPS,
               r1_weight: float = 0.0, fake: ad.Node | None = None,
               detach_generator: bool = False):
    """Adversarial pair of scalar nodes (discriminator loss, generator loss).

    The discriminator loss is the negated two-term log score
    -[mean log d(y) + mean log(1 - d(g(x)))]; the generator uses the
    non-saturating form -mean log d(g(x)).  Discriminator outputs are
    clamped into (clamp_eps, 1 - clamp_eps) before the logs, purely as a
    numerical guard.

    ``fake`` lets a caller reuse an existing g(x) node so other loss terms
    can share the subgraph; ``detach_generator`` feeds g(x) in as a constant
    (same values, no gradient path to the generator), which is what a
    discriminator-only step wants.

    With r1_weight > 0 the discriminator loss additionally penalizes
    (r1_weight / 2) * mean ||grad_y d(y)||^2 on the real batch, with the
    gradient built from the frozen activation masks (no second-order
    differentiation).  Off by default.
    """
    x_batch = _as_batch(x_batch)
    y_batch = _as_batch(y_batch)
    if fake is None:
        if detach_generator:
            fake = ad.input_node(generator.model.apply(x_batch), "g(x)-detached")
        else:
            fake = generator(ad.input_node(x_batch, "x-batch"))
    d_real = discriminator(ad.input_node(y_batch, "y-batch"))
    d_fake = discriminator(fake)
    lo, hi = clamp_eps, 1.0 - clamp_eps
    log_real = ad.log(ad.clip(d_real, lo, hi))
    ones = ad.input_node(np.ones_like(d_fake.value), "ones")
    log_one_minus_fake = ad.log(ad.clip(ad.subtract(ones, d_fake), lo, hi))
    disc_loss = ad.scale(ad.add(ad.mean(log_real), ad.mean(log_one_minus_fake)), -1.0)
    gen_loss = ad.scale(ad.mean(ad.log(ad.clip(d_fake, lo, hi))), -1.0)
    if r1_weight > 0.0:
        penalty = _grad_norm_penalty(discriminator, y_batch)
        disc_loss = ad.add(disc_loss, ad.scale(penalty, 0.5 * r1_weight))
    return disc_loss, gen_loss


def _grad_norm_penalty(discriminator: MlpBinding, y_batch: np.ndarray) -> ad.Node:
    """mean over the batch of ||grad_y d(y)||^2 for a scalar-output net."""
    d = y_batch.shape[0]
    n = y_batch.shape[1]
    total = None
    for k in range(d):
        direction = np.zeros_like(y_batch)
        direction[k, :] = 1.0
        jvp = batched_jvp_graph(discriminator, y_batch, direction)  # (1, N)
        term = ad.node_sum(ad.square(jvp))
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, 1.0 / n)


def anchor_loss(generator: MlpBinding, anchors: AnchorSet) -> ad.Node:
    """Mean squared residual over the aligned pairs: mean_l ||g(x_l) - y_l||_2^2."""
    if anchors.size == 0:
        raise ValueError("anchor loss needs at least one aligned pair")
    pred = generator(ad.input_node(anchors.x, "anchor-x"))
    diff = ad.subtract(pred, ad.input_node(anchors.y, "anchor-y"))
    return ad.scale(ad.node_sum(ad.square(diff)), 1.0 / anchors.size)


def inv_loss(generator: MlpBinding, reconstructor: MlpBinding, x_batch,
             fake: ad.Node | None = None) -> ad.Node:
    """Round-trip penalty mean ||f(g(x)) - x||_1; grads reach both networks.

    ``fake`` reuses an existing g(x) node for the same x_batch.
    """
    x_batch = _as_batch(x_batch)
    if reconstructor.model.input_dim != generator.model.output_dim:
        raise ValueError("reconstructor input dim must match generator output dim")
    x_node = ad.input_node(x_batch, "x-batch")
    if fake is None:
        fake = generator(x_node)
    roundtrip = reconstructor(fake)
    return ad.scale(ad.abs_sum(ad.subtract(roundtrip, x_node)), 1.0 / x_batch.shape[1])


def sparsity_loss(generator: MlpBinding, x_batch, spec: ProbeSpec, mode: str,
                  rng: np.random.Generator | None = None, masks=None,
                  fake: ad.Node | None = None) -> ad.Node:
    """Jacobian-sparsity penalty over the batch, in one of two modes.

    exact-jacobian-l1: batch mean of ||J(x)||_1, assembled from the
    per-layer linearizations with frozen activation masks.  All D basis
    directions are propagated in a single tiled sweep (columns k*N..k*N+N
    carry direction e_k), so the cost is one widened forward pass, not D
    per-sample graphs.  ``masks`` can pass in precomputed activation masks
    for x_batch.

    masked-fd: batch mean of ||(g(x + delta*z) - g(x)) / delta||_1 with a
    fresh sparse Gaussian probe per sample, averaged over
    spec.probes_per_sample rounds.  Needs ``rng``; ``fake`` reuses an
    existing g(x_batch) node as the unperturbed side.
    """
    x_batch = _as_batch(x_batch)
    d, n = x_batch.shape
    if mode == "exact-jacobian-l1":
        if masks is None:
            masks = activation_masks(generator.model,
                                     generator.model.preactivations(x_batch))
        tiled_masks = [np.tile(m, (1, d)) for m in masks]
        directions = np.zeros((d, d * n))
        for k in range(d):
            directions[k, k * n:(k + 1) * n] = 1.0
        jvp = batched_jvp_graph(generator, None, directions, masks=tiled_masks)
        return ad.scale(ad.abs_sum(jvp), 1.0 / n)
    if mode == "masked-fd":
        if rng is None:
            raise ValueError("masked-fd mode needs an rng")
        delta = spec.perturbation_scale
        base = fake if fake is not None else generator(
            ad.input_node(x_batch, "x-batch"))
        total = None
        for _ in range(spec.probes_per_sample):
            z = np.empty_like(x_batch)
            for col in range(n):
                z[:, col] = draw_probe(spec, rng).probe
            pert = generator(ad.input_node(x_batch + delta * z, "x-perturbed"))
            term = ad.abs_sum(ad.subtract(pert, base))
            total = term if total is None else ad.add(total, term)
        return ad.scale(total, 1.0 / (delta * n * spec.probes_per_sample))
    raise ValueError(f"unknown sparsity mode {mode!r}; options: {SPARSITY_MODES}")


@dataclass
class GeneratorLossParts:
    gan: ad.Node
    anchor: ad.Node | None = None
    sparsity: ad.Node | None = None
    inv: ad.Node | None = None


def total_generator_loss(parts: GeneratorLossParts, weights: LossWeights) -> ad.Node:
    """gan + anchor_w * anchor + sparsity_w * sparsity + inv_w * inv.

    Zero-weight terms may be omitted from ``parts``; a positive weight with
    a missing part is an error.
    """
    total = parts.gan
    for name, weight in (("anchor", weights.anchor),
                         ("sparsity", weights.sparsity),
                         ("inv", weights.inv)):
        part = getattr(parts, name)
        if weight == 0.0:
            continue
        if part is None:
            raise ValueError(f"{name} weight is {weight} but no {name} term was built")
        total = ad.add(total, ad.scale(part, weight))
    return total
