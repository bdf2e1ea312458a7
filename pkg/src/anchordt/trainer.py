"""Alternating adversarial training of the transfer map, plus evaluation.

One iteration draws independent unpaired minibatches, takes the configured
number of discriminator steps, then one combined generator+reconstructor
step on the weighted total loss.  Everything is seeded through a single
SeedSequence so identical configs and data give bit-identical traces.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .nets import (MlpModel, adam_init, adam_step, bind, init_mlp,
                   save_checkpoint)
from .objective import (AnchorSet, GeneratorLossParts, LossWeights, anchor_loss,
                        gan_losses, inv_loss, sparsity_loss, total_generator_loss)
from .sparsity import ProbeSpec, activation_masks
from .stats import energy_distance
from .synthdata import PairedDataset


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; carries the last-good checkpoint paths."""

    def __init__(self, message, checkpoints=None):
        super().__init__(message)
        self.checkpoints = checkpoints or {}


@dataclass
class TrainConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    anchor_count: int = 1
    sparsity_mode: str = "exact-jacobian-l1"
    probe: ProbeSpec = field(default_factory=lambda: ProbeSpec(2, 1, 0.01, 8))
    learning_rate: float = 1e-3
    batch_size: int = 1024
    iterations: int = 7000
    disc_steps_per_gen_step: int = 1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    gen_sizes: tuple[int, ...] = (2, 32, 32, 2)
    disc_sizes: tuple[int, ...] = (2, 64, 64, 1)
    rec_sizes: tuple[int, ...] = (2, 32, 32, 2)
    clamp_eps: float = 1e-7
    r1_weight: float = 0.0
    diag_interval: int = 500
    diag_points: int = 512

    def __post_init__(self):
        if min(self.batch_size, self.disc_steps_per_gen_step) < 1:
            raise ValueError("batch size and disc steps must be positive")
        if self.iterations < 0 or self.anchor_count < 0:
            raise ValueError("iterations and anchor count must be >= 0")


@dataclass
class TrainedModels:
    generator: MlpModel
    discriminator: MlpModel
    reconstructor: MlpModel


@dataclass
class RunReport:
    losses: dict                  # name -> np.ndarray over iterations
    diagnostics: list             # (iteration, energy distance) snapshots
    te_mean: float | None
    te_std: float | None
    wall_time: float
    config: TrainConfig
    checkpoint_path: str | None = None
    aborted_at: int | None = None

    def trace_csv_lines(self) -> list[str]:
        names = list(self.losses)
        lines = ["iteration," + ",".join(names)]
        n = len(self.losses[names[0]]) if names else 0
        for i in range(n):
            vals = ",".join(format(self.losses[k][i], ".17g") for k in names)
            lines.append(f"{i},{vals}")
        return lines

    def diag_csv_lines(self) -> list[str]:
        lines = ["iteration,energy_distance"]
        for it, val in self.diagnostics:
            lines.append(f"{it},{format(val, '.17g')}")
        return lines


def translation_error(generator: MlpModel, test: PairedDataset) -> tuple[float, float]:
    """Per-sample (1/sqrt(D)) ||g(x) - y||_2 over aligned test pairs: (mean, std)."""
    if len(test) == 0:
        raise ValueError("empty test set")
    pred = generator.apply(test.x.T)
    d = test.x.shape[1]
    te = np.linalg.norm(pred - test.y.T, axis=0) / np.sqrt(d)
    return float(te.mean()), float(te.std())


def _init_models(config: TrainConfig):
    seeds = np.random.SeedSequence(config.seed).spawn(5)
    gen = init_mlp(config.gen_sizes, "identity", seeds[0])
    disc = init_mlp(config.disc_sizes, "sigmoid", seeds[1])
    rec = init_mlp(config.rec_sizes, "identity", seeds[2])
    batch_rng = np.random.default_rng(seeds[3])
    probe_rng = np.random.default_rng(seeds[4])
    return gen, disc, rec, batch_rng, probe_rng


def train(config: TrainConfig, train_data: PairedDataset, anchors: AnchorSet,
          test_data: PairedDataset | None = None, out_dir=None):
    """Run the full alternating loop; returns (TrainedModels, RunReport).

    Aborts with TrainingDiverged on a non-finite loss, leaving last-good
    checkpoints in out_dir when one is given.  With zero iterations the
    freshly initialized models are evaluated as-is.
    """
    if config.weights.anchor > 0 and anchors.size < config.anchor_count:
        raise ValueError(f"config expects {config.anchor_count} anchors, got {anchors.size}")
    gen, disc, rec, batch_rng, probe_rng = _init_models(config)
    gen_state = adam_init(gen, config.learning_rate, config.beta1, config.beta2,
                          config.epsilon)
    disc_state = adam_init(disc, config.learning_rate, config.beta1, config.beta2,
                           config.epsilon)
    rec_state = adam_init(rec, config.learning_rate, config.beta1, config.beta2,
                          config.epsilon)
    x_all, y_all = train_data.x, train_data.y
    n = len(train_data)
    w = config.weights
    names = ("disc", "gen", "anchor", "sparsity", "inv", "total")
    trace = {k: np.zeros(config.iterations) for k in names}
    diagnostics = []
    last_good = None
    start = time.perf_counter()

    def snapshot():
        return (gen.copy(), disc.copy(), rec.copy())

    def abort(iteration, reason):
        checkpoints = {}
        if out_dir is not None and last_good is not None:
            os.makedirs(out_dir, exist_ok=True)
            for name, model in zip(("generator", "discriminator", "reconstructor"),
                                   last_good):
                path = os.path.join(out_dir, f"last_good_{name}.ckpt")
                save_checkpoint(model, path)
                checkpoints[name] = path
        raise TrainingDiverged(
            f"non-finite {reason} loss at iteration {iteration}", checkpoints)

    for it in range(config.iterations):
        last_good = snapshot()
        # discriminator step(s), fresh unpaired minibatches each; the fake
        # batch is detached (no gradient path into the generator is needed)
        for _ in range(config.disc_steps_per_gen_step):
            xb = x_all[batch_rng.integers(0, n, config.batch_size)].T
            yb = y_all[batch_rng.integers(0, n, config.batch_size)].T
            gen_b, disc_b = bind(gen, frozen=True), bind(disc)
            disc_loss, _ = gan_losses(gen_b, disc_b, xb, yb, config.clamp_eps,
                                      config.r1_weight, detach_generator=True)
            if not np.isfinite(disc_loss.value[0, 0]):
                abort(it, "discriminator")
            ad.backward(disc_loss)
            adam_step(disc, disc_b.gradients(), disc_state)
        trace["disc"][it] = disc_loss.value[0, 0]

        # one generator + reconstructor step on the combined objective; the
        # discriminator is frozen and g(x) is built once and shared by the
        # adversarial, round-trip, and sparsity terms
        xb = x_all[batch_rng.integers(0, n, config.batch_size)].T
        yb = y_all[batch_rng.integers(0, n, config.batch_size)].T
        gen_b, disc_b, rec_b = bind(gen), bind(disc, frozen=True), bind(rec)
        fake = gen_b(ad.input_node(xb, "x-batch"))
        gen_masks = activation_masks(gen, [p.value for p in gen_b.last_preacts])
        _, gen_part = gan_losses(gen_b, disc_b, xb, yb, config.clamp_eps,
                                 fake=fake)
        parts = GeneratorLossParts(gan=gen_part)
        if w.anchor > 0:
            parts.anchor = anchor_loss(gen_b, anchors)
        if w.sparsity > 0:
            parts.sparsity = sparsity_loss(gen_b, xb, config.probe,
                                           config.sparsity_mode, probe_rng,
                                           masks=gen_masks, fake=fake)
        if w.inv > 0:
            parts.inv = inv_loss(gen_b, rec_b, xb, fake=fake)
        total = total_generator_loss(parts, w)
        if not np.isfinite(total.value[0, 0]):
            abort(it, "generator")
        ad.backward(total)
        adam_step(gen, gen_b.gradients(), gen_state)
        if w.inv > 0:
            adam_step(rec, rec_b.gradients(), rec_state)

        trace["gen"][it] = gen_part.value[0, 0]
        for key, node in (("anchor", parts.anchor), ("sparsity", parts.sparsity),
                          ("inv", parts.inv)):
            trace[key][it] = node.value[0, 0] if node is not None else 0.0
        trace["total"][it] = total.value[0, 0]

        if test_data is not None and config.diag_interval > 0 and (
                it % config.diag_interval == 0 or it == config.iterations - 1):
            k = min(config.diag_points, len(test_data))
            moved = gen.apply(test_data.x[:k].T).T
            diagnostics.append((it, energy_distance(moved, test_data.y[:k])))

    wall = time.perf_counter() - start
    te_mean = te_std = None
    if test_data is not None:
        te_mean, te_std = translation_error(gen, test_data)
    checkpoint_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        checkpoint_path = os.path.join(out_dir, "generator.ckpt")
        save_checkpoint(gen, checkpoint_path)
        save_checkpoint(disc, os.path.join(out_dir, "discriminator.ckpt"))
        save_checkpoint(rec, os.path.join(out_dir, "reconstructor.ckpt"))
    report = RunReport(losses=trace, diagnostics=diagnostics, te_mean=te_mean,
                       te_std=te_std, wall_time=wall, config=config,
                       checkpoint_path=checkpoint_path)
    return TrainedModels(generator=gen, discriminator=disc, reconstructor=rec), report


# ---------------------------------------------------------------------------
# ablation and anchor-sensitivity harnesses
# ---------------------------------------------------------------------------

ABLATION_CASES = ("full", "no-anchor", "no-sparsity", "neither")


def _case_weights(case: str, base: LossWeights) -> LossWeights:
    if case == "full":
        return base
    if case == "no-anchor":
        return replace(base, anchor=0.0)
    if case == "no-sparsity":
        return replace(base, sparsity=0.0)
    if case == "neither":
        return replace(base, anchor=0.0, sparsity=0.0)
    raise ValueError(f"unknown ablation case {case!r}; options: {ABLATION_CASES}")


@dataclass
class AblationRow:
    case: str
    seed: int
    te_mean: float
    te_std: float


@dataclass
class AblationResult:
    rows: list[AblationRow]
    medians: dict

    def csv_lines(self) -> list[str]:
        lines = ["case,seed,te_mean,te_std"]
        for r in self.rows:
            lines.append(f"{r.case},{r.seed},{r.te_mean:.17g},{r.te_std:.17g}")
        return lines

    def summary_csv_lines(self) -> list[str]:
        lines = ["case,median_te"]
        for case, med in self.medians.items():
            lines.append(f"{case},{med:.17g}")
        return lines


def run_ablation(base_config: TrainConfig, train_data: PairedDataset,
                 test_data: PairedDataset, cases=ABLATION_CASES,
                 seeds=(0, 1, 2), models_out: dict | None = None) -> AblationResult:
    """Train every case x seed combination and tabulate test TE.

    Each run re-selects its anchors with the run seed, so seeds vary both
    the networks and the anchor draw.  Pass ``models_out`` (a dict) to keep
    the trained generators, keyed by (case, seed).
    """
    from .synthdata import select_anchors
    rows = []
    for case in cases:
        weights = _case_weights(case, base_config.weights)
        for seed in seeds:
            cfg = replace(base_config, weights=weights, seed=seed)
            anchors = select_anchors(train_data, base_config.anchor_count, seed)
            models, report = train(cfg, train_data, anchors, test_data)
            rows.append(AblationRow(case=case, seed=seed, te_mean=report.te_mean,
                                    te_std=report.te_std))
            if models_out is not None:
                models_out[(case, seed)] = models
    medians = {}
    for case in cases:
        vals = [r.te_mean for r in rows if r.case == case]
        medians[case] = float(np.median(vals))
    return AblationResult(rows=rows, medians=medians)


@dataclass
class AnchorTrialRow:
    trial: int
    anchor_seed: int
    te_mean: float


@dataclass
class AnchorSensitivityResult:
    rows: list[AnchorTrialRow]
    te_mean: float
    te_std: float

    def csv_lines(self) -> list[str]:
        lines = ["trial,anchor_seed,te_mean"]
        for r in self.rows:
            lines.append(f"{r.trial},{r.anchor_seed},{r.te_mean:.17g}")
        return lines


def anchor_sensitivity(base_config: TrainConfig, train_data: PairedDataset,
                       test_data: PairedDataset, trials: int,
                       anchor_seeds=None) -> AnchorSensitivityResult:
    """Re-train with freshly drawn anchors per trial; summarize TE spread.

    Network/batch randomness stays at the base seed so only the anchor draw
    varies.  Identical anchor seeds give identical TE.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    from .synthdata import select_anchors
    if anchor_seeds is None:
        anchor_seeds = [base_config.seed + 1000 * (t + 1) for t in range(trials)]
    if len(anchor_seeds) != trials:
        raise ValueError("anchor_seeds length must equal trials")
    rows = []
    for t, aseed in enumerate(anchor_seeds):
        anchors = select_anchors(train_data, base_config.anchor_count, aseed)
        _, report = train(base_config, train_data, anchors, test_data)
        rows.append(AnchorTrialRow(trial=t, anchor_seed=aseed, te_mean=report.te_mean))
    te = np.array([r.te_mean for r in rows])
    return AnchorSensitivityResult(rows=rows, te_mean=float(te.mean()),
                                   te_std=float(te.std()))
