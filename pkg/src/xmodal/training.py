"""Loss calculus, the cyclic two-CGAN training loop, and translation inference.

Both adversarial objectives use the least-squares form (target score 1 for
real, 0 for translated images); cycle and identity penalties default to L1
with an L2 option. The combined generator objective is
gamma * (adv_fwd + adv_back) + cycle + identity.

One step runs, in order: conditioning construction, the dictionary
restoration branch, forward and back translation, both discriminator
updates, then a joint update of both generators. Discriminators are frozen
during the generator update (and vice versa) by optimizer ownership.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .conditioning import (ConditioningSpec, ConditioningTensor,
                           build_scenario_conditioning, conditioning_to_sequence)
from .dictionary import (DiLConfig, init_dictionary, infer_residue,
                         residue_channel_count, select_residue_channels,
                         sparse_code, update_dictionary)
from .imaging import Image
from .networks import (DiscriminatorSpec, Generator, GeneratorSpec,
                       build_discriminator, build_generator)

CT2MRI = "ct2mri"
MRI2CT = "mri2ct"


class TrainingError(ValueError):
    """Invalid training configuration or inputs."""


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; carries the last good checkpoint if any."""

    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


@dataclass(frozen=True)
class LossWeights:
    """gamma weights the two adversarial terms against cycle + identity."""

    gamma: float = 1.5

    def __post_init__(self):
        if not self.gamma > 0:
            raise TrainingError("gamma must be positive")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    epochs: int = 1
    batch_size: int = 4
    conditioning: ConditioningSpec = field(default_factory=ConditioningSpec)
    dil: DiLConfig = field(default_factory=DiLConfig)
    width_scale: float = 0.25
    seed: int = 0
    gamma: float = 1.5
    cycle_norm: str = "l1"
    checkpoint_every: int = 0  # epochs between checkpoints; 0 = final only
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise TrainingError("learning_rate must be nonnegative")
        if self.epochs < 1:
            raise TrainingError("epochs must be >= 1")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")
        if self.cycle_norm not in ("l1", "l2"):
            raise TrainingError(f"cycle_norm must be l1 or l2, got {self.cycle_norm!r}")
        if (self.conditioning.kind == "patch_mosaic" and self.dil.enabled
                and self.dil.patch_size != self.conditioning.patch_size):
            raise TrainingError(
                "DiL patch size must match the patch-mosaic conditioning size")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.gamma)

    @property
    def dil_active(self) -> bool:
        # the restoration branch consumes conditioning patches, so it is a
        # structural no-op for the unconditional scenario
        return self.dil.enabled and self.conditioning.channels == 2


@dataclass(frozen=True)
class StepStats:
    step: int
    l_cgan1: float
    l_cgan2: float
    l_cyc: float
    l_id: float
    l_total: float
    d_fwd: float
    d_back: float


@dataclass(frozen=True)
class EpochStats:
    """Per-epoch means of every loss component.

    The recomposition identity l_total == gamma * (l_cgan1 + l_cgan2)
    + l_cyc + l_id carries over from the per-step records by linearity.
    """

    epoch: int
    l_cgan1: float
    l_cgan2: float
    l_cyc: float
    l_id: float
    l_total: float
    d_fwd: float
    d_back: float

    COLUMNS = ("epoch", "l_cgan1", "l_cgan2", "l_cyc", "l_id",
               "l_total", "d_fwd", "d_back")

    def tsv_row(self) -> str:
        return "\t".join([str(self.epoch)] + [
            f"{getattr(self, c):.10g}" for c in self.COLUMNS[1:]])


# ---------------------------------------------------------------------------
# Loss terms (Eq. 2-6 calculus in least-squares form).
# ---------------------------------------------------------------------------

def _check_finite(name, *tensors):
    for t in tensors:
        if not torch.isfinite(t).all():
            raise TrainingDiverged(f"non-finite values entering {name}")


def adversarial_loss_forward(real_scores, fake_scores):
    """Least-squares adversarial terms for the forward CGAN.

    real_scores are the target-modality discriminator's outputs on real
    target images, fake_scores its outputs on translated images. Returns
    (generator term, discriminator term); batch means realize the
    expectations.
    """
    _check_finite("adversarial_loss_forward", real_scores, fake_scores)
    gen = ((fake_scores - 1.0) ** 2).mean()
    disc = ((real_scores - 1.0) ** 2).mean() + (fake_scores ** 2).mean()
    return gen, disc


def adversarial_loss_backward(real_scores, fake_scores):
    """Same least-squares structure for the back-translating CGAN, with
    real = input-modality images and fake = back-translated images."""
    _check_finite("adversarial_loss_backward", real_scores, fake_scores)
    gen = ((fake_scores - 1.0) ** 2).mean()
    disc = ((real_scores - 1.0) ** 2).mean() + (fake_scores ** 2).mean()
    return gen, disc


def _deviation(a, b, norm):
    diff = a - b
    return diff.abs().mean() if norm == "l1" else (diff * diff).mean()


def cyclic_loss(x, cycled_x, y, cycled_y, norm="l1"):
    """Forward plus backward cycle-consistency penalty."""
    if x.shape != cycled_x.shape or y.shape != cycled_y.shape:
        raise TrainingError("cycle pairs must be shape-matched")
    return _deviation(cycled_x, x, norm) + _deviation(cycled_y, y, norm)


def identity_loss(mapped_target, target, mapped_input, input_img, norm="l1"):
    """Penalty for altering an image already in the generator's own modality."""
    if mapped_target.shape != target.shape or mapped_input.shape != input_img.shape:
        raise TrainingError("identity pairs must be shape-matched")
    return _deviation(mapped_target, target, norm) + _deviation(mapped_input, input_img, norm)


def total_loss(l_cgan1, l_cgan2, l_cyc, l_id, weights: LossWeights):
    """gamma * (adversarial terms) + cycle + identity."""
    for name, value in (("l_cgan1", l_cgan1), ("l_cgan2", l_cgan2),
                        ("l_cyc", l_cyc), ("l_id", l_id)):
        if torch.is_tensor(value):
            _check_finite(name, value)
        elif not math.isfinite(float(value)):
            raise TrainingDiverged(f"non-finite component {name}")
    return weights.gamma * (l_cgan1 + l_cgan2) + l_cyc + l_id


# ---------------------------------------------------------------------------
# Optimizer: plain Adam over named tensors, fully serializable.
# ---------------------------------------------------------------------------

class Adam:
    """Adaptive-moment gradient descent with bias correction.

    Owns a fixed set of named parameters; moment tensors are exposed for
    checkpointing. learning_rate 0 is an exact null step.
    """

    def __init__(self, named_params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: torch.zeros_like(p) for n, p in self.params.items()}
        self.v = {n: torch.zeros_like(p) for n, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            if p.grad is not None:
                p.grad.detach_()
                p.grad.zero_()

    @torch.no_grad()
    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m.mul_(self.beta1).add_(g, alpha=1.0 - self.beta1)
            v.mul_(self.beta2).addcmul_(g, g, value=1.0 - self.beta2)
            p.addcdiv_(m / bc1, (v / bc2).sqrt().add_(self.eps), value=-self.lr)


# ---------------------------------------------------------------------------
# Training state.
# ---------------------------------------------------------------------------

class TrainState:
    """Every mutable artifact of a run: networks, optimizers, dictionaries,
    RNGs, and counters. Owned by a single training controller."""

    def __init__(self, config: TrainConfig, g_fwd: Generator, g_back: Generator,
                 d_fwd, d_back, opt_g: Adam, opt_d_fwd: Adam, opt_d_back: Adam,
                 dict_fwd, dict_back, data_rng: np.random.Generator):
        self.config = config
        self.g_fwd = g_fwd
        self.g_back = g_back
        self.d_fwd = d_fwd
        self.d_back = d_back
        self.opt_g = opt_g
        self.opt_d_fwd = opt_d_fwd
        self.opt_d_back = opt_d_back
        self.dict_fwd = dict_fwd
        self.dict_back = dict_back
        self.data_rng = data_rng
        self.epoch = 0
        self.step = 0
        self.last_checkpoint = None

    def generators_train(self):
        for net in (self.g_fwd, self.g_back, self.d_fwd, self.d_back):
            net.train()

    def networks_eval(self):
        for net in (self.g_fwd, self.g_back, self.d_fwd, self.d_back):
            net.eval()


def injection_channel_map(config: TrainConfig) -> dict:
    cond_ch = config.conditioning.channels
    res_ch = residue_channel_count(config.dil) if config.dil_active else 0
    gen_spec = GeneratorSpec(width_scale=config.width_scale)
    return {lay: cond_ch + (res_ch if lay == 15 else 0)
            for lay in gen_spec.injection_layers}


def init_train_state(config: TrainConfig) -> TrainState:
    """Build fresh networks, optimizers, and dictionaries from a seed."""
    torch.manual_seed(config.seed)
    gen_spec = GeneratorSpec(width_scale=config.width_scale)
    disc_spec = DiscriminatorSpec(width_scale=config.width_scale)
    injections = injection_channel_map(config)
    g_fwd = build_generator(gen_spec, injections)
    g_back = build_generator(gen_spec, injections)
    d_fwd = build_discriminator(disc_spec)
    d_back = build_discriminator(disc_spec)
    lr, b1, b2 = config.learning_rate, config.beta1, config.beta2
    gen_params = {f"g_fwd.{n}": p for n, p in g_fwd.named_parameters()}
    gen_params.update({f"g_back.{n}": p for n, p in g_back.named_parameters()})
    opt_g = Adam(gen_params, lr, b1, b2)
    opt_d_fwd = Adam({f"d_fwd.{n}": p for n, p in d_fwd.named_parameters()}, lr, b1, b2)
    opt_d_back = Adam({f"d_back.{n}": p for n, p in d_back.named_parameters()}, lr, b1, b2)
    if config.dil_active:
        d = config.dil.atom_dim
        dict_fwd = init_dictionary(d, config.dil.resolved_num_atoms)
        dict_back = init_dictionary(d, config.dil.resolved_num_atoms)
    else:
        dict_fwd = dict_back = None
    return TrainState(config, g_fwd, g_back, d_fwd, d_back,
                      opt_g, opt_d_fwd, opt_d_back,
                      dict_fwd, dict_back, np.random.default_rng(config.seed))


# ---------------------------------------------------------------------------
# Conditioning assembly for the six generator passes of one step.
# ---------------------------------------------------------------------------

def derive_seed(base: int, step: int, role: int, sample: int) -> int:
    """Stable per-(step, pass, sample) seed for scenario randomness."""
    return ((base * 2654435761 + step * 40503 + role * 997 + sample)
            & 0x7FFFFFFF)


def images_to_batch(images) -> torch.Tensor:
    """Stack [0,1] images into a signed (B,1,H,W) float32 tensor."""
    arrs = [img.to_signed().data for img in images]
    return torch.from_numpy(np.stack(arrs)[:, None, :, :].astype(np.float32))


def batch_to_images(batch: torch.Tensor):
    """Signed network outputs back to [0,1] Images."""
    arr = batch.detach().cpu().numpy()
    out = []
    for i in range(arr.shape[0]):
        unit = np.clip((arr[i, 0].astype(np.float64) + 1.0) / 2.0, 0.0, 1.0)
        out.append(Image(unit))
    return out


def _signed_cond(cond: ConditioningTensor) -> ConditioningTensor:
    return ConditioningTensor(cond.data * 2.0 - 1.0, cond.provenance)


def _single_image_spec(spec: ConditioningSpec, seed: int) -> ConditioningSpec:
    # cycle/identity legs condition on one specific exemplar image
    return replace(spec, pool_k=1, seed=seed)


class _PassConditioning:
    """Signed conditioning + residue tensors for one generator pass."""

    def __init__(self, cond_t, res_t):
        self.cond_t = cond_t  # torch (B,C,H,W) or None
        self.res_t = res_t    # torch (B,R,H,W) or None

    def injections(self, injection_layers=(3, 15, 25), residue_layer=15):
        if self.cond_t is None:
            return {}
        out = {}
        for lay in injection_layers:
            if lay == residue_layer and self.res_t is not None:
                out[lay] = torch.cat([self.cond_t, self.res_t], dim=1)
            else:
                out[lay] = self.cond_t
        return out


def _build_pass(config: TrainConfig, inputs, pools, seeds, dictionary,
                evolve_dict: bool):
    """Conditioning (and residue) for one batch pass.

    inputs: list of [0,1] Images entering the generator. pools: per-sample
    exemplar pools. Returns (_PassConditioning, evolved dictionary).
    """
    spec = config.conditioning
    if spec.channels == 0:
        return _PassConditioning(None, None), dictionary
    conds = []
    for img, pool, seed in zip(inputs, pools, seeds):
        eff = spec.with_seed(seed)
        if len(pool) < eff.pool_k:
            eff = replace(eff, pool_k=len(pool))
        conds.append(build_scenario_conditioning(eff, img, pool))
    signed = [_signed_cond(c) for c in conds]
    cond_t = torch.from_numpy(
        np.stack([c.data for c in signed]).astype(np.float32))
    res_t = None
    if config.dil_active:
        seqs = [conditioning_to_sequence(c, config.dil.patch_size) for c in signed]
        if evolve_dict:
            vecs = np.concatenate(
                [s.entries.reshape(s.entries.shape[0], -1) for s in seqs])
            codes = sparse_code(dictionary, vecs, config.dil.sparsity)
            for round_idx in range(config.dil.dict_update_iters):
                dictionary, codes = update_dictionary(dictionary, vecs, codes)
                if round_idx + 1 < config.dil.dict_update_iters:
                    codes = sparse_code(dictionary, vecs, config.dil.sparsity)
        stacks = [select_residue_channels(
            infer_residue(s, config.dil, dictionary), config.dil) for s in seqs]
        res_t = torch.from_numpy(np.stack(stacks).astype(np.float32))
    return _PassConditioning(cond_t, res_t), dictionary


# ---------------------------------------------------------------------------
# One optimization step and the epoch loop.
# ---------------------------------------------------------------------------

def train_step(state: TrainState, ct_batch, mri_batch, ct_pool, mri_pool) -> StepStats:
    """One unpaired step: D updates then a joint G update, per the loss order.

    ct_batch/mri_batch are lists of [0,1] Images drawn without pairing;
    the pools supply scenario exemplars.
    """
    cfg = state.config
    weights = cfg.weights
    state.generators_train()
    step = state.step
    base = cfg.seed

    x = images_to_batch(ct_batch)
    y = images_to_batch(mri_batch)
    n = len(ct_batch)

    # (1)-(2) conditioning + dictionary branch for the two primary passes
    fwd_seeds = [derive_seed(base, step, 0, i) for i in range(n)]
    back_seeds = [derive_seed(base, step, 1, i) for i in range(n)]
    cond_fwd, state.dict_fwd = _build_pass(
        cfg, ct_batch, [mri_pool] * n, fwd_seeds, state.dict_fwd, evolve_dict=True)
    cond_back, state.dict_back = _build_pass(
        cfg, mri_batch, [ct_pool] * n, back_seeds, state.dict_back, evolve_dict=True)

    # (3) forward and back translation
    fake_y = state.g_fwd(x, cond_fwd.injections())
    fake_x = state.g_back(y, cond_back.injections())

    fake_y_imgs = batch_to_images(fake_y)
    fake_x_imgs = batch_to_images(fake_x)

    # cycle legs: conditioning pairs the synthesized image with the original
    cyc_back_seeds = [derive_seed(base, step, 2, i) for i in range(n)]
    cyc_fwd_seeds = [derive_seed(base, step, 3, i) for i in range(n)]
    cond_cyc_back, _ = _build_pass(
        cfg, fake_y_imgs, [[img] for img in ct_batch], cyc_back_seeds,
        state.dict_back, evolve_dict=False)
    cond_cyc_fwd, _ = _build_pass(
        cfg, fake_x_imgs, [[img] for img in mri_batch], cyc_fwd_seeds,
        state.dict_fwd, evolve_dict=False)
    rec_x = state.g_back(fake_y, cond_cyc_back.injections())
    rec_y = state.g_fwd(fake_x, cond_cyc_fwd.injections())

    # identity legs: the input already is the target modality
    id_fwd_seeds = [derive_seed(base, step, 4, i) for i in range(n)]
    id_back_seeds = [derive_seed(base, step, 5, i) for i in range(n)]
    cond_id_fwd, _ = _build_pass(
        cfg, mri_batch, [[img] for img in mri_batch], id_fwd_seeds,
        state.dict_fwd, evolve_dict=False)
    cond_id_back, _ = _build_pass(
        cfg, ct_batch, [[img] for img in ct_batch], id_back_seeds,
        state.dict_back, evolve_dict=False)
    id_y = state.g_fwd(y, cond_id_fwd.injections())
    id_x = state.g_back(x, cond_id_back.injections())

    # (4) discriminator updates on detached translations
    real_y_scores = state.d_fwd(y)
    fake_y_scores = state.d_fwd(fake_y.detach())
    _, d_fwd_loss = adversarial_loss_forward(real_y_scores, fake_y_scores)
    state.opt_d_fwd.zero_grad()
    d_fwd_loss.backward()
    state.opt_d_fwd.step()

    real_x_scores = state.d_back(x)
    fake_x_scores = state.d_back(fake_x.detach())
    _, d_back_loss = adversarial_loss_backward(real_x_scores, fake_x_scores)
    state.opt_d_back.zero_grad()
    d_back_loss.backward()
    state.opt_d_back.step()

    # (5) joint generator update against the refreshed discriminators
    l_cgan1, _ = adversarial_loss_forward(real_y_scores.detach(), state.d_fwd(fake_y))
    l_cgan2, _ = adversarial_loss_backward(real_x_scores.detach(), state.d_back(fake_x))
    l_cyc = cyclic_loss(x, rec_x, y, rec_y, cfg.cycle_norm)
    l_id = identity_loss(id_y, y, id_x, x, cfg.cycle_norm)
    g_loss = total_loss(l_cgan1, l_cgan2, l_cyc, l_id, weights)
    state.opt_g.zero_grad()
    g_loss.backward()
    state.opt_g.step()

    # (6) bookkeeping
    c1, c2 = float(l_cgan1.item()), float(l_cgan2.item())
    cy, li = float(l_cyc.item()), float(l_id.item())
    stats = StepStats(
        step=step, l_cgan1=c1, l_cgan2=c2, l_cyc=cy, l_id=li,
        l_total=weights.gamma * (c1 + c2) + cy + li,
        d_fwd=float(d_fwd_loss.item()), d_back=float(d_back_loss.item()))
    if not all(math.isfinite(v) for v in
               (stats.l_total, stats.d_fwd, stats.d_back)):
        raise TrainingDiverged(
            f"non-finite loss at step {step}", state.last_checkpoint)
    state.step += 1
    return stats


def _epoch_mean(epoch: int, steps) -> EpochStats:
    def mean(attr):
        return float(np.mean([getattr(s, attr) for s in steps]))
    return EpochStats(epoch=epoch, l_cgan1=mean("l_cgan1"), l_cgan2=mean("l_cgan2"),
                      l_cyc=mean("l_cyc"), l_id=mean("l_id"), l_total=mean("l_total"),
                      d_fwd=mean("d_fwd"), d_back=mean("d_back"))


def train(config: TrainConfig, dataset_root: str, out_dir: str,
          state: TrainState | None = None, log=None):
    """Run the full loop over an unpaired dataset directory.

    Writes stats.tsv (one row per epoch) and periodic checkpoints under
    out_dir; returns (final checkpoint path, list of EpochStats). Passing an
    existing state resumes it and extends the stats log.
    """
    from .checkpoint import save_checkpoint
    from .imaging import UnpairedDataset

    ds = UnpairedDataset(dataset_root)
    ct_pool, mri_pool = ds.load_all()
    if state is None:
        state = init_train_state(config)
    else:
        config = state.config
    batch = config.batch_size
    steps_per_epoch = min(len(ct_pool), len(mri_pool)) // batch
    if steps_per_epoch < 1:
        raise TrainingError(
            f"batch size {batch} exceeds the smaller pool "
            f"({min(len(ct_pool), len(mri_pool))} images)")
    os.makedirs(out_dir, exist_ok=True)
    stats_path = os.path.join(out_dir, "stats.tsv")
    mode = "a" if state.epoch > 0 and os.path.exists(stats_path) else "w"
    all_stats = []
    with open(stats_path, mode) as fh:
        if mode == "w":
            fh.write("\t".join(EpochStats.COLUMNS) + "\n")
        while state.epoch < config.epochs:
            perm_ct = state.data_rng.permutation(len(ct_pool))
            perm_mri = state.data_rng.permutation(len(mri_pool))
            step_stats = []
            for b in range(steps_per_epoch):
                ct_batch = [ct_pool[i] for i in perm_ct[b * batch:(b + 1) * batch]]
                mri_batch = [mri_pool[i] for i in perm_mri[b * batch:(b + 1) * batch]]
                step_stats.append(train_step(state, ct_batch, mri_batch,
                                             ct_pool, mri_pool))
            state.epoch += 1
            epoch_stats = _epoch_mean(state.epoch, step_stats)
            all_stats.append(epoch_stats)
            fh.write(epoch_stats.tsv_row() + "\n")
            fh.flush()
            if log is not None:
                log(epoch_stats)
            if (config.checkpoint_every > 0
                    and state.epoch % config.checkpoint_every == 0
                    and state.epoch < config.epochs):
                path = os.path.join(out_dir, f"epoch_{state.epoch:05d}.ckpt")
                save_checkpoint(path, state)
                state.last_checkpoint = path
    final_path = os.path.join(out_dir, "final.ckpt")
    save_checkpoint(final_path, state)
    state.last_checkpoint = final_path
    return final_path, all_stats


# ---------------------------------------------------------------------------
# Inference.
# ---------------------------------------------------------------------------

def _normalize_pool(cond_source):
    if cond_source is None:
        return []
    if isinstance(cond_source, Image):
        return [cond_source]
    return list(cond_source)


def _inference_pass(state: TrainState, generator: Generator, img: Image,
                    pool, dictionary, seed: int) -> Image:
    cfg = state.config
    spec = cfg.conditioning
    if spec.channels > 0:
        if not pool:
            raise TrainingError(
                f"the {spec.kind} scenario needs target-side conditioning material")
        eff = spec.with_seed(seed)
        if len(pool) < eff.pool_k:
            eff = replace(eff, pool_k=len(pool))
        cond = _signed_cond(build_scenario_conditioning(eff, img, pool))
        cond_t = torch.from_numpy(cond.data[None].astype(np.float32))
        res_t = None
        if cfg.dil_active:
            seq = conditioning_to_sequence(cond, cfg.dil.patch_size)
            stack = select_residue_channels(
                infer_residue(seq, cfg.dil, dictionary), cfg.dil)
            res_t = torch.from_numpy(stack[None].astype(np.float32))
        passes = _PassConditioning(cond_t, res_t)
    else:
        passes = _PassConditioning(None, None)
    x = images_to_batch([img])
    with torch.no_grad():
        out = generator(x, passes.injections())
    return batch_to_images(out)[0]


def translate(state: TrainState, img: Image, direction: str, cond_source) -> Image:
    """Single-generator translation; deterministic (eval mode, frozen state)."""
    if direction not in (CT2MRI, MRI2CT):
        raise TrainingError(f"direction must be {CT2MRI} or {MRI2CT}")
    state.networks_eval()
    pool = _normalize_pool(cond_source)
    if direction == CT2MRI:
        return _inference_pass(state, state.g_fwd, img, pool, state.dict_fwd,
                               state.config.conditioning.seed)
    return _inference_pass(state, state.g_back, img, pool, state.dict_back,
                           state.config.conditioning.seed)


def cycle_translate(state: TrainState, img: Image, direction: str, cond_source):
    """Both hops: returns (synthesized target, back-translated input).

    The back hop is conditioned on the synthesized image paired with the
    original input as its exemplar.
    """
    syn = translate(state, img, direction, cond_source)
    state.networks_eval()
    back_dir_dict = state.dict_back if direction == CT2MRI else state.dict_fwd
    back_gen = state.g_back if direction == CT2MRI else state.g_fwd
    back = _inference_pass(state, back_gen, syn, [img], back_dir_dict,
                           state.config.conditioning.seed + 1)
    return syn, back
