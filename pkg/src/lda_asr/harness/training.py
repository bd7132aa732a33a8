"""Training loops: multilingual backbone, LDA finetuning, and the per-language full-finetune baseline."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, TrainingError
from ..frontend import AugmentConfig, make_batch, sample_indices
from ..numerics import Adam


def _augment(config):
    if not config.spec_augment:
        return None
    return AugmentConfig(config.n_freq_masks, config.max_freq_len, config.n_time_masks, config.max_time_len)


def evaluation_copy(model, optimizer):
    """Copy of ``model`` whose trained tensors are replaced by their moving averages."""
    out = model.copy()
    for name, arr in optimizer.averaged().items():
        out.params[name].data[...] = arr
    return out


def finetune(model, utterances, trainable, steps, config, seed=0, use_adapters=True, every=None,
             on_checkpoint=None, sampling=None):
    """Train ``trainable`` tensors of ``model`` in place for ``steps`` updates.

    Every ``every`` steps (and at the end) ``on_checkpoint(step, eval_model)``
    receives an evaluation copy built from the averaged weights. Returns
    ``(eval_model, optimizer)``.
    """
    utterances = [u for u in utterances if len(u.transcript)]
    if not utterances:
        raise ContractError("no labeled utterances to train on")
    if steps < 0:
        raise ContractError("steps must be >= 0")
    model.set_trainable(trainable)
    tensors = {name: model.params[name] for name in model.trainable_names}
    opt = Adam(tensors, config.peak_lr, config.warmup_steps, config.beta1, config.beta2,
               config.adam_epsilon, config.ema_decay)
    rng = np.random.default_rng([config.seed, seed])
    augment = _augment(config)
    for step in range(1, steps + 1):
        idx = sample_indices(utterances, config.batch_size, rng, sampling or config.language_sampling)
        batch = make_batch([utterances[i] for i in idx], config.num_languages, stack_factor=config.stack_factor,
                           augment=augment, seed=int(rng.integers(2**31)))
        opt.zero_grad()
        loss = model.loss(batch, use_adapters=use_adapters)
        if not np.isfinite(loss.item()):
            raise TrainingError(f"non-finite loss at step {step}")
        loss.backward()
        opt.step()
        if on_checkpoint is not None and every and step % every == 0 and step != steps:
            on_checkpoint(step, evaluation_copy(model, opt))
    model.set_trainable(())
    final = evaluation_copy(model, opt)
    if on_checkpoint is not None:
        on_checkpoint(steps, final)
    return final, opt


def train_backbone(model, supervised, config, steps=None, seed=1):
    """Multilingual foundation model: every non-adapter tensor trained, adapters bypassed."""
    steps = config.backbone_steps if steps is None else steps
    return finetune(model, supervised, model.backbone_names, steps, config, seed, use_adapters=False,
                    sampling=config.backbone_sampling)


def finetune_lda(backbone_model, supervised, config, steps=None, seed=2, every=None, on_checkpoint=None):
    """Adapter slices only, on mixed-language batches, over a frozen copy of the backbone."""
    steps = config.finetune_steps if steps is None else steps
    model = backbone_model.copy()
    return finetune(model, supervised, model.adapter_names, steps, config, seed, use_adapters=True,
                    every=every, on_checkpoint=on_checkpoint)


def finetune_full(backbone_model, supervised, config, steps=None, seed=3):
    """One fully trainable model per language, each given the same step budget as LDA."""
    steps = config.finetune_steps if steps is None else steps
    models = {}
    for k in range(config.num_languages):
        own = [u for u in supervised if u.language_id == k]
        if not own:
            continue
        model = backbone_model.copy()
        models[k], _ = finetune(model, own, model.backbone_names, steps, config, seed + 10 * k,
                                use_adapters=False)
    return models
