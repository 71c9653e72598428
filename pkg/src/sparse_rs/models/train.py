from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..losses import ce_grad, ce_losses
from .network import LayerSpec, Network, init_params

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss in epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainReport:
    train_accuracy: float
    final_loss: float
    epochs: int


def accuracy(net, images, labels, batch_size: int = 256) -> float:
    correct = 0
    for s in range(0, len(images), batch_size):
        pred = net.logits(images[s:s + batch_size]).argmax(axis=1)
        correct += int((pred == labels[s:s + batch_size]).sum())
    return correct / max(len(images), 1)


def train_toy(dataset, arch, seed: int = 0, epochs: int = 10, lr: float = 0.01,
              batch_size: int = 32, momentum: float = 0.9,
              lr_milestones=()) -> tuple:
    """Minibatch SGD on softmax cross-entropy.

    The shuffling order and initialisation come from ``seed`` alone. The
    learning rate is divided by 10 at each epoch listed in ``lr_milestones``.
    Returns ``(network, TrainReport)``.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    arch = [a if isinstance(a, LayerSpec) else LayerSpec.from_dict(a) for a in arch]
    rng = np.random.default_rng(seed)
    net = Network(dataset.image_shape, arch, init_params(dataset.image_shape, arch, rng))
    if net.num_classes != dataset.class_count:
        raise ValueError(f"architecture outputs {net.num_classes} classes, "
                         f"dataset has {dataset.class_count}")
    velocity = [[np.zeros(a.shape) for a in p] for p in net.params]
    images, labels = dataset.images, dataset.labels

    def dlogits(z, y):
        return ce_losses(z, y), ce_grad(z, y) / len(y)

    loss = float("nan")
    for epoch in range(epochs):
        rate = lr * 0.1 ** sum(epoch >= m for m in lr_milestones)
        order = rng.permutation(len(labels))
        total = 0.0
        for s in range(0, len(order), batch_size):
            idx = order[s:s + batch_size]
            y = labels[idx]
            losses, _, grads = net.backward(images[idx], lambda z, y=y: dlogits(z, y))
            total += float(losses.sum())
            if not np.isfinite(total):
                raise TrainingDiverged(epoch)
            for p, v, g in zip(net.params, velocity, grads):
                for j in range(len(p)):
                    v[j] = momentum * v[j] - rate * g[j]
                    p[j] = (p[j] + v[j]).astype(np.float32)
        loss = total / len(labels)
        log.info("epoch %d loss %.4f", epoch, loss)

    acc = accuracy(net, images, labels)
    log.info("train accuracy %.4f", acc)
    return net, TrainReport(acc, loss, epochs)


def default_arch(input_shape, num_classes: int) -> list:
    """Three strided convolutions, global average pooling and a dense head."""
    c = input_shape[2]
    return [LayerSpec.conv2d(3, c, 16, stride=2, padding=1), LayerSpec.relu(),
            LayerSpec.conv2d(3, 16, 32, stride=2, padding=1), LayerSpec.relu(),
            LayerSpec.conv2d(3, 32, 32, stride=2, padding=1), LayerSpec.relu(),
            LayerSpec.gap(), LayerSpec.dense(32, num_classes)]


def logistic_arch(input_shape, num_classes: int) -> list:
    return [LayerSpec.flatten(), LayerSpec.dense(int(np.prod(input_shape)), num_classes)]
