"""End-to-end training on a synthetic dataset, library API only.

Run with:  python3 demos/train_toy.py

Writes a seeded two-class dataset in the standard binary record layout,
trains a small recalibrated residual network on it, prints the learning
curve, and round-trips the weights through the save format.  Takes
around half a minute on one core.
"""

import os
import tempfile

import numpy as np

from msar import (MsarSettings, NetworkSpec, StageSpec, TrainSettings,
                  build_network, channel_stats, evaluate, load_records,
                  load_weights, normalize, render_curve, save_weights, train,
                  write_synthetic)

workdir = tempfile.mkdtemp(prefix="msar-demo-")
train_path = os.path.join(workdir, "train.bin")
test_path = os.path.join(workdir, "test.bin")

print("== a seeded stand-in dataset in the binary record layout ==")
write_synthetic(train_path, per_class=100, classes=(0, 1), seed=5)
write_synthetic(test_path, per_class=40, classes=(0, 1), seed=6)
images, labels = load_records(train_path, "cifar10")
test_images, test_labels = load_records(test_path, "cifar10")
print(f"train: {len(labels)} records, test: {len(test_labels)} records, "
      f"image shape {images.shape[1:]}")

mean, std = channel_stats(images)          # statistics always from the train split
xs = normalize(images, mean, std)
xt = normalize(test_images, mean, std)

print()
print("== a small recalibrated residual network ==")
spec = NetworkSpec(name="toy-msar", family="residual", input_size=32, classes=2,
                   stem_width=8,
                   stages=(StageSpec(8, 1, 2), StageSpec(16, 1, 2)),
                   msar=MsarSettings(scales=(1, 2), strategy="regional"))
net = build_network(spec, seed=0)
print(f"{spec.name}: {net.parameter_count():,} parameters")

settings = TrainSettings(epochs=6, batch_size=20, lr=0.1, drops=(4,),
                         seed=1, log_timing=False, augment=False)
rows = train(net, xs, labels, xt, test_labels, settings)
print()
print(render_curve(rows))

print("== weights round-trip through the save format ==")
weights_path = os.path.join(workdir, "weights.bin")
save_weights(weights_path, net)
clone = build_network(spec, seed=99)       # different init, then overwritten
load_weights(weights_path, clone)
loss, err = evaluate(clone, xt, test_labels)
print(f"reloaded network on the test split: loss {loss:.6f}, error {err:.3f}")
print(f"identical to the trained network:   loss {rows[-1]['test_loss']:.6f}, "
      f"error {rows[-1]['test_err']:.3f}")
print(f"(scratch files under {workdir})")
