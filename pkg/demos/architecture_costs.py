"""Analytic parameter and FLOP accounting for the architecture zoo.

Run with:  python3 demos/architecture_costs.py

The cost model walks a NetworkSpec without building any weights, so the
tables below appear instantly even for the large-image networks.  For
every buildable spec the analytic parameter total equals the built
network's parameter_count() exactly.
"""

from msar import (MsarSettings, build_network, densenet_cifar, report,
                  resnet_cifar, resnet_ilsvrc, resnext50_ilsvrc)

MSAR = MsarSettings(scales=(1, 2, 4), strategy="regional")

print("== small-image networks, plain and recalibrated ==")
print(f"{'network':<18} {'params':>12} {'flops':>16} {'extra params':>13} {'extra flops':>12}")
for make, args in [(resnet_cifar, (20,)), (resnet_cifar, (32,)),
                   (resnet_cifar, (56,)), (densenet_cifar, (100, 12))]:
    base = report(make(*args))
    gated = report(make(*args, msar=MSAR))
    print(f"{base.network:<18} {base.total_params:>12,} {base.total_flops:>16,} "
          f"{float(gated.param_overhead()):>12.2%} {float(gated.flop_overhead()):>11.3%}")

print()
print("recalibration at every block costs under 1% extra compute on the")
print("residual stacks and under 2% on the dense network; the parameter")
print("overhead sits near 4% for residual stacks and near 23% for the")
print("dense network, whose blocks are far smaller to begin with")

print()
print("== large-image networks ==")
for spec in [resnet_ilsvrc(18), resnet_ilsvrc(34), resnext50_ilsvrc()]:
    rep = report(spec)
    print(f"{rep.network:<18} {rep.total_params:>12,} {rep.total_flops:>16,}")
print("the grouped-convolution network exists for cost analysis only;")
print("build_network rejects it")

print()
print("== the analytic count matches the built network ==")
spec = resnet_cifar(20, msar=MSAR)
rep = report(spec)
net = build_network(spec, seed=0)
print(f"{spec.name}: analytic {rep.total_params:,} vs built {net.parameter_count():,}")

print()
print("== per-layer detail (first rows of the resnet20 table) ==")
for row in rep.rows[:6]:
    print(f"  {row.name:<24} params {row.params:>8,}  flops {row.flops:>12,}")
print(f"  ... {len(rep.rows) - 6} more rows; see the analyze command for full tables")
