"""Step I alone: fit the unmixing autoencoder to one scene and compare with the generator's truth."""
import time

import numpy as np

from unmixingsr.hsi import block_average, degrade, synth_scene
from unmixingsr.metrics import match_endmembers
from unmixingsr.trainer import TrainConfig, train_step_one

abundances, endmembers, cube = synth_scene(3, 32, 32, 16, seed=7)

# Whole-image patches, 30 epochs of 50 Adam steps, halving the rate every 40 epochs (so never here)
config = TrainConfig(epochs_step1=30, steps_per_epoch=50, patch=32)
t0 = time.perf_counter()
result = train_step_one([cube], config)
print(f"trained in {time.perf_counter() - t0:.1f}s")
for row in result.history[::5]:
    print(f"epoch {row['epoch']:2d}  loss {row['loss_total']:.5f}  sad {row['loss_sad']:.5f}")

net = result.network
a_hat, y_hat = net.unmix(cube)
print("reconstruction RMSE:", float(np.sqrt(np.mean((cube.data - y_hat.data) ** 2))))

# The decoder weights are the endmembers, up to a permutation of the rows
perm, angle = match_endmembers(endmembers, net.extract_endmembers())
print("matching", perm, "mean angle (rad):", round(angle, 4))
print("mean |A - A_hat| after matching:", float(np.abs(abundances.data - a_hat.data[list(perm)]).mean()))

# The same encoder on a x2 degraded copy agrees with block-averaged HR abundances
a_lr, _ = net.unmix(degrade(cube, 2, blur_sigma=0.0))
print("scale consistency:", float(np.abs(a_lr.data - block_average(a_hat.data, 2)).mean()))
