"""Synthesize a mixed scene, degrade it, and move it through the HSC1/ABN1/PNG formats."""
import sys
import tempfile
from pathlib import Path

import numpy as np

from unmixingsr.hsi import (block_average, degrade, degrade_planes, export_png, lmm_compose, load_hsc,
                            save_abn, save_hsc, spectral_angles, synth_scene)
from unmixingsr.hsi import AbundanceMap

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="scene_"))
out.mkdir(parents=True, exist_ok=True)

# p = 3 materials on a 32×32 grid with 16 bands; everything is seeded
abundances, endmembers, cube = synth_scene(3, 32, 32, 16, seed=7)
print("cube (bands, h, w):", cube.data.shape)
print("pairwise endmember angles (rad):\n", spectral_angles(endmembers.data).round(3))
print("fraction of near-pure pixels:", float((abundances.data.max(axis=0) > 0.9).mean()))

# HR -> LR: Gaussian blur (sigma 0.8 at x2), 2×2 area average
lr = degrade(cube, 2)
print("LR cube:", lr.data.shape)

# Degradation is linear, so degrading the abundances and remixing gives the same LR cube
remixed = lmm_compose(AbundanceMap(degrade_planes(abundances.data, 2, 0.8)), endmembers)
print("max |degrade(AM) - degrade(A)M|:", float(np.abs(remixed.data - lr.data).max()))
# and block averages of abundances stay on the simplex
print("ASC after block average:", float(np.abs(block_average(abundances.data, 2).sum(axis=0) - 1).max()))

save_hsc(cube, out / "hr.hsc")
save_hsc(lr, out / "lr.hsc")
save_abn(abundances, out / "abundances.abn")
print("roundtrip exact:", np.array_equal(load_hsc(out / "hr.hsc").data, cube.data.astype(np.float32)))
for i in range(3):
    export_png(abundances, i, out / f"abundance_{i}.png")
export_png(cube, 8, out / "band_8.png")
print("wrote files to", out)
