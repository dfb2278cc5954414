"""
Where the gradient goes
=======================

MPI copies values, so its backward pass only routes gradients back to the
pixels that were copied. Nothing flows into the foreground. This script
checks that on a single operator and then on the toy network.
"""

import numpy as np

from mpikit import mpi_backward, mpi_forward
from mpikit.nn import ModelConfig, build_model, forward
from mpikit.nn.autodiff import Var, backward
from mpikit.nn.gradcheck import run_scope
from mpikit.synth import SceneConfig, generate

rng = np.random.default_rng(0)

f = rng.normal(size=(1, 6, 6)).astype(np.float32)
m = np.ones((6, 6), dtype=np.uint8)
m[1:4, 2:5] = 0

out, prov = mpi_forward(f, m)
g = mpi_backward(prov, np.ones_like(out))
print("gradient of sum(output) w.r.t. input, i.e. how often each pixel was copied;")
print("on a 6x6 map the default erosion leaves only the outer rim as background")
print(g[0])
print("foreground receives nothing:", not g[0][m == 0].any())

# the adjoint identity <backward(g), f> == <g, forward(f)> holds exactly
g_out = rng.normal(size=out.shape)
print("adjoint gap:", abs(np.vdot(mpi_backward(prov, g_out), f) - np.vdot(g_out, out)))

# now the network: put MPI on the input and look at d loss / d pixels
scene = generate(SceneConfig(h=32, w=64), 1)
image, labels, mask = scene[0]
model = build_model(ModelConfig(widths=(4, 8, 8), decoder_width=8, aux_width=4,
                                mpi_position="input", foreground_mode="ground_truth"))
x = Var(image[None].astype(np.float32), name="images")
res = forward(model, x, mask[None])
backward([(res.bg_logits, np.ones_like(res.bg_logits.value))])
pix = np.abs(x.grad[0]).sum(axis=0)
fg = mask == 0
print(f"\n|grad| on foreground pixels: {pix[fg].max():.3g}  (background mean {pix[~fg].mean():.3g})")

# and the finite-difference checks bundled with the package
for scope in ("conv", "mpi"):
    print(run_scope(scope).summary())
