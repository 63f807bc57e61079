"""
Soft-argmax: a differentiable "where is the peak"
=================================================

argmax has no gradient, so the scanpath head reads each feature plane out
as a softmax-weighted average of the pixel grid instead. The sharpness
beta interpolates between the plane centroid (beta -> 0) and the true
argmax (beta -> inf), and stays differentiable throughout.
"""

import numpy as np

from salypath import Tensor, soft_argmax

# One 9x9 plane with a bump at (row 2, col 6).
h = w = 9
yy, xx = np.mgrid[0:h, 0:w]
plane = np.exp(-((yy - 2.0) ** 2 + (xx - 6.0) ** 2) / 4.0).astype(np.float32)
x = Tensor(plane[None, None] * 4.0)

print("true argmax at (x, y) = (%.3f, %.3f)  [normalized i/W, j/H]" % (6 / 9, 2 / 9))
for beta in (0.01, 1.0, 4.0, 16.0, 200.0):
    px, py = soft_argmax(x, beta=beta).data[0, 0]
    print(f"beta={beta:<6}  point = ({px:.3f}, {py:.3f})")

# At tiny beta every pixel weighs the same and the point collapses to the
# grid centroid, whatever the plane contents.
flat = soft_argmax(Tensor(np.zeros((1, 1, 4, 4), np.float32)), beta=1.0)
print("\nuniform 4x4 plane ->", flat.data[0, 0], "(grid centroid)")

# Gradients: nudging the plane moves the point. Push mass toward a corner
# pixel and the x-coordinate responds with the expected sign.
xt = Tensor(plane[None, None].copy(), requires_grad=True)
pt = soft_argmax(xt, beta=4.0)
px = pt[:, :, 0].sum()
px.backward()
g = xt.grad[0, 0]
print("\nd px / d plane:  left-half mean %+.5f   right-half mean %+.5f"
      % (g[:, : w // 2].mean(), g[:, w // 2 + 1:].mean()))
print("raising activations right of the peak pulls x up; left pushes it down")
