"""Pure-numpy versions of the compiled kernels in ``_ckernels.pyx``."""

import numpy as np

PADE = np.array([1.0, 0.5, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0,
                 1.0 / 15840.0, 1.0 / 665280.0])


def expm3(a):
    """Exponentials of a stack of 3x3 real matrices, shape (N, 3, 3).

    Scaling and squaring around a [6/6] Pade approximant; the scaling is
    chosen per matrix so that the scaled 1-norm is at most 1/2.
    """
    a = np.asarray(a, dtype=np.float64)
    norm = np.abs(a).sum(axis=1).max(axis=1)
    _, e = np.frexp(np.where(norm > 0.5, norm / 0.5, 0.5))
    s = np.where(norm > 0.5, e, 0)
    x = np.ldexp(a, -s[:, None, None])
    eye = np.eye(3)
    x2 = x @ x
    x4 = x2 @ x2
    x6 = x4 @ x2
    v = PADE[0] * eye + PADE[2] * x2 + PADE[4] * x4 + PADE[6] * x6
    u = x @ (PADE[1] * eye + PADE[3] * x2 + PADE[5] * x4)
    out = np.linalg.solve(v - u, v + u)
    # squaring in groups: matrices needing more squarings keep going
    for k in range(int(s.max(initial=0))):
        sel = s > k
        out[sel] = out[sel] @ out[sel]
    return out


def propagate(u, xhat, index, mats, heat):
    """In-place linear propagation of a stacked state; see the compiled twin."""
    d = xhat.shape[0]
    g = mats[index]
    h = heat[index]
    a = u[0].copy()
    th = u[d + 1].copy()
    lon = np.einsum("cm,cm->m", xhat, u[1:d + 1])
    om = 1j * lon
    na = g[:, 0, 0] * a + g[:, 0, 1] * om + g[:, 0, 2] * th
    nom = g[:, 1, 0] * a + g[:, 1, 1] * om + g[:, 1, 2] * th
    nth = g[:, 2, 0] * a + g[:, 2, 1] * om + g[:, 2, 2] * th
    u[0] = na
    u[d + 1] = nth
    u[1:d + 1] = h * (u[1:d + 1] - xhat * lon) - 1j * xhat * nom
    return u
