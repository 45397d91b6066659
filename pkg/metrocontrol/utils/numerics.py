"""Linear algebra and calculus kernels shared by every metrocontrol module.

Vectors are numpy arrays whose last axis has length 3, SU(2) matrices are complex arrays
whose last two axes are 2x2 and rotations are real arrays whose last two axes are 3x3.
Every function accepts leading batch axes unless stated otherwise.

The SU(2) -> SO(3) convention is fixed here: the spin rotation exp(-i (a/2) n.sigma)
corresponds to the right-handed rotation by a about n.
"""

import collections

import numpy as np
from scipy import integrate as sp_integrate

from metrocontrol.errors import InvalidGridError, NonFiniteError, NonUnitaryError

PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)

IDENTITY2 = np.eye(2, dtype=complex)

UNITARITY_TOLERANCE = 1e-8

Svd3 = collections.namedtuple('Svd3', ['u', 'sigma', 'v'])
Svd3.__doc__ = """Singular value decomposition m = u diag(sigma) v^T of a 3x3 matrix.

sigma is sorted descending; u and v are orthogonal with deterministic column signs.
"""


def as_vec3(values):
    """Returns values as a float array with a trailing axis of length 3.

    Raises:
        NonFiniteError: values contain NaN or infinity.
        ValueError: The trailing axis does not have length 3.
    """
    vec = np.asarray(values, dtype=float)
    if vec.shape[-1:] != (3,):
        raise ValueError('Expected 3-vectors, got shape {}.'.format(vec.shape))
    if not np.all(np.isfinite(vec)):
        raise NonFiniteError('Vector has non-finite components: {}'.format(vec))
    return vec


def su2_exp(v, dt):
    """Closed-form propagator exp(-i (v.sigma) dt).

    Args:
        v: Field vector(s), shape (..., 3).
        dt: Duration, broadcastable against v[..., 0].

    Returns:
        Complex array of shape (..., 2, 2).
    """
    v = np.asarray(v, dtype=float)
    dt = np.asarray(dt, dtype=float)
    theta = np.linalg.norm(v, axis=-1) * dt
    cos = np.cos(theta)
    # sin(theta) * v_hat, well defined at theta == 0
    sin_n = v * (dt * np.sinc(theta / np.pi))[..., None]

    out = np.empty(v.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = cos - 1j * sin_n[..., 2]
    out[..., 0, 1] = -sin_n[..., 1] - 1j * sin_n[..., 0]
    out[..., 1, 0] = sin_n[..., 1] - 1j * sin_n[..., 0]
    out[..., 1, 1] = cos + 1j * sin_n[..., 2]
    return out


def su2_log(u):
    """Inverse of su2_exp at dt = 1, up to the sign of u.

    The sign of u is chosen so that Re Tr(u) >= 0, which keeps the returned rotation
    angle |v| within [0, pi/2].

    Args:
        u: SU(2) matrices, shape (..., 2, 2).

    Returns:
        Array v of shape (..., 3) with su2_exp(v, 1) == +-u.
    """
    u = np.asarray(u, dtype=complex)
    sign = np.where(np.real(u[..., 0, 0] + u[..., 1, 1]) < 0, -1.0, 1.0)[..., None, None]
    u = u * sign

    sin_n = np.stack([
        -np.imag(u[..., 0, 1] + u[..., 1, 0]) / 2,
        np.real(u[..., 1, 0] - u[..., 0, 1]) / 2,
        -np.imag(u[..., 0, 0] - u[..., 1, 1]) / 2,
    ], axis=-1)
    cos = np.real(u[..., 0, 0] + u[..., 1, 1]) / 2
    theta = np.arctan2(np.linalg.norm(sin_n, axis=-1), cos)
    return sin_n / np.sinc(theta / np.pi)[..., None]


def unitarity_residual(u):
    """Returns the largest Frobenius norm of u^dagger u - I over the batch."""
    u = np.asarray(u, dtype=complex)
    gram = np.conj(np.swapaxes(u, -1, -2)) @ u
    residual = np.linalg.norm(gram - np.eye(u.shape[-1]), axis=(-2, -1))
    return float(np.max(residual)) if residual.size else 0.0


def so3_from_su2(u, check=True):
    """Adjoint map R_jk = 1/2 Tr(sigma_j u sigma_k u^dagger).

    Args:
        u: Unitary matrices, shape (..., 2, 2).
        check: Whether to verify unitarity first.

    Returns:
        Real array of shape (..., 3, 3).

    Raises:
        NonUnitaryError: The unitarity residual exceeds 1e-8.
    """
    u = np.asarray(u, dtype=complex)
    if check:
        residual = unitarity_residual(u)
        if residual > UNITARITY_TOLERANCE:
            raise NonUnitaryError(residual)

    conjugated = np.einsum('...ab,kbc,...dc->...kad', u, PAULI, np.conj(u))
    return 0.5 * np.real(np.einsum('jda,...kad->...jk', PAULI, conjugated))


def su2_from_so3(r):
    """Lifts rotations to SU(2) (Shepperd's quaternion extraction).

    The result u satisfies so3_from_su2(u) == r; the overall sign is arbitrary but
    deterministic.

    Args:
        r: Rotation matrices, shape (..., 3, 3).

    Returns:
        Complex array of shape (..., 2, 2).
    """
    r = np.asarray(r, dtype=float)
    r00, r01, r02 = r[..., 0, 0], r[..., 0, 1], r[..., 0, 2]
    r10, r11, r12 = r[..., 1, 0], r[..., 1, 1], r[..., 1, 2]
    r20, r21, r22 = r[..., 2, 0], r[..., 2, 1], r[..., 2, 2]

    # symmetric matrix equal to 4 q q^T for the quaternion q = (w, x, y, z)
    outer = np.stack([
        np.stack([1 + r00 + r11 + r22, r21 - r12, r02 - r20, r10 - r01], axis=-1),
        np.stack([r21 - r12, 1 + r00 - r11 - r22, r01 + r10, r02 + r20], axis=-1),
        np.stack([r02 - r20, r01 + r10, 1 - r00 + r11 - r22, r12 + r21], axis=-1),
        np.stack([r10 - r01, r02 + r20, r12 + r21, 1 - r00 - r11 + r22], axis=-1),
    ], axis=-2)
    diagonal = np.diagonal(outer, axis1=-2, axis2=-1)
    pivot = np.argmax(diagonal, axis=-1)
    row = np.take_along_axis(outer, pivot[..., None, None], axis=-2)[..., 0, :]
    pivot_value = np.take_along_axis(diagonal, pivot[..., None], axis=-1)
    quat = row / (2 * np.sqrt(pivot_value))
    quat /= np.linalg.norm(quat, axis=-1, keepdims=True)

    w, x, y, z = quat[..., 0], quat[..., 1], quat[..., 2], quat[..., 3]
    out = np.empty(r.shape[:-2] + (2, 2), dtype=complex)
    out[..., 0, 0] = w - 1j * z
    out[..., 0, 1] = -y - 1j * x
    out[..., 1, 0] = y - 1j * x
    out[..., 1, 1] = w + 1j * z
    return out


def rotation(axis, angle):
    """Right-handed rotation by angle about a unit axis (Rodrigues' formula).

    Args:
        axis: 3-vector; normalized here.
        angle: Scalar or array of angles in radians.

    Returns:
        Array of shape angle.shape + (3, 3).
    """
    axis = as_vec3(axis)
    axis = axis / np.linalg.norm(axis)
    angle = np.asarray(angle, dtype=float)
    skew = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    sin = np.sin(angle)[..., None, None]
    versine = (1 - np.cos(angle))[..., None, None]
    return np.eye(3) + sin * skew + versine * (skew @ skew)


def euler_zyz(alpha, beta, gamma):
    """Extrinsic Z(alpha) Y(beta) Z(gamma) composition (left-multiplied)."""
    z_axis = np.array([0.0, 0.0, 1.0])
    y_axis = np.array([0.0, 1.0, 0.0])
    return rotation(z_axis, alpha) @ rotation(y_axis, beta) @ rotation(z_axis, gamma)


def svd3(m):
    """Deterministic SVD of a single 3x3 matrix.

    Column signs are fixed so the largest-magnitude entry of every right singular
    vector is positive.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError('svd3 expects a 3x3 matrix, got shape {}.'.format(m.shape))
    if not np.all(np.isfinite(m)):
        raise NonFiniteError('Matrix has non-finite entries.')

    u, sigma, vt = np.linalg.svd(m)
    v = vt.T
    pivots = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[pivots, np.arange(3)])
    signs[signs == 0] = 1.0
    return Svd3(u * signs, sigma, v * signs)


def nearest_orthogonal(m):
    """Orthogonal Q = U V^T maximizing Tr(Q^T m) (orthogonal Procrustes)."""
    decomposition = svd3(m)
    return decomposition.u @ decomposition.v.T


def trapezoid_weights(n_nodes, dt):
    """Composite trapezoid weights for n_nodes uniformly spaced samples."""
    if n_nodes < 2:
        raise InvalidGridError('Quadrature needs at least 2 samples, got {}.'.format(n_nodes))
    weights = np.full(n_nodes, float(dt))
    weights[0] = weights[-1] = dt / 2
    return weights


def integrate(samples, dt):
    """Composite trapezoid rule along the first axis.

    Raises:
        InvalidGridError: Fewer than 2 samples.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 0 or samples.shape[0] < 2:
        raise InvalidGridError('Quadrature needs at least 2 samples.')
    return sp_integrate.trapezoid(samples, dx=dt, axis=0)


def integrate2d(samples, dt):
    """Tensor-product trapezoid rule over a square grid of samples.

    Raises:
        InvalidGridError: The grid is not square or smaller than 2x2.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] != samples.shape[1]:
        raise InvalidGridError('Double integral needs a square grid, got shape '
                               '{}.'.format(samples.shape))
    if samples.shape[0] < 2:
        raise InvalidGridError('Double integral needs at least a 2x2 grid.')
    inner = sp_integrate.trapezoid(samples, dx=dt, axis=1)
    return float(sp_integrate.trapezoid(inner, dx=dt))


def lattice_integral(block, n_nodes, dt, block_rows=256):
    """Tensor-product trapezoid rule for an integrand evaluated in row blocks.

    Args:
        block: Callable taking a slice of row indices and returning the integrand on
            those rows against every column, shape (rows, n_nodes).
        n_nodes: Number of nodes per axis.
        dt: Grid spacing.
        block_rows: Rows evaluated per call.

    Returns:
        The double integral as a float.
    """
    weights = trapezoid_weights(n_nodes, dt)
    total = 0.0
    for start in range(0, n_nodes, block_rows):
        rows = slice(start, min(start + block_rows, n_nodes))
        total += float(weights[rows] @ block(rows) @ weights)
    return total


def central_diff(f, x0, h):
    """Central difference (f(x0 + h) - f(x0 - h)) / 2h.

    Raises:
        ValueError: h is not positive.
    """
    if not h > 0:
        raise ValueError('Finite-difference step must be positive, got {}.'.format(h))
    return (np.asarray(f(x0 + h)) - np.asarray(f(x0 - h))) / (2 * h)


def chain_product(matrices):
    """Ordered product M[-1] ... M[1] M[0] by pairwise reduction.

    Args:
        matrices: Array of shape (count, d, d), earliest factor first.

    Returns:
        Array of shape (d, d); the identity for an empty sequence.
    """
    matrices = np.asarray(matrices)
    if len(matrices) == 0:
        return np.eye(matrices.shape[-1], dtype=matrices.dtype)
    while len(matrices) > 1:
        if len(matrices) % 2:
            identity = np.eye(matrices.shape[-1], dtype=matrices.dtype)[None]
            matrices = np.concatenate([matrices, identity])
        matrices = matrices[1::2] @ matrices[0::2]
    return matrices[0]
