"""Pure-numpy ULA block kernel.

Advances a batch of chains through a block of pre-drawn noise.  The compiled
kernel in ``_ula_core.pyx`` implements the same contract for the shipped
potential kinds; this version additionally accepts any vectorised gradient
callable.
"""

import numpy as np


def _kind_grad(kind, pa, pb):
    """Vectorised gradient for a kernel kind code, mirroring the compiled kernel."""
    if kind == 0:
        return lambda y: np.zeros_like(y)
    if kind == 1:
        return lambda y: pa * y
    if kind == 2:
        coef_alpha = pa * pb

        def grad(y):
            r = np.sqrt(np.sum(y * y, axis=-1))[:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                c = np.where(r > 0, coef_alpha * r ** (pb - 2.0), 0.0)
            return np.sum(c, axis=-1)[:, None] * y

        return grad
    if kind == 3:
        q = 1.0 + pb

        def grad(y):
            r = np.sqrt(np.sum(y * y, axis=-1))[:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                rp = np.where(r > 0, r ** (pb - 1.0), np.where(pb == 1.0, 1.0, 0.0))
            c = (1.0 + r ** q) ** (-pb / q) * rp
            return np.sum(c, axis=-1)[:, None] * y

        return grad
    raise ValueError(f"unknown kernel kind {kind}")


def ula_block(x, noise, xi, mu, etas, grad_fn, k0, burn_in, stride,
              tail_sum, tail_cross, tail_n, rec_x, rec_g, diverged, limit,
              hist_counts, hist_lo, hist_width, hist_group, chain_offset):
    """Run ``noise.shape[1]`` ULA steps for every chain in ``x`` (in place).

    ``k0`` is the number of steps already taken.  Step ``k`` (1-based) uses
    ``etas[k - k0 - 1]``; after it, if ``k > burn_in`` the state enters the
    tail accumulators, and if ``k % stride == 0`` it is written to ``rec_x``
    / ``rec_g`` at slot ``k // stride - k0 // stride - 1`` and, in the tail,
    binned into the histogram.
    ``diverged[c]`` is set to the step index at which chain ``c`` failed the
    guard; that chain is frozen at its last finite state.
    """
    m, n_steps, d = noise.shape
    use_xi = xi is not None and xi.size > 0
    use_hist = hist_counts is not None and hist_counts.size > 0
    rec_base = k0 // stride
    live = diverged < 0
    if use_hist:
        nb = np.array(hist_counts.shape[1:])
        group_idx = (chain_offset + np.arange(m)) % hist_counts.shape[0]
    for b in range(n_steps):
        k = k0 + b + 1
        eta = etas[b]
        y = x + mu * xi[:, b] if use_xi else x
        g = grad_fn(y)
        x_new = x - eta * g + np.sqrt(2.0 * eta) * noise[:, b]
        norm_new = np.sqrt(np.sum(x_new * x_new, axis=-1))
        bad = live & ~(np.isfinite(norm_new) & (norm_new <= limit) & np.all(np.isfinite(g), axis=-1))
        if bad.any():
            diverged[bad] = k
            live = live & ~bad
        x[live] = x_new[live]
        if k > burn_in:
            tail_sum[live] += x[live]
            tail_cross[live] += x[live][:, :, None] * x[live][:, None, :]
            tail_n[live] += 1
            if use_hist and k % stride == 0:
                idx = np.floor((x[live] - hist_lo) / hist_width).astype(np.int64)
                idx = np.clip(idx, 0, nb[:d] - 1)
                if d == 1:
                    np.add.at(hist_counts, (group_idx[live], idx[:, 0], 0), 1)
                else:
                    np.add.at(hist_counts, (group_idx[live], idx[:, 0], idx[:, 1]), 1)
        if k % stride == 0:
            slot = k // stride - rec_base - 1
            rec_x[:, slot] = np.where(live[:, None], x, np.nan)
            rec_g[:, slot] = np.where(live, np.sqrt(np.sum(g * g, axis=-1)), np.nan)
    return x
