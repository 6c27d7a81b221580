"""Brute-force reference implementations used by the tests."""

from collections import deque
from typing import Callable, List, Optional, Sequence

import numpy as np

from agri.flooddamage.metrics import SsimParams, gaussian_window
from agri.flooddamage.tensor import Tensor, no_grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)


def check_gradients(
    op: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    seed: int = 0,
    h: float = 1e-4,
) -> List[float]:
    """
    Compare the backward pass of ``op`` with central finite differences in
    float64. Non-scalar outputs are contracted with a random upstream
    gradient G; the numerical side differentiates sum(op(...) * G).

    Returns:
        the relative error for every input.
    """
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    output = op(*tensors)
    rng = np.random.default_rng(seed)
    upstream: Optional[np.ndarray] = None
    if output.data.size > 1:
        upstream = rng.standard_normal(output.shape)
    output.backward(upstream)

    def objective(values: List[np.ndarray]) -> float:
        with no_grad():
            result = op(*[Tensor(v) for v in values]).data
        if upstream is None:
            return float(result.sum())
        return float((result * upstream).sum())

    errors = []
    for k, array in enumerate(arrays):
        numeric = np.zeros_like(array)
        for index in np.ndindex(*array.shape):
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[k][index] += h
            minus[k][index] -= h
            numeric[index] = (objective(plus) - objective(minus)) / (2 * h)
        analytic = tensors[k].grad
        assert analytic is not None
        errors.append(relative_error(analytic, numeric))
    return errors


def majority_vote(labels: np.ndarray, nodata: np.ndarray, window: int) -> np.ndarray:
    """Window-by-window majority vote with clipped borders."""
    half = window // 2
    height, width = labels.shape
    out = labels.copy()
    for y in range(height):
        for x in range(width):
            if nodata[y, x]:
                continue
            counts = [0, 0, 0]
            for yy in range(max(0, y - half), min(height, y + half + 1)):
                for xx in range(max(0, x - half), min(width, x + half + 1)):
                    if not nodata[yy, xx]:
                        counts[int(labels[yy, xx])] += 1
            best = max(counts)
            center = int(labels[y, x])
            out[y, x] = center if counts[center] == best else counts.index(best)
    return out


def threshold_classes(
    delta: np.ndarray, nodata: np.ndarray, t_partial: float, t_full: float
) -> np.ndarray:
    """Pixel-by-pixel thresholding in float32; nodata pixels keep label 0."""
    out = np.zeros(delta.shape, dtype=np.int64)
    partial, full = np.float32(t_partial), np.float32(t_full)
    for y, x in np.ndindex(*delta.shape):
        if nodata[y, x]:
            continue
        value = np.float32(delta[y, x])
        if value >= full:
            out[y, x] = 2
        elif value >= partial:
            out[y, x] = 1
    return out


def remove_small_objects(
    labels: np.ndarray, nodata: np.ndarray, min_size: int
) -> np.ndarray:
    """Flood-fill version of the small-object relabeling (4-connectivity)."""
    height, width = labels.shape
    seen = np.zeros(labels.shape, dtype=bool)
    out = labels.copy()
    steps = ((1, 0), (-1, 0), (0, 1), (0, -1))
    for y in range(height):
        for x in range(width):
            if seen[y, x] or nodata[y, x]:
                continue
            label = labels[y, x]
            component = []
            queue = deque([(y, x)])
            seen[y, x] = True
            while queue:
                cy, cx = queue.popleft()
                component.append((cy, cx))
                for dy, dx in steps:
                    ny, nx = cy + dy, cx + dx
                    if (
                        0 <= ny < height
                        and 0 <= nx < width
                        and not seen[ny, nx]
                        and not nodata[ny, nx]
                        and labels[ny, nx] == label
                    ):
                        seen[ny, nx] = True
                        queue.append((ny, nx))
            if len(component) >= min_size:
                continue
            members = set(component)
            ring = set()
            for cy, cx in component:
                for dy, dx in steps:
                    ny, nx = cy + dy, cx + dx
                    if (
                        0 <= ny < height
                        and 0 <= nx < width
                        and (ny, nx) not in members
                        and not nodata[ny, nx]
                    ):
                        ring.add((ny, nx))
            if not ring:
                continue
            counts = [0, 0, 0]
            for ny, nx in ring:
                counts[int(labels[ny, nx])] += 1
            new_label = counts.index(max(counts))
            for cy, cx in component:
                out[cy, cx] = new_label
    return out


def windowed_ssim(
    x: np.ndarray, y: np.ndarray, valid: np.ndarray, params: SsimParams
) -> float:
    """Mean SSIM over the fully valid window positions, one window at a time."""
    size = params.window_size
    weights = gaussian_window(size, params.sigma)
    values = []
    for row in range(x.shape[0] - size + 1):
        for col in range(x.shape[1] - size + 1):
            if not valid[row : row + size, col : col + size].all():
                continue
            wx = x[row : row + size, col : col + size].astype(np.float64)
            wy = y[row : row + size, col : col + size].astype(np.float64)
            mu_x = (weights * wx).sum()
            mu_y = (weights * wy).sum()
            var_x = (weights * wx * wx).sum() - mu_x**2
            var_y = (weights * wy * wy).sum() - mu_y**2
            cov = (weights * wx * wy).sum() - mu_x * mu_y
            values.append(
                (2 * mu_x * mu_y + params.c1)
                * (2 * cov + params.c2)
                / ((mu_x**2 + mu_y**2 + params.c1) * (var_x + var_y + params.c2))
            )
    return float(np.mean(values))
