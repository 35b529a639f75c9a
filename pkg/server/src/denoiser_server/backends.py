"""Denoiser backends.

A backend maps (x_t, t, alpha_bar) to an estimate of the clean signal,
all as flat float arrays.  The gaussian backend mirrors the codec's
analytic test oracle; the plugin backend hosts arbitrary user models
(e.g. a pretrained latent diffusion denoiser) behind the same call shape.
"""

from __future__ import annotations

import importlib.util
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

Denoise = Callable[[np.ndarray, int, float], np.ndarray]


class Backend(Protocol):
    def __call__(self, x_t: np.ndarray, t: int, alpha_bar: float) -> np.ndarray: ...


def identity_backend() -> Denoise:
    def denoise(x_t: np.ndarray, t: int, alpha_bar: float) -> np.ndarray:
        return x_t

    return denoise


@dataclass(frozen=True)
class GaussianParams:
    mean: float = 0.0
    var_lo: float = 0.25
    var_hi: float = 4.0


def gaussian_backend(params: GaussianParams = GaussianParams()) -> Denoise:
    """Per-coordinate posterior mean under N(mean, ramp variance).

    The variance ramp is laid out over whatever dimension each request
    carries, so one server handles any image size.

        x̂ = μ + √ᾱ σ² (x_t - √ᾱ μ) / (ᾱ σ² + 1 - ᾱ)
    """

    def denoise(x_t: np.ndarray, t: int, alpha_bar: float) -> np.ndarray:
        x = np.asarray(x_t, dtype=np.float64)
        var = np.linspace(params.var_lo, params.var_hi, x.shape[0])
        a = float(alpha_bar)
        gain = math.sqrt(a) * var / (a * var + 1.0 - a)
        return params.mean + gain * (x - math.sqrt(a) * params.mean)

    return denoise


def plugin_backend(path: str) -> Denoise:
    """Load ``denoise(x_t, t, alpha_bar) -> array`` from a Python file.

    Mapping the step index onto a hosted model's own scheduler is the
    plugin's business; the server only relays (t, alpha_bar) verbatim.
    """
    spec = importlib.util.spec_from_file_location("denoiser_plugin", Path(path))
    if spec is None or spec.loader is None:
        raise ValueError(f"cannot load plugin from {path}")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    fn = getattr(module, "denoise", None)
    if not callable(fn):
        raise ValueError(f"plugin {path} does not define denoise(x_t, t, alpha_bar)")
    return fn
