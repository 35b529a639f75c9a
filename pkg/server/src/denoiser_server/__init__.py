"""External denoiser process for the tdcm codec.

Hosts an analytic Gaussian oracle, a payload-echoing identity backend, or
a user plugin behind the codec's framed float32 wire protocol, so heavy
models live in their own process (or machine) instead of in the codec.
"""

from .backends import GaussianParams, gaussian_backend, identity_backend, plugin_backend
from .server import DenoiserServer, ServerConfig, serve, serve_session

__version__ = "0.1.0"
