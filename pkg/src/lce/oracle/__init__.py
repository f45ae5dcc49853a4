"""Wire protocol, endpoint clients, server loop, and synthetic backends."""

from .client import (
    DEFAULT_MAX_BATCH,
    DEFAULT_TIMEOUT_MS,
    InProcessEndpoint,
    OracleEndpoint,
    SubprocessEndpoint,
    TcpEndpoint,
    open_endpoint,
    predict_batched,
    require_capabilities,
)
from .errors import (
    CapabilityError,
    OracleError,
    OracleProtocolError,
    OracleRemoteError,
    OracleTimeoutError,
)
from .server import serve_stdio, serve_stream, serve_tcp
from .synthetic import (
    CLASS_NAMES,
    BackendParams,
    SceneConfig,
    SyntheticBackend,
    SyntheticScene,
    generate_scene,
)
from .wire import ALL_CAPABILITIES, PROTOCOL_VERSION

__all__ = [
    "ALL_CAPABILITIES",
    "PROTOCOL_VERSION",
    "DEFAULT_MAX_BATCH",
    "DEFAULT_TIMEOUT_MS",
    "OracleEndpoint",
    "InProcessEndpoint",
    "SubprocessEndpoint",
    "TcpEndpoint",
    "open_endpoint",
    "predict_batched",
    "require_capabilities",
    "OracleError",
    "OracleTimeoutError",
    "OracleProtocolError",
    "OracleRemoteError",
    "CapabilityError",
    "serve_stdio",
    "serve_stream",
    "serve_tcp",
    "CLASS_NAMES",
    "BackendParams",
    "SceneConfig",
    "SyntheticBackend",
    "SyntheticScene",
    "generate_scene",
]
