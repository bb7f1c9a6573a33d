"""Remote access: framed JSON protocol server, client connection and
interface proxies."""

from .client import Connection, connect_proxy, parse_addr, remote_module_instance
from .server import KERNEL_TARGET, RemoteServer

__all__ = [
    "Connection",
    "KERNEL_TARGET",
    "RemoteServer",
    "connect_proxy",
    "parse_addr",
    "remote_module_instance",
]
