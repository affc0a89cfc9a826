from .container import (
    ContainerError,
    array_hash,
    content_hash,
    load_container,
    save_container,
)

__all__ = ["ContainerError", "array_hash", "content_hash", "load_container", "save_container"]
