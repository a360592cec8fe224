"""
Utils package initialization
"""
from .helpers import (
    Logger,
    to_jsonable,
    goods_map,
    format_vector,
    sup_norm
)
from .trace_store import TraceStore

__all__ = [
    'Logger',
    'to_jsonable',
    'goods_map',
    'format_vector',
    'sup_norm',
    'TraceStore'
]
