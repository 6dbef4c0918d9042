"""
Fixed-point number semantics for arbitrary signed Q(i,f) formats.
"""

from modules.fixedpoint.qformat import (
    QFormat,
    FixedValue,
    quantize,
    quantize_array,
    dequantize,
    encode,
    encode_array,
    in_range_mask,
)

__all__ = [
    'QFormat',
    'FixedValue',
    'quantize',
    'quantize_array',
    'dequantize',
    'encode',
    'encode_array',
    'in_range_mask',
]
