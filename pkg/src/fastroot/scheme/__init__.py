"""Binary32 kernels: integer coarse step plus binary32 refinement stages."""

from .core import (
    INF_BITS, K_BIAS, K_MANT, SHIFT_FORMS, SHIFT_THEN_SUBTRACT, SMALLEST_NORMAL_BITS,
    SUBTRACT_THEN_SHIFT, ApproxScheme, CoarseStep, SchemeStage, bits_float, coarse_bits,
    default_ordering, f32, float_bits, integer_divide_descriptor, interpret, interpret_exact,
    magic_constant, magic_to_c, make_scheme, s_alternatives, scheme_from_chain, shift_equivalent,
    shift_variant, stage_for,
)
from .emit import FORMATS, emit_source, load_native
from .variants import (
    OrderingVariant, all_orderings, enumerate_orderings, find_ordering, horner_template,
    monic_template,
)

__all__ = [
    "INF_BITS", "K_BIAS", "K_MANT", "SHIFT_FORMS", "SHIFT_THEN_SUBTRACT", "SMALLEST_NORMAL_BITS",
    "SUBTRACT_THEN_SHIFT", "ApproxScheme", "CoarseStep", "SchemeStage", "bits_float",
    "coarse_bits", "default_ordering", "f32", "float_bits", "integer_divide_descriptor",
    "interpret", "interpret_exact", "magic_constant", "magic_to_c", "make_scheme",
    "s_alternatives", "scheme_from_chain", "shift_equivalent", "shift_variant", "stage_for",
    "FORMATS", "emit_source", "load_native", "OrderingVariant", "all_orderings",
    "enumerate_orderings", "find_ordering", "horner_template", "monic_template",
]
