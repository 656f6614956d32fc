from activesim.render.bsdf import ShadingFrame, eval_bsdf, sample_bsdf
from activesim.render.lights import light_contribution
from activesim.render.tracer import (
    RadianceImage,
    auto_exposure,
    depth_buffer,
    quantize_ir,
    render_ir_pair,
    trace,
)

__all__ = [
    "RadianceImage", "ShadingFrame", "auto_exposure", "depth_buffer", "eval_bsdf", "light_contribution",
    "quantize_ir", "render_ir_pair", "sample_bsdf", "trace",
]
