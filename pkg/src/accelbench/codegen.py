"""Deterministic renderer turning an attribute configuration into
diffusers-style inference source.

Used twice: the bench builder renders ground-truth reference code, and the
mock gateway's coding policy renders candidate code from a plan's encoded
configuration. Rendering only emits what the configuration contains, so a
plan missing a field produces source missing that attribute.
"""

from __future__ import annotations

from typing import Any, Iterable, Mapping

_IMPORT_HINTS = {
    "StableDiffusionPipeline": "diffusers",
    "StableDiffusionImg2ImgPipeline": "diffusers",
    "StableDiffusionXLPipeline": "diffusers",
    "DiTPipeline": "diffusers",
    "PixArtAlphaPipeline": "diffusers",
    "PixArtSigmaPipeline": "diffusers",
}


def render_source(
    config: Mapping[str, Any],
    *,
    scaffold: Iterable[str] = (),
    style: int = 0,
    prompt_text: str = "a scenic landscape, highly detailed",
) -> str:
    """Render inference source realizing ``config``.

    ``style`` selects between small cosmetic variants (resolution kwargs
    versus a tuple assignment) so generated candidates are not all
    byte-identical. ``scaffold`` adds reference-scaffold marker comments,
    one per knowledge-base template that informed the code.
    """
    pipeline = config.get("pipeline_class")
    model_id = config.get("model_id")
    scheduler = config.get("scheduler_class")
    steps = config.get("num_inference_steps")
    resolution = config.get("resolution")
    conditioning = config.get("conditioning", "text2img")
    preprocessors = sorted(config.get("preprocessors", ()))
    methods = config.get("accel_methods", {}) or {}

    fp16 = "half_precision" in methods
    lines: list[str] = ["import torch"]
    if pipeline:
        imports = [pipeline]
        if scheduler:
            imports.append(scheduler)
        lines.append(f"from {_IMPORT_HINTS.get(pipeline, 'diffusers')} import {', '.join(imports)}")
    lines.append("")
    for name in scaffold:
        lines.append(f"# reference scaffold: {name}")

    if pipeline:
        ctor_args = []
        if model_id:
            ctor_args.append(f'"{model_id}"')
        if fp16:
            ctor_args.append("torch_dtype=torch.float16")
        lines.append(f"pipe = {pipeline}.from_pretrained({', '.join(ctor_args)})")
        lines.append('pipe = pipe.to("cuda")')
    if scheduler:
        lines.append(f"pipe.scheduler = {scheduler}.from_config(pipe.scheduler.config)")

    if "token_merging" in methods:
        ratio = methods["token_merging"].get("merge_ratio")
        lines.append("")
        lines.append("import tomesd")
        lines.append(
            f"tomesd.apply_patch(pipe, ratio={ratio})" if ratio is not None else "tomesd.apply_patch(pipe)"
        )
    if "feature_reuse" in methods:
        interval = methods["feature_reuse"].get("cache_interval")
        lines.append("")
        lines.append("from DeepCache import DeepCacheSDHelper")
        lines.append("helper = DeepCacheSDHelper(pipe=pipe)")
        if interval is not None:
            lines.append(f"helper.set_params(cache_interval={interval}, cache_branch_id=0)")
        lines.append("helper.enable()")
    if "gated_activation" in methods:
        gate = methods["gated_activation"].get("gate_step")
        lines.append("")
        lines.append("from tgate import TgateSDLoader")
        lines.append(
            f"pipe = TgateSDLoader(pipe, gate_step={gate})" if gate is not None else "pipe = TgateSDLoader(pipe)"
        )

    lines.append("")
    call_args: list[str] = []
    if conditioning == "class2img":
        lines.append("class_labels = [207]")
        call_args.append("class_labels=class_labels")
    elif conditioning == "img2img":
        lines.append('init_image = load_image("input.png")')
        for name in preprocessors:
            lines.append(f"init_image = {name}(init_image)")
        lines.append(f'prompt = "{prompt_text}"')
        call_args.append("prompt=prompt")
        call_args.append("image=init_image")
        call_args.append("strength=0.8")
    else:
        if preprocessors:
            lines.append('control = load_image("control.png")')
            for name in preprocessors:
                lines.append(f"control = {name}(control)")
        lines.append(f'prompt = "{prompt_text}"')
        call_args.append("prompt=prompt")

    if steps is not None:
        call_args.append(f"num_inference_steps={steps}")
    if resolution is not None:
        width, height = resolution
        if style % 2 == 1:
            lines.append(f"resolution = ({width}, {height})")
            call_args.append("width=resolution[0]")
            call_args.append("height=resolution[1]")
        else:
            call_args.append(f"width={width}")
            call_args.append(f"height={height}")

    lines.append("output = pipe(")
    for arg in call_args:
        lines.append(f"    {arg},")
    lines.append(")")
    lines.append("image = output.images[0]")
    lines.append('image.save("result.png")')
    lines.append("")
    return "\n".join(lines)
