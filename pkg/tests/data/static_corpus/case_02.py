# Inference script (generated)
# NOTE: tuning pass 3
import torch
from diffusers import StableDiffusionPipeline, DDIMScheduler


pipe   =   StableDiffusionPipeline.from_pretrained( "runwayml/stable-diffusion-v1-5" )
pipe = pipe.to("cuda")  # move to GPU
# swap the sampler; DDIM keeps outputs deterministic
pipe.scheduler = DDIMScheduler.from_config(pipe.scheduler.config)

prompt = "a lighthouse at dusk"   # text condition
output = pipe(
    prompt=prompt,
    num_inference_steps=50,   # steps=50 per request
    width=512,
    height=512,
)
output.images[0].save("out.png")
