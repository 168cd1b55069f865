import torch
from diffusers import StableDiffusionPipeline, DDIMScheduler

pipe = StableDiffusionPipeline.from_pretrained("stable-diffusion-v1-5")
pipe = pipe.to("cuda")
pipe.scheduler = DDIMScheduler.from_config(pipe.scheduler.config)

prompt = "a lighthouse at dusk"
output = pipe(prompt=prompt, width=512, height=512)
output.images[0].save("out.png")
