"""Stub candidate: half-second generation returning a fixed artifact."""
import time


def generate(prompt, seed):
    time.sleep(0.5)
    return b"fixed-image-bytes"
