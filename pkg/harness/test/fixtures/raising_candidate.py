"""Candidate whose generation call always crashes."""


def generate(prompt, seed):
    raise RuntimeError("pipeline exploded: tensor shape mismatch")
