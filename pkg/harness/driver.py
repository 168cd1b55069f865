#!/usr/bin/env python3
"""Persistent execution shim for one candidate.

Loads the candidate module once (so model-load cost stays out of the timed
path), then serves generate requests over an NDJSON stdin/stdout protocol.
The candidate contract: a Python file defining ``generate(prompt, seed)``
returning bytes or str. Candidate prints are redirected to stderr; this
process writes nothing to stdout except protocol lines.
"""

import base64
import contextlib
import importlib.util
import json
import sys
import traceback


def _reply(payload):
    sys.__stdout__.write(json.dumps(payload) + "\n")
    sys.__stdout__.flush()


def _load_candidate(path):
    spec = importlib.util.spec_from_file_location("accelbench_candidate", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    if not hasattr(module, "generate"):
        raise AttributeError("candidate must define generate(prompt, seed)")
    return module


def _coerce(artifact):
    if isinstance(artifact, bytes):
        return artifact
    if isinstance(artifact, str):
        return artifact.encode("utf-8")
    return repr(artifact).encode("utf-8")


def main():
    candidate_path = sys.argv[1]
    try:
        with contextlib.redirect_stdout(sys.stderr):
            module = _load_candidate(candidate_path)
    except BaseException:
        _reply({"event": "load_error", "traceback": traceback.format_exc()})
        return
    _reply({"event": "ready"})

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        op = request.get("op")
        if op == "shutdown":
            break
        if op not in ("generate", "warmup"):
            _reply({"ok": False, "traceback": f"unknown op {op!r}"})
            continue
        try:
            with contextlib.redirect_stdout(sys.stderr):
                artifact = module.generate(request["prompt"], request["seed"])
            _reply({"ok": True, "artifact_b64": base64.b64encode(_coerce(artifact)).decode("ascii")})
        except BaseException:
            _reply({"ok": False, "traceback": traceback.format_exc()})


if __name__ == "__main__":
    main()
