#!/usr/bin/env python3
"""Writes tests/fixtures/protocol: one JSON transcript per exchange plus the
framed request/response bytes. Framing and echo semantics are coded here
independently of the C++ client so the corpus can check it."""

import json
import math
import pathlib
import struct
import sys

DIM = 4
SPACE = "echo"


def body(msg):
    return json.dumps(msg, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def frame(msg):
    b = body(msg)
    return struct.pack(">I", len(b)) + b


def fnv1a64(data):
    h = 0xCBF29CE484222325
    for c in data:
        h ^= c
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def real(x):
    return "%.17g" % x


def image_id(z):
    return "echo-%016x" % fnv1a64(",".join(z).encode())


class Echo:
    def __init__(self):
        self.images = {}

    def handle(self, req):
        rid = req.get("id")
        op = req.get("op")
        if op == "hello":
            return {"id": rid, "ok": True, "v": 1, "dim": DIM, "space": SPACE, "classifiers": ["echo"]}
        if op == "generate":
            z = req["z"]
            if len(z) != DIM:
                return err(rid, "BAD_DIM", "expected %d coordinates, got %d" % (DIM, len(z)))
            iid = image_id(z)
            self.images[iid] = 1.0 / (1.0 + math.exp(-float(z[0])))
            return {"id": rid, "ok": True, "image_id": iid}
        if op == "classify":
            if req["image_id"] not in self.images:
                return err(rid, "UNKNOWN_IMAGE", "unknown image '%s'" % req["image_id"])
            if req["classifier"] != "echo":
                return err(rid, "UNKNOWN_CLASSIFIER", "unknown classifier '%s'" % req["classifier"])
            return {"id": rid, "ok": True, "score": self.images[req["image_id"]]}
        return err(rid, "INTERNAL", "unknown op '%s'" % op)


def err(rid, code, msg):
    return {"id": rid, "ok": False, "code": code, "msg": msg}


def main(out):
    out = pathlib.Path(out)
    out.mkdir(parents=True, exist_ok=True)
    z = [real(v) for v in (0.0, -1.5, 2.0, 0.1)]
    z2 = [real(v) for v in (0.25, 1.0, -3.0, 1e-3)]
    requests = [
        ("hello", {"v": 1, "id": 1, "op": "hello"}),
        ("generate", {"v": 1, "id": 2, "op": "generate", "space": SPACE, "z": z}),
        ("generate_repeat", {"v": 1, "id": 3, "op": "generate", "space": SPACE, "z": z}),
        ("classify", {"v": 1, "id": 4, "op": "classify", "image_id": image_id(z), "classifier": "echo"}),
        ("generate_second", {"v": 1, "id": 5, "op": "generate", "space": SPACE, "z": z2}),
        ("classify_second", {"v": 1, "id": 6, "op": "classify", "image_id": image_id(z2), "classifier": "echo"}),
        ("bad_dim", {"v": 1, "id": 7, "op": "generate", "space": SPACE, "z": z[:3]}),
        ("unknown_image", {"v": 1, "id": 8, "op": "classify", "image_id": "nope", "classifier": "echo"}),
        ("unknown_classifier", {"v": 1, "id": 9, "op": "classify", "image_id": image_id(z), "classifier": "gender"}),
        ("unknown_op", {"v": 1, "id": 10, "op": "paint"}),
    ]
    echo = Echo()
    for i, (name, req) in enumerate(requests, 1):
        resp = echo.handle(req)
        stem = "%02d_%s" % (i, name)
        (out / (stem + ".json")).write_text(json.dumps({"request": req, "response": resp}, indent=2, sort_keys=True) + "\n")
        (out / (stem + ".request.bin")).write_bytes(frame(req))
        (out / (stem + ".response.bin")).write_bytes(frame(resp))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/protocol")
