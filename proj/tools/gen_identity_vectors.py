#!/usr/bin/env python3
"""Writes tests/data/identity_golden.json from the python-ecdsa reference.

Independent of the C++ code: RFC 6979 nonces and curve arithmetic come from
python-ecdsa; low-s normalization and the recovery id follow SEC 1 4.1.6.

    pip install ecdsa==0.19.2
    python3 tools/gen_identity_vectors.py > tests/data/identity_golden.json
"""
import hashlib
import hmac
import json

from ecdsa import SECP256k1, SigningKey
from ecdsa.ellipticcurve import PointJacobi
from ecdsa.util import sigencode_strings

CURVE = SECP256k1
N = CURVE.order
P = CURVE.curve.p()
G = CURVE.generator


def compress(point):
    x, y = point.x(), point.y()
    return bytes([2 | (y & 1)]) + x.to_bytes(32, "big")


def node_id(pub33):
    return "node-" + hashlib.sha256(pub33).hexdigest()[:16]


def recover(digest, r, s, recid):
    x = r + (recid >> 1) * N
    if x >= P:
        return None
    alpha = (pow(x, 3, P) + 7) % P
    beta = pow(alpha, (P + 1) // 4, P)
    y = beta if (beta & 1) == (recid & 1) else P - beta
    R = PointJacobi(CURVE.curve, x, y, 1, N)
    e = int.from_bytes(digest, "big") % N
    rinv = pow(r, -1, N)
    Q = (R * s + G * ((-e) % N)) * rinv
    return compress(Q)


def sign(secret, digest):
    sk = SigningKey.from_secret_exponent(secret, curve=CURVE, hashfunc=hashlib.sha256)
    r_b, s_b = sk.sign_digest_deterministic(digest, hashfunc=hashlib.sha256, sigencode=sigencode_strings)
    r, s = int.from_bytes(r_b, "big"), int.from_bytes(s_b, "big")
    if s > N // 2:
        s = N - s
    pub = compress(sk.verifying_key.pubkey.point)
    for recid in range(4):
        if recover(digest, r, s, recid) == pub:
            return pub, r.to_bytes(32, "big") + s.to_bytes(32, "big") + bytes([recid])
    raise RuntimeError("no recovery id")


def main():
    secrets = [1, 2, 3, 0xDEADBEEF, N - 1, int.from_bytes(hashlib.sha256(b"dtnet golden key").digest(), "big") % N]
    timestamps = [1700000000, 1718000000, 0, 1735689599]
    cluster_secret = b"cluster-shared-secret"
    vectors = []
    for i, d in enumerate(secrets):
        sk = SigningKey.from_secret_exponent(d, curve=CURVE)
        pub = compress(sk.verifying_key.pubkey.point)
        nid = node_id(pub)
        ts = timestamps[i % len(timestamps)]
        digest = hashlib.sha256(f"{nid}:{ts}".encode("ascii")).digest()
        pub2, sig = sign(d, digest)
        assert pub2 == pub
        vectors.append({
            "secret": d.to_bytes(32, "big").hex(),
            "pubkey": pub.hex(),
            "node_id": nid,
            "timestamp": ts,
            "digest": digest.hex(),
            "signature": sig.hex(),
            "hmac": hmac.new(cluster_secret, digest, hashlib.sha256).hexdigest(),
        })
    encoding_key = bytes([2]) + bytes(32)
    out = {
        "cluster_secret": cluster_secret.hex(),
        "encoding_vector": {"pubkey": encoding_key.hex(), "node_id": node_id(encoding_key)},
        "vectors": vectors,
    }
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
