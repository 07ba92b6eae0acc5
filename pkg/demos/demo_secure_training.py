"""Three-party encrypted training, in-process and over TCP.

Provider A holds half the features and the labels, Provider B the other
half, the Coordinator holds the match mask from entity resolution.  The
parties exchange only ciphertexts and the public model; the demo
verifies the result against plaintext training and inspects the
transcript.

Set FEDLINK_BIND (default 127.0.0.1:39170) to choose the TCP base
address for the socket-mode second half.
"""

import os
import socket
import threading

import numpy as np

from fedlink import learn
from fedlink.learn import TrainConfig
from fedlink.protocol import run_session, scan_transcript
from fedlink.protocol.parties import (Coordinator, Endpoint, ProtocolConfig,
                                      ProviderA, ProviderB)
from fedlink.protocol.transport import TcpRouter, TranscriptRecorder


def make_instance(n=80, d_a=3, d_b=3, seed=0):
    rng = np.random.default_rng(seed)
    X_A = rng.normal(size=(n, d_a))
    X_B = rng.normal(size=(n, d_b))
    y = np.sign(rng.normal(size=n))
    y[y == 0] = 1.0
    mask = (rng.uniform(size=n) < 0.85).astype(int)
    return X_A, y, X_B, mask


def in_process():
    print("=== in-process session ===")
    X_A, y, X_B, mask = make_instance()
    cfg = ProtocolConfig(train=TrainConfig(eta=0.05, gamma=0.01, batch=16,
                                           holdout=8, patience=3,
                                           max_epochs=6), n=len(y))
    res = run_session(cfg, X_A, y, X_B, mask)
    ref = learn.train_sag(learn.Dataset(np.hstack([X_A, X_B]), y), cfg.train,
                          mask=mask.astype(float))
    print(f"epochs: {res.epochs}, hold-out loss trace: "
          + ", ".join(f"{v:.4f}" for v in res.trace))
    gap = float(np.max(np.abs(res.model.theta - ref.model.theta)))
    print(f"max |secure - plaintext| coefficient gap: {gap:.2e}")
    audit = scan_transcript(res.recorder.payloads(),
                            features=np.hstack([X_A, X_B]), labels=y, mask=mask)
    print(f"transcript frames: {len(res.recorder.entries)}, "
          f"plaintext secrets found: {len(audit.findings)}")
    return res.model


def _pair(host, port):
    """One listener/connector pair -> a connected TCP socket duo."""
    srv = socket.socket()
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(1)
    cli = socket.socket()
    cli.connect((host, port))
    acc, _ = srv.accept()
    srv.close()
    return acc, cli


def over_tcp(reference_model):
    print("\n=== TCP session (three routers, three sockets) ===")
    host, base = os.environ.get("FEDLINK_BIND", "127.0.0.1:39170").rsplit(":", 1)
    base = int(base)
    ca_c, ca_a = _pair(host, base)      # C <-> A
    cb_c, cb_b = _pair(host, base + 1)  # C <-> B
    ab_a, ab_b = _pair(host, base + 2)  # A <-> B

    recorder = TranscriptRecorder()  # narrator's tap on C's links
    router_c = TcpRouter({("C", "A"): ca_c, ("A", "C"): ca_c,
                          ("C", "B"): cb_c, ("B", "C"): cb_c}, recorder)
    router_a = TcpRouter({("A", "C"): ca_a, ("C", "A"): ca_a,
                          ("A", "B"): ab_a, ("B", "A"): ab_a})
    router_b = TcpRouter({("B", "C"): cb_b, ("C", "B"): cb_b,
                          ("B", "A"): ab_b, ("A", "B"): ab_b})

    X_A, y, X_B, mask = make_instance()
    cfg = ProtocolConfig(train=TrainConfig(eta=0.05, gamma=0.01, batch=16,
                                           holdout=8, patience=3,
                                           max_epochs=6), n=len(y))
    coord = Coordinator(cfg, mask, Endpoint(router_c, "C", cfg.session_id))
    prov_a = ProviderA(cfg, X_A, y, Endpoint(router_a, "A", cfg.session_id))
    prov_b = ProviderB(cfg, X_B, Endpoint(router_b, "B", cfg.session_id))
    threads = [threading.Thread(target=p.run, name=name)
               for name, p in (("C", coord), ("A", prov_a), ("B", prov_b))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for s in (ca_c, ca_a, cb_c, cb_b, ab_a, ab_b):
        s.close()
    gap = float(np.max(np.abs(coord.model.theta - reference_model.theta)))
    print(f"TCP vs in-process coefficient gap: {gap:.2e} "
          "(identical plaintext math, different transport)")


def main():
    model = in_process()
    over_tcp(model)


if __name__ == "__main__":
    main()
