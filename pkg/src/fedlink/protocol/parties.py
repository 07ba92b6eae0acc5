"""Party state machines for secure federated training.

Three roles cooperate to fit the quadratic logistic surrogate on
vertically split rows that were aligned (and partly mis-aligned) by the
private matcher:

* Coordinator C: generates the keypair, holds the match mask, drives the
  epoch/batch loop, decrypts gradients and hold-out losses, updates the
  model.
* Provider A: holds its feature block and the labels, both in the
  matcher's row order.
* Provider B: holds the other feature block in its own matcher order,
  plus the cached encrypted hold-out mean operator, which never travels
  to C.

All inter-party data crosses the transport as serialized frames; raw
features, labels and mask bits only ever appear encrypted (the model
vector and batch indices are deliberately public).  Within a row i of a
batch, A contributes u_i = theta_A . x_Ai and B contributes
v_i = theta_B . x_Bi, so every model-linear quantity splits into a sum
the two providers evaluate locally and combine under encryption.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .. import encoding, learn, paillier
from ..learn import TrainConfig
from . import messages as msg
from .messages import Frame, MessageKind, Phase, ProtocolError
from .transport import InProcessRouter, TranscriptRecorder


class SessionAborted(RuntimeError):
    def __init__(self, reason: str, trace: list | None = None):
        super().__init__(reason)
        self.trace = trace or []


@dataclass
class ProtocolConfig:
    """Public session parameters known to all three parties."""

    train: TrainConfig
    n: int
    key_bits: int = paillier.DEFAULT_KEY_BITS
    base: int = encoding.DEFAULT_BASE
    allow_insecure_keys: bool = False
    session_id: int = 0

    def schedule(self):
        """Hold-out indices, training indices and batch slices; identical
        at every party and in the plaintext reference path."""
        H, T = learn.split_holdout(self.n, self.train.holdout, self.train.seed)
        return H, T, learn.batch_slices(len(T), self.train.batch)


class Endpoint:
    """A party's view of the router: sequenced sends, kind-checked recvs."""

    def __init__(self, router, role: str, session_id: int):
        self.router = router
        self.role = role
        self.session_id = session_id

    def send(self, dst: str, kind: MessageKind, payload: bytes) -> None:
        seq = self.router.next_seq(self.role, dst)
        self.router.send(self.role, dst, Frame(kind, self.session_id, seq, payload))

    def recv(self, src: str, kind: MessageKind) -> Frame:
        frame = self.router.recv(src, self.role)
        if frame.kind == MessageKind.ABORT:
            raise SessionAborted(frame.payload.decode("utf-8", "replace"))
        if frame.kind != kind:
            raise ProtocolError(f"expected {kind.name}, got {frame.kind.name}")
        if frame.session != self.session_id:
            raise ProtocolError("frame from a different session")
        return frame

    def abort(self, reason: str, peers) -> None:
        for dst in peers:
            try:
                self.send(dst, MessageKind.ABORT, reason.encode())
            except Exception:
                pass


def _mask_times_values(enc_mask, values, pk, base):
    """Elementwise <m_i> * c_i for plaintext floats c_i, re-randomized."""
    out = []
    for m_i, c in zip(enc_mask, values):
        out.append(encoding.mul_plain_encrypted(m_i, encoding.encode(float(c), pk, base)))
    return out


def _feature_combination(enc_vec, X_block, pk, base):
    """[dot(<enc_vec>, column_j)] over the columns of a feature block."""
    return [encoding.dot_encrypted_values(enc_vec, X_block[:, j], base=base)
            for j in range(X_block.shape[1])]


# --- Coordinator ----------------------------------------------------------

class Coordinator:
    """Runs keygen, distributes the encrypted mask, drives training."""

    def __init__(self, cfg: ProtocolConfig, mask: np.ndarray, endpoint: Endpoint,
                 keypair: tuple | None = None):
        self.cfg = cfg
        self.mask = np.asarray(mask)
        self.ep = endpoint
        if keypair is None:
            keypair = paillier.keygen(cfg.key_bits, allow_insecure=cfg.allow_insecure_keys)
        self.pk, self.sk = keypair
        self.model: learn.Model | None = None
        self.trace: list[float] = []
        self.epochs = 0
        self.gradients: list[np.ndarray] = []  # decrypted, for test inspection

    def run(self) -> learn.TrainResult:
        try:
            return self._run()
        except Exception as exc:
            self.ep.abort(str(exc), ("A", "B"))
            if isinstance(exc, SessionAborted):
                raise
            raise SessionAborted(str(exc), self.trace) from exc

    def _run(self) -> learn.TrainResult:
        cfg, train = self.cfg, self.cfg.train
        pk_bytes = self.pk.to_bytes()
        self.ep.send("A", MessageKind.PUBLIC_KEY, pk_bytes)
        self.ep.send("B", MessageKind.PUBLIC_KEY, pk_bytes)
        for dst in ("A", "B"):
            self.ep.send(dst, MessageKind.ENC_MASK,
                         msg.pack_encvec(encoding.encrypt_mask_bits(self.mask, self.pk, cfg.base)))

        _, T, slices = cfg.schedule()
        theta: np.ndarray | None = None
        memory: np.ndarray | None = None
        best = np.inf
        stall = 0
        for epoch in range(train.max_epochs):
            for j, sl in enumerate(slices):
                if theta is None:
                    # dimension unknown until the first gradient arrives;
                    # broadcast explicit zeros of unknown length is
                    # impossible, so the first broadcast carries an empty
                    # vector meaning "theta = 0"
                    payload = bytes([Phase.GRADIENT]) + msg.pack_uint(j) + msg.pack_floats([])
                else:
                    payload = bytes([Phase.GRADIENT]) + msg.pack_uint(j) + msg.pack_floats(theta)
                self.ep.send("A", MessageKind.MODEL_BROADCAST, payload)
                frame = self.ep.recv("A", MessageKind.ENC_GRAD_PARTS)
                grad, s_prime = self._decode_gradient(frame.payload)
                if theta is None:
                    theta = np.zeros(len(grad))
                    memory = np.zeros((len(slices), len(grad)))
                memory[j] = grad
                G = train.ridge_matrix(len(theta))
                theta = theta - train.eta * (memory.mean(axis=0) + 2.0 * train.gamma * (G @ theta))
            self.epochs = epoch + 1
            payload = bytes([Phase.LOSS]) + msg.pack_floats(theta)
            self.ep.send("A", MessageKind.MODEL_BROADCAST, payload)
            frame = self.ep.recv("B", MessageKind.ENC_LOSS)
            enc_loss, _ = msg.unpack_encnum(frame.payload, 0, self.pk, self.cfg.base)
            loss = encoding.decrypt_value(enc_loss, self.sk)
            if not np.isfinite(loss):
                raise SessionAborted("non-finite hold-out loss", self.trace)
            self.trace.append(loss)
            if loss < best - train.min_delta:
                best = loss
                stall = 0
            else:
                stall += 1
                if stall >= train.patience:
                    break
        self.ep.send("A", MessageKind.MODEL_BROADCAST, bytes([Phase.DONE]) + msg.pack_floats(theta if theta is not None else []))
        self.model = learn.Model(theta if theta is not None else np.zeros(1))
        return learn.TrainResult(self.model, self.trace, self.epochs)

    def _decode_gradient(self, payload: bytes) -> tuple[np.ndarray, int]:
        s_prime, off = msg.unpack_uint(payload, 0)
        enc, _ = msg.unpack_encvec(payload, off, self.pk, self.cfg.base)
        vals = np.array([encoding.decrypt_value(x, self.sk) for x in enc])
        grad = vals / s_prime  # the 1/s' scale is cheaper after decryption
        self.gradients.append(grad)
        return grad, s_prime


# --- Provider A (features + labels) ---------------------------------------

class ProviderA:
    def __init__(self, cfg: ProtocolConfig, X_A: np.ndarray, y: np.ndarray, endpoint: Endpoint):
        self.cfg = cfg
        self.X = np.asarray(X_A, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.ep = endpoint
        self.pk: paillier.PublicKey | None = None
        self.enc_mask = None

    def run(self) -> None:
        try:
            self._run()
        except SessionAborted:
            raise
        except Exception as exc:
            self.ep.abort(str(exc), ("C", "B"))
            raise SessionAborted(str(exc)) from exc

    def _run(self) -> None:
        cfg = self.cfg
        base = cfg.base
        self.pk = paillier.PublicKey.from_bytes(
            self.ep.recv("C", MessageKind.PUBLIC_KEY).payload, insecure=cfg.allow_insecure_keys)
        self.enc_mask, _ = msg.unpack_encvec(
            self.ep.recv("C", MessageKind.ENC_MASK).payload, 0, self.pk, base)
        if len(self.enc_mask) != cfg.n:
            raise ProtocolError("mask length does not match row count")

        H, T, slices = cfg.schedule()
        h = len(H)
        if h == 0:
            raise ProtocolError("hold-out size must be positive for secure training")
        # hold-out initialization: B receives H, <(1/h) (m o y)_H^T X_A,H>
        # and <m o y>_H, and caches the encrypted hold-out mean operator
        enc_my = _mask_times_values([self.enc_mask[i] for i in H], self.y[H], self.pk, base)
        enc_u = _feature_combination(enc_my, self.X[H] / h, self.pk, base)
        payload = msg.pack_indices(H) + msg.pack_encvec(enc_u) + msg.pack_encvec(enc_my)
        self.ep.send("B", MessageKind.HOLDOUT_INIT, payload)

        d_a = self.X.shape[1]
        while True:
            frame = self.ep.recv("C", MessageKind.MODEL_BROADCAST)
            phase = Phase(frame.payload[0])
            if phase == Phase.DONE:
                self.ep.send("B", MessageKind.ENC_PARTIAL_U, bytes([Phase.DONE]))
                return
            if phase == Phase.GRADIENT:
                batch_idx, off = msg.unpack_uint(frame.payload, 1)
                theta, _ = msg.unpack_floats(frame.payload, off)
                theta_a = theta[:d_a] if len(theta) else np.zeros(d_a)
                batch = T[slices[batch_idx]]
                u = 0.25 * (self.X[batch] @ theta_a) - 0.5 * self.y[batch]
                enc_u_prime = _mask_times_values(
                    [self.enc_mask[i] for i in batch], u, self.pk, base)
                out = bytes([Phase.GRADIENT]) + msg.pack_uint(batch_idx) \
                    + msg.pack_floats(theta) + msg.pack_indices(batch) \
                    + msg.pack_encvec(enc_u_prime)
                self.ep.send("B", MessageKind.ENC_PARTIAL_U, out)
                reply = self.ep.recv("B", MessageKind.ENC_WZ).payload
                enc_w, off = msg.unpack_encvec(reply, 0, self.pk, base)
                enc_z, _ = msg.unpack_encvec(reply, off, self.pk, base)
                enc_z_prime = _feature_combination(enc_w, self.X[batch], self.pk, base)
                grad_payload = msg.pack_uint(len(batch)) + msg.pack_encvec(list(enc_z_prime) + list(enc_z))
                self.ep.send("C", MessageKind.ENC_GRAD_PARTS, grad_payload)
            elif phase == Phase.LOSS:
                theta, _ = msg.unpack_floats(frame.payload, 1)
                theta_a = theta[:d_a] if len(theta) else np.zeros(d_a)
                u = self.X[H] @ theta_a
                mask_H = [self.enc_mask[i] for i in H]
                enc_u_sq = encoding.dot_encrypted_values(mask_H, u * u / (8.0 * h), base=base)
                enc_mu_u = _mask_times_values(mask_H, u, self.pk, base)
                out = bytes([Phase.LOSS]) + msg.pack_floats(theta) \
                    + msg.pack_encnum(enc_u_sq) + msg.pack_encvec(enc_mu_u)
                self.ep.send("B", MessageKind.ENC_PARTIAL_U, out)
            else:
                raise ProtocolError(f"unexpected phase {phase}")


# --- Provider B (features only) -------------------------------------------

class ProviderB:
    def __init__(self, cfg: ProtocolConfig, X_B: np.ndarray, endpoint: Endpoint):
        self.cfg = cfg
        self.X = np.asarray(X_B, dtype=np.float64)
        self.ep = endpoint
        self.pk: paillier.PublicKey | None = None
        self.enc_mask = None
        self.enc_mu_H = None  # cached encrypted hold-out mean operator
        self.H: np.ndarray | None = None

    def run(self) -> None:
        try:
            self._run()
        except SessionAborted:
            raise
        except Exception as exc:
            self.ep.abort(str(exc), ("C", "A"))
            raise SessionAborted(str(exc)) from exc

    def _run(self) -> None:
        cfg = self.cfg
        base = cfg.base
        self.pk = paillier.PublicKey.from_bytes(
            self.ep.recv("C", MessageKind.PUBLIC_KEY).payload, insecure=cfg.allow_insecure_keys)
        self.enc_mask, _ = msg.unpack_encvec(
            self.ep.recv("C", MessageKind.ENC_MASK).payload, 0, self.pk, base)

        init = self.ep.recv("A", MessageKind.HOLDOUT_INIT).payload
        self.H, off = msg.unpack_indices(init, 0)
        enc_u, off = msg.unpack_encvec(init, off, self.pk, base)
        enc_my, _ = msg.unpack_encvec(init, off, self.pk, base)
        h = len(self.H)
        enc_v = _feature_combination(enc_my, self.X[self.H] / h, self.pk, base)
        self.enc_mu_H = list(enc_u) + list(enc_v)  # stays here; never sent to C

        d_b = self.X.shape[1]
        while True:
            frame = self.ep.recv("A", MessageKind.ENC_PARTIAL_U)
            phase = Phase(frame.payload[0])
            if phase == Phase.DONE:
                return
            if phase == Phase.GRADIENT:
                _, off = msg.unpack_uint(frame.payload, 1)
                theta, off = msg.unpack_floats(frame.payload, off)
                batch, off = msg.unpack_indices(frame.payload, off)
                enc_u_prime, _ = msg.unpack_encvec(frame.payload, off, self.pk, base)
                theta_b = theta[-d_b:] if len(theta) else np.zeros(d_b)
                v = 0.25 * (self.X[batch] @ theta_b)
                enc_mv = _mask_times_values([self.enc_mask[i] for i in batch], v, self.pk, base)
                enc_w = [encoding.add_encrypted(a, b) for a, b in zip(enc_u_prime, enc_mv)]
                enc_z = _feature_combination(enc_w, self.X[batch], self.pk, base)
                self.ep.send("A", MessageKind.ENC_WZ, msg.pack_encvec(enc_w) + msg.pack_encvec(enc_z))
            elif phase == Phase.LOSS:
                theta, off = msg.unpack_floats(frame.payload, 1)
                enc_u_sq, off = msg.unpack_encnum(frame.payload, off, self.pk, base)
                enc_mu_u, _ = msg.unpack_encvec(frame.payload, off, self.pk, base)
                theta_b = theta[-d_b:] if len(theta) else np.zeros(d_b)
                v = self.X[self.H] @ theta_b
                mask_H = [self.enc_mask[i] for i in self.H]
                enc_v_sq = encoding.dot_encrypted_values(mask_H, v * v / (8.0 * h), base=base)
                enc_cross = encoding.dot_encrypted_values(enc_mu_u, v / (4.0 * h), base=base)
                total = encoding.add_encrypted(encoding.add_encrypted(enc_u_sq, enc_v_sq), enc_cross)
                enc_mean_term = encoding.dot_encrypted_values(self.enc_mu_H, -0.5 * theta, base=base)
                enc_loss = encoding.add_encrypted(total, enc_mean_term)
                self.ep.send("C", MessageKind.ENC_LOSS, msg.pack_encnum(enc_loss))
            else:
                raise ProtocolError(f"unexpected phase {phase}")


# --- Session driver -------------------------------------------------------

@dataclass
class SessionResult:
    model: learn.Model
    trace: list[float]
    epochs: int
    recorder: TranscriptRecorder
    gradients: list[np.ndarray] = field(default_factory=list)


def run_session(cfg: ProtocolConfig, X_A: np.ndarray, y: np.ndarray,
                X_B: np.ndarray, mask: np.ndarray,
                router: InProcessRouter | None = None,
                keypair: tuple | None = None) -> SessionResult:
    """Execute a full three-party training session on in-process threads.

    The caller plays the experiment harness and therefore sees all three
    parties' inputs; the parties themselves only touch their own state
    and the transport.
    """
    router = router or InProcessRouter()
    sid = cfg.session_id
    coord = Coordinator(cfg, mask, Endpoint(router, "C", sid), keypair=keypair)
    prov_a = ProviderA(cfg, X_A, y, Endpoint(router, "A", sid))
    prov_b = ProviderB(cfg, X_B, Endpoint(router, "B", sid))

    errors: dict[str, Exception] = {}
    result: dict[str, learn.TrainResult] = {}

    def wrap(name, fn):
        def runner():
            try:
                out = fn()
                if out is not None:
                    result[name] = out
            except Exception as exc:
                errors[name] = exc
        return runner

    threads = [threading.Thread(target=wrap(n, f), name=n)
               for n, f in (("C", coord.run), ("A", prov_a.run), ("B", prov_b.run))]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=600)
    if "C" in errors:
        exc = errors["C"]
        raise exc if isinstance(exc, SessionAborted) else SessionAborted(str(exc), coord.trace)
    if errors:
        raise SessionAborted("; ".join(f"{k}: {v}" for k, v in errors.items()), coord.trace)
    res = result["C"]
    return SessionResult(res.model, res.trace, res.epochs, router.recorder, coord.gradients)
