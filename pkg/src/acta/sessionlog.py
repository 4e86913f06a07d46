"""Append-only session log: newline-delimited `name k=v ...` records with a
chained content hash per session segment, plus a float32 sidecar for raw EEG.

Float fields are rendered at fixed precision (6 decimals; 8 for coordinates)
and every producer quantizes at the source, so replaying a log regenerates
byte-identical derived records.
"""

import hashlib
import urllib.parse

import numpy as np

from .errors import CorruptLog

LOG_VERSION = 1


def fmt6(x):
    return f"{x:.6f}"


def fmt8(x):
    return f"{x:.8f}"


def qstr(s):
    """Quote free text so it stays a single space-free token."""
    return urllib.parse.quote(str(s), safe="")


def unqstr(s):
    return urllib.parse.unquote(s)


def render_record(name, pairs):
    return name + " " + " ".join(f"{k}={v}" for k, v in pairs)


def parse_record(line):
    parts = line.rstrip("\n").split(" ")
    fields = {}
    for p in parts[1:]:
        k, _, v = p.partition("=")
        fields[k] = v
    return parts[0], fields


class SessionLogWriter:
    def __init__(self, path, scenario_hash="", seed_set="", phase=""):
        self.path = str(path)
        self.sidecar_path = self.path + ".eeg"
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        self._sidecar = None
        self._sidecar_offset = 0
        self._hash = hashlib.sha256()
        self.lines = []
        self.on_line = None  # callback(index, line) for live subscribers
        self.record(
            "acta-log",
            [("version", LOG_VERSION), ("scenario", scenario_hash), ("seedset", seed_set),
             ("phase", phase)],
        )

    def record(self, name, pairs):
        line = render_record(name, pairs)
        if "\n" in line:
            raise ValueError("log records must be single lines")
        self._hash.update(line.encode() + b"\n")
        self._fh.write(line + "\n")
        self.lines.append(line)
        if self.on_line:
            self.on_line(len(self.lines) - 1, line)
        return line

    def sidecar_write(self, arr):
        """Append a float32 array (C-order, channel-major); returns (offset, count)."""
        if self._sidecar is None:
            self._sidecar = open(self.sidecar_path, "wb")
        data = np.ascontiguousarray(arr, dtype="<f4")
        offset = self._sidecar_offset
        self._sidecar.write(data.tobytes())
        self._sidecar_offset += data.size
        return offset, data.size

    def chain_hash(self):
        return self._hash.hexdigest()

    def end_session(self, index):
        self.record("session-end", [("index", index), ("hash", self.chain_hash())])
        self._fh.flush()

    def close(self):
        self.record("log-end", [("hash", self.chain_hash())])
        self._fh.close()
        if self._sidecar is not None:
            self._sidecar.close()


class SessionLogReader:
    """Parses a log, verifying the hash chain; raises CorruptLog on damage."""

    def __init__(self, path):
        self.path = str(path)
        self.sidecar_path = self.path + ".eeg"
        with open(self.path, "r", encoding="utf-8", newline="\n") as fh:
            raw = fh.read()
        if raw and not raw.endswith("\n"):
            raise CorruptLog("log does not end with a newline (truncated)")
        self.lines = raw.splitlines()
        self.records = []
        hasher = hashlib.sha256()
        ended = False
        for line in self.lines:
            name, fields = parse_record(line)
            if name in ("session-end", "log-end"):
                if fields.get("hash") != hasher.hexdigest():
                    raise CorruptLog(f"hash mismatch at '{name}' record")
                if name == "log-end":
                    ended = True
            hasher.update(line.encode() + b"\n")
            self.records.append((name, fields))
        if not ended:
            raise CorruptLog("missing log-end record (truncated log)")
        self._sidecar_data = None

    def sidecar(self, offset, count):
        if self._sidecar_data is None:
            with open(self.sidecar_path, "rb") as fh:
                self._sidecar_data = np.frombuffer(fh.read(), dtype="<f4")
        return self._sidecar_data[offset : offset + count]

    def select(self, name):
        return [fields for n, fields in self.records if n == name]

    def sessions(self):
        """Record groups per session: {index: [(name, fields), ...]}."""
        out = {}
        current = None
        for name, fields in self.records:
            if name == "session-begin":
                current = int(fields["index"])
                out[current] = []
            if current is not None:
                out[current].append((name, fields))
            if name == "session-end":
                current = None
        return out
