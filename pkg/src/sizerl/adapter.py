"""Wire protocol for delegating metric evaluation to an external simulator.

Newline-delimited text, one request and one response per line:

    request:  SIM <circuit_id> <p_1> ... <p_N>
    response: OK <m_1> ... <m_K>     or     ERR <message>

Values are printed in scientific notation with a dot decimal separator
regardless of locale.  Transports: a TCP socket ("host:port") or a child
process speaking the protocol on stdin/stdout ("exec:<command>").
"""

import shlex
import socket
import subprocess
import threading

import numpy as np


class AdapterError(RuntimeError):
    pass


class AdapterTimeout(AdapterError):
    pass


def format_request(circuit_id, values):
    body = " ".join(f"{v:.17e}" for v in np.asarray(values, dtype=np.float64))
    return f"SIM {circuit_id} {body}\n"


def parse_response(line, expected_k):
    line = line.strip()
    if not line:
        raise AdapterError("empty response from adapter")
    parts = line.split()
    if parts[0] == "ERR":
        raise AdapterError(f"adapter error: {' '.join(parts[1:]) or '(no message)'}")
    if parts[0] != "OK":
        raise AdapterError(f"malformed response (expected OK/ERR): {line!r}")
    vals = parts[1:]
    if len(vals) != expected_k:
        raise AdapterError(
            f"protocol error: expected {expected_k} metrics, got {len(vals)}"
        )
    try:
        m = np.array([float(v) for v in vals])
    except ValueError as e:
        raise AdapterError(f"unparseable metric in response: {e}") from e
    if not np.all(np.isfinite(m)):
        raise AdapterError(f"non-finite metric in response: {m}")
    return m


class SocketAdapter:
    """Client for an adapter listening on a local socket."""

    def __init__(self, host, port, timeout=30.0):
        self.timeout = timeout
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self._sock.makefile("rw", encoding="ascii", newline="\n")

    def query(self, circuit_id, values, expected_k):
        self._file.write(format_request(circuit_id, values))
        self._file.flush()
        try:
            line = self._file.readline()
        except (socket.timeout, TimeoutError) as e:
            raise AdapterTimeout(f"adapter did not respond within {self.timeout}s") from e
        if line == "":
            raise AdapterError("adapter closed the connection")
        return parse_response(line, expected_k)

    def close(self):
        try:
            self._file.close()
        finally:
            self._sock.close()


class PipeAdapter:
    """Client for an adapter child process speaking the protocol on stdio."""

    def __init__(self, command, timeout=30.0):
        self.timeout = timeout
        self._proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )

    def query(self, circuit_id, values, expected_k):
        if self._proc.poll() is not None:
            raise AdapterError(f"adapter process exited with code {self._proc.returncode}")
        self._proc.stdin.write(format_request(circuit_id, values))
        self._proc.stdin.flush()
        line = [None]

        def _read():
            line[0] = self._proc.stdout.readline()

        reader = threading.Thread(target=_read, daemon=True)
        reader.start()
        reader.join(self.timeout)
        if reader.is_alive():
            self._proc.kill()
            raise AdapterTimeout(f"adapter did not respond within {self.timeout}s")
        if not line[0]:
            raise AdapterError("adapter closed stdout")
        return parse_response(line[0], expected_k)

    def close(self):
        if self._proc.poll() is None:
            self._proc.terminate()


def open_adapter(endpoint, timeout=30.0):
    """Create a client from an endpoint string: 'host:port' or 'exec:cmd'."""
    if endpoint.startswith("exec:"):
        return PipeAdapter(endpoint[len("exec:"):], timeout=timeout)
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"adapter endpoint must be 'host:port' or 'exec:cmd', got {endpoint!r}")
    return SocketAdapter(host, int(port), timeout=timeout)


def serve_echo(circuits, host="127.0.0.1", port=0):
    """Test server answering every SIM request with the circuit's g values.

    Returns (server_socket, port, thread); close the socket to stop.  One
    request at a time per connection, matching the protocol contract.
    """
    by_id = {c.cid: c for c in circuits}
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(4)

    def _serve():
        while True:
            try:
                conn, _ = srv.accept()
            except OSError:
                return
            with conn, conn.makefile("rw", encoding="ascii", newline="\n") as f:
                for line in f:
                    parts = line.split()
                    if len(parts) < 2 or parts[0] != "SIM" or parts[1] not in by_id:
                        f.write("ERR bad request\n")
                    else:
                        g = by_id[parts[1]].g_values
                        f.write("OK " + " ".join(f"{v:.17e}" for v in g) + "\n")
                    f.flush()

    thread = threading.Thread(target=_serve, daemon=True)
    thread.start()
    return srv, srv.getsockname()[1], thread
