"""Interactive manipulation service: real-time stepper plus a WebSocket
controller endpoint.

One controller at a time drives the coupling over text frames; state
snapshots stream back at a configurable decimation. The stepper owns the
scene; the network side only touches it through a mailbox (inbound pose
targets and attach/detach commands, read once per step) and a bounded
drop-oldest snapshot queue (outbound).

Wire protocol (JSON text frames):
  inbound  {"type":"attach","body":name,"grab_point":[x,y,z]}
           {"type":"target","position":[x,y,z],"orientation":[w,x,y,z]}
           {"type":"detach"}
  outbound {"type":"state","step":int,"time":s,"bodies":[
                {"name":...,"pose":{"position":[...],"orientation":[...]},
                 "vertices":[[x,y,z],...]}],
            "contacts":[{"p":[...],"n":[...],"f":[...],"status":...}],
            "coupling_wrench":[fx,fy,fz,tx,ty,tz]}
           {"type":"error","code":...,"message":...}
Units are SI throughout (meters, seconds, newtons).
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import deque

import numpy as np
from websockets.sync.server import serve

from .dynamics import attach_coupling, detach_coupling, step_scene
from .scenario import Scenario

log = logging.getLogger("contactdyn.session")


class Mailbox:
    """Single-writer single-reader slots for controller input."""

    def __init__(self):
        self._lock = threading.Lock()
        self._target = None
        self._commands = []

    def put_target(self, position, orientation):
        with self._lock:
            self._target = (position, orientation)

    def put_command(self, command):
        with self._lock:
            self._commands.append(command)

    def drain(self):
        with self._lock:
            target, self._target = self._target, None
            commands, self._commands = self._commands, []
        return target, commands


class SnapshotQueue:
    """Bounded drop-oldest queue feeding the connection sender."""

    def __init__(self, maxlen=4):
        self._items = deque(maxlen=maxlen)
        self._cond = threading.Condition()

    def push(self, item):
        with self._cond:
            self._items.append(item)
            self._cond.notify_all()

    def pop(self, timeout=0.5):
        with self._cond:
            if not self._items:
                self._cond.wait(timeout)
            if self._items:
                return self._items.popleft()
            return None


def _round(arr, digits=7):
    return np.round(np.asarray(arr, dtype=float), digits).tolist()


def encode_snapshot(snapshot) -> str:
    bodies = []
    for name, entry in snapshot.bodies.items():
        pos, quat = entry["pose"]
        bodies.append({
            "name": name,
            "pose": {"position": _round(pos), "orientation": _round(quat)},
            "vertices": _round(entry["vertices"]),
        })
    contacts = [
        {
            "p": _round(c.point),
            "n": _round(c.normal),
            "f": _round(c.force_world),
            "status": c.status,
        }
        for c in snapshot.contacts
    ]
    return json.dumps({
        "type": "state",
        "step": snapshot.step,
        "time": round(snapshot.time, 9),
        "bodies": bodies,
        "contacts": contacts,
        "coupling_wrench": _round(snapshot.coupling_wrench),
    })


def _error_frame(code, message) -> str:
    return json.dumps({"type": "error", "code": code, "message": message})


class SessionServer:
    """Runs the scenario in real time and serves one controller."""

    def __init__(self, scenario: Scenario, port: int, host="127.0.0.1",
                 decimation=2, realtime=True, max_steps=None):
        self.scenario = scenario
        self.port = port
        self.host = host
        self.decimation = max(int(decimation), 1)
        self.realtime = realtime
        self.max_steps = max_steps
        self.mailbox = Mailbox()
        self.snapshots = SnapshotQueue()
        self._interactive = False
        self._stop = threading.Event()
        self._controller_lock = threading.Lock()
        self._controller = None
        self._scene = None
        self._server = None
        self._threads = []
        self.overruns = 0

    # --- stepping -------------------------------------------------------

    def _apply_inputs(self):
        target, commands = self.mailbox.drain()
        scene = self._scene
        if commands or target is not None:
            self._interactive = True
        for cmd in commands:
            kind = cmd.get("type")
            try:
                if kind == "attach":
                    # an operator attach always re-grabs
                    detach_coupling(scene)
                    attach_coupling(scene, cmd["body"],
                                    np.asarray(cmd["grab_point"], float))
                elif kind == "detach":
                    detach_coupling(scene)
            except Exception as exc:
                self._send_error("command_failed", str(exc))
        if target is not None and scene.coupling is not None \
                and scene.coupling.attached_body is not None:
            scene.coupling.set_target(target[0], target[1])

    def _send_error(self, code, message):
        conn = self._controller
        if conn is not None:
            try:
                conn.send(_error_frame(code, message))
            except Exception:
                pass

    def _step_loop(self):
        scene = self._scene
        dt = scene.dt
        next_tick = time.perf_counter()
        steps = 0
        while not self._stop.is_set():
            if self.max_steps is not None and steps >= self.max_steps:
                break
            # scripted autopilot carries the scene until the first
            # controller input, then the operator owns the coupling
            self._apply_inputs()
            if self._interactive:
                snap = step_scene(scene)
            else:
                nodal, wrench = self.scenario.script.apply(scene)
                snap = step_scene(scene, nodal_loads=nodal, wrenches=wrench)
            steps += 1
            if steps % self.decimation == 0:
                self.snapshots.push(encode_snapshot(snap))
            if self.realtime:
                next_tick += dt
                now = time.perf_counter()
                if now < next_tick:
                    time.sleep(next_tick - now)
                else:
                    # overrun: log it and restart the grid, no catch-up burst
                    self.overruns += 1
                    next_tick = now
        self._stop.set()

    # --- networking -----------------------------------------------------

    def _sender_loop(self, conn):
        while not self._stop.is_set() and self._controller is conn:
            frame = self.snapshots.pop(timeout=0.2)
            if frame is None:
                continue
            try:
                conn.send(frame)
            except Exception:
                break

    def _handler(self, conn):
        with self._controller_lock:
            if self._controller is not None:
                try:
                    conn.send(_error_frame("busy",
                                           "another controller is connected"))
                finally:
                    conn.close()
                return
            self._controller = conn
        sender = threading.Thread(target=self._sender_loop, args=(conn,),
                                  daemon=True)
        sender.start()
        try:
            for raw in conn:
                try:
                    msg = json.loads(raw)
                    if not isinstance(msg, dict):
                        raise ValueError("frame must be an object")
                    kind = msg.get("type")
                    if kind == "target":
                        pos = np.asarray(msg["position"], float).reshape(3)
                        quat = msg.get("orientation")
                        if quat is not None:
                            quat = np.asarray(quat, float).reshape(4)
                        self.mailbox.put_target(pos, quat)
                    elif kind in ("attach", "detach"):
                        self.mailbox.put_command(msg)
                    else:
                        raise ValueError(f"unknown message type {kind!r}")
                except Exception as exc:
                    try:
                        conn.send(_error_frame("bad_message", str(exc)))
                    except Exception:
                        break
        finally:
            with self._controller_lock:
                if self._controller is conn:
                    self._controller = None
            # the simulation continues; a dropped controller releases the body
            self.mailbox.put_command({"type": "detach"})

    # --- lifecycle ------------------------------------------------------

    def start(self):
        self._scene = self.scenario.build()
        self._server = serve(self._handler, self.host, self.port)
        srv = threading.Thread(target=self._server.serve_forever, daemon=True)
        srv.start()
        stepper = threading.Thread(target=self._step_loop, daemon=True)
        stepper.start()
        self._threads = [srv, stepper]
        return self

    def stop(self):
        self._stop.set()
        if self._server is not None:
            self._server.shutdown()
        for t in self._threads:
            t.join(timeout=2.0)

    def wait(self):
        try:
            while not self._stop.wait(0.25):
                pass
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()


def serve_session(scenario: Scenario, port: int, host="127.0.0.1",
                  decimation=2, realtime=True, max_steps=None):
    """Blocking entry point: run the session until interrupted."""
    server = SessionServer(scenario, port, host=host, decimation=decimation,
                           realtime=realtime, max_steps=max_steps)
    server.start()
    log.info("session %r serving on ws://%s:%d", scenario.name, host, port)
    server.wait()
    return server
