"""Standard MIDI File (formats 0 and 1) reader/writer with a tempo map.

Only what the note perturbation needs: absolute-tick events, note-on/off
pairing, and tick<->seconds conversion. Running status is accepted on read
and never emitted on write; meta and sysex payloads are carried through
byte-for-byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, IoError

_CHANNEL_DATA_LEN = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}
DEFAULT_TEMPO = 500_000  # microseconds per quarter note


@dataclass
class MidiEvent:
    tick: int
    kind: str      # "channel" | "meta" | "sysex"
    status: int    # status byte (channel) / meta type (meta) / 0xF0 or 0xF7 (sysex)
    data: bytes    # parameter bytes (channel) or raw payload (meta/sysex)


@dataclass
class MidiTrack:
    events: list[MidiEvent] = field(default_factory=list)


@dataclass
class Note:
    """One paired note with indices back into its track's event list."""

    track: int
    on_index: int
    off_index: int
    channel: int
    pitch: int
    velocity: int
    on_tick: int
    off_tick: int


@dataclass
class MidiFile:
    format: int
    division: int   # raw MThd division word (PPQN or SMPTE)
    tracks: list[MidiTrack]


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(f"{self.path}: truncated MIDI data")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            byte = self.u8()
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        raise FormatError(f"{self.path}: variable-length quantity longer than 4 bytes")


def _parse_track(reader: _Reader) -> MidiTrack:
    if reader.take(4) != b"MTrk":
        raise FormatError(f"{reader.path}: expected MTrk chunk")
    (length,) = struct.unpack(">I", reader.take(4))
    end = reader.pos + length
    track = MidiTrack()
    tick = 0
    running_status = None
    while reader.pos < end:
        tick += reader.varlen()
        byte = reader.u8()
        if byte < 0x80:
            if running_status is None:
                raise FormatError(f"{reader.path}: data byte with no running status")
            status, first = running_status, bytes([byte])
        else:
            status, first = byte, b""
        if status == 0xFF:
            meta_type = reader.u8()
            payload = reader.take(reader.varlen())
            track.events.append(MidiEvent(tick, "meta", meta_type, payload))
            running_status = None
        elif status in (0xF0, 0xF7):
            payload = reader.take(reader.varlen())
            track.events.append(MidiEvent(tick, "sysex", status, payload))
            running_status = None
        elif 0x80 <= status < 0xF0:
            need = _CHANNEL_DATA_LEN[status & 0xF0]
            data = first + reader.take(need - len(first))
            track.events.append(MidiEvent(tick, "channel", status, data))
            running_status = status
        else:
            raise FormatError(f"{reader.path}: unsupported status byte 0x{status:02x}")
    if reader.pos != end:
        raise FormatError(f"{reader.path}: track chunk overran its declared length")
    return track


def read_midi(path) -> MidiFile:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    reader = _Reader(blob, path)
    if reader.take(4) != b"MThd":
        raise FormatError(f"{path}: not a Standard MIDI File (missing MThd)")
    (header_len,) = struct.unpack(">I", reader.take(4))
    if header_len < 6:
        raise FormatError(f"{path}: MThd length {header_len} < 6")
    fmt, ntrks, division = struct.unpack(">HHH", reader.take(6))
    reader.take(header_len - 6)
    if fmt not in (0, 1):
        raise FormatError(f"{path}: SMF format {fmt} unsupported (0 and 1 only)")
    tracks = [_parse_track(reader) for _ in range(ntrks)]
    return MidiFile(format=fmt, division=division, tracks=tracks)


def _encode_varlen(value: int) -> bytes:
    if value < 0:
        raise FormatError(f"negative delta time {value}")
    chunks = [value & 0x7F]
    value >>= 7
    while value:
        chunks.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(chunks))


def write_midi(midi: MidiFile, path) -> None:
    """Serialize with canonical encoding: full status bytes, sorted-by-tick events."""
    out = bytearray()
    out += b"MThd" + struct.pack(">IHHH", 6, midi.format, len(midi.tracks), midi.division)
    for track in midi.tracks:
        ordered = sorted(enumerate(track.events), key=lambda item: (item[1].tick, item[0]))
        body = bytearray()
        tick = 0
        for _, event in ordered:
            body += _encode_varlen(event.tick - tick)
            tick = event.tick
            if event.kind == "meta":
                body += bytes([0xFF, event.status]) + _encode_varlen(len(event.data)) + event.data
            elif event.kind == "sysex":
                body += bytes([event.status]) + _encode_varlen(len(event.data)) + event.data
            else:
                body += bytes([event.status]) + event.data
        out += b"MTrk" + struct.pack(">I", len(body)) + bytes(body)
    try:
        Path(path).write_bytes(bytes(out))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Notes and timing

def pair_notes(midi: MidiFile) -> list[Note]:
    """Match note-ons with their note-offs (FIFO per channel+pitch), in parse order."""
    notes = []
    for track_index, track in enumerate(midi.tracks):
        open_notes: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
        for event_index, event in enumerate(track.events):
            if event.kind != "channel":
                continue
            status = event.status & 0xF0
            channel = event.status & 0x0F
            if status == 0x90 and event.data[1] > 0:
                key = (channel, event.data[0])
                open_notes.setdefault(key, []).append((event_index, event.tick, event.data[1]))
            elif status == 0x80 or (status == 0x90 and event.data[1] == 0):
                key = (channel, event.data[0])
                stack = open_notes.get(key)
                if not stack:
                    raise FormatError(
                        f"track {track_index}: note-off without matching note-on "
                        f"(channel {channel}, pitch {event.data[0]})"
                    )
                on_index, on_tick, velocity = stack.pop(0)
                notes.append(
                    Note(
                        track=track_index,
                        on_index=on_index,
                        off_index=event_index,
                        channel=channel,
                        pitch=event.data[0],
                        velocity=velocity,
                        on_tick=on_tick,
                        off_tick=event.tick,
                    )
                )
        dangling = [key for key, stack in open_notes.items() if stack]
        if dangling:
            raise FormatError(f"track {track_index}: note-on without note-off for {dangling}")
    notes.sort(key=lambda n: (n.track, n.on_index))
    return notes


class TempoMap:
    """Piecewise-constant tempo over ticks; converts ticks to seconds and back."""

    def __init__(self, midi: MidiFile):
        self.division = midi.division
        if self.division & 0x8000:
            # SMPTE division: fixed frames-per-second timing, tempo events irrelevant.
            fps = 256 - ((self.division >> 8) & 0xFF)
            self._ticks_per_second = float(fps * (self.division & 0xFF))
            self._smpte = True
            return
        self._smpte = False
        changes: list[tuple[int, int]] = []
        for track in midi.tracks:
            for event in track.events:
                if event.kind == "meta" and event.status == 0x51:
                    if len(event.data) != 3:
                        raise FormatError("set-tempo meta event must carry 3 bytes")
                    changes.append((event.tick, int.from_bytes(event.data, "big")))
        changes.sort()
        if not changes or changes[0][0] > 0:
            changes.insert(0, (0, DEFAULT_TEMPO))
        self._ticks = [tick for tick, _ in changes]
        self._tempos = [tempo for _, tempo in changes]
        self._seconds = [0.0]
        for i in range(1, len(changes)):
            span = self._ticks[i] - self._ticks[i - 1]
            self._seconds.append(
                self._seconds[-1] + span * self._tempos[i - 1] / (1e6 * self.division)
            )

    def _segment(self, values: list, probe: float) -> int:
        lo, hi = 0, len(values) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if values[mid] <= probe:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def tick_to_seconds(self, tick: float) -> float:
        if self._smpte:
            return tick / self._ticks_per_second
        i = self._segment(self._ticks, tick)
        return self._seconds[i] + (tick - self._ticks[i]) * self._tempos[i] / (1e6 * self.division)

    def seconds_to_tick(self, seconds: float) -> int:
        if self._smpte:
            return round(seconds * self._ticks_per_second)
        i = self._segment(self._seconds, seconds)
        ticks = self._ticks[i] + (seconds - self._seconds[i]) * 1e6 * self.division / self._tempos[i]
        return round(ticks)
