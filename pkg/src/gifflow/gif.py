"""Animated GIF decoding (GIF87a/GIF89a) to fully composited RGB frames.

Each animation frame is returned as a complete picture: frame rectangles are
drawn onto a persistent logical-screen canvas honoring disposal methods and
transparency, so downstream code never sees partial deltas.  Interlaced
image data is de-interlaced, local color tables override the global one, and
per-frame delays from Graphic Control Extensions are preserved in
centiseconds.

Decode failures raise :class:`GifDecodeError` carrying the byte offset at
which the stream stopped making sense.
"""

from __future__ import annotations

import numpy as np

from .images import ColorImage, FrameSequence


class GifDecodeError(ValueError):
    """Malformed or truncated GIF stream; ``offset`` is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise GifDecodeError("unexpected end of stream", len(self.data))
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        raw = self.take(2)
        return raw[0] | (raw[1] << 8)


def _read_color_table(r: _Reader, bits: int) -> np.ndarray:
    n = 2 ** bits
    raw = r.take(3 * n)
    return np.frombuffer(raw, dtype=np.uint8).reshape(n, 3)


def _read_subblocks(r: _Reader) -> bytes:
    chunks = []
    while True:
        size = r.u8()
        if size == 0:
            return b"".join(chunks)
        chunks.append(r.take(size))


def _skip_subblocks(r: _Reader) -> None:
    while True:
        size = r.u8()
        if size == 0:
            return
        r.take(size)


def _lzw_decode(data: bytes, min_code_size: int, n_pixels: int, at: int) -> bytearray:
    """Decode GIF-flavor LZW into exactly ``n_pixels`` palette indices.

    ``at`` is the byte offset of the image data, used for error reporting.
    Variable code width grows from min_code_size+1 up to 12 bits; the table
    is rebuilt on clear codes and frozen at 4096 entries.
    """
    clear_code = 1 << min_code_size
    end_code = clear_code + 1

    def fresh_table() -> list[bytes]:
        return [bytes([i]) for i in range(clear_code)] + [b"", b""]

    table = fresh_table()
    code_len = min_code_size + 1
    prev: bytes | None = None
    out = bytearray()

    acc = 0
    nbits = 0
    pos = 0
    total = len(data)
    while True:
        while nbits < code_len:
            if pos >= total:
                if len(out) >= n_pixels:
                    # missing explicit end code; tolerated once all pixels exist
                    return out[:n_pixels]
                raise GifDecodeError("image data ended mid-stream", at)
            acc |= data[pos] << nbits
            nbits += 8
            pos += 1
        code = acc & ((1 << code_len) - 1)
        acc >>= code_len
        nbits -= code_len

        if code == clear_code:
            table = fresh_table()
            code_len = min_code_size + 1
            prev = None
            continue
        if code == end_code:
            if len(out) < n_pixels:
                raise GifDecodeError(
                    f"image data ended after {len(out)} of {n_pixels} pixels", at
                )
            return out[:n_pixels]

        if prev is None:
            if code >= clear_code:
                raise GifDecodeError(f"invalid initial LZW code {code}", at)
            entry = table[code]
        elif code < len(table):
            entry = table[code]
        elif code == len(table):
            entry = prev + prev[:1]
        else:
            raise GifDecodeError(f"LZW code {code} beyond table size {len(table)}", at)

        out += entry
        if prev is not None and len(table) < 4096:
            table.append(prev + entry[:1])
        if len(table) == (1 << code_len) and code_len < 12:
            code_len += 1
        prev = entry

        if len(out) >= n_pixels:
            # the end code should follow; stop consuming either way
            return out[:n_pixels]


def _deinterlace(rows: np.ndarray) -> np.ndarray:
    """Reorder interlaced row storage (groups of 8/8/4/2 line spacing)."""
    height = rows.shape[0]
    order = (
        list(range(0, height, 8))
        + list(range(4, height, 8))
        + list(range(2, height, 4))
        + list(range(1, height, 2))
    )
    out = np.empty_like(rows)
    out[order] = rows
    return out


def decode_gif(data: bytes, clip_id: str = "") -> FrameSequence:
    """Decode a GIF87a/GIF89a byte stream into composited frames.

    Returns one ColorImage per image descriptor, each a full picture of the
    logical screen, plus the Graphic Control Extension delay of each frame
    in centiseconds (0 where absent).
    """
    r = _Reader(data)
    header = r.take(6)
    if header[:3] != b"GIF" or header[3:] not in (b"87a", b"89a"):
        raise GifDecodeError(f"not a GIF87a/GIF89a header: {header!r}", 0)

    width = r.u16()
    height = r.u16()
    packed = r.u8()
    bg_index = r.u8()
    r.u8()  # pixel aspect ratio, unused
    if width == 0 or height == 0:
        raise GifDecodeError(f"zero logical screen size {width}x{height}", 6)

    global_table = None
    if packed & 0x80:
        global_table = _read_color_table(r, (packed & 0x07) + 1)

    if global_table is not None and bg_index < len(global_table):
        background = global_table[bg_index]
    else:
        background = np.zeros(3, dtype=np.uint8)

    canvas = np.empty((height, width, 3), dtype=np.uint8)
    canvas[:, :] = background

    frames: list[ColorImage] = []
    delays: list[int] = []

    # disposal state carried from the previous frame
    pending_disposal = 0
    pending_rect = None  # (top, bottom, left, right) of the previous frame
    pre_draw_canvas = None  # canvas snapshot for disposal method 3

    # Graphic Control Extension values for the next image
    gce_delay = 0
    gce_transparent = None
    gce_disposal = 0

    while True:
        at = r.pos
        block = r.u8()

        if block == 0x3B:  # trailer
            if not frames:
                raise GifDecodeError("no image data before trailer", at)
            return FrameSequence(clip_id=clip_id, frames=tuple(frames), frame_delays=tuple(delays))

        if block == 0x21:  # extension
            label = r.u8()
            if label == 0xF9:  # Graphic Control Extension
                body = _read_subblocks(r)
                if len(body) < 4:
                    raise GifDecodeError("short graphic control extension", at)
                gce_disposal = (body[0] >> 2) & 0x07
                gce_delay = body[1] | (body[2] << 8)
                gce_transparent = body[3] if body[0] & 0x01 else None
            else:
                # comment / plain text / application / unknown: skip
                _skip_subblocks(r)
            continue

        if block != 0x2C:
            raise GifDecodeError(f"invalid block introducer 0x{block:02x}", at)

        # image descriptor
        left = r.u16()
        top = r.u16()
        fw = r.u16()
        fh = r.u16()
        fpacked = r.u8()
        if fw == 0 or fh == 0:
            raise GifDecodeError(f"zero frame size {fw}x{fh}", at)
        if left + fw > width or top + fh > height:
            raise GifDecodeError(
                f"frame rectangle {fw}x{fh}+{left}+{top} exceeds logical screen", at
            )

        local_table = None
        if fpacked & 0x80:
            local_table = _read_color_table(r, (fpacked & 0x07) + 1)
        table = local_table if local_table is not None else global_table
        if table is None:
            raise GifDecodeError("frame has neither local nor global color table", at)

        mcs_at = r.pos
        min_code_size = r.u8()
        if not 2 <= min_code_size <= 8:
            raise GifDecodeError(f"unsupported LZW minimum code size {min_code_size}", mcs_at)

        data_at = r.pos
        lzw = _read_subblocks(r)
        indices = _lzw_decode(lzw, min_code_size, fw * fh, data_at)
        idx = np.frombuffer(bytes(indices), dtype=np.uint8).reshape(fh, fw)
        if int(idx.max()) >= len(table):
            raise GifDecodeError(
                f"palette index {int(idx.max())} outside color table of {len(table)}", data_at
            )
        if fpacked & 0x40:
            idx = _deinterlace(idx)

        # dispose of the previous frame before drawing this one
        if pending_rect is not None:
            t, b, l, rr = pending_rect
            if pending_disposal == 2:
                canvas[t:b, l:rr] = background
            elif pending_disposal == 3 and pre_draw_canvas is not None:
                canvas[:, :] = pre_draw_canvas

        pre_draw_canvas = canvas.copy()
        region = canvas[top : top + fh, left : left + fw]
        rgb = table[idx]
        if gce_transparent is not None:
            opaque = idx != gce_transparent
            region[opaque] = rgb[opaque]
        else:
            region[:, :] = rgb

        frames.append(ColorImage(canvas / 255.0))
        delays.append(gce_delay)

        pending_disposal = gce_disposal
        pending_rect = (top, top + fh, left, left + fw)
        gce_delay = 0
        gce_transparent = None
        gce_disposal = 0
