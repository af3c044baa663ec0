"""Image and video compression round trips.

The video chains shell out to an external encoder through command templates
(placeholders ``{in_dir}``, ``{out_file}``, ``{frames_pattern}`` and the
optional ``{ffmpeg}``).  ``dct_video_proxy`` is an intra-frame block-DCT
quantiser for environments without an encoder; it is *not* equivalent to the
MPEG4/H264 chains and is tagged differently wherever it is used.
"""

from __future__ import annotations

import shlex
import shutil
import subprocess
import tempfile
from pathlib import Path

import cv2
import numpy as np
from scipy.fft import dctn, idctn

FRAMES_PATTERN = "frame_%05d.png"

DEFAULT_VIDEO_COMMANDS = {
    "video_codec_c": "{ffmpeg} -y -loglevel error -framerate 25 -i {in_dir}/{frames_pattern} "
    "-c:v mpeg4 -pix_fmt yuv420p {out_file}",
    "video_codec_c2": "{ffmpeg} -y -loglevel error -framerate 25 -i {in_dir}/{frames_pattern} "
    "-c:v libx264 -pix_fmt yuv420p {out_file}",
}


class CodecError(RuntimeError):
    """An external encoder/decoder failed; the message carries its output."""


def _as_uint8(image) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image, dtype=np.float64)), 0, 255).astype(np.uint8)


def jpeg_roundtrip(image, quality: int) -> np.ndarray:
    """Encode as baseline JPEG at ``quality`` and decode again."""
    if not 1 <= int(quality) <= 100:
        raise ValueError(f"JPEG quality must be in [1, 100], got {quality}")
    rgb = _as_uint8(image)
    ok, buf = cv2.imencode(
        ".jpg",
        cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR),
        [cv2.IMWRITE_JPEG_QUALITY, int(quality), cv2.IMWRITE_JPEG_PROGRESSIVE, 0],
    )
    if not ok:
        raise CodecError(f"OpenCV failed to JPEG-encode an image of shape {rgb.shape}")
    out = cv2.imdecode(buf, cv2.IMREAD_COLOR)
    if out is None:
        raise CodecError("OpenCV failed to decode its own JPEG stream")
    return cv2.cvtColor(out, cv2.COLOR_BGR2RGB).astype(np.float64)


def find_ffmpeg() -> str | None:
    exe = shutil.which("ffmpeg")
    if exe:
        return exe
    try:
        import imageio_ffmpeg
    except ImportError:
        return None
    try:
        return imageio_ffmpeg.get_ffmpeg_exe()
    except RuntimeError:
        return None


def video_tool_available(commands: dict | None = None) -> bool:
    commands = commands or DEFAULT_VIDEO_COMMANDS
    if any("{ffmpeg}" in c for c in commands.values()):
        return find_ffmpeg() is not None
    return all(shutil.which(shlex.split(c)[0]) for c in commands.values())


def _run(cmd: str, what: str):
    try:
        proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True)
    except FileNotFoundError as exc:
        raise CodecError(f"{what}: encoder not found ({exc})") from exc
    if proc.returncode != 0:
        raise CodecError(
            f"{what} failed with exit code {proc.returncode}\ncommand: {cmd}\n"
            f"stdout: {proc.stdout.strip()}\nstderr: {proc.stderr.strip()}"
        )


def _write_frames(frames, directory: Path):
    for i, f in enumerate(frames):
        path = directory / (FRAMES_PATTERN % i)
        if not cv2.imwrite(str(path), cv2.cvtColor(_as_uint8(f), cv2.COLOR_RGB2BGR)):
            raise CodecError(f"could not write frame {path}")


def _read_frames(directory: Path) -> list[np.ndarray]:
    out = []
    for path in sorted(directory.glob("frame_*.png")):
        img = cv2.imread(str(path), cv2.IMREAD_COLOR)
        out.append(cv2.cvtColor(img, cv2.COLOR_BGR2RGB).astype(np.float64))
    return out


def _encode_decode(template: str, in_dir: Path, work: Path, tag: str, ffmpeg: str | None) -> Path:
    out_file = work / f"{tag}.mp4"
    fill = {
        "in_dir": shlex.quote(str(in_dir)),
        "out_file": shlex.quote(str(out_file)),
        "frames_pattern": FRAMES_PATTERN,
        "ffmpeg": shlex.quote(ffmpeg or "ffmpeg"),
    }
    _run(template.format(**fill), f"encode ({tag})")
    out_dir = work / f"{tag}_frames"
    out_dir.mkdir()
    decode = f"{shlex.quote(ffmpeg or 'ffmpeg')} -y -loglevel error -i {fill['out_file']} -pix_fmt rgb24 " + shlex.quote(
        str(out_dir / FRAMES_PATTERN)
    )
    _run(decode, f"decode ({tag})")
    return out_dir


def video_roundtrip(frames, chain: str = "C", commands: dict | None = None) -> list[np.ndarray]:
    """Compress ``frames`` as a video and decode them again.

    ``chain="C"`` is a single MPEG4 encode; ``"C2"`` re-encodes the decoded
    MPEG4 frames with H264.  Each call works in its own temporary directory.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("video_roundtrip needs at least one frame")
    shape = np.shape(frames[0])
    if any(np.shape(f) != shape for f in frames):
        raise ValueError("all frames must share one shape")
    if chain not in ("C", "C2"):
        raise ValueError(f"unknown video chain {chain!r}")
    commands = {**DEFAULT_VIDEO_COMMANDS, **(commands or {})}
    ffmpeg = find_ffmpeg()
    with tempfile.TemporaryDirectory(prefix="vrt_") as tmp:
        work = Path(tmp)
        src = work / "src"
        src.mkdir()
        _write_frames(frames, src)
        out_dir = _encode_decode(commands["video_codec_c"], src, work, "c", ffmpeg)
        if chain == "C2":
            out_dir = _encode_decode(commands["video_codec_c2"], out_dir, work, "c2", ffmpeg)
        decoded = _read_frames(out_dir)
    if len(decoded) != len(frames):
        raise CodecError(f"frame count changed: {len(frames)} in, {len(decoded)} out")
    return decoded


# JPEG luminance table, scaled by a quality factor the same way libjpeg does
_BASE_Q = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


def _qtable(quality):
    scale = 5000 / quality if quality < 50 else 200 - 2 * quality
    return np.clip(np.floor((_BASE_Q * scale + 50) / 100), 1, 255)


def _dct_quantise(image, quality):
    img = np.asarray(image, dtype=np.float64)
    H, W = img.shape[:2]
    ph, pw = (-H) % 8, (-W) % 8
    padded = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="edge") - 128.0
    q = _qtable(quality)
    h8, w8 = padded.shape[0] // 8, padded.shape[1] // 8
    blocks = padded.reshape(h8, 8, w8, 8, -1).transpose(0, 2, 4, 1, 3)
    coef = dctn(blocks, axes=(-2, -1), norm="ortho")
    coef = np.round(coef / q) * q
    rec = idctn(coef, axes=(-2, -1), norm="ortho").transpose(0, 3, 1, 4, 2).reshape(padded.shape)
    return np.clip(np.rint(rec + 128.0), 0, 255)[:H, :W]


def dct_video_proxy(frames, chain: str = "C") -> list[np.ndarray]:
    """Encoder-free stand-in for the video chains (NOT equivalent to MPEG4/H264).

    Applies per-frame 8x8 block-DCT quantisation: quality 60 for ``"C"``, and
    a second pass at quality 50 for ``"C2"``.
    """
    if chain not in ("C", "C2"):
        raise ValueError(f"unknown video chain {chain!r}")
    out = [_dct_quantise(f, 60) for f in frames]
    if chain == "C2":
        out = [_dct_quantise(f, 50) for f in out]
    return out
