"""Layered bitstream container: a section table over independently decodable
layer payloads (quantized generator weights, lossless pose parameters,
predictively coded pose maps, metadata), each CRC-protected.

Layout, all little-endian: magic "HGCA", u16 version (1), u8 section count,
then per section u8 layer id, u8 codec id, u64 offset, u64 length, u32 crc32,
followed by the payloads. The structural layer decodes without touching any
motion section, which is what makes progressive (canonical-pose-first) decoding
possible. The metadata section carries the template, the camera, and the encode
settings, since the decoder needs all three to render anything.
"""

import io
import json
import zlib
from dataclasses import dataclass

import numpy as np

from . import avatar, binio, pipeline, posemap_codec, renderer, smplx_codec, weight_quant
from .errors import DecodeError
from .generator import GeneratorWeights, parse_weights, serialize_weights

CONTAINER_MAGIC = b"HGCA"
CONTAINER_VERSION = 1

LAYER_METADATA = 0
LAYER_STRUCTURAL = 1
LAYER_MOTION_SMPLX = 2
LAYER_MOTION_POSEMAP = 3

LAYER_NAMES = {
    LAYER_METADATA: "metadata",
    LAYER_STRUCTURAL: "structural-weights",
    LAYER_MOTION_SMPLX: "motion-smplx",
    LAYER_MOTION_POSEMAP: "motion-posemap",
}

CODEC_METADATA = 0
CODEC_WEIGHTS_QUANT = 1
CODEC_WEIGHTS_RAW = 2
CODEC_SMPLX_HUFFMAN = 3
CODEC_POSEMAP_PRED = 4

_TABLE_ENTRY_BYTES = 1 + 1 + 8 + 8 + 4
_HEADER_BYTES = 4 + 2 + 1


@dataclass
class Section:
    layer_id: int
    codec_id: int
    payload: bytes


def mux(sections: list[Section]) -> bytes:
    """Assemble sections into a container; layer ids must be unique."""
    seen = set()
    for s in sections:
        if s.layer_id in seen:
            raise ValueError(f"duplicate layer id {s.layer_id}")
        seen.add(s.layer_id)
    header = [CONTAINER_MAGIC, binio.u16(CONTAINER_VERSION), binio.u8(len(sections))]
    offset = _HEADER_BYTES + _TABLE_ENTRY_BYTES * len(sections)
    table = []
    for s in sections:
        table.append(binio.u8(s.layer_id))
        table.append(binio.u8(s.codec_id))
        table.append(binio.u64(offset))
        table.append(binio.u64(len(s.payload)))
        table.append(binio.u32(zlib.crc32(s.payload)))
        offset += len(s.payload)
    return b"".join(header + table + [s.payload for s in sections])


class ContainerReader:
    """Random-access section reader; only the header and table are read up
    front, so pulling one section touches no other section's bytes."""

    def __init__(self, file):
        self._file = file
        self._file.seek(0)
        head = self._file.read(_HEADER_BYTES)
        if len(head) < _HEADER_BYTES:
            raise DecodeError("file too short for a container header")
        r = binio.ByteReader(head)
        r.magic(CONTAINER_MAGIC)
        version = r.u16()
        if version != CONTAINER_VERSION:
            raise DecodeError(f"unsupported container version {version}")
        count = r.u8()
        table_bytes = self._file.read(_TABLE_ENTRY_BYTES * count)
        if len(table_bytes) < _TABLE_ENTRY_BYTES * count:
            raise DecodeError("truncated section table")
        tr = binio.ByteReader(table_bytes)
        self.entries = []
        for _ in range(count):
            self.entries.append(
                (tr.u8(), tr.u8(), tr.u64(), tr.u64(), tr.u32())
            )
        end = self._file.seek(0, io.SEEK_END)
        table_end = _HEADER_BYTES + _TABLE_ENTRY_BYTES * count
        spans = sorted((e[2], e[2] + e[3], e[0]) for e in self.entries)
        prev_end = table_end
        for start, stop, layer_id in spans:
            if start < prev_end or stop > end:
                raise DecodeError(
                    f"section {LAYER_NAMES.get(layer_id, layer_id)} is out of bounds or overlapping"
                )
            prev_end = stop

    def layers(self) -> list[int]:
        return [e[0] for e in self.entries]

    def codec_id(self, layer_id: int) -> int:
        for lid, codec_id, *_ in self.entries:
            if lid == layer_id:
                return codec_id
        raise DecodeError(f"no section for layer {LAYER_NAMES.get(layer_id, layer_id)}")

    def read_section(self, layer_id: int) -> bytes:
        for lid, _, offset, length, crc in self.entries:
            if lid != layer_id:
                continue
            self._file.seek(offset)
            payload = self._file.read(length)
            if len(payload) != length:
                raise DecodeError(f"section {LAYER_NAMES.get(lid, lid)} is truncated")
            if zlib.crc32(payload) != crc:
                raise DecodeError(f"CRC mismatch in section {LAYER_NAMES.get(lid, lid)}")
            return payload
        raise DecodeError(f"no section for layer {LAYER_NAMES.get(layer_id, layer_id)}")


def demux(data: bytes) -> list[Section]:
    """Split a container back into its sections, verifying every CRC."""
    reader = ContainerReader(io.BytesIO(data))
    return [
        Section(lid, codec, reader.read_section(lid))
        for lid, codec, *_ in reader.entries
    ]


def build_metadata(template, camera, settings: dict) -> bytes:
    tpl = avatar.serialize_template(template)
    cam = _camera_to_text(camera).encode("utf-8")
    blob = json.dumps(settings, sort_keys=True).encode("utf-8")
    return b"".join([binio.u32(len(tpl)), tpl, binio.u32(len(cam)), cam,
                     binio.u32(len(blob)), blob])


def parse_metadata(data: bytes):
    r = binio.ByteReader(data)
    template = avatar.parse_template(r.take(r.u32()))
    camera = _camera_from_text(r.take(r.u32()).decode("utf-8"))
    settings = json.loads(r.take(r.u32()).decode("utf-8"))
    return template, camera, settings


def _camera_to_text(camera) -> str:
    # the renderer's key-value camera format, with full-precision floats
    lines = []
    lines.append(f"mode: {camera.mode}")
    lines.append("rotation: " + " ".join(repr(float(v)) for v in camera.rotation.reshape(-1)))
    lines.append("translation: " + " ".join(repr(float(v)) for v in camera.translation))
    lines.append(f"size: {camera.size[0]} {camera.size[1]}")
    lines.append(f"scale: {camera.scale!r}")
    lines.append(f"focal: {camera.focal[0]!r} {camera.focal[1]!r}")
    lines.append(f"principal: {camera.principal[0]!r} {camera.principal[1]!r}")
    lines.append("background: " + " ".join(repr(float(v)) for v in camera.background))
    return "\n".join(lines) + "\n"


def _camera_from_text(text: str):
    fields = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition(":")
        fields[key.strip()] = value.split()
    try:
        return renderer.Camera(
            mode=fields["mode"][0],
            rotation=np.array(fields["rotation"], dtype=np.float64).reshape(3, 3),
            translation=np.array(fields["translation"], dtype=np.float64),
            size=(int(fields["size"][0]), int(fields["size"][1])),
            scale=float(fields["scale"][0]),
            focal=(float(fields["focal"][0]), float(fields["focal"][1])),
            principal=(float(fields["principal"][0]), float(fields["principal"][1])),
            background=np.array(fields["background"], dtype=np.float64),
        )
    except (KeyError, IndexError, ValueError) as e:
        raise DecodeError(f"invalid camera metadata: {e}") from e


def encode_scene(template, poses, weights: GeneratorWeights, bit_width: int,
                 q: float, map_resolution, camera,
                 include_posemaps: bool = True, include_smplx: bool = True) -> bytes:
    """Run the full encoder: quantize weights, code motion layers, mux."""
    qnet, _ = weight_quant.quantize_network(weights, weight_quant.QuantConfig(bit_width))
    sections = [
        Section(
            LAYER_METADATA,
            CODEC_METADATA,
            build_metadata(
                template,
                camera,
                {
                    "bit_width": bit_width,
                    "q": float(np.float32(q)),
                    "map_height": map_resolution[0],
                    "map_width": map_resolution[1],
                    "frames": len(poses),
                },
            ),
        ),
        Section(LAYER_STRUCTURAL, CODEC_WEIGHTS_QUANT, weight_quant.serialize_quantized(qnet)),
    ]
    if include_smplx:
        sections.append(
            Section(LAYER_MOTION_SMPLX, CODEC_SMPLX_HUFFMAN,
                    smplx_codec.encode_smplx(poses).to_bytes())
        )
    if include_posemaps:
        maps = [pipeline.make_pose_maps(template, p, map_resolution) for p in poses]
        sections.append(
            Section(LAYER_MOTION_POSEMAP, CODEC_POSEMAP_PRED,
                    posemap_codec.encode_posemaps(maps, q).to_bytes())
        )
    return mux(sections)


@dataclass
class DecodedLayers:
    weights: GeneratorWeights | None
    poses: list | None
    pose_maps: list | None
    template: object = None
    camera: object = None
    settings: dict = None


def decode_structural(reader: ContainerReader) -> GeneratorWeights:
    codec = reader.codec_id(LAYER_STRUCTURAL)
    payload = reader.read_section(LAYER_STRUCTURAL)
    if codec == CODEC_WEIGHTS_QUANT:
        try:
            return weight_quant.parse_quantized(payload).dequantize()
        except ValueError as e:
            raise DecodeError(f"invalid structural section: {e}") from e
    if codec == CODEC_WEIGHTS_RAW:
        return parse_weights(payload)
    raise DecodeError(f"unknown codec id {codec} for structural section")


def decode_all(source) -> DecodedLayers:
    """Decode every present layer; absent motion sections come back as None."""
    if isinstance(source, (bytes, bytearray)):
        reader = ContainerReader(io.BytesIO(bytes(source)))
        close = None
    elif hasattr(source, "read"):
        reader = ContainerReader(source)
        close = None
    else:
        f = open(source, "rb")
        reader = ContainerReader(f)
        close = f
    try:
        layers = reader.layers()
        out = DecodedLayers(None, None, None)
        if LAYER_METADATA in layers:
            if reader.codec_id(LAYER_METADATA) != CODEC_METADATA:
                raise DecodeError("unknown codec id for metadata section")
            out.template, out.camera, out.settings = parse_metadata(
                reader.read_section(LAYER_METADATA)
            )
        if LAYER_STRUCTURAL in layers:
            out.weights = decode_structural(reader)
        if LAYER_MOTION_SMPLX in layers:
            if reader.codec_id(LAYER_MOTION_SMPLX) != CODEC_SMPLX_HUFFMAN:
                raise DecodeError("unknown codec id for motion-smplx section")
            out.poses = smplx_codec.decode_smplx(reader.read_section(LAYER_MOTION_SMPLX))
        if LAYER_MOTION_POSEMAP in layers:
            if reader.codec_id(LAYER_MOTION_POSEMAP) != CODEC_POSEMAP_PRED:
                raise DecodeError("unknown codec id for motion-posemap section")
            out.pose_maps = posemap_codec.decode_posemaps(
                reader.read_section(LAYER_MOTION_POSEMAP)
            )
        return out
    finally:
        if close is not None:
            close.close()


def report_composition(source) -> list[tuple[str, int, float]]:
    """Per-layer byte counts and percentage shares (of total section bytes)."""
    if isinstance(source, (bytes, bytearray)):
        reader = ContainerReader(io.BytesIO(bytes(source)))
    else:
        with open(source, "rb") as f:
            data = f.read()
        reader = ContainerReader(io.BytesIO(data))
    total = sum(e[3] for e in reader.entries)
    if total == 0:
        raise DecodeError("container has no payload bytes")
    return [
        (LAYER_NAMES.get(lid, str(lid)), length, 100.0 * length / total)
        for lid, _, _, length, _ in reader.entries
    ]


def structural_only_render(reader: ContainerReader):
    """Progressive decode: weights + metadata only, rendered at the canonical pose."""
    template, camera, _ = parse_metadata(reader.read_section(LAYER_METADATA))
    weights = decode_structural(reader)
    pose = pipeline.canonical_pose(template)
    image, _ = render_decoded_frame(template, pose, weights, camera, map_resolution=None)
    return image, template, camera


def render_decoded_frame(template, pose, weights, camera, map_resolution=None, posemap=None):
    if posemap is None and map_resolution is None:
        map_resolution = (64, 64)
    return pipeline.render_frame(template, pose, weights, camera,
                                 map_resolution=map_resolution, posemap=posemap)


def rd_sweep(scene, bit_widths, q_values) -> list[dict]:
    """Rate-distortion table over (Q, q) grid points.

    Per point: quantize the weights, code and decode the pose maps, render every
    frame, and score PSNR/SSIM against the unquantized pipeline render of the
    same frames. bytes_per_frame amortizes the structural and metadata bytes
    over the frame count and adds each frame's share of the motion bytes.
    """
    template, camera = scene.template, scene.camera
    pose_maps = scene.pose_maps()
    references = [
        pipeline.render_frame(template, p, scene.weights, camera, posemap=m)[0].color
        for p, m in zip(scene.poses, pose_maps)
    ]
    rows = []
    frames = len(scene.poses)
    for bw in bit_widths:
        for q in q_values:
            blob = encode_scene(template, scene.poses, scene.weights, bw, q,
                                scene.map_resolution, camera)
            decoded = decode_all(blob)
            images = [
                pipeline.render_frame(decoded.template, p, decoded.weights,
                                      decoded.camera, posemap=m)[0].color
                for p, m in zip(decoded.poses, decoded.pose_maps)
            ]
            psnr_vals = [renderer.psnr(img, ref) for img, ref in zip(images, references)]
            ssim_vals = [renderer.ssim(img, ref) for img, ref in zip(images, references)]
            rows.append(
                {
                    "Q": bw,
                    "q": float(np.float32(q)),
                    "bytes_per_frame": len(blob) / frames,
                    "psnr_db": float(np.mean(psnr_vals)),
                    "ssim": float(np.mean(ssim_vals)),
                }
            )
    return rows
