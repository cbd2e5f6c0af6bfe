import io

import numpy as np
import pytest

from gsavatar import container, pipeline, renderer, synthetic
from gsavatar.container import (
    CODEC_METADATA,
    CODEC_SMPLX_HUFFMAN,
    CODEC_WEIGHTS_QUANT,
    LAYER_METADATA,
    LAYER_MOTION_POSEMAP,
    LAYER_MOTION_SMPLX,
    LAYER_STRUCTURAL,
    ContainerReader,
    Section,
    decode_all,
    demux,
    encode_scene,
    mux,
    report_composition,
)
from gsavatar.errors import DecodeError


class SpanRecordingFile(io.BytesIO):
    """File wrapper that records the byte spans actually read."""

    def __init__(self, data):
        super().__init__(data)
        self.spans = []

    def read(self, n=-1):
        start = self.tell()
        out = super().read(n)
        if out:
            self.spans.append((start, start + len(out)))
        return out


def small_scene(seed=0, frames=3):
    return synthetic.make_scene(seed=seed, frames=frames, map_resolution=(32, 32),
                                image_size=(64, 64))


def encode_small(scene, bit_width=8, q=1 / 255, **kw):
    return encode_scene(scene.template, scene.poses, scene.weights, bit_width, q,
                        scene.map_resolution, scene.camera, **kw)


class TestMuxDemux:
    def test_roundtrip_random_sections(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            sections = [
                Section(lid, int(rng.integers(0, 5)),
                        rng.integers(0, 256, int(rng.integers(0, 2000)), dtype=np.uint8).tobytes())
                for lid in rng.permutation(4)
            ]
            out = demux(mux(sections))
            assert len(out) == len(sections)
            for a, b in zip(sections, out):
                assert (a.layer_id, a.codec_id, a.payload) == (b.layer_id, b.codec_id, b.payload)

    def test_duplicate_layer_rejected(self):
        sections = [Section(1, 1, b"x"), Section(1, 2, b"y")]
        with pytest.raises(ValueError):
            mux(sections)

    def test_crc_corruption_detected_with_section_name(self):
        blob = bytearray(mux([Section(LAYER_STRUCTURAL, 1, b"hello world")]))
        blob[-3] ^= 0xFF
        with pytest.raises(DecodeError, match="structural-weights"):
            demux(bytes(blob))

    def test_unsupported_version_rejected(self):
        blob = bytearray(mux([Section(0, 0, b"x")]))
        blob[4:6] = (2).to_bytes(2, "little")
        with pytest.raises(DecodeError, match="version"):
            demux(bytes(blob))

    def test_empty_file_rejected(self):
        with pytest.raises(DecodeError):
            demux(b"")

    def test_truncated_table_rejected(self):
        blob = mux([Section(0, 0, b"payload")])
        with pytest.raises(DecodeError):
            demux(blob[:9])

    def test_out_of_bounds_section_rejected(self):
        blob = bytearray(mux([Section(0, 0, b"payload")]))
        # inflate the declared length past the end of the file
        off = 4 + 2 + 1 + 1 + 1 + 8
        blob[off:off + 8] = (10_000).to_bytes(8, "little")
        with pytest.raises(DecodeError):
            demux(bytes(blob))


class TestDecodeAll:
    def test_full_pipeline_layers_decodable(self):
        scene = small_scene()
        blob = encode_small(scene)
        decoded = decode_all(blob)
        assert decoded.weights is not None
        assert len(decoded.poses) == len(scene.poses)
        assert len(decoded.pose_maps) == len(scene.poses)
        assert decoded.template.vertex_count == scene.template.vertex_count
        assert decoded.settings["bit_width"] == 8

    def test_decoded_poses_bit_exact(self):
        scene = small_scene(seed=1)
        decoded = decode_all(encode_small(scene))
        for a, b in zip(scene.poses, decoded.poses):
            assert a.as_vector().tobytes() == b.as_vector().tobytes()

    def test_missing_motion_sections_tolerated(self):
        scene = small_scene(seed=2)
        blob = encode_small(scene, include_posemaps=False, include_smplx=False)
        decoded = decode_all(blob)
        assert decoded.weights is not None
        assert decoded.poses is None and decoded.pose_maps is None

    def test_unknown_codec_id_rejected(self):
        scene = small_scene(seed=3)
        sections = demux(encode_small(scene))
        sections = [
            Section(s.layer_id, 9 if s.layer_id == LAYER_STRUCTURAL else s.codec_id, s.payload)
            for s in sections
        ]
        with pytest.raises(DecodeError, match="codec"):
            decode_all(mux(sections))

    def test_decode_from_path(self, tmp_path):
        scene = small_scene(seed=4)
        path = tmp_path / "avatar.hgca"
        path.write_bytes(encode_small(scene))
        decoded = decode_all(path)
        assert decoded.weights is not None


class TestProgressiveDecode:
    def test_structural_only_render_and_io_isolation(self):
        scene = small_scene(seed=5)
        blob = encode_small(scene)
        f = SpanRecordingFile(blob)
        reader = ContainerReader(f)
        motion_spans = [
            (off, off + length)
            for lid, _, off, length, _ in reader.entries
            if lid in (LAYER_MOTION_SMPLX, LAYER_MOTION_POSEMAP)
        ]
        assert motion_spans
        f.spans.clear()
        image, template, camera = container.structural_only_render(reader)
        assert image.color.shape == (64, 64, 3)
        assert image.alpha.max() > 0  # the canonical avatar actually renders
        for start, stop in f.spans:
            for m0, m1 in motion_spans:
                assert stop <= m0 or start >= m1, (
                    f"read span ({start}, {stop}) touches motion section ({m0}, {m1})"
                )

    def test_structural_only_container_renders_canonical_pose(self):
        scene = small_scene(seed=6)
        blob = encode_small(scene, include_posemaps=False, include_smplx=False)
        image, template, camera = container.structural_only_render(
            ContainerReader(io.BytesIO(blob))
        )
        # same render through the public pipeline
        pose = pipeline.canonical_pose(template)
        expected, _ = pipeline.render_frame(template, pose, decode_all(blob).weights,
                                            camera, map_resolution=(64, 64))
        assert image.color.shape == expected.color.shape


class TestReport:
    def test_shares_sum_to_100(self):
        scene = small_scene(seed=7)
        rows = report_composition(encode_small(scene))
        assert abs(sum(r[2] for r in rows) - 100.0) < 0.01
        assert {r[0] for r in rows} == {
            "metadata", "structural-weights", "motion-smplx", "motion-posemap"
        }

    def test_single_section_is_100_percent(self):
        rows = report_composition(mux([Section(LAYER_STRUCTURAL, 1, b"abc")]))
        assert len(rows) == 1
        assert rows[0][2] == 100.0

    def test_bytes_match_section_lengths(self):
        scene = small_scene(seed=8)
        blob = encode_small(scene)
        rows = {name: size for name, size, _ in report_composition(blob)}
        for section in demux(blob):
            name = container.LAYER_NAMES[section.layer_id]
            assert rows[name] == len(section.payload)


class TestRdSweep:
    def test_sweep_rows_and_determinism(self):
        scene = synthetic.make_scene(seed=9, frames=2, map_resolution=(16, 16),
                                     image_size=(32, 32))
        rows = container.rd_sweep(scene, [8, 4], [1 / 255, 4 / 255])
        assert len(rows) == 4
        again = container.rd_sweep(scene, [8, 4], [1 / 255, 4 / 255])
        assert rows == again
        for row in rows:
            assert row["psnr_db"] > 0 and 0 <= row["ssim"] <= 1

    def test_bytes_decrease_with_bit_width(self):
        scene = synthetic.make_scene(seed=10, frames=2, map_resolution=(16, 16),
                                     image_size=(32, 32))
        rows = container.rd_sweep(scene, [8, 5, 2], [1 / 255])
        sizes = [r["bytes_per_frame"] for r in rows]
        assert sizes[0] > sizes[1] > sizes[2]
