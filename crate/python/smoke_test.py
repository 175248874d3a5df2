"""Smoke test for the `pgft` Python module.

Build and install the extension first, e.g.

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/pgft-*.whl

then run `python python/smoke_test.py`.
"""

import os
import tempfile

import pgft


def main():
    frames, grid_dim = pgft.synthesize("rigid-motion", frames=3)
    assert len(frames) == 3 and len(frames[0]) > 0

    config = pgft.Config(grid_dim=grid_dim, qstep=8.0)
    enc = pgft.encode(frames, config)
    assert [s["type"] for s in enc.stats] == ["I", "P", "P"]
    assert enc.modes[0] == []
    assert set(enc.modes[1]) <= {"intra", "inter"}

    stored, count = pgft.header(enc.bitstream)
    assert count == 3 and stored.grid_dim == grid_dim and stored.qstep == 8.0

    decoded = pgft.decode(enc.bitstream, frames, threads=1)
    assert [d.colors for d in decoded] == enc.colors
    for frame, out, stats in zip(frames, decoded, enc.stats):
        assert out.positions == frame.positions
        assert pgft.color_quality(frame, out.colors)[0] == stats["psnr"][0]

    try:
        pgft.decode(enc.bitstream, [frames[0]] * 3)
    except pgft.CodecError as e:
        assert "geometry mismatch" in str(e)
    else:
        raise AssertionError("mismatched geometry was accepted")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "frame.ply")
        pgft.write_ply(path, frames[1])
        assert pgft.read_ply(path) == frames[1]

    assert abs(pgft.lambda_from_q(16.0) / 5.630 - 1) < 1e-3
    assert pgft.rgb_to_yuv((0, 0, 0))[0] == 0.0
    print(f"ok: {len(frames)} frames, {enc.bpip:.3f} bpip, PSNR-Y {enc.stats[-1]['psnr'][0]:.2f} dB")


if __name__ == "__main__":
    main()
