#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imitate/tensor.hpp"

namespace imitate::io {

/// 16-bit grayscale PNG; values in [0,1] are scaled by 65535 on write.
void write_png16(const std::string& path, const Tensor& image);
Tensor read_png16(const std::string& path);

/// 8-bit label PNG (values taken verbatim, must be < 256).
void write_png8(const std::string& path, const Tensor& labels);
Tensor read_png8(const std::string& path);

/// 8-bit RGB PNG from an interleaved {H,W,3} byte buffer (figures).
void write_png_rgb(const std::string& path, int height, int width,
                   const std::vector<unsigned char>& rgb);

/// Displacement field file: 8-byte header (H, W as little-endian u32)
/// followed by H*W*2 float32 in row-major (row, col, component) order,
/// components (row-displacement, col-displacement) — the in-memory {H,W,2}
/// layout. A `.field.json` sidecar carries the shape metadata.
void write_field(const std::string& path, const Tensor& field);
Tensor read_field(const std::string& path);

std::string sha256_file(const std::string& path);
std::string sha256_bytes(const void* data, size_t len);

/// Write-to-temp-then-rename, so concurrent readers never see partial files.
void atomic_write(const std::string& path, const std::string& contents);

std::string read_text(const std::string& path);

}  // namespace imitate::io
