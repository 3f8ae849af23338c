#pragma once

#include <filesystem>
#include <string>

#include "ditvr/tensor.hpp"

namespace ditvr {

// 8-bit quantization used at file boundaries: round(clamp(v, 0, 1) * 255).
std::uint8_t quantize8(double v);

// Binary PPM (P6, maxval 255). Single-channel frames are written as gray RGB.
void write_ppm(const std::filesystem::path& path, const Frame& frame);

// Reads a P6 file. When every pixel has R == G == B the result has one
// channel, otherwise three.
Frame read_ppm(const std::filesystem::path& path);

// Frames as <dir>/frame_0000.ppm, frame_0001.ppm, ...
std::filesystem::path frame_path(const std::filesystem::path& dir, int index);
void write_video(const std::filesystem::path& dir, const Video& video);
Video read_video(const std::filesystem::path& dir);

// The video as it would be after a write/read round trip.
Frame quantized(const Frame& frame);

}  // namespace ditvr
