#include "ditvr/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ditvr {

std::uint8_t quantize8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_ppm(const std::filesystem::path& path, const Frame& frame) {
  if (frame.channels() != 1 && frame.channels() != 3)
    throw std::invalid_argument("write_ppm: expected 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path.string());
  out << "P6\n" << frame.width() << " " << frame.height() << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(frame.width()) * 3);
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<std::size_t>(x) * 3 + c] = quantize8(frame(frame.channels() == 1 ? 0 : c, y, x));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("write_ppm: write failed for " + path.string());
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {}
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

Frame read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ppm: cannot open " + path.string());
  if (next_token(in) != "P6") throw std::runtime_error("read_ppm: not a P6 file: " + path.string());
  const int width = std::stoi(next_token(in));
  const int height = std::stoi(next_token(in));
  const int maxval = std::stoi(next_token(in));
  if (width < 1 || height < 1 || maxval != 255)
    throw std::runtime_error("read_ppm: unsupported header in " + path.string());
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(width) * height * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw std::runtime_error("read_ppm: truncated pixel data in " + path.string());

  bool gray = true;
  for (std::size_t i = 0; i < raw.size() && gray; i += 3) gray = raw[i] == raw[i + 1] && raw[i] == raw[i + 2];
  Frame frame(gray ? 1 : 3, height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < frame.channels(); ++c)
        frame(c, y, x) = raw[(static_cast<std::size_t>(y) * width + x) * 3 + c] / 255.0;
  return frame;
}

std::filesystem::path frame_path(const std::filesystem::path& dir, int index) {
  std::ostringstream name;
  name << "frame_" << std::setw(4) << std::setfill('0') << index << ".ppm";
  return dir / name.str();
}

void write_video(const std::filesystem::path& dir, const Video& video) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < video.size(); ++i) write_ppm(frame_path(dir, static_cast<int>(i)), video[i]);
}

Video read_video(const std::filesystem::path& dir) {
  Video video;
  for (int i = 0; std::filesystem::exists(frame_path(dir, i)); ++i) video.push_back(read_ppm(frame_path(dir, i)));
  if (video.empty()) throw std::runtime_error("read_video: no frame_0000.ppm in " + dir.string());
  return video;
}

Frame quantized(const Frame& frame) {
  return map_planes(frame, [](const Plane& p) -> Plane {
    return p.unaryExpr([](double v) { return quantize8(v) / 255.0; });
  });
}

}  // namespace ditvr
