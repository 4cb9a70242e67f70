#include "diffmatte/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace diffmatte {

namespace {

using Kind = ParseError::Kind;

class HeaderCursor {
 public:
  explicit HeaderCursor(const std::string& bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw ParseError(Kind::BadHeader, std::string("pnm: ") + what + " too large");
      ++pos_;
    }
    if (pos_ == start) throw ParseError(Kind::BadHeader, std::string("pnm: missing ") + what);
    return static_cast<int>(value);
  }

  /// Exactly one whitespace byte separates maxval from the raster.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw ParseError(Kind::BadHeader, "pnm: header not terminated by whitespace");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

Tensor<float> decode_pnm(const std::string& bytes, int expected_channels) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw ParseError(Kind::BadHeader, "pnm: missing magic");
  const int channels = bytes[1] == '6' ? 3 : (bytes[1] == '5' ? 1 : 0);
  if (channels == 0) throw ParseError(Kind::BadHeader, "pnm: only binary P5/P6 are supported");
  if (channels != expected_channels) {
    throw ParseError(Kind::BadHeader, std::string("pnm: expected ") + (expected_channels == 3 ? "P6" : "P5"));
  }
  HeaderCursor cur(bytes);
  cur.advance(2);
  const int width = cur.number("width");
  const int height = cur.number("height");
  const int maxval = cur.number("maxval");
  if (width < 1 || height < 1) throw ParseError(Kind::BadHeader, "pnm: empty image");
  if (maxval < 1 || maxval > 65535) throw ParseError(Kind::BadMaxval, "pnm: maxval out of range");
  cur.end_of_header();

  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
  const std::size_t samples = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() - cur.pos() < samples * sample_bytes) {
    throw ParseError(Kind::Truncated, "pnm: raster truncated (" + std::to_string(bytes.size() - cur.pos()) +
                                          " of " + std::to_string(samples * sample_bytes) + " bytes)");
  }
  Tensor<float> out(1, channels, height, width);
  const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + cur.pos());
  const double scale = 1.0 / maxval;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t k = (static_cast<std::size_t>(y) * width + x) * channels + c;
        int v = sample_bytes == 2 ? (raster[2 * k] << 8) | raster[2 * k + 1] : raster[k];
        if (v > maxval) throw ParseError(Kind::BadMaxval, "pnm: sample exceeds maxval");
        out(0, c, y, x) = static_cast<float>(v * scale);
      }
    }
  }
  return out;
}

std::string encode_pnm(const Tensor<float>& image, int maxval) {
  if (image.n() != 1 || (image.c() != 1 && image.c() != 3)) {
    throw DomainError("encode_pnm: expected [1, 1|3, H, W], got " + image.shape().str());
  }
  if (maxval < 1 || maxval > 65535) throw DomainError("encode_pnm: maxval out of range");
  std::string out = (image.c() == 3 ? "P6\n" : "P5\n") + std::to_string(image.w()) + " " +
                    std::to_string(image.h()) + "\n" + std::to_string(maxval) + "\n";
  const bool wide = maxval > 255;
  for (int y = 0; y < image.h(); ++y) {
    for (int x = 0; x < image.w(); ++x) {
      for (int c = 0; c < image.c(); ++c) {
        const double v = std::clamp(static_cast<double>(image(0, c, y, x)), 0.0, 1.0);
        const long q = std::lround(v * maxval);
        if (wide) out.push_back(static_cast<char>((q >> 8) & 0xff));
        out.push_back(static_cast<char>(q & 0xff));
      }
    }
  }
  return out;
}

Tensor<float> read_ppm(const std::filesystem::path& path) { return decode_pnm(slurp(path), 3); }
Tensor<float> read_pgm(const std::filesystem::path& path) { return decode_pnm(slurp(path), 1); }

void write_ppm(const std::filesystem::path& path, const Tensor<float>& rgb, int maxval) {
  if (rgb.c() != 3) throw DomainError("write_ppm: expected 3 channels");
  spill(path, encode_pnm(rgb, maxval));
}

void write_pgm(const std::filesystem::path& path, const Tensor<float>& gray, int maxval) {
  if (gray.c() != 1) throw DomainError("write_pgm: expected 1 channel");
  spill(path, encode_pnm(gray, maxval));
}

}  // namespace diffmatte
