#include "fmprune/imageio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <string>

#include "fmprune/error.hpp"
#include "fmprune/file_io.hpp"

namespace fmprune {

namespace {

class PpmHeaderReader {
 public:
  explicit PpmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t number(const char* what) {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      ++pos_;
      if (++digits > 9) throw ParseError(std::string("PPM ") + what + " too large");
    }
    if (digits == 0) throw ParseError(std::string("PPM header: missing ") + what);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void raster_separator() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw ParseError("PPM header: no whitespace after maxval");
    }
    ++pos_;
  }

  [[nodiscard]] std::size_t position() const noexcept { return pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

RawImage load_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw ParseError("not a binary PPM (expected magic P6)");
  }
  PpmHeaderReader header(bytes);
  RawImage image;
  image.width = header.number("width");
  image.height = header.number("height");
  const std::size_t maxval = header.number("maxval");
  if (image.width == 0 || image.height == 0) {
    throw ParseError("PPM image has a zero dimension");
  }
  if (maxval != 255) {
    throw ParseError("unsupported PPM maxval " + std::to_string(maxval) +
                     " (only 255)");
  }
  header.raster_separator();
  const std::size_t need = 3 * image.width * image.height;
  const std::size_t have = bytes.size() - header.position();
  if (have < need) {
    throw ParseError("truncated PPM raster: " + std::to_string(have) + " of " +
                     std::to_string(need) + " bytes");
  }
  const auto first = bytes.begin() + static_cast<std::ptrdiff_t>(header.position());
  image.samples.assign(first, first + static_cast<std::ptrdiff_t>(need));
  return image;
}

std::vector<std::uint8_t> encode_ppm(const RawImage& image) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.samples.begin(), image.samples.end());
  return out;
}

Tensor to_input_tensor(const RawImage& image, Shape target) {
  if (target.channels != 3) {
    throw ShapeError("image input needs 3 channels, target has " +
                     std::to_string(target.channels));
  }
  if (image.samples.size() != 3 * image.width * image.height ||
      image.width == 0 || image.height == 0) {
    throw ShapeError("raw image sample count does not match its size");
  }
  Tensor out(target);
  // Corner-aligned source coordinate for destination index d.
  auto source = [](std::size_t d, std::size_t dst, std::size_t src) {
    if (dst == 1 || src == 1) return 0.0;
    return static_cast<double>(d) * static_cast<double>(src - 1) /
           static_cast<double>(dst - 1);
  };
  for (std::size_t y = 0; y < target.height; ++y) {
    const double sy = source(y, target.height, image.height);
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < target.width; ++x) {
      const double sx = source(x, target.width, image.width);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1.0 - fx) * image.sample(x0, y0, c) +
                           fx * image.sample(x1, y0, c);
        const double bottom = (1.0 - fx) * image.sample(x0, y1, c) +
                              fx * image.sample(x1, y1, c);
        out(c, y, x) = static_cast<float>(((1.0 - fy) * top + fy * bottom) / 255.0);
      }
    }
  }
  return out;
}

Tensor load_input_tensor(const std::filesystem::path& path, Shape target) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  const auto bytes = read_file_bytes(path);
  if (ext == ".ppm") return to_input_tensor(load_ppm(bytes), target);
  Tensor t = decode_raw_tensor(bytes);
  if (t.shape() != target) {
    std::ostringstream msg;
    msg << path.string() << " holds a " << t.shape() << " tensor, network wants "
        << target;
    throw ShapeError(msg.str());
  }
  return t;
}

}  // namespace fmprune
