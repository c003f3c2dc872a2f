#include "fmprune/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ostream>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "fmprune/error.hpp"
#include "fmprune/file_io.hpp"

namespace fmprune {

std::ostream& operator<<(std::ostream& os, const Shape& s) {
  return os << s.channels << 'x' << s.height << 'x' << s.width;
}

namespace {

void require_positive(const Shape& shape) {
  if (!shape.positive()) {
    throw ShapeError("tensor dimensions must be positive, got " +
                     std::to_string(shape.channels) + "x" +
                     std::to_string(shape.height) + "x" +
                     std::to_string(shape.width));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(shape) {
  require_positive(shape_);
  data_.assign(shape_.volume(), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(shape), data_(std::move(data)) {
  require_positive(shape_);
  if (data_.size() != shape_.volume()) {
    throw ShapeError("tensor data holds " + std::to_string(data_.size()) +
                     " values, shape needs " + std::to_string(shape_.volume()));
  }
}

float& Tensor::at(std::size_t c, std::size_t y, std::size_t x) {
  if (c >= shape_.channels || y >= shape_.height || x >= shape_.width) {
    throw std::out_of_range("tensor coordinate out of range");
  }
  return (*this)(c, y, x);
}

float Tensor::at(std::size_t c, std::size_t y, std::size_t x) const {
  if (c >= shape_.channels || y >= shape_.height || x >= shape_.width) {
    throw std::out_of_range("tensor coordinate out of range");
  }
  return (*this)(c, y, x);
}

std::span<const float> Tensor::channel_plane(std::size_t c) const {
  if (c >= shape_.channels) {
    throw std::out_of_range("channel " + std::to_string(c) + " out of range (" +
                            std::to_string(shape_.channels) + " channels)");
  }
  return std::span<const float>(data_).subspan(c * shape_.plane(),
                                               shape_.plane());
}

std::span<float> Tensor::channel_plane(std::size_t c) {
  if (c >= shape_.channels) {
    throw std::out_of_range("channel " + std::to_string(c) + " out of range (" +
                            std::to_string(shape_.channels) + " channels)");
  }
  return std::span<float>(data_).subspan(c * shape_.plane(), shape_.plane());
}

float max_abs_in_plane(const Tensor& t, std::size_t c) {
  float m = 0.0f;
  for (float v : t.channel_plane(c)) m = std::max(m, std::fabs(v));
  return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(),
                     a.size() * sizeof(float)) == 0;
}

Tensor decode_raw_tensor(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes);
  Shape shape;
  shape.channels = in.u32();
  shape.height = in.u32();
  shape.width = in.u32();
  if (!shape.positive()) throw ParseError("raw tensor has a zero dimension");
  if (in.remaining() != shape.volume() * 4) {
    throw ParseError("raw tensor body holds " + std::to_string(in.remaining()) +
                     " bytes, expected " + std::to_string(shape.volume() * 4));
  }
  std::vector<float> data(shape.volume());
  in.f32s(data);
  return Tensor(shape, std::move(data));
}

std::vector<std::uint8_t> encode_raw_tensor(const Tensor& t) {
  detail::ByteWriter out;
  out.u32(static_cast<std::uint32_t>(t.channels()));
  out.u32(static_cast<std::uint32_t>(t.height()));
  out.u32(static_cast<std::uint32_t>(t.width()));
  out.f32s(t.data());
  return std::move(out).take();
}

Tensor read_raw_tensor(const std::filesystem::path& path) {
  return decode_raw_tensor(read_file_bytes(path));
}

void write_raw_tensor(const std::filesystem::path& path, const Tensor& t) {
  write_file_bytes(path, encode_raw_tensor(t));
}

}  // namespace fmprune
