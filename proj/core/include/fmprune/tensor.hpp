#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace fmprune {

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  [[nodiscard]] std::size_t plane() const noexcept { return height * width; }
  [[nodiscard]] std::size_t volume() const noexcept {
    return channels * height * width;
  }
  [[nodiscard]] bool positive() const noexcept {
    return channels > 0 && height > 0 && width > 0;
  }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::ostream& operator<<(std::ostream& os, const Shape& s);

// C x H x W single-precision volume stored channel-major: plane c occupies
// [c*H*W, (c+1)*H*W). There is no batch dimension.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t channels() const noexcept { return shape_.channels; }
  [[nodiscard]] std::size_t height() const noexcept { return shape_.height; }
  [[nodiscard]] std::size_t width() const noexcept { return shape_.width; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] std::size_t index(std::size_t c, std::size_t y,
                                  std::size_t x) const noexcept {
    return (c * shape_.height + y) * shape_.width + x;
  }

  // Unchecked element access.
  float& operator()(std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[index(c, y, x)];
  }
  float operator()(std::size_t c, std::size_t y,
                   std::size_t x) const noexcept {
    return data_[index(c, y, x)];
  }

  // Bounds-checked element access; throws std::out_of_range.
  float& at(std::size_t c, std::size_t y, std::size_t x);
  [[nodiscard]] float at(std::size_t c, std::size_t y, std::size_t x) const;

  // Contiguous H*W plane of channel c; throws std::out_of_range.
  [[nodiscard]] std::span<const float> channel_plane(std::size_t c) const;
  [[nodiscard]] std::span<float> channel_plane(std::size_t c);

  [[nodiscard]] std::span<const float> data() const noexcept { return data_; }
  [[nodiscard]] std::span<float> data() noexcept { return data_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_{};
  std::vector<float> data_;
};

// Largest |value| over the plane of channel c.
[[nodiscard]] float max_abs_in_plane(const Tensor& t, std::size_t c);

// True when both tensors have the same shape and identical bit patterns.
[[nodiscard]] bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;

// Raw fixture format: three little-endian u32 (C, H, W) followed by C*H*W
// little-endian f32 values in channel-major order.
[[nodiscard]] Tensor decode_raw_tensor(std::span<const std::uint8_t> bytes);
[[nodiscard]] std::vector<std::uint8_t> encode_raw_tensor(const Tensor& t);
[[nodiscard]] Tensor read_raw_tensor(const std::filesystem::path& path);
void write_raw_tensor(const std::filesystem::path& path, const Tensor& t);

}  // namespace fmprune
