#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fetalsep::nn {

/// Dense batch x channels x length array of doubles, row-major.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t batch, std::size_t channels, std::size_t length, double fill = 0.0)
      : batch_(batch), channels_(channels), length_(length),
        data_(batch * channels * length, fill) {}

  std::size_t batch() const { return batch_; }
  std::size_t channels() const { return channels_; }
  std::size_t length() const { return length_; }
  std::size_t size() const { return data_.size(); }

  bool same_shape(const Tensor& o) const {
    return batch_ == o.batch_ && channels_ == o.channels_ && length_ == o.length_;
  }

  double& operator()(std::size_t b, std::size_t c, std::size_t l) {
    return data_[(b * channels_ + c) * length_ + l];
  }
  double operator()(std::size_t b, std::size_t c, std::size_t l) const {
    return data_[(b * channels_ + c) * length_ + l];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  // channels x length block of one batch element
  std::span<double> sample(std::size_t b) {
    return {data_.data() + b * channels_ * length_, channels_ * length_};
  }
  std::span<const double> sample(std::size_t b) const {
    return {data_.data() + b * channels_ * length_, channels_ * length_};
  }

 private:
  std::size_t batch_ = 0;
  std::size_t channels_ = 0;
  std::size_t length_ = 0;
  std::vector<double> data_;
};

}  // namespace fetalsep::nn
