#pragma once

#include <utility>
#include <vector>

#include "lclip/encoder.hpp"
#include "lclip/tensor.hpp"

namespace lclip {

// Encode interface shared by the student model and any teacher. Both methods
// return (global embedding, per-element embeddings); the global vector is
// L2-normalized.
template <class T>
class DualEncoderT {
public:
  virtual ~DualEncoderT() = default;
  virtual std::pair<TensorT<T>, TensorT<T>> encode_image(const TensorT<T>& patches) const = 0;
  virtual std::pair<TensorT<T>, TensorT<T>> encode_text(const std::vector<int>& token_ids) const = 0;
};

// Adapter exposing an LCLIPModel through the encode interface (inference
// mode; forward passes are read-only on the weights).
template <class T>
class LCLIPEncoderT final : public DualEncoderT<T> {
public:
  explicit LCLIPEncoderT(LCLIPModelT<T>& model) : model_(&model) {}

  std::pair<TensorT<T>, TensorT<T>> encode_image(const TensorT<T>& patches) const override {
    return model_->encode_image(patches);
  }

  std::pair<TensorT<T>, TensorT<T>> encode_text(const std::vector<int>& ids) const override {
    return model_->encode_text(ids);
  }

private:
  LCLIPModelT<T>* model_;
};

}  // namespace lclip
