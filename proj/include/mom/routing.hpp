#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mom/autodiff.hpp"
#include "mom/tensor.hpp"

namespace mom {

// Per-token modality ids for a [batch, length] block of sequences.
// Validated and partitioned once at construction; immutable afterwards.
class ModalityMask {
 public:
  ModalityMask(std::size_t batch, std::size_t length, std::size_t num_modalities, std::vector<int> ids);

  static ModalityMask uniform(std::size_t batch, std::size_t length, std::size_t num_modalities, int id = 0);

  std::size_t batch() const noexcept { return batch_; }
  std::size_t length() const noexcept { return length_; }
  std::size_t tokens() const noexcept { return ids_.size(); }
  std::size_t num_modalities() const noexcept { return num_modalities_; }
  std::span<const int> ids() const noexcept { return ids_; }
  int at(std::size_t i, std::size_t t) const { return ids_[i * length_ + t]; }

  // I_m for every modality: disjoint, ascending, covering all flat positions.
  const std::vector<std::vector<std::size_t>>& partition() const noexcept { return partition_; }
  std::size_t count(std::size_t modality) const { return partition_[modality].size(); }

 private:
  std::size_t batch_, length_, num_modalities_;
  std::vector<int> ids_;
  std::vector<std::vector<std::size_t>> partition_;
};

std::vector<std::vector<std::size_t>> modality_partition(const ModalityMask& mask);

// One [f_in, f_out] weight (and optional [f_out] bias) per modality, or a
// single entry shared by every modality.
struct RoutedWeights {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;  // empty, or one per weight

  bool shared() const noexcept { return weights.size() == 1; }
  std::size_t in_features() const { return weights.at(0).dim(0); }
  std::size_t out_features() const { return weights.at(0).dim(1); }
  void validate() const;

  // `copies` identical weights (and biases when given).
  static RoutedWeights replicated(const Tensor& weight, std::size_t copies, const Tensor* bias = nullptr);
};

// Tape-side view of RoutedWeights.
struct RoutedVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

// Y_i = X_i W_{m_i} + b_{m_i}. Tokens of each modality are gathered into a
// contiguous block, multiplied once, and scattered back; modalities with no
// tokens are skipped. A single shared weight reduces to ops::linear.
Var modal_linear(const Var& x, const RoutedVars& w, const ModalityMask& mask);

Tensor modal_linear(const Tensor& x, const RoutedWeights& w, const ModalityMask& mask);

}  // namespace mom
