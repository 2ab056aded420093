#include "mom/routing.hpp"

#include <algorithm>
#include <string>

#include "kernels.hpp"
#include "mom/errors.hpp"
#include "mom/ops.hpp"

namespace mom {

ModalityMask::ModalityMask(std::size_t batch, std::size_t length, std::size_t num_modalities, std::vector<int> ids)
    : batch_(batch), length_(length), num_modalities_(num_modalities), ids_(std::move(ids)) {
  if (num_modalities_ == 0) throw ValidationError("modality mask: at least one modality must be declared");
  if (ids_.size() != batch_ * length_) {
    throw DimensionError("modality mask: " + std::to_string(ids_.size()) + " ids for a [" + std::to_string(batch_) +
                         "," + std::to_string(length_) + "] batch");
  }
  partition_.resize(num_modalities_);
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const int m = ids_[i];
    if (m < 0 || static_cast<std::size_t>(m) >= num_modalities_) {
      throw ValidationError("modality mask: id " + std::to_string(m) + " at position " + std::to_string(i) +
                            " outside 0.." + std::to_string(num_modalities_ - 1));
    }
    partition_[static_cast<std::size_t>(m)].push_back(i);
  }
}

ModalityMask ModalityMask::uniform(std::size_t batch, std::size_t length, std::size_t num_modalities, int id) {
  return ModalityMask(batch, length, num_modalities, std::vector<int>(batch * length, id));
}

std::vector<std::vector<std::size_t>> modality_partition(const ModalityMask& mask) { return mask.partition(); }

void RoutedWeights::validate() const {
  if (weights.empty()) throw DimensionError("routed weights: no weight tensors");
  const Shape& s0 = weights[0].shape();
  if (s0.size() != 2) throw DimensionError("routed weights: weights must be rank 2, got " + shape_string(s0));
  for (std::size_t m = 1; m < weights.size(); ++m) {
    if (weights[m].shape() != s0) {
      throw DimensionError("routed weights: modality " + std::to_string(m) + " weight " +
                           shape_string(weights[m].shape()) + " differs from " + shape_string(s0));
    }
  }
  if (!biases.empty()) {
    if (biases.size() != weights.size()) {
      throw DimensionError("routed weights: " + std::to_string(biases.size()) + " biases for " +
                           std::to_string(weights.size()) + " weights");
    }
    for (const Tensor& b : biases) {
      if (b.shape() != Shape{s0[1]}) {
        throw DimensionError("routed weights: bias " + shape_string(b.shape()) + " does not match f_out=" +
                             std::to_string(s0[1]));
      }
    }
  }
}

RoutedWeights RoutedWeights::replicated(const Tensor& weight, std::size_t copies, const Tensor* bias) {
  RoutedWeights out;
  out.weights.assign(copies, weight);
  if (bias) out.biases.assign(copies, *bias);
  // Copies must not alias once an optimiser starts mutating them.
  for (Tensor& w : out.weights) w = Tensor(w.shape(), std::vector<double>(w.data().begin(), w.data().end()));
  for (Tensor& b : out.biases) b = Tensor(b.shape(), std::vector<double>(b.data().begin(), b.data().end()));
  return out;
}

Var modal_linear(const Var& x, const RoutedVars& w, const ModalityMask& mask) {
  if (w.weights.empty()) throw DimensionError("modal_linear: no weights");
  if (!w.biases.empty() && w.biases.size() != w.weights.size()) {
    throw DimensionError("modal_linear: " + std::to_string(w.biases.size()) + " biases for " +
                         std::to_string(w.weights.size()) + " weights");
  }
  const Tensor xv = x.value();
  if (xv.rows() != mask.tokens()) {
    throw DimensionError("modal_linear: X has " + std::to_string(xv.rows()) + " token rows " +
                         shape_string(xv.shape()) + ", mask covers " + std::to_string(mask.tokens()));
  }
  if (w.weights.size() == 1) {
    return ops::linear(x, w.weights[0], w.biases.empty() ? std::nullopt : std::optional<Var>(w.biases[0]));
  }
  if (w.weights.size() != mask.num_modalities()) {
    throw DimensionError("modal_linear: " + std::to_string(w.weights.size()) + " weights for " +
                         std::to_string(mask.num_modalities()) + " modalities");
  }
  const Shape wshape = w.weights[0].shape();
  if (wshape.size() != 2) throw DimensionError("modal_linear: weights must be rank 2");
  const std::size_t fin = wshape[0], fout = wshape[1];
  if (xv.cols() != fin) {
    throw DimensionError("modal_linear: X trailing axis (f_in=" + std::to_string(xv.cols()) +
                         ") does not match W axis 0 (" + std::to_string(fin) + ")");
  }
  for (std::size_t m = 0; m < w.weights.size(); ++m) {
    if (w.weights[m].shape() != wshape) {
      throw DimensionError("modal_linear: modality " + std::to_string(m) + " weight " +
                           shape_string(w.weights[m].shape()) + " differs from " + shape_string(wshape));
    }
    if (!w.biases.empty() && w.biases[m].shape() != Shape{fout}) {
      throw DimensionError("modal_linear: modality " + std::to_string(m) + " bias shape mismatch");
    }
  }

  Shape out_shape = xv.shape();
  out_shape.back() = fout;
  Tensor out(out_shape);
  auto y = out.mutable_data();
  const auto& parts = mask.partition();
  std::vector<std::vector<double>> gathered(parts.size());
  std::vector<double> block;
  for (std::size_t m = 0; m < parts.size(); ++m) {
    const auto& rows = parts[m];
    if (rows.empty()) continue;
    auto& xm = gathered[m];
    xm.resize(rows.size() * fin);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy_n(xv.data().data() + rows[i] * fin, fin, xm.data() + i * fin);
    }
    block.assign(rows.size() * fout, 0.0);
    const double* bias = w.biases.empty() ? nullptr : w.biases[m].value().data().data();
    kernels::gemm(xm.data(), rows.size(), fin, w.weights[m].value().data().data(), fout, bias, block.data());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy_n(block.data() + i * fout, fout, y.data() + rows[i] * fout);
    }
  }

  std::vector<Var> inputs = {x};
  inputs.insert(inputs.end(), w.weights.begin(), w.weights.end());
  inputs.insert(inputs.end(), w.biases.begin(), w.biases.end());
  std::vector<Tensor> wv;
  for (const Var& wm : w.weights) wv.push_back(wm.value());
  return x.tape().record(
      std::move(out), inputs,
      [x, w, wv, parts, gathered = std::move(gathered), fin, fout](Tape& tape, std::span<const double> g) {
        double* dx = tape.grad_ptr(x);
        std::vector<double> gm, dxm;
        for (std::size_t m = 0; m < parts.size(); ++m) {
          const auto& rows = parts[m];
          if (rows.empty()) continue;
          gm.resize(rows.size() * fout);
          for (std::size_t i = 0; i < rows.size(); ++i) {
            std::copy_n(g.data() + rows[i] * fout, fout, gm.data() + i * fout);
          }
          if (dx) {
            dxm.assign(rows.size() * fin, 0.0);
            kernels::gemm_grad_input(gm.data(), rows.size(), fout, wv[m].data().data(), fin, dxm.data());
            for (std::size_t i = 0; i < rows.size(); ++i) {
              double* dr = dx + rows[i] * fin;
              for (std::size_t k = 0; k < fin; ++k) dr[k] += dxm[i * fin + k];
            }
          }
          double* dw = tape.grad_ptr(w.weights[m]);
          double* db = w.biases.empty() ? nullptr : tape.grad_ptr(w.biases[m]);
          if (dw) {
            kernels::gemm_grad_weight(gathered[m].data(), gm.data(), rows.size(), fin, fout, dw, db);
          } else if (db) {
            for (std::size_t i = 0; i < rows.size(); ++i) {
              for (std::size_t j = 0; j < fout; ++j) db[j] += gm[i * fout + j];
            }
          }
        }
      });
}

Tensor modal_linear(const Tensor& x, const RoutedWeights& w, const ModalityMask& mask) {
  w.validate();
  Tape tape;
  RoutedVars vars;
  for (const Tensor& t : w.weights) vars.weights.push_back(tape.constant(t));
  for (const Tensor& t : w.biases) vars.biases.push_back(tape.constant(t));
  return modal_linear(tape.constant(x), vars, mask).value();
}

}  // namespace mom
