// SPDX-License-Identifier: Apache-2.0
//
// Multi-layer bidirectional LSTM over [n x T x D] inputs.
//
// Gate order inside every 4H block is (input, forget, cell, output):
//   i, f, o = sigmoid(.)   g = tanh(.)
//   c_t = f * c_{t-1} + i * g
//   h_t = o * tanh(c_t)
// Each layer runs one direction left to right and one right to left from
// zero initial state and concatenates [forward_h ; backward_h] per step.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "bilcnet/layers.hpp"

namespace bilcnet {

struct BiLstmConfig {
  std::size_t input_dim = 61;
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 2;
  double dropout = 0.1;

  void validate() const;
};

template <typename T>
struct LstmParams {
  LstmParams() = default;
  LstmParams(const std::string& name, std::size_t in, std::size_t hidden);

  /// uniform(-1/sqrt(H), 1/sqrt(H)); forget-gate bias total set to +1.
  void init(Rng& rng);
  void collect(ParamList<T>& out);

  std::size_t in = 0;
  std::size_t hidden = 0;
  Parameter<T> w_ih;  // [4H x in]
  Parameter<T> w_hh;  // [4H x H]
  Parameter<T> b_ih;  // [4H]
  Parameter<T> b_hh;  // [4H]
};

template <typename T>
struct LstmState {
  Tensor<T> h;  // [n x H]
  Tensor<T> c;  // [n x H]
};

template <typename T>
struct LstmStepCache {
  Tensor<T> x;
  Tensor<T> h_prev;
  Tensor<T> c_prev;
  Tensor<T> gates;   // activated (i, f, g, o), [n x 4H]
  Tensor<T> tanh_c;  // [n x H]
};

template <typename T>
struct LstmStepGrads {
  Tensor<T> x;
  Tensor<T> h_prev;
  Tensor<T> c_prev;
};

/// One LSTM step for a batch: x[n x in], h_prev/c_prev[n x H].
template <typename T>
LstmState<T> lstm_cell_step(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                            const LstmParams<T>& params, LstmStepCache<T>* cache);

/// Backward of lstm_cell_step given dL/dh_t and dL/dc_t; accumulates into
/// params' grads.
template <typename T>
LstmStepGrads<T> lstm_cell_step_backward(const Tensor<T>& gh, const Tensor<T>& gc,
                                         const LstmStepCache<T>& cache, LstmParams<T>& params);

template <typename T>
class BiLstm {
 public:
  struct DirectionCache {
    std::vector<Tensor<T>> gates;   // per step [n x 4H]
    std::vector<Tensor<T>> c;       // per step [n x H]
    std::vector<Tensor<T>> tanh_c;  // per step [n x H]
    std::vector<Tensor<T>> h;       // per step [n x H]
  };
  struct LayerCache {
    Tensor<T> input;  // [n x T x in]
    DirectionCache fwd;
    DirectionCache bwd;
    ops::DropoutMask<T> drop;  // applied to this layer's output (all but last)
  };
  struct Cache {
    std::vector<LayerCache> layers;
  };

  BiLstm() = default;
  BiLstm(const std::string& name, const BiLstmConfig& config);

  void init(Rng& rng);
  /// x[n x T x D] -> [n x T x 2H]
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache) const;
  Tensor<T> backward(const Tensor<T>& gy, const Cache& cache);
  void collect(ParamList<T>& out);

  const BiLstmConfig& config() const { return config_; }
  /// Per layer (forward, backward) direction parameters.
  std::vector<std::array<LstmParams<T>, 2>> layers;

 private:
  BiLstmConfig config_;
};

}  // namespace bilcnet
