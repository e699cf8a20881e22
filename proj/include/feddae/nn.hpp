#pragma once

#include <span>
#include <string>
#include <vector>

#include "feddae/rng.hpp"
#include "feddae/tensor.hpp"

namespace feddae {

enum class Act { Tanh, Identity };

// Gradient (or gradient-accumulator) tensors mirroring a DenseNet's
// parameters. Also used for client uploads and server-side aggregation.
struct ParamGrads {
  std::vector<Matrix> w;
  std::vector<Vector> b;

  void zero();
  void add(const ParamGrads& other);            // this += other
  void add_scaled(const ParamGrads& other, double s);
  void scale(double s);
  size_t param_count() const;
  bool finite() const;
};

// Sequential dense net. Weight matrices are stored input-major (in x out);
// grads live alongside the parameters and accumulate across backward calls
// until the caller zeroes them.
struct DenseNet {
  std::vector<Matrix> w;
  std::vector<Vector> b;
  std::vector<Act> act;
  ParamGrads grads;

  int num_layers() const { return int(w.size()); }
  int in_dim() const { return w.empty() ? 0 : w.front().rows; }
  int out_dim() const { return w.empty() ? 0 : int(b.back().size()); }

  void zero_grads();
  // Zeroes only the given layer-0 weight rows (plus everything else dense).
  // Exact when no other layer-0 row has been touched since the last zeroing.
  void zero_grads(std::span<const int> rows0);
};

// dims = [d0, d1, ..., dL]: L affine layers d0->d1->...->dL.
// Hidden activations tanh, final layer identity.
DenseNet make_net(const std::vector<int>& dims);

// Glorot-uniform weights, zero biases, one derived stream per layer tensor.
void init_glorot(DenseNet& net, uint64_t stream_seed);

ParamGrads make_grads_like(const DenseNet& net);

// Cached activations from one forward pass; consumed by backward.
struct Tape {
  const DenseNet* net = nullptr;
  std::vector<int> x_idx;   // input support (post-dropout)
  Vector x_val;             // matching values
  std::vector<Vector> a;    // post-activation output of each layer
};

// Dense-input forward. In train mode, inverted dropout is applied to x only
// (mask per coordinate, kept values scaled by 1/(1-rate)); rate 0 draws
// nothing. Pass tape=nullptr when gradients are not needed.
Vector forward(const DenseNet& net, const Vector& x, bool train_mode,
               double dropout_rate, Rng& rng, Tape* tape);

// Sparse-input forward: x has value `val[i]` at index `idx[i]`, zero
// elsewhere. Dropout draws one mask bit per listed entry, in order.
Vector forward_sparse(const DenseNet& net, std::span<const int> idx,
                      std::span<const double> val, bool train_mode,
                      double dropout_rate, Rng& rng, Tape* tape);

// Accumulates d(loss)/d(params) into net.grads given d(loss)/d(output).
// Returns d(loss)/d(input) (dense) when want_input_grad; repeated calls
// with fresh tapes keep accumulating.
Vector backward(DenseNet& net, const Tape& tape, const Vector& upstream,
                bool want_input_grad = true);

// Adam moments for one net (or one matrix, see AdamMat).
struct AdamState {
  std::vector<Vector> mw, vw, mb, vb;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

AdamState make_adam(const DenseNet& net);

// One Adam update of net's parameters from the given gradient tensors.
// Grads are left untouched. `rows0`, when non-empty, restricts the sweep of
// the layer-0 weight matrix to those rows; entries outside must have zero
// gradient and zero moments (then skipping them is exact).
// `label` names the net in poisoned-update errors.
void adam_step(DenseNet& net, AdamState& state, const ParamGrads& grads,
               double lr, std::span<const int> rows0 = {},
               const std::string& label = "net");

struct AdamMat {
  Vector m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

AdamMat make_adam_mat(const Matrix& p);

void adam_step_mat(Matrix& p, const Matrix& g, AdamMat& state, double lr,
                   std::span<const int> rows = {},
                   const std::string& label = "mat");

// Plain gradient-descent step: p -= lr * g.
void sgd_step(DenseNet& net, const ParamGrads& grads, double lr,
              std::span<const int> rows0 = {});
void sgd_step_mat(Matrix& p, const Matrix& g, double lr,
                  std::span<const int> rows = {});

// Numerically stable softmax (max-subtraction); probs sum to 1.
Vector softmax(const Vector& logits);
void softmax_inplace(Vector& x);

}  // namespace feddae
