#include "feddae/nn.hpp"

#include <algorithm>
#include <cmath>

#include "feddae/errors.hpp"

namespace feddae {

void ParamGrads::zero() {
  for (auto& m : w) m.zero();
  for (auto& x : b) std::fill(x.begin(), x.end(), 0.0);
}

void ParamGrads::add(const ParamGrads& other) { add_scaled(other, 1.0); }

void ParamGrads::add_scaled(const ParamGrads& other, double s) {
  if (w.size() != other.w.size() || b.size() != other.b.size())
    throw dimension_error("ParamGrads::add: layer count mismatch");
  for (size_t l = 0; l < w.size(); ++l) {
    if (!w[l].same_shape(other.w[l]) || b[l].size() != other.b[l].size())
      throw dimension_error("ParamGrads::add: shape mismatch at layer " + std::to_string(l));
    axpy(s, other.w[l].v.data(), w[l].v.data(), int(w[l].size()));
    axpy(s, other.b[l].data(), b[l].data(), int(b[l].size()));
  }
}

void ParamGrads::scale(double s) {
  for (auto& m : w)
    for (auto& x : m.v) x *= s;
  for (auto& v : b)
    for (auto& x : v) x *= s;
}

size_t ParamGrads::param_count() const {
  size_t n = 0;
  for (const auto& m : w) n += m.size();
  for (const auto& v : b) n += v.size();
  return n;
}

bool ParamGrads::finite() const {
  for (const auto& m : w)
    if (!all_finite(m.v.data(), m.size())) return false;
  for (const auto& v : b)
    if (!all_finite(v.data(), v.size())) return false;
  return true;
}

void DenseNet::zero_grads() { grads.zero(); }

void DenseNet::zero_grads(std::span<const int> rows0) {
  for (int r : rows0) {
    double* p = grads.w[0].row(r);
    std::fill(p, p + grads.w[0].cols, 0.0);
  }
  std::fill(grads.b[0].begin(), grads.b[0].end(), 0.0);
  for (size_t l = 1; l < grads.w.size(); ++l) {
    grads.w[l].zero();
    std::fill(grads.b[l].begin(), grads.b[l].end(), 0.0);
  }
}

DenseNet make_net(const std::vector<int>& dims) {
  if (dims.size() < 2) throw dimension_error("make_net: need at least one layer");
  DenseNet net;
  const int L = int(dims.size()) - 1;
  for (int l = 0; l < L; ++l) {
    net.w.emplace_back(dims[l], dims[l + 1]);
    net.b.emplace_back(size_t(dims[l + 1]), 0.0);
    net.act.push_back(l + 1 < L ? Act::Tanh : Act::Identity);
  }
  net.grads = make_grads_like(net);
  return net;
}

void init_glorot(DenseNet& net, uint64_t stream_seed) {
  for (int l = 0; l < net.num_layers(); ++l) {
    Rng rng = derive_stream(stream_seed, {uint64_t(l)});
    Matrix& m = net.w[l];
    const double limit = std::sqrt(6.0 / double(m.rows + m.cols));
    for (auto& x : m.v) x = (2.0 * rng.uniform() - 1.0) * limit;
    std::fill(net.b[l].begin(), net.b[l].end(), 0.0);
  }
}

ParamGrads make_grads_like(const DenseNet& net) {
  ParamGrads g;
  for (const auto& m : net.w) g.w.emplace_back(m.rows, m.cols);
  for (const auto& v : net.b) g.b.emplace_back(v.size(), 0.0);
  return g;
}

namespace {

void apply_act(Act a, Vector& y) {
  if (a == Act::Tanh)
    for (auto& x : y) x = std::tanh(x);
}

// Runs layers 1..L-1 given the layer-0 output already in y.
Vector run_tail(const DenseNet& net, Vector y, Tape* tape) {
  apply_act(net.act[0], y);
  if (tape) tape->a.push_back(y);
  for (int l = 1; l < net.num_layers(); ++l) {
    Vector z = net.b[l];
    const Matrix& m = net.w[l];
    for (int i = 0; i < m.rows; ++i) {
      if (y[i] != 0.0) axpy(y[i], m.row(i), z.data(), m.cols);
    }
    apply_act(net.act[l], z);
    if (tape) tape->a.push_back(z);
    y = std::move(z);
  }
  return y;
}

}  // namespace

Vector forward(const DenseNet& net, const Vector& x, bool train_mode,
               double dropout_rate, Rng& rng, Tape* tape) {
  if (int(x.size()) != net.in_dim())
    throw dimension_error("forward: input size " + std::to_string(x.size()) +
                          " != net input dim " + std::to_string(net.in_dim()));
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw dimension_error("forward: dropout_rate must be in [0,1)");

  if (tape) {
    tape->net = &net;
    tape->x_idx.clear();
    tape->x_val.clear();
    tape->a.clear();
  }
  const bool drop = train_mode && dropout_rate > 0.0;
  const double keep_scale = drop ? 1.0 / (1.0 - dropout_rate) : 1.0;

  Vector y = net.b[0];
  const Matrix& m0 = net.w[0];
  for (int i = 0; i < m0.rows; ++i) {
    double xi = x[i];
    if (drop && xi != 0.0) xi = rng.bernoulli(dropout_rate) ? 0.0 : xi * keep_scale;
    if (xi == 0.0) continue;
    axpy(xi, m0.row(i), y.data(), m0.cols);
    if (tape) {
      tape->x_idx.push_back(i);
      tape->x_val.push_back(xi);
    }
  }
  return run_tail(net, std::move(y), tape);
}

Vector forward_sparse(const DenseNet& net, std::span<const int> idx,
                      std::span<const double> val, bool train_mode,
                      double dropout_rate, Rng& rng, Tape* tape) {
  if (idx.size() != val.size())
    throw dimension_error("forward_sparse: index/value length mismatch");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw dimension_error("forward_sparse: dropout_rate must be in [0,1)");

  if (tape) {
    tape->net = &net;
    tape->x_idx.clear();
    tape->x_val.clear();
    tape->a.clear();
  }
  const bool drop = train_mode && dropout_rate > 0.0;
  const double keep_scale = drop ? 1.0 / (1.0 - dropout_rate) : 1.0;

  Vector y = net.b[0];
  const Matrix& m0 = net.w[0];
  for (size_t j = 0; j < idx.size(); ++j) {
    const int i = idx[j];
    if (i < 0 || i >= m0.rows)
      throw dimension_error("forward_sparse: index out of range");
    double xi = val[j];
    if (drop) xi = rng.bernoulli(dropout_rate) ? 0.0 : xi * keep_scale;
    if (xi == 0.0) continue;
    axpy(xi, m0.row(i), y.data(), m0.cols);
    if (tape) {
      tape->x_idx.push_back(i);
      tape->x_val.push_back(xi);
    }
  }
  return run_tail(net, std::move(y), tape);
}

Vector backward(DenseNet& net, const Tape& tape, const Vector& upstream,
                bool want_input_grad) {
  if (tape.net != &net)
    throw dimension_error("backward: tape does not belong to this net");
  const int L = net.num_layers();
  if (int(tape.a.size()) != L)
    throw dimension_error("backward: incomplete tape");
  if (int(upstream.size()) != net.out_dim())
    throw dimension_error("backward: upstream size mismatch");

  Vector dh = upstream;
  for (int l = L - 1; l >= 0; --l) {
    const Vector& a = tape.a[l];
    if (net.act[l] == Act::Tanh)
      for (size_t j = 0; j < dh.size(); ++j) dh[j] *= 1.0 - a[j] * a[j];

    axpy(1.0, dh.data(), net.grads.b[l].data(), int(dh.size()));

    Matrix& gw = net.grads.w[l];
    const Matrix& w = net.w[l];
    if (l > 0) {
      const Vector& x = tape.a[l - 1];
      Vector dx(x.size(), 0.0);
      for (int i = 0; i < w.rows; ++i) {
        if (x[i] != 0.0) axpy(x[i], dh.data(), gw.row(i), gw.cols);
        dx[i] = dot(w.row(i), dh.data(), w.cols);
      }
      dh = std::move(dx);
    } else {
      for (size_t j = 0; j < tape.x_idx.size(); ++j)
        axpy(tape.x_val[j], dh.data(), gw.row(tape.x_idx[j]), gw.cols);
      if (want_input_grad) {
        Vector dx(w.rows, 0.0);
        for (int i = 0; i < w.rows; ++i) dx[i] = dot(w.row(i), dh.data(), w.cols);
        return dx;
      }
      return {};
    }
  }
  return dh;  // unreachable for L >= 1
}

AdamState make_adam(const DenseNet& net) {
  AdamState s;
  for (const auto& m : net.w) s.mw.emplace_back(m.size(), 0.0), s.vw.emplace_back(m.size(), 0.0);
  for (const auto& v : net.b) s.mb.emplace_back(v.size(), 0.0), s.vb.emplace_back(v.size(), 0.0);
  return s;
}

namespace {

void adam_update_span(double* p, const double* g, size_t n, double* m, double* v,
                      double lr, double b1, double b2, double eps, double c1,
                      double c2, const char* what, const std::string& label) {
  for (size_t i = 0; i < n; ++i) {
    const double gi = g[i];
    if (!std::isfinite(gi))
      throw poisoned_update_error("non-finite gradient in " + label + "." + what);
    m[i] = b1 * m[i] + (1.0 - b1) * gi;
    v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
    p[i] -= lr * (m[i] * c1) / (std::sqrt(v[i] * c2) + eps);
  }
}

}  // namespace

void adam_step(DenseNet& net, AdamState& state, const ParamGrads& grads,
               double lr, std::span<const int> rows0, const std::string& label) {
  if (grads.w.size() != net.w.size())
    throw dimension_error("adam_step: gradient layer count mismatch");
  state.step += 1;
  const double c1 = 1.0 / (1.0 - std::pow(state.beta1, double(state.step)));
  const double c2 = 1.0 / (1.0 - std::pow(state.beta2, double(state.step)));

  for (int l = 0; l < net.num_layers(); ++l) {
    if (!net.w[l].same_shape(grads.w[l]))
      throw dimension_error("adam_step: gradient shape mismatch at layer " + std::to_string(l));
    const std::string what = "layer" + std::to_string(l) + ".w";
    Matrix& p = net.w[l];
    const Matrix& g = grads.w[l];
    if (l == 0 && !rows0.empty()) {
      const int c = p.cols;
      for (int r : rows0)
        adam_update_span(p.row(r), g.row(r), size_t(c),
                         state.mw[l].data() + size_t(r) * c,
                         state.vw[l].data() + size_t(r) * c, lr, state.beta1,
                         state.beta2, state.eps, c1, c2, what.c_str(), label);
    } else {
      adam_update_span(p.v.data(), g.v.data(), p.size(), state.mw[l].data(),
                       state.vw[l].data(), lr, state.beta1, state.beta2,
                       state.eps, c1, c2, what.c_str(), label);
    }
    adam_update_span(net.b[l].data(), grads.b[l].data(), net.b[l].size(),
                     state.mb[l].data(), state.vb[l].data(), lr, state.beta1,
                     state.beta2, state.eps, c1, c2,
                     ("layer" + std::to_string(l) + ".b").c_str(), label);
  }
}

AdamMat make_adam_mat(const Matrix& p) {
  AdamMat s;
  s.m.assign(p.size(), 0.0);
  s.v.assign(p.size(), 0.0);
  return s;
}

void adam_step_mat(Matrix& p, const Matrix& g, AdamMat& state, double lr,
                   std::span<const int> rows, const std::string& label) {
  if (!p.same_shape(g)) throw dimension_error("adam_step_mat: shape mismatch");
  state.step += 1;
  const double c1 = 1.0 / (1.0 - std::pow(state.beta1, double(state.step)));
  const double c2 = 1.0 / (1.0 - std::pow(state.beta2, double(state.step)));
  if (rows.empty()) {
    adam_update_span(p.v.data(), g.v.data(), p.size(), state.m.data(),
                     state.v.data(), lr, state.beta1, state.beta2, state.eps,
                     c1, c2, "w", label);
  } else {
    for (int r : rows)
      adam_update_span(p.row(r), g.row(r), size_t(p.cols),
                       state.m.data() + size_t(r) * p.cols,
                       state.v.data() + size_t(r) * p.cols, lr, state.beta1,
                       state.beta2, state.eps, c1, c2, "w", label);
  }
}

void sgd_step(DenseNet& net, const ParamGrads& grads, double lr,
              std::span<const int> rows0) {
  for (int l = 0; l < net.num_layers(); ++l) {
    Matrix& p = net.w[l];
    const Matrix& g = grads.w[l];
    if (l == 0 && !rows0.empty()) {
      for (int r : rows0) axpy(-lr, g.row(r), p.row(r), p.cols);
    } else {
      axpy(-lr, g.v.data(), p.v.data(), int(p.size()));
    }
    axpy(-lr, grads.b[l].data(), net.b[l].data(), int(net.b[l].size()));
  }
}

void sgd_step_mat(Matrix& p, const Matrix& g, double lr, std::span<const int> rows) {
  if (rows.empty()) {
    axpy(-lr, g.v.data(), p.v.data(), int(p.size()));
  } else {
    for (int r : rows) axpy(-lr, g.row(r), p.row(r), p.cols);
  }
}

Vector softmax(const Vector& logits) {
  Vector p = logits;
  softmax_inplace(p);
  return p;
}

void softmax_inplace(Vector& x) {
  if (x.empty()) return;
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double sum = 0.0;
  for (auto& v : x) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : x) v /= sum;
}

}  // namespace feddae
