#include "feddae/model.hpp"

#include <algorithm>
#include <cmath>

#include "feddae/errors.hpp"

namespace feddae {

namespace {

GaussianPosterior split_head(Vector&& head) {
  const size_t k2 = head.size();
  if (k2 % 2 != 0) throw dimension_error("encoder head width must be 2k");
  const size_t k = k2 / 2;
  GaussianPosterior gp;
  gp.mu.assign(head.begin(), head.begin() + k);
  gp.log_var.assign(head.begin() + k, head.end());
  return gp;
}

}  // namespace

GaussianPosterior encode(const DenseNet& encoder, const Vector& r_u,
                         bool train_mode, double dropout_rate, Rng& rng) {
  return split_head(forward(encoder, r_u, train_mode, dropout_rate, rng, nullptr));
}

GaussianPosterior encode_sparse(const DenseNet& encoder,
                                std::span<const int> positives, double value,
                                bool train_mode, double dropout_rate, Rng& rng) {
  Vector vals(positives.size(), value);
  return split_head(
      forward_sparse(encoder, positives, vals, train_mode, dropout_rate, rng, nullptr));
}

std::pair<double, double> gate_weights(const GateParams& gate, const Vector& r_u) {
  if (int(r_u.size()) != gate.psi.rows)
    throw dimension_error("gate_weights: r_u length != psi rows");
  double l0 = 0.0, l1 = 0.0;
  for (int i = 0; i < gate.psi.rows; ++i) {
    if (r_u[i] != 0.0) {
      l0 += r_u[i] * gate.psi.at(i, 0);
      l1 += r_u[i] * gate.psi.at(i, 1);
    }
  }
  Vector p = softmax({l0, l1});
  return {p[0], p[1]};
}

std::pair<double, double> gate_weights_sparse(const Matrix& psi,
                                              std::span<const int> positives) {
  double l0 = 0.0, l1 = 0.0;
  for (int i : positives) {
    l0 += psi.at(i, 0);
    l1 += psi.at(i, 1);
  }
  Vector p = softmax({l0, l1});
  return {p[0], p[1]};
}

GaussianPosterior combine_posteriors(const GaussianPosterior& gp_global,
                                     const GaussianPosterior& gp_local,
                                     double w1, double w2) {
  const size_t k = gp_global.mu.size();
  if (gp_local.mu.size() != k || gp_global.log_var.size() != k ||
      gp_local.log_var.size() != k)
    throw dimension_error("combine_posteriors: latent dims differ");
  GaussianPosterior out;
  out.mu.resize(k);
  out.log_var.resize(k);
  for (size_t j = 0; j < k; ++j) {
    out.mu[j] = w1 * gp_global.mu[j] + w2 * gp_local.mu[j];
    double var = w1 * w1 * std::exp(gp_global.log_var[j]) +
                 w2 * w2 * std::exp(gp_local.log_var[j]);
    if (var < kVarFloor) var = kVarFloor;
    out.log_var[j] = std::log(var);
  }
  return out;
}

Vector reparameterize(const GaussianPosterior& gp, Rng& rng) {
  const size_t k = gp.mu.size();
  Vector z(k);
  for (size_t j = 0; j < k; ++j)
    z[j] = gp.mu[j] + std::exp(0.5 * gp.log_var[j]) * rng.normal();
  return z;
}

Vector decode(const DenseNet& decoder, const Vector& z) {
  Rng dummy(0);
  Vector logits = forward(decoder, z, false, 0.0, dummy, nullptr);
  softmax_inplace(logits);
  return logits;
}

double multinomial_log_likelihood(const Vector& r_u, const Vector& pi) {
  if (r_u.size() != pi.size())
    throw dimension_error("multinomial_log_likelihood: length mismatch");
  double s = 0.0;
  for (size_t i = 0; i < r_u.size(); ++i)
    if (r_u[i] != 0.0) s += r_u[i] * std::log(pi[i] + kProbFloor);
  return s;
}

double multinomial_log_likelihood_sparse(std::span<const int> positives,
                                         const Vector& pi) {
  double s = 0.0;
  for (int i : positives) s += std::log(pi[size_t(i)] + kProbFloor);
  return s;
}

double kl_to_standard_normal(const GaussianPosterior& gp) {
  double s = 0.0;
  for (size_t j = 0; j < gp.mu.size(); ++j) {
    const double lv = gp.log_var[j];
    s += std::exp(lv) + gp.mu[j] * gp.mu[j] - 1.0 - lv;
  }
  return 0.5 * s;
}

ElboResult elbo(const ModelBundle& bundle, std::span<const int> positives,
                double beta, bool train_mode, double dropout_rate, Rng& rng,
                std::span<const int> candidates) {
  if (beta < 0.0 || beta > 1.0) throw dimension_error("elbo: beta must be in [0,1]");
  ElboResult res;
  ElboTape& t = res.tape;
  t.positives.assign(positives.begin(), positives.end());

  // Shared dropout mask: one bit per positive, drawn before the noise.
  std::vector<int> kept_idx;
  Vector kept_val;
  const bool drop = train_mode && dropout_rate > 0.0;
  const double keep_scale = drop ? 1.0 / (1.0 - dropout_rate) : 1.0;
  kept_idx.reserve(positives.size());
  for (int i : positives) {
    if (drop && rng.bernoulli(dropout_rate)) continue;
    kept_idx.push_back(i);
  }
  kept_val.assign(kept_idx.size(), keep_scale);

  Rng no_drop(0);
  GaussianPosterior gp_g = split_head(forward_sparse(
      *bundle.global_encoder, kept_idx, kept_val, false, 0.0, no_drop, &t.tape_global));
  GaussianPosterior gp_l = split_head(forward_sparse(
      *bundle.local_encoder, kept_idx, kept_val, false, 0.0, no_drop, &t.tape_local));
  t.mu_g = std::move(gp_g.mu);
  t.lv_g = std::move(gp_g.log_var);
  t.mu_l = std::move(gp_l.mu);
  t.lv_l = std::move(gp_l.log_var);

  if (bundle.fixed_weight >= 0.0) {
    t.learned_gate = false;
    t.w1 = bundle.fixed_weight;
    t.w2 = 1.0 - bundle.fixed_weight;
  } else {
    t.learned_gate = true;
    auto [w1, w2] = gate_weights_sparse(*bundle.psi, positives);
    t.w1 = w1;
    t.w2 = w2;
  }

  const size_t k = t.mu_g.size();
  GaussianPosterior combined;
  combined.mu.resize(k);
  combined.log_var.resize(k);
  t.var.resize(k);
  for (size_t j = 0; j < k; ++j) {
    combined.mu[j] = t.w1 * t.mu_g[j] + t.w2 * t.mu_l[j];
    double var = t.w1 * t.w1 * std::exp(t.lv_g[j]) + t.w2 * t.w2 * std::exp(t.lv_l[j]);
    if (var < kVarFloor) var = kVarFloor;
    t.var[j] = var;
    combined.log_var[j] = std::log(var);
  }

  t.eps.resize(k);
  t.z.resize(k);
  for (size_t j = 0; j < k; ++j) {
    t.eps[j] = train_mode ? rng.normal() : 0.0;
    t.z[j] = combined.mu[j] + std::sqrt(t.var[j]) * t.eps[j];
  }

  Rng dummy(0);
  Vector logits =
      forward(*bundle.decoder, t.z, false, 0.0, dummy, &t.tape_decoder);

  if (candidates.empty()) {
    softmax_inplace(logits);
    t.pi = std::move(logits);
    t.log_lik = multinomial_log_likelihood_sparse(positives, t.pi);
  } else {
    t.candidates.assign(candidates.begin(), candidates.end());
    Vector sub(t.candidates.size());
    for (size_t c = 0; c < t.candidates.size(); ++c)
      sub[c] = logits[size_t(t.candidates[c])];
    softmax_inplace(sub);
    t.pi = std::move(sub);
    double s = 0.0;
    for (size_t c = 0; c < t.candidates.size(); ++c) {
      const int item = t.candidates[c];
      if (std::binary_search(positives.begin(), positives.end(), item))
        s += std::log(t.pi[c] + kProbFloor);
    }
    t.log_lik = s;
  }

  t.kl = kl_to_standard_normal(combined);
  res.loss = t.log_lik - beta * t.kl;
  if (!std::isfinite(res.loss))
    throw poisoned_update_error("elbo: non-finite loss");
  return res;
}

void elbo_backward(const ModelBundle& bundle, const ElboTape& t, double beta,
                   Matrix* gate_grad) {
  const size_t k = t.mu_g.size();
  const int m = bundle.items();

  // d(-L)/d(decoder logits) = sum_r * pi - r.
  const double sum_r = double(t.positives.size());
  Vector dlogits(size_t(m), 0.0);
  if (t.candidates.empty()) {
    for (int i = 0; i < m; ++i) dlogits[size_t(i)] = sum_r * t.pi[size_t(i)];
    for (int i : t.positives) dlogits[size_t(i)] -= 1.0;
  } else {
    for (size_t c = 0; c < t.candidates.size(); ++c)
      dlogits[size_t(t.candidates[c])] = sum_r * t.pi[c];
    for (int i : t.positives) dlogits[size_t(i)] -= 1.0;
  }

  Vector dz = backward(*bundle.decoder, t.tape_decoder, dlogits, true);

  // Combined-posterior gradients: KL term plus the reparameterized sample.
  Vector dmu(k), dvar(k);
  for (size_t j = 0; j < k; ++j) {
    const double mu_j = t.w1 * t.mu_g[j] + t.w2 * t.mu_l[j];
    dmu[j] = dz[j] + beta * mu_j;
    double dv = dz[j] * t.eps[j] / (2.0 * std::sqrt(t.var[j])) +
                beta * 0.5 * (1.0 - 1.0 / t.var[j]);
    if (t.var[j] <= kVarFloor) dv = 0.0;  // floored: no flow
    dvar[j] = dv;
  }

  Vector head_g(2 * k), head_l(2 * k);
  double dw1 = 0.0, dw2 = 0.0;
  for (size_t j = 0; j < k; ++j) {
    const double vg = std::exp(t.lv_g[j]);
    const double vl = std::exp(t.lv_l[j]);
    head_g[j] = t.w1 * dmu[j];
    head_l[j] = t.w2 * dmu[j];
    head_g[k + j] = dvar[j] * t.w1 * t.w1 * vg;
    head_l[k + j] = dvar[j] * t.w2 * t.w2 * vl;
    if (t.learned_gate) {
      dw1 += dmu[j] * t.mu_g[j] + dvar[j] * 2.0 * t.w1 * vg;
      dw2 += dmu[j] * t.mu_l[j] + dvar[j] * 2.0 * t.w2 * vl;
    }
  }

  backward(*bundle.global_encoder, t.tape_global, head_g, false);
  backward(*bundle.local_encoder, t.tape_local, head_l, false);

  if (t.learned_gate && gate_grad) {
    const double inner = t.w1 * dw1 + t.w2 * dw2;
    const double dl1 = t.w1 * (dw1 - inner);
    const double dl2 = t.w2 * (dw2 - inner);
    for (int i : t.positives) {
      gate_grad->at(i, 0) += dl1;
      gate_grad->at(i, 1) += dl2;
    }
  }
}

Vector predict_scores(const ModelBundle& bundle, std::span<const int> positives) {
  Rng dummy(0);
  GaussianPosterior gp_g =
      encode_sparse(*bundle.global_encoder, positives, 1.0, false, 0.0, dummy);
  GaussianPosterior gp_l =
      encode_sparse(*bundle.local_encoder, positives, 1.0, false, 0.0, dummy);

  double w1, w2;
  if (bundle.fixed_weight >= 0.0) {
    w1 = bundle.fixed_weight;
    w2 = 1.0 - bundle.fixed_weight;
  } else {
    std::tie(w1, w2) = gate_weights_sparse(*bundle.psi, positives);
  }

  const size_t k = gp_g.mu.size();
  Vector mu(k);
  for (size_t j = 0; j < k; ++j) mu[j] = w1 * gp_g.mu[j] + w2 * gp_l.mu[j];
  return forward(*bundle.decoder, mu, false, 0.0, dummy, nullptr);
}

}  // namespace feddae
