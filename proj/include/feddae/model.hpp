#pragma once

#include <span>
#include <utility>

#include "feddae/nn.hpp"

namespace feddae {

// Diagonal Gaussian over the k-dim latent code, parameterized as
// (mean, log-variance) for numeric stability.
struct GaussianPosterior {
  Vector mu;
  Vector log_var;
};

// Per-client gating parameters: psi is m x 2; weights come out of
// softmax(r_u . psi) and sum to 1.
struct GateParams {
  Matrix psi;
};

// Non-owning view of one client's model: shared encoder/decoder (or working
// copies of them), the client's private encoder and gate. fixed_weight >= 0
// forces the gate output to (w, 1-w) with w the global-encoder weight; the
// gate then receives no gradient.
struct ModelBundle {
  DenseNet* global_encoder = nullptr;
  DenseNet* local_encoder = nullptr;
  Matrix* psi = nullptr;
  DenseNet* decoder = nullptr;
  double fixed_weight = -1.0;

  int items() const { return global_encoder->in_dim(); }
  int latent() const { return decoder->in_dim(); }
};

// Linear KL warm-up: beta(step) = cap * min(1, step / total_anneal_steps),
// advanced once per global update step.
struct BetaSchedule {
  long total_anneal_steps = 0;
  double cap = 1.0;
  long current_step = 0;

  double beta_at(long step) const {
    if (total_anneal_steps <= 0) return cap;
    const double f = double(step) / double(total_anneal_steps);
    return cap * (f < 1.0 ? f : 1.0);
  }
  double current() const { return beta_at(current_step); }
  void advance(long n = 1) { current_step += n; }
};

// Variance floor applied when combining posteriors.
inline constexpr double kVarFloor = 1e-12;
// Probability floor inside log-likelihoods.
inline constexpr double kProbFloor = 1e-10;

// Runs the encoder on r_u and splits the 2k-wide head into (mu, log_var).
GaussianPosterior encode(const DenseNet& encoder, const Vector& r_u,
                         bool train_mode, double dropout_rate, Rng& rng);
GaussianPosterior encode_sparse(const DenseNet& encoder,
                                std::span<const int> positives, double value,
                                bool train_mode, double dropout_rate, Rng& rng);

// softmax(r_u . psi) as (w1, w2); w1 weighs the global encoder.
std::pair<double, double> gate_weights(const GateParams& gate, const Vector& r_u);
std::pair<double, double> gate_weights_sparse(const Matrix& psi,
                                              std::span<const int> positives);

// Lemma-1 combination: mu = w1*mu_g + w2*mu_l, var = w1^2*var_g + w2^2*var_l
// (executed in variance space, floored at kVarFloor, then re-logged).
GaussianPosterior combine_posteriors(const GaussianPosterior& gp_global,
                                     const GaussianPosterior& gp_local,
                                     double w1, double w2);

// z = mu + exp(log_var/2) * eps, eps ~ N(0, I_k).
Vector reparameterize(const GaussianPosterior& gp, Rng& rng);

// Probability vector over items: softmax(decoder(z)).
Vector decode(const DenseNet& decoder, const Vector& z);

// sum_i r_i * ln(pi_i + kProbFloor).
double multinomial_log_likelihood(const Vector& r_u, const Vector& pi);
double multinomial_log_likelihood_sparse(std::span<const int> positives,
                                         const Vector& pi);

// KL(q || N(0, I)) in closed form; >= 0.
double kl_to_standard_normal(const GaussianPosterior& gp);

// Everything backward needs from one elbo evaluation.
struct ElboTape {
  Tape tape_global, tape_local, tape_decoder;
  Vector mu_g, lv_g, mu_l, lv_l;
  double w1 = 0, w2 = 0;
  bool learned_gate = true;
  Vector var;  // combined, floored
  Vector eps, z;
  Vector pi;                    // full mode: dense over m; masked: over candidates
  std::vector<int> candidates;  // masked mode only; empty = full softmax
  std::vector<int> positives;
  double log_lik = 0, kl = 0;
};

struct ElboResult {
  double loss = 0;  // L_beta = log_lik - beta * kl
  ElboTape tape;
};

// Single-sample beta-ELBO for one client. Draws (in order) one shared
// dropout mask over the positives, then the reparameterization noise, from
// `rng`; both encoders see the same masked input, the gate sees the raw r_u.
// `candidates` non-empty switches the likelihood's softmax normalization to
// that item subset (sampled-negative parity mode).
ElboResult elbo(const ModelBundle& bundle, std::span<const int> positives,
                double beta, bool train_mode, double dropout_rate, Rng& rng,
                std::span<const int> candidates = {});

// Accumulates gradients of -L_beta into the bundle's net grads and, for a
// learned gate, into gate_grad (m x 2). Callers own grad zeroing.
void elbo_backward(const ModelBundle& bundle, const ElboTape& tape,
                   double beta, Matrix* gate_grad);

// Decoder logits at the combined posterior mean; no dropout, no sampling.
Vector predict_scores(const ModelBundle& bundle, std::span<const int> positives);

}  // namespace feddae
