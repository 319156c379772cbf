#pragma once

#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mvdiff/rng.hpp"
#include "mvdiff/tensor.hpp"

namespace mvdiff {

// Inference-time softmax-scale growth: d is the per-head dimension, N_train
// the token count the model was trained with, gamma the growth factor.
struct AttentionBiasConfig {
  int64_t d = 64;
  int64_t N_train = 2;
  double gamma = 1.0;
};

inline void validate_bias_config(const AttentionBiasConfig& cfg) {
  require(cfg.d >= 1, "attention bias: d must be >= 1");
  require(cfg.N_train >= 2, "attention bias: N_train must be >= 2");
  if (cfg.gamma < 1.0 || cfg.gamma > 2.0)
    std::cerr << "warning: gamma " << cfg.gamma
              << " outside the tuned range [1.0, 2.0]\n";
}

// lambda = sqrt(1/d) * sqrt(gamma * log N_infer / log N_train).
// gamma = 1 with N_infer == N_train reduces exactly to 1/sqrt(d).
inline double biased_lambda(const AttentionBiasConfig& cfg, int64_t N_infer) {
  validate_bias_config(cfg);
  require(N_infer >= 2, "biased_lambda: N_infer must be >= 2");
  return std::sqrt(1.0 / double(cfg.d)) *
         std::sqrt(cfg.gamma * std::log(double(N_infer)) /
                   std::log(double(cfg.N_train)));
}

struct AttentionResult {
  Tensor output;  // {N, dv}
  Tensor A;       // {N, N} row-stochastic scores
};

// A_ij = exp(lambda Qi.Kj) / sum_j' exp(lambda Qi.Kj'), output = A V.
// Row max is subtracted before exponentiation.
inline AttentionResult attention(const Tensor& Q, const Tensor& K,
                                 const Tensor& V, double lambda) {
  require(Q.cols() == K.cols(), "attention: Q/K dim mismatch");
  require(K.rows() == V.rows(), "attention: K/V length mismatch");
  require(lambda > 0, "attention: lambda must be positive");
  require(Q.all_finite() && K.all_finite() && V.all_finite(),
          "attention: non-finite inputs");

  const int64_t N = Q.rows(), M = K.rows();
  Tensor logits = matmul(Q, transpose(K));
  Tensor A({N, M});
  for (int64_t i = 0; i < N; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < M; ++j)
      m = std::max(m, lambda * logits.at(i, j));
    double denom = 0.0;
    for (int64_t j = 0; j < M; ++j) {
      const double e = std::exp(lambda * logits.at(i, j) - m);
      A.at(i, j) = e;
      denom += e;
    }
    for (int64_t j = 0; j < M; ++j) A.at(i, j) /= denom;
  }
  AttentionResult res;
  res.A = A;
  res.output = matmul(A, V);
  return res;
}

// Per-row entropies in nats plus their aggregate; each entry lies in
// [0, ln N].
struct EntropyStats {
  std::vector<double> per_row;
  double mean = 0.0, min = 0.0, max = 0.0;

  static EntropyStats from_rows(std::vector<double> rows) {
    EntropyStats s;
    s.per_row = std::move(rows);
    require(!s.per_row.empty(), "entropy stats: no rows");
    s.min = s.per_row[0];
    s.max = s.per_row[0];
    double total = 0.0;
    for (double e : s.per_row) {
      total += e;
      s.min = std::min(s.min, e);
      s.max = std::max(s.max, e);
    }
    s.mean = total / double(s.per_row.size());
    return s;
  }
};

// Ent(A_i) = -sum_j A_ij ln A_ij with 0 ln 0 := 0; natural log.
inline EntropyStats attention_entropy(const Tensor& A) {
  const int64_t N = A.rows(), M = A.cols();
  std::vector<double> rows(static_cast<size_t>(N), 0.0);
  for (int64_t i = 0; i < N; ++i) {
    double sum = 0.0, ent = 0.0;
    for (int64_t j = 0; j < M; ++j) {
      const double a = A.at(i, j);
      require(a >= 0.0, "attention_entropy: negative entry");
      sum += a;
      if (a > 0.0) ent -= a * std::log(a);
    }
    require(std::abs(sum - 1.0) <= 1e-5,
            "attention_entropy: row " + std::to_string(i) +
                " does not sum to 1");
    rows[size_t(i)] = ent;
  }
  return EntropyStats::from_rows(std::move(rows));
}

struct EntropyProbeRow {
  int64_t n_tokens = 0;
  std::optional<double> gamma;  // nullopt = no scaling (lambda = 1/sqrt(d))
  double lambda = 0.0;
  double mean_entropy = 0.0, min_entropy = 0.0, max_entropy = 0.0;
  std::string layer_tag;
};

// Entropy table over (token count, growth factor) for i.i.d. Gaussian Q, K.
// The logits for a given (N, seed) are shared across the lambda column so
// the sweep cost is one gemm per draw. The no-scaling column always uses
// 1/sqrt(d).
inline std::vector<EntropyProbeRow> entropy_probe_gaussian(
    const AttentionBiasConfig& base_cfg, const std::vector<int64_t>& token_counts,
    const std::vector<double>& gammas, int n_seeds, uint64_t seed) {
  require(!token_counts.empty(), "entropy_probe: no token counts");
  for (int64_t n : token_counts)
    require(n >= 2, "entropy_probe: token counts must be >= 2");

  std::vector<EntropyProbeRow> rows;
  const double lambda0 = std::sqrt(1.0 / double(base_cfg.d));
  for (int64_t N : token_counts) {
    std::vector<double> lambdas;
    std::vector<std::optional<double>> gamma_tags;
    lambdas.push_back(lambda0);  // no scaling
    gamma_tags.push_back(std::nullopt);
    for (double g : gammas) {
      AttentionBiasConfig cfg = base_cfg;
      cfg.gamma = g;
      lambdas.push_back(biased_lambda(cfg, N));
      gamma_tags.push_back(g);
    }

    std::vector<double> mean_acc(lambdas.size(), 0.0);
    std::vector<double> min_acc(lambdas.size(),
                                std::numeric_limits<double>::infinity());
    std::vector<double> max_acc(lambdas.size(),
                                -std::numeric_limits<double>::infinity());
    for (int s = 0; s < n_seeds; ++s) {
      Rng rng(mix_seed(seed, uint64_t(s) * 1315423911ull + uint64_t(N)));
      const Tensor Q = Tensor::randn({N, base_cfg.d}, rng);
      const Tensor K = Tensor::randn({N, base_cfg.d}, rng);
      const Tensor logits = matmul(Q, transpose(K));
      for (size_t li = 0; li < lambdas.size(); ++li) {
        const double lambda = lambdas[li];
        double sum_ent = 0.0;
        for (int64_t i = 0; i < N; ++i) {
          // entropy without forming log A: Ent = lse - lambda * sum A*logit
          double m = -std::numeric_limits<double>::infinity();
          for (int64_t j = 0; j < N; ++j)
            m = std::max(m, lambda * logits.at(i, j));
          double denom = 0.0, weighted = 0.0;
          for (int64_t j = 0; j < N; ++j) {
            const double l = lambda * logits.at(i, j);
            const double e = std::exp(l - m);
            denom += e;
            weighted += e * l;
          }
          const double ent = std::log(denom) + m - weighted / denom;
          sum_ent += ent;
          min_acc[li] = std::min(min_acc[li], ent);
          max_acc[li] = std::max(max_acc[li], ent);
        }
        mean_acc[li] += sum_ent / double(N);
      }
    }
    for (size_t li = 0; li < lambdas.size(); ++li) {
      EntropyProbeRow row;
      row.n_tokens = N;
      row.gamma = gamma_tags[li];
      row.lambda = lambdas[li];
      row.mean_entropy = mean_acc[li] / double(n_seeds);
      row.min_entropy = min_acc[li];
      row.max_entropy = max_acc[li];
      row.layer_tag = "random";
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace mvdiff
