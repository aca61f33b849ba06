#include "dermamap/losses.hpp"

#include <cmath>

#include "dermamap/common.hpp"

namespace dermamap {

double cosine_similarity(const std::vector<double>& a,
                         const std::vector<double>& b) {
  require(a.size() == b.size() && !a.empty(),
          "cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  require(na > 1e-24 && nb > 1e-24, "cosine_similarity: zero-norm latent");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double contrastive_loss(const std::vector<std::vector<double>>& latents,
                        int i, int i_prime, double tau) {
  const int n = int(latents.size());
  require(n >= 2, "contrastive_loss: latent set must hold at least two elements");
  require(tau > 0.0, "contrastive_loss: temperature must be positive");
  require(i >= 0 && i < n && i_prime >= 0 && i_prime < n && i != i_prime,
          "contrastive_loss: invalid latent indices");
  // log-sum-exp over k != i, max-shifted for stability.
  double mx = -1e300;
  std::vector<double> sims(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    if (k == i) continue;
    sims[size_t(k)] =
        cosine_similarity(latents[size_t(i)], latents[size_t(k)]) / tau;
    mx = std::max(mx, sims[size_t(k)]);
  }
  double sum = 0.0;
  for (int k = 0; k < n; ++k)
    if (k != i) sum += std::exp(sims[size_t(k)] - mx);
  return (mx + std::log(sum)) - sims[size_t(i_prime)];
}

double total_loss(const std::vector<std::vector<double>>& latents,
                  const std::vector<double>& predictions,
                  const std::vector<double>& labels,
                  const std::vector<int>& pair_index, double tau,
                  bool use_symmetric_loss) {
  const size_t n = predictions.size();
  require(labels.size() == n && n > 0, "total_loss: length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = labels[i] - predictions[i];
    acc += d * d;
    if (use_symmetric_loss) {
      require(latents.size() == n && pair_index.size() == n,
              "total_loss: latents/pairs must match the batch");
      acc += contrastive_loss(latents, int(i), pair_index[i], tau);
    }
  }
  return acc / double(n);
}

}  // namespace dermamap
