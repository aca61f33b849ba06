#pragma once

#include <vector>

#include "dermamap/nn/tensor.hpp"

namespace dermamap {

// Pairwise contrastive loss over a latent set Z with cosine similarity:
//   -log( exp(sim(z_i, z_i')/tau) / sum_{k != i} exp(sim(z_i, z_k)/tau) )
// Errors: |Z| < 2, zero-norm latents, tau <= 0, invalid indices.
double contrastive_loss(const std::vector<std::vector<double>>& latents,
                        int i, int i_prime, double tau);

double cosine_similarity(const std::vector<double>& a,
                         const std::vector<double>& b);

// Batch objective: mean over samples of [contrastive + squared error].
// `pair_index[i]` names each sample's symmetric partner inside the batch;
// with the symmetric term disabled the contrastive part is zero and
// pair_index is ignored. Labels and predictions are on the [0,1] scale.
double total_loss(const std::vector<std::vector<double>>& latents,
                  const std::vector<double>& predictions,
                  const std::vector<double>& labels,
                  const std::vector<int>& pair_index, double tau,
                  bool use_symmetric_loss);

// Tape version used in training; returns the scalar objective node.
// With the symmetric term on, every sample must resolve a partner
// (pair_index[i] in [0,B), != i); a missing partner is an error.
template <class T>
typename nn::Tape<T>::Id batch_objective(nn::Tape<T>& tape,
                                         typename nn::Tape<T>::Id z,
                                         typename nn::Tape<T>::Id yhat,
                                         const std::vector<T>& labels,
                                         const std::vector<int>& pair_index,
                                         T tau, bool use_symmetric_loss) {
  const auto mse = tape.mse_mean(yhat, labels);
  if (!use_symmetric_loss) return mse;
  const int B = tape.val(z).shape[0];
  require(int(pair_index.size()) == B,
          "batch objective: pair index length must match the batch");
  for (int i = 0; i < B; ++i)
    require(pair_index[size_t(i)] >= 0 && pair_index[size_t(i)] < B &&
                pair_index[size_t(i)] != i,
            "batch objective: sample " + std::to_string(i) +
                " has no symmetric partner in the batch");
  const auto zn = tape.l2_normalize_rows(z);
  const auto sims = tape.gram(zn);
  const auto con = tape.info_nce(sims, pair_index, tau);
  return tape.add(tape.mean_all(con), mse);
}

}  // namespace dermamap
