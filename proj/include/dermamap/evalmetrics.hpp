#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dermamap/common.hpp"
#include "dermamap/types.hpp"

namespace dermamap {

enum class ShotGroup { kMany = 0, kMedium = 1, kFew = 2 };

std::string to_string(ShotGroup g);

// Histogram over training labels with per-bin groups: a bin is many-shot at
// count >= max/2, medium-shot in [max/4, max/2), few-shot below max/4.
// Thresholds derive from training data only; evaluation labels outside the
// histogram fall into the nearest edge bin.
struct ShotPartition {
  double lo = 0.0;          // left edge of bin 0
  double bin_width = 1.0;
  std::vector<int64_t> counts;
  std::vector<ShotGroup> groups;

  int bin_of(double label) const;
  ShotGroup group_of(double label) const { return groups[size_t(bin_of(label))]; }
};

ShotPartition partition_shots(const std::vector<double>& train_labels,
                              double bin_width);

// Mean absolute error, optionally restricted to labels of one shot group.
double mae(const std::vector<double>& preds, const std::vector<double>& labels);
std::optional<double> mae_group(const std::vector<double>& preds,
                                const std::vector<double>& labels,
                                const ShotPartition& partition, ShotGroup group);

// R^2 = 1 - SS_res/SS_tot; needs >= 2 samples and non-constant labels.
double r2_score(const std::vector<double>& preds, const std::vector<double>& labels);

// Per-group MAE plus R^2 for one model x dataset x metric kind.
struct EvalReport {
  MetricKind kind = MetricKind::kTewl;
  std::string model_tag;
  std::string dataset_tag;
  int64_t sample_count = 0;
  double mae_all = 0.0;
  std::optional<double> mae_many;    // absent when the group is empty
  std::optional<double> mae_medium;
  std::optional<double> mae_few;
  double r2 = 0.0;

  std::string to_json() const;
  std::string to_table_row() const;
};

EvalReport evaluate_predictions(const std::vector<double>& preds,
                                const std::vector<double>& labels,
                                const ShotPartition& partition, MetricKind kind);

}  // namespace dermamap
