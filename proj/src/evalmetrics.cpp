#include "dermamap/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace dermamap {

std::string to_string(ShotGroup g) {
  switch (g) {
    case ShotGroup::kMany: return "many";
    case ShotGroup::kMedium: return "medium";
    case ShotGroup::kFew: return "few";
  }
  fail("bad shot group enum");
}

int ShotPartition::bin_of(double label) const {
  const int b = int(std::floor((label - lo) / bin_width));
  return std::clamp(b, 0, int(counts.size()) - 1);
}

ShotPartition partition_shots(const std::vector<double>& train_labels,
                              double bin_width) {
  require(!train_labels.empty(), "partition_shots: empty label set");
  require(bin_width > 0.0, "partition_shots: bin width must be positive");
  const auto [mn_it, mx_it] =
      std::minmax_element(train_labels.begin(), train_labels.end());
  ShotPartition part;
  part.bin_width = bin_width;
  part.lo = std::floor(*mn_it / bin_width) * bin_width;
  const int bins =
      std::max(1, int(std::floor((*mx_it - part.lo) / bin_width)) + 1);
  part.counts.assign(size_t(bins), 0);
  for (double v : train_labels) ++part.counts[size_t(part.bin_of(v))];
  const int64_t max_count = *std::max_element(part.counts.begin(), part.counts.end());
  part.groups.resize(part.counts.size());
  for (size_t b = 0; b < part.counts.size(); ++b) {
    const double c = double(part.counts[b]);
    if (c >= max_count / 2.0)
      part.groups[b] = ShotGroup::kMany;
    else if (c >= max_count / 4.0)
      part.groups[b] = ShotGroup::kMedium;
    else
      part.groups[b] = ShotGroup::kFew;
  }
  return part;
}

double mae(const std::vector<double>& preds, const std::vector<double>& labels) {
  require(preds.size() == labels.size(), "mae: length mismatch");
  require(!preds.empty(), "mae: empty input");
  double acc = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) acc += std::fabs(preds[i] - labels[i]);
  return acc / double(preds.size());
}

std::optional<double> mae_group(const std::vector<double>& preds,
                                const std::vector<double>& labels,
                                const ShotPartition& partition, ShotGroup group) {
  require(preds.size() == labels.size(), "mae_group: length mismatch");
  double acc = 0.0;
  int64_t n = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (partition.group_of(labels[i]) != group) continue;
    acc += std::fabs(preds[i] - labels[i]);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return acc / double(n);
}

double r2_score(const std::vector<double>& preds, const std::vector<double>& labels) {
  require(preds.size() == labels.size(), "r2: length mismatch");
  require(preds.size() >= 2, "r2: needs at least two samples");
  double mean = 0.0;
  for (double y : labels) mean += y / double(labels.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (size_t i = 0; i < labels.size(); ++i) {
    ss_tot += (labels[i] - mean) * (labels[i] - mean);
    ss_res += (labels[i] - preds[i]) * (labels[i] - preds[i]);
  }
  require(ss_tot > 0.0, "r2: zero-variance labels");
  return 1.0 - ss_res / ss_tot;
}

EvalReport evaluate_predictions(const std::vector<double>& preds,
                                const std::vector<double>& labels,
                                const ShotPartition& partition, MetricKind kind) {
  EvalReport rep;
  rep.kind = kind;
  rep.sample_count = int64_t(preds.size());
  rep.mae_all = mae(preds, labels);
  rep.mae_many = mae_group(preds, labels, partition, ShotGroup::kMany);
  rep.mae_medium = mae_group(preds, labels, partition, ShotGroup::kMedium);
  rep.mae_few = mae_group(preds, labels, partition, ShotGroup::kFew);
  rep.r2 = r2_score(preds, labels);
  return rep;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind);
  j["model"] = model_tag;
  j["dataset"] = dataset_tag;
  j["samples"] = sample_count;
  j["mae_all"] = mae_all;
  if (mae_many) j["mae_many"] = *mae_many;
  if (mae_medium) j["mae_medium"] = *mae_medium;
  if (mae_few) j["mae_few"] = *mae_few;
  j["r2"] = r2;
  return j.dump();
}

std::string EvalReport::to_table_row() const {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("   -  ");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.3f", *v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << to_string(kind) << "  MAE(all)=" << cell(std::optional<double>(mae_all))
     << "  MAE(many)=" << cell(mae_many) << "  MAE(med)=" << cell(mae_medium)
     << "  MAE(few)=" << cell(mae_few);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%7.4f", r2);
  os << "  R2=" << buf;
  return os.str();
}

}  // namespace dermamap
