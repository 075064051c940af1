#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmicf/graph.hpp"
#include "dmicf/model.hpp"

namespace dmicf {

/// Candidates of one user in descending score order, ties by ascending item.
struct RankedList {
  std::size_t user = 0;
  std::vector<std::size_t> items;
  std::vector<double> scores;
};

/// Orders `candidates` by `scores` (parallel arrays). Keeps the first
/// `limit` entries.
RankedList rank_candidates(std::size_t user, std::span<const std::size_t> candidates,
                           std::span<const double> scores,
                           std::size_t limit = std::numeric_limits<std::size_t>::max());

/// Scores every item not in `exclude` with the full forward pipeline.
/// Throws std::out_of_range for an unknown user.
RankedList rank_items(const DmicfModel& model, std::size_t user,
                      std::span<const std::size_t> exclude);

/// |top-N ∩ relevant| / |relevant|.
double recall_at(const RankedList& ranked, std::span<const std::size_t> relevant, std::size_t n);
/// Binary-relevance NDCG with a 1/log2(rank+1) discount.
double ndcg_at(const RankedList& ranked, std::span<const std::size_t> relevant, std::size_t n);

inline constexpr std::size_t kCohortCutoff = 40;
inline constexpr std::size_t kCohortWidth = 10;
inline constexpr std::size_t kNumCohorts = 10;

struct CohortRow {
  std::size_t lower = 0;
  std::optional<std::size_t> upper;  // exclusive; empty for the open last bucket
  std::size_t users = 0;
  std::optional<double> recall;      // mean Recall@40, empty when users == 0

  std::string label() const;
};

struct UserOutcome {
  std::size_t user = 0;
  std::size_t train_degree = 0;
  double cohort_recall = 0.0;  // Recall@40
};

/// Buckets users by training degree into [0,10), [10,20), …, [90,∞).
std::vector<CohortRow> cohort_report(std::span<const UserOutcome> outcomes);

struct MetricsReport {
  std::vector<std::size_t> cutoffs;
  std::map<std::size_t, double> recall;
  std::map<std::size_t, double> ndcg;
  std::size_t evaluated_users = 0;
  std::vector<CohortRow> cohorts;
};

/// Ranks every user with a nonempty relevant list against all items except
/// their `exclude` edges and macro-averages Recall/NDCG. Users are processed
/// in parallel; aggregation is in user order.
MetricsReport evaluate(const DmicfModel& model, const InteractionGraph& exclude,
                       const std::vector<std::vector<std::size_t>>& relevant,
                       std::span<const std::size_t> cutoffs);

/// Serialised as an indented JSON object (docs/formats.md).
std::string metrics_to_json(const MetricsReport& report);

// ---- intent statistics ------------------------------------------------------

struct DimensionStats {
  std::vector<double> mean;
  std::vector<double> variance;  // population variance
};

/// Column-wise mean/variance of a population (rows = members).
DimensionStats column_stats(const Tensor2& population);

struct IntentStats {
  std::string epoch_tag;
  std::size_t intent_dim = 0;
  std::size_t num_prototypes = 0;
  std::size_t embed_dim = 0;
  DimensionStats h_user;
  DimensionStats h_user_x;
  DimensionStats h_item;
  DimensionStats h_item_x;
  Tensor2 user_prototypes;
  Tensor2 item_prototypes;
};

IntentStats compute_intent_stats(const DmicfModel& model, const std::string& epoch_tag);
std::string intent_stats_to_string(const IntentStats& stats);
/// Throws std::runtime_error naming the path on I/O failure.
void export_intent_stats(const DmicfModel& model, const std::string& epoch_tag,
                         const std::filesystem::path& path);

}  // namespace dmicf
