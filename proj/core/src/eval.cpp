#include "dmicf/eval.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace dmicf {

namespace {

std::vector<std::size_t> sorted_unique(std::span<const std::size_t> v) {
  std::vector<std::size_t> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool contains(const std::vector<std::size_t>& sorted, std::size_t x) {
  return std::binary_search(sorted.begin(), sorted.end(), x);
}

void append_double(std::string& out, double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("cannot format value");
  out.append(buf.data(), end);
}

}  // namespace

RankedList rank_candidates(std::size_t user, std::span<const std::size_t> candidates,
                           std::span<const double> scores, std::size_t limit) {
  if (candidates.size() != scores.size()) {
    throw DimensionError("rank_candidates: " + std::to_string(candidates.size()) +
                         " candidates but " + std::to_string(scores.size()) + " scores");
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  };
  const std::size_t keep = std::min(limit, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    better);
  RankedList r;
  r.user = user;
  r.items.reserve(keep);
  r.scores.reserve(keep);
  for (std::size_t k = 0; k < keep; ++k) {
    r.items.push_back(candidates[order[k]]);
    r.scores.push_back(scores[order[k]]);
  }
  return r;
}

RankedList rank_items(const DmicfModel& model, std::size_t user,
                      std::span<const std::size_t> exclude) {
  if (user >= model.graph().num_users()) {
    throw std::out_of_range("rank_items: user " + std::to_string(user) + " out of range (" +
                            std::to_string(model.graph().num_users()) + " users)");
  }
  const auto excluded = sorted_unique(exclude);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < model.graph().num_items(); ++i) {
    if (!contains(excluded, i)) candidates.push_back(i);
  }
  const auto scores = model.score(user, candidates);
  return rank_candidates(user, candidates, scores);
}

double recall_at(const RankedList& ranked, std::span<const std::size_t> relevant, std::size_t n) {
  const auto rel = sorted_unique(relevant);
  if (rel.empty()) throw std::invalid_argument("recall_at: empty relevant set");
  const std::size_t top = std::min(n, ranked.items.size());
  std::size_t hits = 0;
  for (std::size_t p = 0; p < top; ++p) hits += contains(rel, ranked.items[p]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(rel.size());
}

double ndcg_at(const RankedList& ranked, std::span<const std::size_t> relevant, std::size_t n) {
  const auto rel = sorted_unique(relevant);
  if (rel.empty()) throw std::invalid_argument("ndcg_at: empty relevant set");
  const std::size_t top = std::min(n, ranked.items.size());
  double dcg = 0.0;
  for (std::size_t p = 0; p < top; ++p) {
    if (contains(rel, ranked.items[p])) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  }
  double idcg = 0.0;
  for (std::size_t p = 0; p < std::min(n, rel.size()); ++p) {
    idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  }
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

std::string CohortRow::label() const {
  return "[" + std::to_string(lower) + "," + (upper ? std::to_string(*upper) + ")" : "inf)");
}

std::vector<CohortRow> cohort_report(std::span<const UserOutcome> outcomes) {
  std::vector<CohortRow> rows(kNumCohorts);
  std::vector<double> sums(kNumCohorts, 0.0);
  for (std::size_t b = 0; b < kNumCohorts; ++b) {
    rows[b].lower = b * kCohortWidth;
    if (b + 1 < kNumCohorts) rows[b].upper = (b + 1) * kCohortWidth;
  }
  for (const auto& o : outcomes) {
    const std::size_t b = std::min(o.train_degree / kCohortWidth, kNumCohorts - 1);
    ++rows[b].users;
    sums[b] += o.cohort_recall;
  }
  for (std::size_t b = 0; b < kNumCohorts; ++b) {
    if (rows[b].users > 0) rows[b].recall = sums[b] / static_cast<double>(rows[b].users);
  }
  return rows;
}

MetricsReport evaluate(const DmicfModel& model, const InteractionGraph& exclude,
                       const std::vector<std::vector<std::size_t>>& relevant,
                       std::span<const std::size_t> cutoffs) {
  const std::size_t num_users = model.graph().num_users();
  const std::size_t num_items = model.graph().num_items();
  if (exclude.num_users() > num_users || exclude.num_items() > num_items) {
    throw DimensionError("evaluate: exclusion graph is larger than the model graph");
  }
  MetricsReport report;
  report.cutoffs = sorted_unique(cutoffs);
  if (report.cutoffs.empty()) throw std::invalid_argument("evaluate: no cutoffs");
  if (report.cutoffs.front() == 0) throw std::invalid_argument("evaluate: cutoff 0");
  const std::size_t depth = std::max(report.cutoffs.back(), kCohortCutoff);

  std::vector<std::size_t> users;
  for (std::size_t u = 0; u < std::min(num_users, relevant.size()); ++u) {
    if (!relevant[u].empty()) users.push_back(u);
  }

  const EntityEncodings enc = model.encode_all();
  struct PerUser {
    std::vector<double> recall, ndcg;
    double cohort_recall = 0.0;
  };
  std::vector<PerUser> results(users.size());
  parallel_ranges(users.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> candidates;
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t u = users[k];
      candidates.clear();
      const auto seen = u < exclude.num_users() ? exclude.items_of(u) : std::span<const std::size_t>{};
      std::size_t s = 0;
      for (std::size_t i = 0; i < num_items; ++i) {
        while (s < seen.size() && seen[s] < i) ++s;
        if (s < seen.size() && seen[s] == i) continue;
        candidates.push_back(i);
      }
      const auto scores =
          score_with_encodings(model.config(), model.parameters(), enc, u, candidates);
      const RankedList ranked = rank_candidates(u, candidates, scores, depth);
      PerUser& out = results[k];
      for (std::size_t n : report.cutoffs) {
        out.recall.push_back(recall_at(ranked, relevant[u], n));
        out.ndcg.push_back(ndcg_at(ranked, relevant[u], n));
      }
      out.cohort_recall = recall_at(ranked, relevant[u], kCohortCutoff);
    }
  });

  report.evaluated_users = users.size();
  std::vector<UserOutcome> outcomes;
  outcomes.reserve(users.size());
  for (std::size_t c = 0; c < report.cutoffs.size(); ++c) {
    double rs = 0.0, ns = 0.0;
    for (const auto& r : results) {
      rs += r.recall[c];
      ns += r.ndcg[c];
    }
    const double denom = users.empty() ? 1.0 : static_cast<double>(users.size());
    report.recall[report.cutoffs[c]] = rs / denom;
    report.ndcg[report.cutoffs[c]] = ns / denom;
  }
  for (std::size_t k = 0; k < users.size(); ++k) {
    const std::size_t u = users[k];
    const std::size_t deg = u < exclude.num_users() ? exclude.user_degree(u) : 0;
    outcomes.push_back({u, deg, results[k].cohort_recall});
  }
  report.cohorts = cohort_report(outcomes);
  return report;
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["evaluated_users"] = report.evaluated_users;
  j["cutoffs"] = report.cutoffs;
  for (std::size_t n : report.cutoffs) {
    j["recall@" + std::to_string(n)] = report.recall.at(n);
    j["ndcg@" + std::to_string(n)] = report.ndcg.at(n);
  }
  auto cohorts = nlohmann::ordered_json::array();
  for (const auto& row : report.cohorts) {
    nlohmann::ordered_json c;
    c["bucket"] = row.label();
    c["users"] = row.users;
    c["recall@40"] = row.recall ? nlohmann::ordered_json(*row.recall) : nlohmann::ordered_json();
    cohorts.push_back(std::move(c));
  }
  j["cohorts"] = std::move(cohorts);
  return j.dump(2) + "\n";
}

// ---- intent statistics --------------------------------------------------------

DimensionStats column_stats(const Tensor2& population) {
  // Welford's update, one column at a time.
  DimensionStats s;
  s.mean.assign(population.cols(), 0.0);
  s.variance.assign(population.cols(), 0.0);
  for (std::size_t c = 0; c < population.cols(); ++c) {
    double mean = 0.0, m2 = 0.0;
    for (std::size_t r = 0; r < population.rows(); ++r) {
      const double x = population(r, c);
      const double delta = x - mean;
      mean += delta / static_cast<double>(r + 1);
      m2 += delta * (x - mean);
    }
    s.mean[c] = mean;
    s.variance[c] = population.rows() > 0 ? std::max(0.0, m2 / static_cast<double>(population.rows())) : 0.0;
  }
  return s;
}

IntentStats compute_intent_stats(const DmicfModel& model, const std::string& epoch_tag) {
  if (epoch_tag.empty() || epoch_tag.find_first_of(" \t\r\n") != std::string::npos) {
    throw std::invalid_argument("epoch tag must be a non-empty token without whitespace");
  }
  const EntityEncodings enc = model.encode_all();
  const ModelConfig& cfg = model.config();
  IntentStats s;
  s.epoch_tag = epoch_tag;
  s.intent_dim = cfg.intent_dim;
  s.num_prototypes = cfg.num_prototypes;
  s.embed_dim = cfg.embed_dim;
  s.h_user = column_stats(enc.h_user);
  s.h_user_x = column_stats(enc.h_user_x);
  s.h_item = column_stats(enc.h_item);
  s.h_item_x = column_stats(enc.h_item_x);
  s.user_prototypes = model.parameters().user_prototypes;
  s.item_prototypes = model.parameters().item_prototypes;
  return s;
}

std::string intent_stats_to_string(const IntentStats& s) {
  std::string out = "dmicf-intent-stats 1\n";
  out += "epoch_tag " + s.epoch_tag + "\n";
  out += "intent_dim " + std::to_string(s.intent_dim) + "\n";
  out += "prototypes " + std::to_string(s.num_prototypes) + "\n";
  out += "embed_dim " + std::to_string(s.embed_dim) + "\n";
  const std::pair<const char*, const DimensionStats*> tables[] = {
      {"h_user", &s.h_user}, {"h_user_x", &s.h_user_x}, {"h_item", &s.h_item},
      {"h_item_x", &s.h_item_x}};
  for (const auto& [name, st] : tables) {
    out += std::string("section ") + name + "\n";
    for (std::size_t d = 0; d < st->mean.size(); ++d) {
      out += std::to_string(d) + ' ';
      append_double(out, st->mean[d]);
      out += ' ';
      append_double(out, st->variance[d]);
      out += '\n';
    }
  }
  const std::pair<const char*, const Tensor2*> protos[] = {
      {"prototype.user", &s.user_prototypes}, {"prototype.item", &s.item_prototypes}};
  for (const auto& [name, t] : protos) {
    out += std::string("section ") + name + "\n";
    for (std::size_t r = 0; r < t->rows(); ++r) {
      for (std::size_t c = 0; c < t->cols(); ++c) {
        if (c) out += ' ';
        append_double(out, (*t)(r, c));
      }
      out += '\n';
    }
  }
  out += "end\n";
  return out;
}

void export_intent_stats(const DmicfModel& model, const std::string& epoch_tag,
                         const std::filesystem::path& path) {
  const std::string text = intent_stats_to_string(compute_intent_stats(model, epoch_tag));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace dmicf
