#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dmicf/autodiff.hpp"
#include "dmicf/tensor.hpp"

namespace dmicf {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Edge {
  std::size_t user = 0;
  std::size_t item = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Bipartite user–item graph stored twice in CSR form (user → items and
/// item → users). Immutable once built.
class InteractionGraph {
 public:
  InteractionGraph() = default;

  /// Duplicate edges collapse to one. Throws DatasetError on an index that
  /// is out of range for the declared sizes.
  static InteractionGraph from_edges(std::size_t num_users, std::size_t num_items,
                                     std::vector<Edge> edges);

  std::size_t num_users() const noexcept { return num_users_; }
  std::size_t num_items() const noexcept { return num_items_; }
  std::size_t num_edges() const noexcept { return user_items_.size(); }

  std::span<const std::size_t> items_of(std::size_t user) const;
  std::span<const std::size_t> users_of(std::size_t item) const;
  std::size_t user_degree(std::size_t user) const { return items_of(user).size(); }
  std::size_t item_degree(std::size_t item) const { return users_of(item).size(); }
  bool has_edge(std::size_t user, std::size_t item) const;

  /// All edges, user-major, items ascending.
  std::vector<Edge> edges() const;

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::vector<std::size_t> user_offsets_{0};
  std::vector<std::size_t> user_items_;
  std::vector<std::size_t> item_offsets_{0};
  std::vector<std::size_t> item_users_;
};

/// Training graph plus per-user held-out test items (sorted).
struct DatasetSplit {
  InteractionGraph train;
  std::vector<std::vector<std::size_t>> test;
};

/// Parses "user item" lines; '#' starts a comment line, blank lines are
/// skipped. Errors carry the 1-based line number.
std::vector<Edge> read_interactions(const std::filesystem::path& path);
void write_interactions(const std::filesystem::path& path, std::span<const Edge> edges);

/// Builds a split from the two files. M and N are one past the largest
/// index seen in either file.
DatasetSplit load_dataset(const std::filesystem::path& train_path,
                          const std::filesystem::path& test_path);
DatasetSplit make_split(std::vector<Edge> train, std::vector<Edge> test);

/// Ā(u, i) = 1/sqrt(deg(u)·deg(i)) on an edge, 0 otherwise.
double normalized_entry(const InteractionGraph& g, std::size_t user, std::size_t item);

/// One-hop propagation Z^u = Ā·E^v, Z^v = Āᵀ·E^u.
std::pair<Tensor2, Tensor2> propagate(const InteractionGraph& g, const Tensor2& e_user,
                                      const Tensor2& e_item);

/// Rows `users` of Ā·E^v on the tape; differentiable in e_item. The graph
/// must outlive the tape.
ad::Var propagate_users(const InteractionGraph& g, std::span<const std::size_t> users,
                        ad::Var e_item);
/// Rows `items` of Āᵀ·E^u on the tape; differentiable in e_user.
ad::Var propagate_items(const InteractionGraph& g, std::span<const std::size_t> items,
                        ad::Var e_user);

}  // namespace dmicf
