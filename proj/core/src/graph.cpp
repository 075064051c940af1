#include "dmicf/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

namespace dmicf {

InteractionGraph InteractionGraph::from_edges(std::size_t num_users, std::size_t num_items,
                                              std::vector<Edge> edges) {
  for (const Edge& e : edges) {
    if (e.user >= num_users || e.item >= num_items) {
      throw DatasetError("edge (" + std::to_string(e.user) + "," + std::to_string(e.item) +
                         ") out of range for " + std::to_string(num_users) + " users, " +
                         std::to_string(num_items) + " items");
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  InteractionGraph g;
  g.num_users_ = num_users;
  g.num_items_ = num_items;
  g.user_offsets_.assign(num_users + 1, 0);
  g.item_offsets_.assign(num_items + 1, 0);
  for (const Edge& e : edges) {
    ++g.user_offsets_[e.user + 1];
    ++g.item_offsets_[e.item + 1];
  }
  std::partial_sum(g.user_offsets_.begin(), g.user_offsets_.end(), g.user_offsets_.begin());
  std::partial_sum(g.item_offsets_.begin(), g.item_offsets_.end(), g.item_offsets_.begin());

  g.user_items_.resize(edges.size());
  g.item_users_.resize(edges.size());
  std::vector<std::size_t> item_fill(g.item_offsets_.begin(), g.item_offsets_.end() - 1);
  // Edges are sorted user-major, so both lists come out sorted.
  for (std::size_t k = 0; k < edges.size(); ++k) {
    g.user_items_[k] = edges[k].item;
    g.item_users_[item_fill[edges[k].item]++] = edges[k].user;
  }
  return g;
}

std::span<const std::size_t> InteractionGraph::items_of(std::size_t user) const {
  if (user >= num_users_) throw std::out_of_range("user " + std::to_string(user) + " out of range");
  return {user_items_.data() + user_offsets_[user], user_offsets_[user + 1] - user_offsets_[user]};
}

std::span<const std::size_t> InteractionGraph::users_of(std::size_t item) const {
  if (item >= num_items_) throw std::out_of_range("item " + std::to_string(item) + " out of range");
  return {item_users_.data() + item_offsets_[item], item_offsets_[item + 1] - item_offsets_[item]};
}

bool InteractionGraph::has_edge(std::size_t user, std::size_t item) const {
  if (user >= num_users_ || item >= num_items_) return false;
  const auto items = items_of(user);
  return std::binary_search(items.begin(), items.end(), item);
}

std::vector<Edge> InteractionGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (std::size_t u = 0; u < num_users_; ++u) {
    for (std::size_t i : items_of(u)) out.push_back({u, i});
  }
  return out;
}

std::vector<Edge> read_interactions(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DatasetError("dataset not found: " + path.string());
  }
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset: " + path.string());

  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    auto skip_ws = [&] {
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
    };
    skip_ws();
    if (p == end || *p == '#') continue;
    std::size_t ids[2] = {0, 0};
    for (std::size_t& id : ids) {
      skip_ws();
      auto [next, ec] = std::from_chars(p, end, id);
      if (ec != std::errc() || next == p) fail("expected two non-negative integers");
      p = next;
      if (p < end && !(*p == ' ' || *p == '\t' || *p == '\r')) {
        fail("unexpected character '" + std::string(1, *p) + "'");
      }
    }
    skip_ws();
    if (p != end) fail("trailing content after 'user item'");
    edges.push_back({ids[0], ids[1]});
  }
  return edges;
}

void write_interactions(const std::filesystem::path& path, std::span<const Edge> edges) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DatasetError("cannot write dataset: " + path.string());
  for (const Edge& e : edges) out << e.user << ' ' << e.item << '\n';
  if (!out) throw DatasetError("write failed: " + path.string());
}

DatasetSplit make_split(std::vector<Edge> train, std::vector<Edge> test) {
  std::size_t m = 0, n = 0;
  for (const auto* list : {&train, &test}) {
    for (const Edge& e : *list) {
      m = std::max(m, e.user + 1);
      n = std::max(n, e.item + 1);
    }
  }
  DatasetSplit split;
  split.train = InteractionGraph::from_edges(m, n, std::move(train));
  split.test.assign(m, {});
  for (const Edge& e : test) {
    if (split.train.has_edge(e.user, e.item)) {
      throw DatasetError("pair (" + std::to_string(e.user) + "," + std::to_string(e.item) +
                         ") appears in both train and test");
    }
    split.test[e.user].push_back(e.item);
  }
  for (auto& items : split.test) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
  return split;
}

DatasetSplit load_dataset(const std::filesystem::path& train_path,
                          const std::filesystem::path& test_path) {
  auto train = read_interactions(train_path);
  auto test = read_interactions(test_path);
  return make_split(std::move(train), std::move(test));
}

double normalized_entry(const InteractionGraph& g, std::size_t user, std::size_t item) {
  if (!g.has_edge(user, item)) return 0.0;
  return 1.0 / std::sqrt(static_cast<double>(g.user_degree(user)) *
                         static_cast<double>(g.item_degree(item)));
}

namespace {

// Row r of the result = Σ_{j ∈ adj(rows[r])} src[j] / sqrt(deg(rows[r])·deg(j)).
// `adjacency` maps a node to its neighbours; `neighbour_degree` gives the
// degree on the other side.
template <typename Adj, typename Deg>
void spmm_rows(std::span<const std::size_t> rows, const Adj& adjacency, const Deg& neighbour_degree,
               const Tensor2& src, Tensor2& out) {
  const std::size_t d = src.cols();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto nbrs = adjacency(rows[r]);
    if (nbrs.empty()) continue;
    const double du = static_cast<double>(nbrs.size());
    auto dst = out.row(r);
    for (std::size_t j : nbrs) {
      const double w = 1.0 / std::sqrt(du * static_cast<double>(neighbour_degree(j)));
      const auto s = src.row(j);
      for (std::size_t c = 0; c < d; ++c) dst[c] += w * s[c];
    }
  }
}

template <typename Adj, typename Deg>
void spmm_rows_transpose(std::span<const std::size_t> rows, const Adj& adjacency,
                         const Deg& neighbour_degree, const Tensor2& grad_out, Tensor2& grad_src) {
  const std::size_t d = grad_out.cols();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto nbrs = adjacency(rows[r]);
    if (nbrs.empty()) continue;
    const double du = static_cast<double>(nbrs.size());
    const auto g = grad_out.row(r);
    for (std::size_t j : nbrs) {
      const double w = 1.0 / std::sqrt(du * static_cast<double>(neighbour_degree(j)));
      auto dst = grad_src.row(j);
      for (std::size_t c = 0; c < d; ++c) dst[c] += w * g[c];
    }
  }
}

}  // namespace

std::pair<Tensor2, Tensor2> propagate(const InteractionGraph& g, const Tensor2& e_user,
                                      const Tensor2& e_item) {
  if (e_user.rows() != g.num_users() || e_item.rows() != g.num_items() ||
      e_user.cols() != e_item.cols()) {
    throw DimensionError("propagate: graph is " + std::to_string(g.num_users()) + "x" +
                         std::to_string(g.num_items()) + ", embeddings " +
                         e_user.shape_string() + " and " + e_item.shape_string());
  }
  std::vector<std::size_t> users(g.num_users()), items(g.num_items());
  std::iota(users.begin(), users.end(), 0);
  std::iota(items.begin(), items.end(), 0);
  ad::Tape tape(false);
  Tensor2 zu = propagate_users(g, users, tape.constant(e_item)).value();
  Tensor2 zv = propagate_items(g, items, tape.constant(e_user)).value();
  return {std::move(zu), std::move(zv)};
}

ad::Var propagate_users(const InteractionGraph& g, std::span<const std::size_t> users,
                        ad::Var e_item) {
  const Tensor2& ev = e_item.value();
  if (ev.rows() != g.num_items()) {
    throw DimensionError("propagate_users: item table " + ev.shape_string() + " but graph has " +
                         std::to_string(g.num_items()) + " items");
  }
  auto adj = [&g](std::size_t u) { return g.items_of(u); };
  auto deg = [&g](std::size_t i) { return g.item_degree(i); };
  Tensor2 out(users.size(), ev.cols());
  spmm_rows(users, adj, deg, ev, out);
  std::vector<std::size_t> rows(users.begin(), users.end());
  return e_item.tape->push(std::move(out), {e_item},
                           [&g, e_item, rows = std::move(rows)](ad::Tape& tp, const Tensor2& grad) {
                             auto a = [&g](std::size_t u) { return g.items_of(u); };
                             auto dg = [&g](std::size_t i) { return g.item_degree(i); };
                             spmm_rows_transpose(rows, a, dg, grad, tp.grad_buffer(e_item));
                           });
}

ad::Var propagate_items(const InteractionGraph& g, std::span<const std::size_t> items,
                        ad::Var e_user) {
  const Tensor2& eu = e_user.value();
  if (eu.rows() != g.num_users()) {
    throw DimensionError("propagate_items: user table " + eu.shape_string() + " but graph has " +
                         std::to_string(g.num_users()) + " users");
  }
  auto adj = [&g](std::size_t i) { return g.users_of(i); };
  auto deg = [&g](std::size_t u) { return g.user_degree(u); };
  Tensor2 out(items.size(), eu.cols());
  spmm_rows(items, adj, deg, eu, out);
  std::vector<std::size_t> rows(items.begin(), items.end());
  return e_user.tape->push(std::move(out), {e_user},
                           [&g, e_user, rows = std::move(rows)](ad::Tape& tp, const Tensor2& grad) {
                             auto a = [&g](std::size_t i) { return g.users_of(i); };
                             auto dg = [&g](std::size_t u) { return g.user_degree(u); };
                             spmm_rows_transpose(rows, a, dg, grad, tp.grad_buffer(e_user));
                           });
}

}  // namespace dmicf
