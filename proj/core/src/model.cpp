#include "dmicf/model.hpp"

#include <map>
#include <numeric>

namespace dmicf {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream per parameter group; MLP layers add their index.
std::uint64_t group_seed(std::uint64_t base, std::uint64_t group) {
  return splitmix64(base ^ splitmix64(group + 1));
}

void add_mlp_names(std::vector<std::pair<std::string, Tensor2*>>& out, const std::string& prefix,
                   MlpWeights& w) {
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    out.emplace_back(p + ".weight", &w.layers[l].weight);
    out.emplace_back(p + ".bias", &w.layers[l].bias);
  }
}

void add_alignment_names(std::vector<std::pair<std::string, Tensor2*>>& out,
                         const std::string& prefix, AlignmentWeights& w) {
  if (!w.mlp.layers.empty()) {
    add_mlp_names(out, prefix, w.mlp);
  } else {
    out.emplace_back(prefix + ".query", &w.query);
    out.emplace_back(prefix + ".key", &w.key);
    out.emplace_back(prefix + ".value", &w.value);
  }
}

AlignmentWeights init_alignment(const ModelConfig& cfg, std::uint64_t seed) {
  AlignmentWeights w;
  if (cfg.alignment == AlignmentVariant::kCrossAttention) {
    w.query = xavier_init(cfg.intent_dim, cfg.align_dim, seed);
    w.key = xavier_init(cfg.intent_dim, cfg.align_dim, seed + 1);
    w.value = xavier_init(cfg.intent_dim, cfg.align_dim, seed + 2);
  } else {
    w.mlp = init_mlp(cfg.align_mlp_spec(), seed);
  }
  return w;
}

}  // namespace

// ---- ModelConfig ------------------------------------------------------------

MlpSpec ModelConfig::intent_mlp_spec() const {
  return {{num_prototypes, intent_hidden, intent_dim}, Activation::kSigmoid};
}

MlpSpec ModelConfig::align_mlp_spec() const {
  const std::size_t in = alignment == AlignmentVariant::kConcatMlp ? 2 * intent_dim : intent_dim;
  return {{in, align_hidden1, align_hidden2, align_dim}, Activation::kSigmoid};
}

MlpSpec ModelConfig::predict_mlp_spec() const {
  return {{fused_width(), predict_hidden, 1}, Activation::kIdentity};
}

std::size_t ModelConfig::fused_width() const {
  return dmicf::fused_width(fusion, perspectives, align_dim);
}

void ModelConfig::validate() const {
  const std::pair<const char*, std::size_t> fields[] = {
      {"model.embed_dim", embed_dim},         {"model.prototypes", num_prototypes},
      {"model.intent_dim", intent_dim},       {"model.align_dim", align_dim},
      {"model.intent_hidden", intent_hidden}, {"model.align_hidden1", align_hidden1},
      {"model.align_hidden2", align_hidden2}, {"model.predict_hidden", predict_hidden},
  };
  for (const auto& [name, value] : fields) {
    if (value == 0) throw ConfigError(std::string(name) + " must be >= 1");
  }
}

// ---- ModelParameters --------------------------------------------------------

std::vector<std::pair<std::string, Tensor2*>> ModelParameters::named() {
  std::vector<std::pair<std::string, Tensor2*>> out;
  out.emplace_back("embedding.user", &user_embedding);
  out.emplace_back("embedding.item", &item_embedding);
  out.emplace_back("prototype.user", &user_prototypes);
  out.emplace_back("prototype.item", &item_prototypes);
  add_mlp_names(out, "intent.user_user", intent.user_user);
  add_mlp_names(out, "intent.user_item", intent.user_item);
  add_mlp_names(out, "intent.item_user", intent.item_user);
  add_mlp_names(out, "intent.item_item", intent.item_item);
  if (align_user) add_alignment_names(out, "align.user", *align_user);
  if (align_item) add_alignment_names(out, "align.item", *align_item);
  add_mlp_names(out, "predict", predict);
  return out;
}

std::vector<std::pair<std::string, const Tensor2*>> ModelParameters::named() const {
  auto mut = const_cast<ModelParameters*>(this)->named();
  return {mut.begin(), mut.end()};
}

std::vector<NamedTensor> ModelParameters::to_checkpoint() const {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : named()) out.push_back({name, *t});
  return out;
}

void ModelParameters::load_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const Tensor2*> by_name;
  for (const auto& nt : tensors) {
    if (!by_name.emplace(nt.name, &nt.value).second) {
      throw CheckpointError("checkpoint: duplicate tensor '" + nt.name + "'");
    }
  }
  const auto slots = named();
  for (const auto& [name, slot] : slots) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw CheckpointError("checkpoint: missing tensor '" + name + "' required by the config");
    }
    if (!it->second->same_shape(*slot)) {
      throw CheckpointError("checkpoint: tensor '" + name + "' is " + it->second->shape_string() +
                            " but the config expects " + slot->shape_string());
    }
  }
  if (by_name.size() != slots.size()) {
    for (const auto& nt : tensors) {
      bool known = false;
      for (const auto& s : slots) known = known || s.first == nt.name;
      if (!known) {
        throw CheckpointError("checkpoint: tensor '" + nt.name + "' is not used by the config");
      }
    }
  }
  for (const auto& [name, slot] : slots) *slot = *by_name.at(name);
}

ModelParameters init_parameters(const ModelConfig& cfg, std::size_t num_users,
                                std::size_t num_items, std::uint64_t seed) {
  cfg.validate();
  ModelParameters p;
  p.user_embedding = xavier_init(num_users, cfg.embed_dim, group_seed(seed, 0));
  p.item_embedding = xavier_init(num_items, cfg.embed_dim, group_seed(seed, 1));
  p.user_prototypes = xavier_init(cfg.num_prototypes, cfg.embed_dim, group_seed(seed, 2));
  p.item_prototypes = xavier_init(cfg.num_prototypes, cfg.embed_dim, group_seed(seed, 3));
  const MlpSpec intent = cfg.intent_mlp_spec();
  p.intent.user_user = init_mlp(intent, group_seed(seed, 4));
  p.intent.user_item = init_mlp(intent, group_seed(seed, 5));
  p.intent.item_user = init_mlp(intent, group_seed(seed, 6));
  p.intent.item_item = init_mlp(intent, group_seed(seed, 7));
  if (cfg.uses_user_perspective()) p.align_user = init_alignment(cfg, group_seed(seed, 8));
  if (cfg.uses_item_perspective()) p.align_item = init_alignment(cfg, group_seed(seed, 9));
  p.predict = init_mlp(cfg.predict_mlp_spec(), group_seed(seed, 10));
  return p;
}

// ---- forward ----------------------------------------------------------------

BoundModel bind_model(ad::Tape& tape, const ModelConfig& cfg, const ModelParameters& params) {
  BoundModel b;
  b.user_embedding = tape.parameter(params.user_embedding);
  b.item_embedding = tape.parameter(params.item_embedding);
  b.user_prototypes = tape.parameter(params.user_prototypes);
  b.item_prototypes = tape.parameter(params.item_prototypes);
  b.intent = bind_intent_mlps(tape, params.intent);
  if (cfg.uses_user_perspective()) {
    if (!params.align_user) throw ConfigError("parameters lack the user-perspective encoder");
    b.align_user = bind_alignment(tape, cfg.alignment, *params.align_user);
  }
  if (cfg.uses_item_perspective()) {
    if (!params.align_item) throw ConfigError("parameters lack the item-perspective encoder");
    b.align_item = bind_alignment(tape, cfg.alignment, *params.align_item);
  }
  b.predict = bind_mlp(tape, params.predict);
  return b;
}

std::vector<ad::Var> parameter_vars(const ModelConfig& cfg, const BoundModel& b) {
  std::vector<ad::Var> vars = {b.user_embedding, b.item_embedding, b.user_prototypes,
                               b.item_prototypes};
  auto push_mlp = [&vars](const MlpVars& m) {
    for (std::size_t l = 0; l < m.weight.size(); ++l) {
      vars.push_back(m.weight[l]);
      vars.push_back(m.bias[l]);
    }
  };
  auto push_align = [&](const std::optional<AlignmentVars>& a) {
    if (!a) return;
    if (cfg.alignment == AlignmentVariant::kCrossAttention) {
      vars.insert(vars.end(), {a->query, a->key, a->value});
    } else {
      push_mlp(a->mlp);
    }
  };
  push_mlp(b.intent.user_user);
  push_mlp(b.intent.user_item);
  push_mlp(b.intent.item_user);
  push_mlp(b.intent.item_item);
  push_align(b.align_user);
  push_align(b.align_item);
  push_mlp(b.predict);
  return vars;
}

EntityBlock encode_entities(const ModelConfig& cfg, const InteractionGraph& graph,
                            const BoundModel& m, std::span<const std::size_t> users,
                            std::span<const std::size_t> items) {
  const MlpSpec spec = cfg.intent_mlp_spec();
  EntityBlock b;
  b.e_user = ad::gather_rows(m.user_embedding, users);
  b.e_item = ad::gather_rows(m.item_embedding, items);
  b.z_user = propagate_users(graph, users, m.item_embedding);
  b.z_item = propagate_items(graph, items, m.user_embedding);
  // User perspective: both sides matched against C^u.
  b.h_user = encode_user_side(spec, m.intent.user_user,
                              intent_distributions(b.z_user, m.user_prototypes));
  b.h_item = encode_item_side(spec, m.intent.user_item,
                              intent_distributions(b.e_item, m.user_prototypes));
  // Item perspective: both sides matched against C^v.
  b.h_user_x = encode_user_side(spec, m.intent.item_user,
                                intent_distributions(b.e_user, m.item_prototypes));
  b.h_item_x = encode_item_side(spec, m.intent.item_item,
                                intent_distributions(b.z_item, m.item_prototypes));
  return b;
}

ad::Var score_pairs(const ModelConfig& cfg, const BoundModel& m, const EntityBlock& b,
                    std::span<const std::size_t> user_rows,
                    std::span<const std::size_t> item_rows) {
  if (user_rows.size() != item_rows.size()) {
    throw DimensionError("score_pairs: " + std::to_string(user_rows.size()) + " users but " +
                         std::to_string(item_rows.size()) + " items");
  }
  const MlpSpec align_spec = cfg.align_mlp_spec();
  std::optional<ad::Var> t_user, t_item, s_user, s_item;
  if (cfg.uses_user_perspective()) {
    t_user = align(cfg.alignment, align_spec, cfg.align_dim, *m.align_user,
                   ad::gather_rows(b.h_user, user_rows), ad::gather_rows(b.h_item, item_rows));
    s_user = ad::cosine_rows(ad::gather_rows(b.z_user, user_rows),
                             ad::gather_rows(b.e_item, item_rows));
  }
  if (cfg.uses_item_perspective()) {
    t_item = align(cfg.alignment, align_spec, cfg.align_dim, *m.align_item,
                   ad::gather_rows(b.h_user_x, user_rows), ad::gather_rows(b.h_item_x, item_rows));
    s_item = ad::cosine_rows(ad::gather_rows(b.z_item, item_rows),
                             ad::gather_rows(b.e_user, user_rows));
  }
  const ad::Var fused = fuse(cfg.fusion, cfg.perspectives, t_user, t_item, s_user, s_item);
  return mlp_forward(cfg.predict_mlp_spec(), m.predict, fused);
}

// ---- DmicfModel -------------------------------------------------------------

DmicfModel::DmicfModel(ModelConfig cfg, std::shared_ptr<const InteractionGraph> graph,
                       std::uint64_t seed)
    : DmicfModel(cfg, graph,
                 init_parameters(cfg, graph->num_users(), graph->num_items(), seed)) {}

DmicfModel::DmicfModel(ModelConfig cfg, std::shared_ptr<const InteractionGraph> graph,
                       ModelParameters params)
    : cfg_(std::move(cfg)), graph_(std::move(graph)), params_(std::move(params)) {
  cfg_.validate();
  // The prediction head must consume exactly the fused vector.
  const MlpSpec predict = cfg_.predict_mlp_spec();
  if (predict.input_width() != cfg_.fused_width()) {
    throw ConfigError("prediction MLP input " + predict.to_string() +
                      " does not match fused width " + std::to_string(cfg_.fused_width()));
  }
  check_mlp_weights(predict, params_.predict);
  const MlpSpec intent = cfg_.intent_mlp_spec();
  for (const MlpWeights* w : {&params_.intent.user_user, &params_.intent.user_item,
                              &params_.intent.item_user, &params_.intent.item_item}) {
    check_mlp_weights(intent, *w);
  }
  if (params_.user_embedding.rows() != graph_->num_users() ||
      params_.item_embedding.rows() != graph_->num_items()) {
    throw ConfigError("embedding tables " + params_.user_embedding.shape_string() + " / " +
                      params_.item_embedding.shape_string() + " do not match graph " +
                      std::to_string(graph_->num_users()) + "x" +
                      std::to_string(graph_->num_items()));
  }
}

EntityEncodings DmicfModel::encode_all() const {
  std::vector<std::size_t> users(graph_->num_users()), items(graph_->num_items());
  std::iota(users.begin(), users.end(), 0);
  std::iota(items.begin(), items.end(), 0);
  ad::Tape tape(false);
  const BoundModel bound = bind_model(tape, cfg_, params_);
  const EntityBlock b = encode_entities(cfg_, *graph_, bound, users, items);
  return {b.z_user.value(), b.e_user.value(), b.h_user.value(), b.h_user_x.value(),
          b.z_item.value(), b.e_item.value(), b.h_item.value(), b.h_item_x.value()};
}

std::vector<double> DmicfModel::score(std::size_t user, std::span<const std::size_t> items) const {
  if (user >= graph_->num_users()) {
    throw std::out_of_range("user " + std::to_string(user) + " out of range (" +
                            std::to_string(graph_->num_users()) + " users)");
  }
  ad::Tape tape(false);
  const BoundModel bound = bind_model(tape, cfg_, params_);
  const std::size_t u[] = {user};
  const EntityBlock b = encode_entities(cfg_, *graph_, bound, u, items);
  std::vector<std::size_t> user_rows(items.size(), 0), item_rows(items.size());
  std::iota(item_rows.begin(), item_rows.end(), 0);
  return score_pairs(cfg_, bound, b, user_rows, item_rows).value().data();
}

std::vector<double> score_with_encodings(const ModelConfig& cfg, const ModelParameters& params,
                                         const EntityEncodings& enc, std::size_t user,
                                         std::span<const std::size_t> items) {
  if (items.empty()) return {};
  ad::Tape tape(false);
  const BoundModel bound = bind_model(tape, cfg, params);
  EntityBlock b;
  b.z_user = tape.constant_ref(enc.z_user);
  b.e_user = tape.constant_ref(enc.e_user);
  b.h_user = tape.constant_ref(enc.h_user);
  b.h_user_x = tape.constant_ref(enc.h_user_x);
  b.z_item = tape.constant_ref(enc.z_item);
  b.e_item = tape.constant_ref(enc.e_item);
  b.h_item = tape.constant_ref(enc.h_item);
  b.h_item_x = tape.constant_ref(enc.h_item_x);
  const std::vector<std::size_t> user_rows(items.size(), user);
  return score_pairs(cfg, bound, b, user_rows, items).value().data();
}

}  // namespace dmicf
