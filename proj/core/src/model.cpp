#include "agentreg/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "agentreg/error.hpp"

namespace agentreg {

PreparedPair prepare_pair(const SyntheticPair& pair, const LossParams& loss, bool with_phase) {
  PreparedPair out;
  out.pair = &pair;
  if (with_phase) out.phase = extract_phase_map(pair.image);
  const std::size_t pi = pair.grid.size(), pp = pair.superpoints.size();
  const std::size_t c = pair.grid.features.cols();
  Tensor centers({pi, 2});
  for (std::size_t p = 0; p < pi; ++p) {
    centers(p, 0) = pair.grid.centers[p][0];
    centers(p, 1) = pair.grid.centers[p][1];
  }
  out.image_pos = sinusoidal_encoding_2d(centers, c);
  out.point_coords = Tensor({pp, 3});
  double mean[3] = {0, 0, 0};
  for (const auto& x : pair.superpoints.positions) {
    for (int k = 0; k < 3; ++k) mean[k] += x[static_cast<std::size_t>(k)] / static_cast<double>(pp);
  }
  for (std::size_t s = 0; s < pp; ++s) {
    for (std::size_t k = 0; k < 3; ++k) out.point_coords(s, k) = pair.superpoints.positions[s][k] - mean[k];
  }
  out.labels.assign(pi * pp, PairLabel::kNegative);
  for (const auto& m : pair.gt_coarse) out.labels[m.patch * pp + m.superpoint] = PairLabel::kPositive;

  // Fine descriptors are fixed, so their loss is a per-pair constant.
  const std::size_t ns = pair.pixels.uv.size(), np = pair.cloud.size();
  std::vector<PairLabel> fine_labels(ns * np, PairLabel::kNegative);
  for (const auto& [s, j] : pair.gt_fine) fine_labels[s * np + j] = PairLabel::kPositive;
  out.fine_loss = descriptor_circle_loss(pair.pixels.features, pair.points.features, fine_labels, loss).value;
  return out;
}

Model Model::init(const ExperimentConfig& cfg, Rng& rng) {
  const std::size_t c = cfg.scene.feature_dim;
  const std::size_t m = (cfg.variant.rai && (cfg.variant.tri || cfg.variant.topk)) ? cfg.pool_size : cfg.k;
  Tensor queries = random_normal({m, c}, rng, cfg.init_scale);
  Model model{cfg.variant,
              Tensor({c, c}),
              Tensor({c, c}),
              ConvStackWeights::zeros(3, cfg.adaptor_hidden, c),
              QueryPool(std::move(queries), cfg.k),
              AttentionWeights::random(c, cfg.layers, cfg.ffn_hidden, rng, cfg.init_scale),
              Tensor({3, c}),
              0,
              cfg.reward};
  for (std::size_t i = 0; i < c; ++i) {
    model.head_image(i, i) = 1.0;
    model.head_point(i, i) = 1.0;
  }
  // Inner adaptor layers start random and the output layer at zero, so the
  // phase branch contributes nothing until it is trained.
  for (std::size_t l = 0; l < 2; ++l) {
    auto& kernel = model.adaptor.layers[l].kernel;
    const double sd = std::sqrt(2.0 / (9.0 * static_cast<double>(kernel.dim(2))));
    for (double& v : kernel.values()) v = sd * rng.normal();
  }
  return model;
}

std::vector<std::size_t> Model::deployed_agents() const {
  if (selects()) return final_select(pool);
  std::vector<std::size_t> all(pool.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

namespace {

Tensor rows_of(const Tensor& t, const std::vector<std::size_t>& idx) {
  Tensor out({idx.size(), t.cols()});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(t.row(idx[r]).begin(), t.cols(), out.row(r).begin());
  }
  return out;
}

}  // namespace

ForwardState forward(const Model& model, const PreparedPair& in, Stage stage, Rng* rng,
                     double beta_mask) {
  const SyntheticPair& pair = *in.pair;
  const std::size_t c = model.channels();
  ForwardState st;
  st.stage = stage;
  st.image_base = matmul(pair.grid.features, model.head_image);
  if (model.variant.phase) {
    const Tensor grid = st.image_base.reshaped({pair.grid.grid_rows, pair.grid.grid_cols, c});
    st.image_base = fuse_phase_features(grid, in.phase, model.adaptor, &st.adaptor_cache)
                        .reshaped({pair.grid.size(), c});
  }
  st.point_base = matmul(pair.superpoints.features, model.head_point);
  if (!model.variant.rai) {
    st.image_out = st.image_base;
    st.point_out = st.point_base;
    return st;
  }

  st.point_pos = matmul(in.point_coords, model.point_lift);
  st.aggregated = ias_aggregate(model.pool.queries, st.image_base, st.point_base, model.attention,
                                &st.ias_cache, &in.image_pos, &st.point_pos);
  if (!model.selects()) {
    st.active = model.deployed_agents();
    st.masks.assign(st.active.size(), 1.0);
  } else if (stage == Stage::kRewardsGuided && model.variant.tri) {
    if (!rng) fail(ErrorKind::kContract, "reward-guided forward needs an rng");
    QueryPool pool = model.pool;
    pool.stage = Stage::kRewardsGuided;
    st.outcome = sample_actions(pool, *rng, beta_mask);
    st.active.resize(pool.size());
    for (std::size_t i = 0; i < st.active.size(); ++i) st.active[i] = i;
    st.masks = st.outcome->soft_masks;
  } else {
    st.active = top_k_by_score(model.pool.scores, model.pool.k);
    st.gated = true;
    for (std::size_t q : st.active) st.masks.push_back(sigmoid(model.pool.scores[q]));
  }
  const Tensor agents = rows_of(st.aggregated, st.active);
  const RaiResult r = rai_attention(agents, st.image_base, st.point_base, st.masks,
                                    model.attention.rai, &st.rai_cache, &in.image_pos, &st.point_pos);
  st.image_out = r.image_out;
  st.point_out = r.point_out;
  return st;
}

ModelGrads backward(const Model& model, const PreparedPair& in, const ForwardState& st,
                    const Tensor& grad_image_out, const Tensor& grad_point_out) {
  const SyntheticPair& pair = *in.pair;
  const std::size_t c = model.channels();
  ModelGrads g;
  g.scores.assign(model.pool.size(), 0.0);
  Tensor d_image = grad_image_out;
  Tensor d_point = grad_point_out;
  if (model.variant.rai) {
    const RaiGrads rg = attention_backward(st.rai_cache, model.attention.rai, grad_image_out, grad_point_out);
    g.rai = rg.weights;
    d_image = rg.image;
    d_point = rg.point;
    Tensor d_point_pos = rg.point_projection;
    Tensor d_aggregated(st.aggregated.dims());
    for (std::size_t j = 0; j < st.active.size(); ++j) {
      const std::size_t q = st.active[j];
      auto src = rg.agents.row(j);
      auto dst = d_aggregated.row(q);
      for (std::size_t i = 0; i < c; ++i) dst[i] += src[i];
      if (st.gated) {
        const double m = st.masks[j];
        g.scores[q] += rg.masks[j] * m * (1.0 - m);
      }
    }
    const IasGrads ig = ias_backward(st.ias_cache, model.attention, d_aggregated);
    g.layers = ig.layers;
    g.queries = ig.queries;
    d_image += ig.image;
    d_point += ig.point;
    d_point_pos += ig.point;
    g.point_lift = matmul_tn(in.point_coords, d_point_pos);
  } else {
    g.queries = Tensor(model.pool.queries.dims());
    g.point_lift = Tensor(model.point_lift.dims());
  }
  g.head_image = matmul_tn(pair.grid.features, d_image);
  g.head_point = matmul_tn(pair.superpoints.features, d_point);
  if (model.variant.phase) {
    g.adaptor = conv_stack_backward(st.adaptor_cache, model.adaptor,
                                    d_image.reshaped({pair.grid.grid_rows, pair.grid.grid_cols, c}));
  }
  return g;
}

namespace {

void descend(Tensor& w, const Tensor& g, double lr) {
  if (g.empty()) return;
  if (w.dims() != g.dims()) fail(ErrorKind::kDimension, "gradient shape mismatch");
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
}

void check_finite(double v, const char* what, const PreparedPair& in, int epoch, Stage stage) {
  if (std::isfinite(v)) return;
  std::ostringstream msg;
  msg << "non-finite " << what << " on pair " << in.pair->id << " at epoch " << epoch
      << " (stage " << to_string(stage) << ")";
  fail(ErrorKind::kNumerical, msg.str());
}

}  // namespace

StepStats train_step(Model& model, const PreparedPair& in, const ExperimentConfig& cfg,
                     Stage stage, int epoch, Rng& rng) {
  StepStats stats;
  stats.stage = stage;
  stats.tau = decay_tau(cfg.reward, epoch);
  ForwardState st = forward(model, in, stage, &rng, cfg.reward.beta_mask);
  for (const Tensor* t : {&st.image_out, &st.point_out})
    for (double v : t->values()) check_finite(v, "feature", in, epoch, stage);
  const DescriptorLoss coarse = descriptor_circle_loss(st.image_out, st.point_out, in.labels, cfg.loss);
  stats.coarse_loss = coarse.value;
  stats.task_loss = coarse.value + in.fine_loss;
  check_finite(stats.task_loss, "task loss", in, epoch, stage);

  std::vector<double> policy_grad;
  if (st.outcome) {
    // Reward-guided step: rewards from the aggregated queries against the
    // pooled features, global reward from the coarse loss.
    const Tensor pooled_image = mean_rows(st.image_base);
    const Tensor pooled_point = mean_rows(st.point_base);
    std::vector<double> local(model.pool.size());
    for (std::size_t q = 0; q < local.size(); ++q) {
      local[q] = local_reward(st.aggregated.row(q), pooled_image.values(), pooled_point.values());
    }
    stats.alpha = fusion_alpha(epoch, stats.tau);
    assign_rewards(*st.outcome, local, global_reward(coarse.value, cfg.reward.eps_loss), stats.alpha);
    const PolicyLoss policy = full_policy_loss(*st.outcome, model.pool.scores, cfg.reward.mu_entropy);
    check_finite(policy.value, "policy loss", in, epoch, stage);
    stats.policy_loss = policy.value;
    policy_grad = policy.grad_scores;
  }
  stats.total = total_loss(stats.task_loss, stats.policy_loss.value_or(0.0), cfg.loss, stage);

  const Tensor gi = coarse.grad_a * cfg.loss.lambda1;
  const Tensor gp = coarse.grad_b * cfg.loss.lambda1;
  const ModelGrads g = backward(model, in, st, gi, gp);

  const double lr = cfg.learning_rate;
  descend(model.head_image, g.head_image, lr);
  descend(model.head_point, g.head_point, lr);
  if (model.variant.phase) {
    for (std::size_t l = 0; l < 3; ++l) {
      descend(model.adaptor.layers[l].kernel, g.adaptor.layers[l].kernel, lr);
      descend(model.adaptor.layers[l].bias, g.adaptor.layers[l].bias, lr);
    }
  }
  if (model.variant.rai) {
    descend(model.pool.queries, g.queries, lr);
    descend(model.point_lift, g.point_lift, lr);
    descend(model.attention.rai.w_query, g.rai.w_query, lr);
    descend(model.attention.rai.w_point, g.rai.w_point, lr);
    descend(model.attention.rai.w_image, g.rai.w_image, lr);
    for (std::size_t l = 0; l < model.attention.layers.size(); ++l) {
      auto& w = model.attention.layers[l];
      const auto& d = g.layers[l];
      descend(w.w_query, d.w_query, lr);
      descend(w.w_image, d.w_image, lr);
      descend(w.w_point, d.w_point, lr);
      descend(w.ffn_w1, d.ffn_w1, lr);
      descend(w.ffn_b1, d.ffn_b1, lr);
      descend(w.ffn_w2, d.ffn_w2, lr);
      descend(w.ffn_b2, d.ffn_b2, lr);
    }
    const double slr = cfg.score_learning_rate;
    for (std::size_t q = 0; q < model.pool.size(); ++q) {
      double d = g.scores[q] * cfg.loss.lambda1;
      if (!policy_grad.empty()) d += cfg.loss.lambda2 * policy_grad[q];
      model.pool.scores[q] -= slr * d;
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointMagic = "AGENTREG-CHECKPOINT 1";

std::vector<std::pair<std::string, Tensor*>> named_tensors(Model& m) {
  std::vector<std::pair<std::string, Tensor*>> out{{"head_image", &m.head_image},
                                                   {"head_point", &m.head_point}};
  for (std::size_t l = 0; l < 3; ++l) {
    const std::string p = "adaptor." + std::to_string(l);
    out.emplace_back(p + ".kernel", &m.adaptor.layers[l].kernel);
    out.emplace_back(p + ".bias", &m.adaptor.layers[l].bias);
  }
  out.emplace_back("queries", &m.pool.queries);
  for (std::size_t l = 0; l < m.attention.layers.size(); ++l) {
    auto& w = m.attention.layers[l];
    const std::string p = "ias." + std::to_string(l);
    out.emplace_back(p + ".w_query", &w.w_query);
    out.emplace_back(p + ".w_image", &w.w_image);
    out.emplace_back(p + ".w_point", &w.w_point);
    out.emplace_back(p + ".ffn_w1", &w.ffn_w1);
    out.emplace_back(p + ".ffn_b1", &w.ffn_b1);
    out.emplace_back(p + ".ffn_w2", &w.ffn_w2);
    out.emplace_back(p + ".ffn_b2", &w.ffn_b2);
  }
  out.emplace_back("rai.w_query", &m.attention.rai.w_query);
  out.emplace_back("rai.w_point", &m.attention.rai.w_point);
  out.emplace_back("rai.w_image", &m.attention.rai.w_image);
  out.emplace_back("point_lift", &m.point_lift);
  return out;
}

std::string format_double(double x) {
  std::ostringstream ss;
  ss.precision(17);
  ss << x;
  return ss.str();
}

}  // namespace

void save_checkpoint(std::ostream& out, const Model& model) {
  Model copy = model;
  const auto tensors = named_tensors(copy);
  out << kCheckpointMagic << '\n';
  out << "variant.phase = " << model.variant.phase << '\n'
      << "variant.rai = " << model.variant.rai << '\n'
      << "variant.tri = " << model.variant.tri << '\n'
      << "variant.topk = " << model.variant.topk << '\n'
      << "k = " << model.pool.k << '\n'
      << "pool_size = " << model.pool.size() << '\n'
      << "layers = " << model.attention.layers.size() << '\n'
      << "negative_slope = " << format_double(model.adaptor.negative_slope) << '\n'
      << "stage = " << to_string(model.pool.stage) << '\n'
      << "epoch = " << model.epoch << '\n'
      << "train_rng_counter = " << model.train_rng_counter << '\n';
  const RewardConfig& r = model.reward;
  out << "reward.tau0 = " << format_double(r.tau0) << '\n'
      << "reward.tau_decay = " << format_double(r.tau_decay) << '\n'
      << "reward.tau_decay_every = " << r.tau_decay_every << '\n'
      << "reward.tau_min = " << format_double(r.tau_min) << '\n'
      << "reward.beta_mask = " << format_double(r.beta_mask) << '\n'
      << "reward.mu_entropy = " << format_double(r.mu_entropy) << '\n'
      << "reward.stage1_epochs = " << r.stage1_epochs << '\n'
      << "reward.stage2_period = " << r.stage2_period << '\n'
      << "reward.eps_loss = " << format_double(r.eps_loss) << '\n';
  out << "selected =";
  for (std::size_t q : model.deployed_agents()) out << ' ' << q;
  out << '\n';
  out << "tensors = " << tensors.size() + 1 << '\n';
  for (const auto& [name, t] : tensors) {
    out << name << '\n';
    write_tensor(out, *t);
  }
  out << "scores\n";
  write_tensor(out, Tensor({model.pool.size()}, model.pool.scores));
  if (!out) fail(ErrorKind::kIo, "failed writing checkpoint");
}

Model load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    fail(ErrorKind::kFormat, "not a checkpoint (bad magic line)");
  }
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kFormat, "bad checkpoint header line: " + line);
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    while (!value.empty() && value.front() == ' ') value.erase(value.begin());
    kv[key] = value;
    if (key == "tensors") break;
  }
  auto get = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) fail(ErrorKind::kFormat, std::string("checkpoint lacks ") + key);
    return it->second;
  };
  auto integer = [&](const char* key) {
    try {
      return std::stoll(get(key));
    } catch (const std::logic_error&) {
      fail(ErrorKind::kFormat, std::string("checkpoint has a bad value for ") + key);
    }
  };
  const long long n_tensors = integer("tensors");
  std::map<std::string, Tensor> stored;
  for (long long i = 0; i < n_tensors; ++i) {
    if (!std::getline(in, line)) fail(ErrorKind::kFormat, "checkpoint truncated");
    stored.emplace(line, read_tensor(in));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorKind::kFormat, "trailing bytes after checkpoint tensors");
  }
  auto take = [&](const std::string& name) {
    const auto it = stored.find(name);
    if (it == stored.end()) fail(ErrorKind::kFormat, "checkpoint lacks tensor " + name);
    return it->second;
  };

  Model m{{integer("variant.phase") != 0, integer("variant.rai") != 0, integer("variant.tri") != 0,
           integer("variant.topk") != 0},
          take("head_image"),
          take("head_point"),
          {},
          QueryPool(take("queries"), static_cast<std::size_t>(integer("k"))),
          {},
          take("point_lift"),
          static_cast<int>(integer("epoch")),
          {},
          0};
  auto real = [&](const char* key) {
    try {
      return std::stod(get(key));
    } catch (const std::logic_error&) {
      fail(ErrorKind::kFormat, std::string("checkpoint has a bad value for ") + key);
    }
  };
  m.reward.tau0 = real("reward.tau0");
  m.reward.tau_decay = real("reward.tau_decay");
  m.reward.tau_decay_every = static_cast<int>(integer("reward.tau_decay_every"));
  m.reward.tau_min = real("reward.tau_min");
  m.reward.beta_mask = real("reward.beta_mask");
  m.reward.mu_entropy = real("reward.mu_entropy");
  m.reward.stage1_epochs = static_cast<int>(integer("reward.stage1_epochs"));
  m.reward.stage2_period = static_cast<int>(integer("reward.stage2_period"));
  m.reward.eps_loss = real("reward.eps_loss");
  m.reward.validate();
  try {
    m.train_rng_counter = std::stoull(get("train_rng_counter"));
  } catch (const std::logic_error&) {
    fail(ErrorKind::kFormat, "checkpoint has a bad value for train_rng_counter");
  }
  m.adaptor.negative_slope = std::stod(get("negative_slope"));
  for (std::size_t l = 0; l < 3; ++l) {
    const std::string p = "adaptor." + std::to_string(l);
    m.adaptor.layers[l].kernel = take(p + ".kernel");
    m.adaptor.layers[l].bias = take(p + ".bias");
  }
  const auto layers = static_cast<std::size_t>(integer("layers"));
  m.attention.layers.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    auto& w = m.attention.layers[l];
    const std::string p = "ias." + std::to_string(l);
    w.w_query = take(p + ".w_query");
    w.w_image = take(p + ".w_image");
    w.w_point = take(p + ".w_point");
    w.ffn_w1 = take(p + ".ffn_w1");
    w.ffn_b1 = take(p + ".ffn_b1");
    w.ffn_w2 = take(p + ".ffn_w2");
    w.ffn_b2 = take(p + ".ffn_b2");
  }
  m.attention.rai = {take("rai.w_query"), take("rai.w_point"), take("rai.w_image")};
  const Tensor scores = take("scores");
  m.pool.scores.assign(scores.values().begin(), scores.values().end());
  m.pool.stage = stage_from_string(get("stage"));
  if (static_cast<long long>(m.pool.size()) != integer("pool_size")) {
    fail(ErrorKind::kFormat, "checkpoint pool size disagrees with its queries");
  }
  m.pool.validate();
  m.attention.validate();
  return m;
}

void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write checkpoint " + path);
  save_checkpoint(out, model);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read checkpoint " + path);
  return load_checkpoint(in);
}

}  // namespace agentreg
