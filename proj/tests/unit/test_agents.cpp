#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <span>

#include "agentreg/agents.hpp"
#include "agentreg/error.hpp"

using namespace agentreg;

namespace {

QueryPool pool_with_scores(std::vector<double> scores, std::size_t k, Stage stage) {
  QueryPool pool(Tensor({scores.size(), 2}, 1.0), k);
  pool.scores = std::move(scores);
  pool.stage = stage;
  return pool;
}

std::set<std::size_t> as_set(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("warm-up top-k") {
  const Tensor agg({3, 2});
  CHECK(as_set(warmup_topk(pool_with_scores({3, 1, 2}, 2, Stage::kWarmUp), agg)) ==
        std::set<std::size_t>{0, 2});
  CHECK(warmup_topk(pool_with_scores({5, 5, 5}, 2, Stage::kWarmUp), agg) ==
        std::vector<std::size_t>{0, 1});
  CHECK(as_set(warmup_topk(pool_with_scores({1, 2, 3}, 3, Stage::kWarmUp), agg)) ==
        std::set<std::size_t>{0, 1, 2});
  CHECK_THROWS_AS(warmup_topk(pool_with_scores({1, 2, 3}, 2, Stage::kFinal), agg), Error);
  try {
    top_k_by_score(std::vector<double>{1, 2}, 3);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
  try {
    QueryPool bad(Tensor({2, 2}), 3);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
}

TEST_CASE("final selection") {
  CHECK(as_set(final_select(pool_with_scores({0.1, 0.9, 0.5, 0.7}, 2, Stage::kFinal))) ==
        std::set<std::size_t>{1, 3});
  CHECK(final_select(pool_with_scores({0, 0, 0, 0}, 4, Stage::kFinal)).size() == 4);
  CHECK(final_select(pool_with_scores({0, 0, 0, 0}, 2, Stage::kFinal)) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("final selection is invariant to strictly monotone score transforms") {
  Rng rng(41);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> s(16);
    for (double& v : s) v = rng.normal();
    // Ties survive every transform, so plant a few.
    s[3] = s[7];
    const auto base = final_select(pool_with_scores(s, 5, Stage::kFinal));
    auto check = [&](auto fn) {
      std::vector<double> u(s.size());
      std::transform(s.begin(), s.end(), u.begin(), fn);
      CHECK(final_select(pool_with_scores(u, 5, Stage::kFinal)) == base);
    };
    check([](double x) { return 3.0 * x - 7.0; });
    check([](double x) { return std::exp(x); });
    check([](double x) { return x * x * x; });
    check([](double x) { return sigmoid(x); });
  }
}

TEST_CASE("local reward") {
  const std::vector<double> u{0.6, 0.8}, ortho{0.8, -0.6}, zero{0, 0};
  CHECK(local_reward(u, u, u) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(local_reward(ortho, u, u)) < 1e-15);
  // cos(q, i) = 0.6 and cos(q, p) = 0.2.
  const std::vector<double> q{1, 0}, i{0.6, 0.8}, p{0.2, std::sqrt(1 - 0.04)};
  CHECK(local_reward(q, i, p) == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(local_reward(zero, u, u) == 0.0);
  CHECK(local_reward(u, zero, u) == doctest::Approx(0.5));
}

TEST_CASE("global reward") {
  CHECK(global_reward(2.0) == 0.5);
  CHECK(global_reward(0.0, 1e-6) == doctest::Approx(1e6));
  CHECK(global_reward(0.1) == doctest::Approx(10.0));
  try {
    global_reward(-1.0);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kContract);
  }
}

TEST_CASE("fusion coefficient") {
  CHECK(fusion_alpha(0, 20.0) == 0.0);
  CHECK(std::abs(fusion_alpha(20, 20.0) - (1.0 - std::exp(-1.0))) < 1e-12);
  CHECK(fusion_alpha(10000, 5.0) > 1.0 - 1e-12);
  for (int e = 0; e < 100; ++e) {
    CHECK(fusion_alpha(e + 1, 20.0) >= fusion_alpha(e, 20.0));
    CHECK(fusion_alpha(e + 1, 20.0) < 1.0);
  }
  for (double tau = 5.0; tau < 40.0; tau += 1.0) CHECK(fusion_alpha(7, tau + 1.0) < fusion_alpha(7, tau));
}

TEST_CASE("fused reward") {
  CHECK(fused_reward(0.3, 7.0, 0.0) == 7.0);
  CHECK(fused_reward(0.3, 7.0, 1.0) == 0.3);
  CHECK(fused_reward(1.0, 3.0, 0.5) == 2.0);
}

TEST_CASE("soft mask, log-probability and entropy") {
  for (double beta : {0.0, 0.1, 0.3, 0.75, 0.999}) {
    CHECK(soft_mask(0, beta) == beta);
    CHECK(soft_mask(1, beta) == 1.0);
  }
  CHECK(soft_mask(0, 0.3) == 0.3);
  CHECK(log_prob(1, 0.8) == doctest::Approx(std::log(0.8)));
  CHECK(log_prob(0, 0.8) == doctest::Approx(std::log(0.2)));
  CHECK(std::isfinite(log_prob(1, 0.0)));
  CHECK(std::abs(bernoulli_entropy(0.5) - std::log(2.0)) < 1e-12);
  CHECK(bernoulli_entropy(1e-15) < 1e-9);
  CHECK(bernoulli_entropy(1.0) < 1e-9);
}

TEST_CASE("tau decay") {
  RewardConfig cfg;
  CHECK(decay_tau(cfg, 5) == 20.0);
  CHECK(decay_tau(cfg, 10) == doctest::Approx(18.0));
  CHECK(decay_tau(cfg, 200) == 5.0);
}

TEST_CASE("stage schedule") {
  RewardConfig cfg;
  CHECK(stage_of_epoch(7, cfg, 50) == Stage::kWarmUp);
  CHECK(stage_of_epoch(15, cfg, 50) == Stage::kWarmUp);
  CHECK(stage_of_epoch(20, cfg, 50) == Stage::kRewardsGuided);
  CHECK(stage_of_epoch(21, cfg, 50) == Stage::kWarmUp);
  CHECK(stage_of_epoch(51, cfg, 50) == Stage::kFinal);
  int stage2 = 0;
  for (int e = 1; e <= 50; ++e) stage2 += stage_of_epoch(e, cfg, 50) == Stage::kRewardsGuided;
  CHECK(stage2 == 7);
  CHECK_THROWS_AS(stage_of_epoch(0, cfg, 50), Error);
  CHECK(stage_from_string(to_string(Stage::kRewardsGuided)) == Stage::kRewardsGuided);
}

TEST_CASE("Bernoulli sampling matches its expectation") {
  QueryPool pool = pool_with_scores({std::log(0.7 / 0.3), 40.0}, 1, Stage::kRewardsGuided);
  Rng rng(42);
  int ones = 0;
  const int n = 10000;
  for (int t = 0; t < n; ++t) ones += sample_actions(pool, rng, 0.3).actions[0];
  CHECK(std::abs(ones / static_cast<double>(n) - 0.7) < 0.02);
}

TEST_CASE("sampling invariants") {
  Rng rng(43);
  QueryPool sure = pool_with_scores({60, 60, 60}, 1, Stage::kRewardsGuided);
  const SelectionOutcome all = sample_actions(sure, rng, 0.3);
  CHECK(all.actions == std::vector<int>{1, 1, 1});
  CHECK(all.soft_masks == std::vector<double>{1.0, 1.0, 1.0});

  // Nearly impossible draws trigger the minimum-one rule on the most probable query.
  QueryPool none = pool_with_scores({-60, -50, -60}, 1, Stage::kRewardsGuided);
  const SelectionOutcome forced = sample_actions(none, rng, 0.3);
  CHECK(forced.actions == std::vector<int>{0, 1, 0});
  CHECK(forced.selected_count() == 1);

  QueryPool mixed = pool_with_scores({0.3, -0.2, 1.0, 0.0, -1.0}, 2, Stage::kRewardsGuided);
  for (int t = 0; t < 200; ++t) {
    const SelectionOutcome o = sample_actions(mixed, rng, 0.3);
    CHECK(o.selected_count() >= 1);
    for (std::size_t i = 0; i < o.actions.size(); ++i) {
      CHECK(o.soft_masks[i] == 0.3 + 0.7 * o.actions[i]);
      CHECK(o.log_probs[i] == doctest::Approx(log_prob(o.actions[i], sigmoid(mixed.scores[i]))));
    }
  }
  CHECK_THROWS_AS(sample_actions(pool_with_scores({0, 0}, 1, Stage::kWarmUp), rng, 0.3), Error);

  Rng a(7), b(7);
  CHECK(sample_actions(mixed, a, 0.3).actions == sample_actions(mixed, b, 0.3).actions);
}

TEST_CASE("reward assignment and REINFORCE") {
  SelectionOutcome o;
  o.actions = {1, 0, 1, 1};
  o.probabilities = {0.5, 0.5, 0.5, 0.5};
  o.log_probs.assign(4, std::log(0.5));
  o.soft_masks = {1, 0.3, 1, 1};
  assign_rewards(o, std::vector<double>{0.2, 0.9, 0.4, 0.6}, 2.0, 0.25);
  CHECK(o.rewards[1] == 0.0);
  CHECK(o.rewards[0] == doctest::Approx(0.25 * 0.2 + 0.75 * 2.0));
  CHECK(o.baseline == doctest::Approx((o.rewards[0] + o.rewards[2] + o.rewards[3]) / 4.0));

  // Equal rewards give zero advantage.
  SelectionOutcome flat = o;
  flat.rewards.assign(4, 1.5);
  flat.baseline = 1.5;
  const std::vector<double> s0(4, 0.0);
  CHECK(reinforce_loss(flat, s0).value == 0.0);

  // One query with advantage 1 at p = 0.5 contributes -ln 0.5.
  SelectionOutcome one;
  one.actions = {1, 0};
  one.probabilities = {0.5, 0.5};
  one.log_probs = {std::log(0.5), std::log(0.5)};
  one.rewards = {1.0, 0.0};
  one.baseline = 0.0;
  const PolicyLoss l = reinforce_loss(one, std::span<const double>(s0).first(2));
  CHECK(l.value == doctest::Approx(0.693147).epsilon(1e-6));

  SelectionOutcome single;
  single.actions = {1};
  single.probabilities = {0.5};
  single.log_probs = {std::log(0.5)};
  single.rewards = {3.0};
  single.baseline = 3.0;
  const PolicyLoss d = reinforce_loss(single, std::vector<double>{0.0});
  CHECK(d.degenerate_baseline);
  CHECK(d.value == 0.0);
}

TEST_CASE("full policy loss composition") {
  // L_full = L_g - mu * sum(entropy): 1.0 - 0.01 * 2.0.
  SelectionOutcome o;
  o.actions = {1, 0};
  const std::vector<double> scores{0.4, -0.3};
  o.probabilities = {sigmoid(0.4), sigmoid(-0.3)};
  o.log_probs = {log_prob(1, o.probabilities[0]), log_prob(0, o.probabilities[1])};
  o.rewards = {2.0, 0.0};
  o.baseline = 1.0;
  const PolicyLoss g = reinforce_loss(o, scores);
  const EntropyTerm h = entropy_bonus(scores);
  const PolicyLoss full = full_policy_loss(o, scores, 0.01);
  CHECK(full.value == g.value - 0.01 * h.total);
  CHECK(h.total == bernoulli_entropy(o.probabilities[0]) + bernoulli_entropy(o.probabilities[1]));
  CHECK(1.0 - 0.01 * 2.0 == doctest::Approx(0.98));
}

TEST_CASE("policy gradients match finite differences at fixed actions") {
  Rng rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 3 + rng.uniform_index(6);
    Tensor s({m});
    for (double& v : s.values()) v = rng.normal();
    SelectionOutcome o;
    for (std::size_t i = 0; i < m; ++i) {
      o.actions.push_back(rng.bernoulli(0.5) ? 1 : 0);
      o.rewards.push_back(rng.normal());
    }
    o.baseline = 0.0;
    for (double r : o.rewards) o.baseline += r / static_cast<double>(m);
    auto with_scores = [&](const Tensor& t) {
      SelectionOutcome c = o;
      c.probabilities.clear();
      c.log_probs.clear();
      for (std::size_t i = 0; i < m; ++i) {
        c.probabilities.push_back(sigmoid(t[i]));
        c.log_probs.push_back(log_prob(c.actions[i], c.probabilities[i]));
      }
      return c;
    };
    const SelectionOutcome at = with_scores(s);
    auto f = [&](const Tensor& t) { return full_policy_loss(with_scores(t), t.values(), 0.01).value; };
    const PolicyLoss full = full_policy_loss(at, s.values(), 0.01);
    CHECK(max_relative_error(Tensor({m}, full.grad_scores), finite_diff_gradient(f, s)) < 1e-4);
    auto fe = [&](const Tensor& t) { return entropy_bonus(t.values()).total; };
    CHECK(max_relative_error(Tensor({m}, entropy_bonus(s.values()).grad_scores),
                             finite_diff_gradient(fe, s)) < 1e-4);
  }
}

TEST_CASE("reward config validation") {
  RewardConfig bad;
  bad.tau_min = 30.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = {};
  bad.beta_mask = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = {};
  bad.mu_entropy = -0.1;
  CHECK_THROWS_AS(bad.validate(), Error);
  RewardConfig{}.validate();
}
