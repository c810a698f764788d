#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iterator>
#include <sstream>

#include "agentreg/config.hpp"
#include "agentreg/error.hpp"
#include "agentreg/image_io.hpp"
#include "agentreg/pipeline.hpp"
#include "test_support.hpp"

using namespace agentreg;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.n_train = 3;
  c.n_val = 1;
  c.n_test = 3;
  c.epochs = 4;
  c.pool_size = 8;
  c.k = 3;
  c.layers = 1;
  c.ffn_hidden = 8;
  c.adaptor_hidden = 8;
  c.ablation_seeds = {1, 2};
  return c;
}

std::string config_text(const ExperimentConfig& c) {
  std::ostringstream s;
  write_config(s, c);
  return s.str();
}

std::string checkpoint_bytes(const Model& m) {
  std::ostringstream s;
  save_checkpoint(s, m);
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error");
  return ErrorKind::kContract;
}

}  // namespace

TEST_CASE("config text round-trips and rejects bad input") {
  ExperimentConfig c = tiny_config();
  c.variant = variant_by_name("M6");
  c.reward.mu_entropy = 0.02;
  c.scene.repetition = 0.125;
  const std::string text = config_text(c);
  std::istringstream in(text);
  const ExperimentConfig back = parse_config(in);
  CHECK(config_text(back) == text);
  CHECK(back.variant == c.variant);
  CHECK(back.ablation_seeds == c.ablation_seeds);
  CHECK(config_keys().size() > 40);

  auto parse = [](const std::string& s) {
    std::istringstream i(s);
    return parse_config(i, "t.cfg");
  };
  CHECK(parse("# comment\n\nepochs = 7  # trailing\n").epochs == 7);
  CHECK(kind_of([&] { parse("epochz = 7\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { parse("k = 2\nk = 3\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { parse("k = two\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { parse("k\n"); }) == ErrorKind::kConfig);
  try {
    parse("epochs = 3\nbogus = 1\n");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("t.cfg:2") != std::string::npos);
  }
  CHECK(kind_of([&] { parse("k = 40\n").validate(); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { load_config("/nonexistent/agentreg.cfg"); }) == ErrorKind::kIo);
}

TEST_CASE("variant names") {
  for (const char* n : {"M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8"})
    CHECK(variant_name(variant_by_name(n)) == n);
  CHECK(variant_by_name("M8") == VariantFlags{});
  CHECK(kind_of([] { variant_by_name("M9"); }) == ErrorKind::kConfig);
  CHECK(ablation_variants() == std::vector<std::string>{"M1", "M6", "M7", "M8"});
}

TEST_CASE("stage schedule of the training loop") {
  ExperimentConfig c = tiny_config();
  c.epochs = 15;
  for (int e = 1; e <= 15; ++e) CHECK(training_stage(c, e) == Stage::kWarmUp);
  c.epochs = 30;
  std::vector<int> stage2;
  for (int e = 1; e <= 30; ++e)
    if (training_stage(c, e) == Stage::kRewardsGuided) stage2.push_back(e);
  CHECK(stage2 == std::vector<int>{20, 25, 30});
  c.variant = variant_by_name("M7");
  for (int e = 1; e <= 30; ++e) CHECK(training_stage(c, e) == Stage::kWarmUp);
}

TEST_CASE("datasets are reproducible and stored faithfully") {
  const ExperimentConfig c = tiny_config();
  const Dataset d = generate_dataset(c, 5);
  CHECK(d.train.size() == 3);
  CHECK(d.val.size() == 1);
  CHECK(d.test.size() == 3);
  CHECK(d.train[0].id != d.test[0].id);
  const auto dir = agentreg::testing::scratch_dir("dataset");
  write_dataset((dir / "a").string(), d);
  write_dataset((dir / "b").string(), generate_dataset(c, 5));
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    CHECK(slurp(e.path()) == slurp(dir / "b" / fs::relative(e.path(), dir / "a")));
  }
  const Dataset back = read_dataset((dir / "a").string());
  CHECK(back.seed == 5);
  CHECK(back.size() == 7);
  CHECK(back.test[2].image == d.test[2].image);

  const Dataset other = generate_dataset(c, 6);
  CHECK(!(other.train[0].image == d.train[0].image));

  try {
    write_dataset("/proc/agentreg-denied/x", d);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("/proc/agentreg-denied") != std::string::npos);
  }
  CHECK(kind_of([] { read_dataset("/nonexistent/agentreg"); }) == ErrorKind::kIo);
}

TEST_CASE("checkpoints round-trip and resumed training matches a single run") {
  ExperimentConfig c = tiny_config();
  c.epochs = 21;
  c.reward.stage1_epochs = 2;
  c.reward.stage2_period = 2;
  const Dataset d = generate_dataset(c, 3);
  const TrainResult full = train_model(c, d.train);
  CHECK(full.log.size() == 21);
  CHECK(full.model.epoch == 21);

  const std::string bytes = checkpoint_bytes(full.model);
  std::istringstream in(bytes);
  CHECK(checkpoint_bytes(load_checkpoint(in)) == bytes);

  ExperimentConfig first = c;
  first.epochs = 9;
  const TrainResult part = train_model(first, d.train);
  std::istringstream pin(checkpoint_bytes(part.model));
  const Model restored = load_checkpoint(pin);
  const TrainResult rest = train_model(c, d.train, nullptr, &restored);
  CHECK(rest.log.size() == 12);
  CHECK(rest.log.front().epoch == 10);
  CHECK(checkpoint_bytes(rest.model) == bytes);
  for (std::size_t i = 0; i < rest.log.size(); ++i)
    CHECK(rest.log[i].task_loss == full.log[9 + i].task_loss);

  CHECK(train_model(c, d.train, nullptr, &full.model).log.empty());

  ExperimentConfig other = c;
  other.variant = variant_by_name("M6");
  CHECK(kind_of([&] { train_model(other, d.train, nullptr, &restored); }) == ErrorKind::kConfig);

  std::istringstream junk("agentreg-checkpoint 1\nepoch = x\n");
  CHECK(kind_of([&] { load_checkpoint(junk); }) == ErrorKind::kFormat);
}

TEST_CASE("training logs record the schedule") {
  ExperimentConfig c = tiny_config();
  c.epochs = 12;
  c.reward.stage1_epochs = 5;
  const Dataset d = generate_dataset(c, 4);
  const TrainResult r = train_model(c, d.train);
  for (const auto& e : r.log) {
    CHECK(e.stage == training_stage(c, e.epoch));
    CHECK(e.policy_loss.has_value() == (e.stage == Stage::kRewardsGuided));
    CHECK(e.selected.size() == c.k);
  }
  std::ostringstream s;
  write_train_log(s, r.log);
  const std::string text = s.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 13);

  c.variant = variant_by_name("M7");
  for (const auto& e : train_model(c, d.train).log) CHECK(e.stage == Stage::kWarmUp);
}

TEST_CASE("evaluation with the ground-truth pose and empty splits") {
  const ExperimentConfig c = tiny_config();
  const Dataset d = generate_dataset(c, 8);
  const TrainResult r = train_model(c, d.train);
  EvalOptions oracle;
  oracle.oracle_pose = true;
  const MetricReport rep = evaluate_model(r.model, d.test, c, oracle);
  CHECK(rep.pairs.size() == 3);
  CHECK(rep.rr == 1.0);
  CHECK(!rep.empty);
  for (const auto& p : rep.pairs) CHECK(p.rmse == 0.0);

  const MetricReport a = evaluate_model(r.model, d.test, c);
  EvalOptions serial;
  serial.parallel = false;
  const MetricReport b = evaluate_model(r.model, d.test, c, serial);
  std::ostringstream ja, jb;
  write_report_json(ja, a);
  write_report_json(jb, b);
  CHECK(ja.str() == jb.str());

  const MetricReport none = evaluate_model(r.model, {}, c);
  CHECK(none.empty);
  CHECK(none.pairs.empty());
}

TEST_CASE("ablation bookkeeping") {
  ExperimentConfig c = tiny_config();
  c.ablation_seeds = {1, 2, 3};
  c.epochs = 2;
  const AblationResult r = run_ablation(c);
  REQUIRE(r.cells.size() == 12);
  REQUIRE(r.rows.size() == 4);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(r.cells[i].seed == c.ablation_seeds[i / 4]);
    CHECK(r.cells[i].variant == ablation_variants()[i % 4]);
  }
  for (std::size_t v = 0; v < 4; ++v) {
    double rr = 0.0;
    std::size_t runs = 0;
    for (const auto& cell : r.cells)
      if (cell.variant == r.rows[v].variant && cell.ok) {
        rr += cell.rr;
        ++runs;
      }
    CHECK(r.rows[v].runs == runs);
    if (runs) CHECK(std::abs(r.rows[v].rr - rr / static_cast<double>(runs)) < 1e-12);
  }
  const double m1 = r.rows[0].rr, m6 = r.rows[1].rr, m7 = r.rows[2].rr, m8 = r.rows[3].rr;
  CHECK(r.ordering_holds == (m8 >= m7 && m7 >= m6 && m6 >= m1));

  std::ostringstream csv1, csv2, md;
  write_ablation_csv(csv1, r);
  write_ablation_csv(csv2, run_ablation(c));
  CHECK(csv1.str() == csv2.str());
  write_ablation_markdown(md, r);
  CHECK(md.str().find("M8") != std::string::npos);
}

TEST_CASE("task loss decreases on the default benchmark") {
  for (std::uint64_t seed : {1, 2, 3}) {
    ExperimentConfig c;
    c.seed = seed;
    const Dataset d = generate_dataset(c, seed);
    const TrainResult r = train_model(c, d.train);
    REQUIRE(r.log.size() == 40);
    CHECK(r.log.back().task_loss < r.log.front().task_loss);
  }
}

TEST_CASE("netpbm images round-trip") {
  Tensor grey({3, 4, 1});
  for (std::size_t i = 0; i < grey.size(); ++i) grey[i] = static_cast<double>(i) / 11.0;
  std::stringstream s;
  write_pnm(s, grey, 0.0, 1.0);
  const Tensor back = read_pnm(s);
  REQUIRE(back.dims() == grey.dims());
  for (std::size_t i = 0; i < grey.size(); ++i) CHECK(std::abs(back[i] - grey[i]) <= 0.5 / 255.0 + 1e-12);

  Tensor rgb({2, 2, 3}, 0.25);
  std::stringstream s3;
  write_pnm(s3, rgb, 0.0, 0.5);
  const Tensor rb = read_pnm(s3);
  CHECK(rb.dims() == rgb.dims());
  CHECK(std::abs(rb[0] - 128.0 / 255.0) < 1e-12);

  std::string wide = "P5\n# comment\n2 1\n65535\n";
  wide += std::string("\xff\xff\x00\x00", 4);
  std::istringstream w(wide);
  const Tensor wb = read_pnm(w);
  CHECK(wb[0] == 1.0);
  CHECK(wb[1] == 0.0);

  std::istringstream bad("P3\n1 1\n255\n0\n");
  CHECK(kind_of([&] { read_pnm(bad); }) == ErrorKind::kFormat);
  std::istringstream shorty("P5\n4 4\n255\nab");
  CHECK(kind_of([&] { read_pnm(shorty); }) == ErrorKind::kFormat);
}
