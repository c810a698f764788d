#include "agentreg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "agentreg/error.hpp"

namespace agentreg {

namespace fs = std::filesystem;

namespace {

// Stream tags keep the generators of different jobs independent.
constexpr std::uint64_t kInitStream = 0x1A17;
constexpr std::uint64_t kTrainStream = 0x7EA1;
constexpr std::uint64_t kShuffleStream = 0x5A0F;
constexpr std::uint64_t kEvalStream = 0xE7A1;
constexpr const char* kSplits[] = {"train", "val", "test"};

std::vector<SyntheticPair>& split_of(Dataset& d, std::size_t s) {
  return s == 0 ? d.train : (s == 1 ? d.val : d.test);
}

const std::vector<SyntheticPair>& split_of(const Dataset& d, std::size_t s) {
  return s == 0 ? d.train : (s == 1 ? d.val : d.test);
}

std::string pair_id(std::size_t split, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu", kSplits[split], i);
  return buf;
}

}  // namespace

std::size_t worker_count() {
  if (const char* env = std::getenv("AGENTREG_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  std::vector<std::exception_ptr> errors(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::mutex mu;
    std::size_t next = 0;
    auto work = [&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(mu);
          if (next >= n) return;
          i = next++;
        }
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Datasets

Dataset generate_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.scene.validate();
  Dataset d;
  d.seed = seed;
  const std::size_t counts[] = {cfg.n_train, cfg.n_val, cfg.n_test};
  struct Job {
    std::size_t split, index;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < 3; ++s) {
    split_of(d, s).resize(counts[s]);
    for (std::size_t i = 0; i < counts[s]; ++i) jobs.push_back({s, i});
  }
  const Rng root(seed);
  parallel_for(jobs.size(), [&](std::size_t j) {
    const auto [s, i] = jobs[j];
    Rng rng = root.derive((static_cast<std::uint64_t>(s) << 32) | i);
    SyntheticPair p = generate_pair(cfg.scene, rng);
    p.id = pair_id(s, i);
    split_of(d, s)[i] = std::move(p);
  });
  return d;
}

void write_dataset(const std::string& dir, const Dataset& data) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create dataset directory " + dir + ": " + ec.message());
  std::vector<std::pair<std::size_t, const SyntheticPair*>> all;
  for (std::size_t s = 0; s < 3; ++s) {
    for (const auto& p : split_of(data, s)) all.emplace_back(s, &p);
  }
  parallel_for(all.size(), [&](std::size_t j) {
    const auto& [s, p] = all[j];
    write_pair((fs::path(dir) / kSplits[s] / p->id).string(), *p);
  });
  const std::string path = (fs::path(dir) / "manifest.txt").string();
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  out << "format = agentreg-dataset 1\n"
      << "seed = " << data.seed << '\n'
      << "train = " << data.train.size() << '\n'
      << "val = " << data.val.size() << '\n'
      << "test = " << data.test.size() << '\n';
  for (const auto& [s, p] : all) out << "pair = " << kSplits[s] << '/' << p->id << '\n';
  if (!out) fail(ErrorKind::kIo, "failed writing " + path);
}

Dataset read_dataset(const std::string& dir) {
  const std::string path = (fs::path(dir) / "manifest.txt").string();
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read dataset manifest " + path);
  Dataset d;
  std::vector<std::string> entries;
  std::size_t declared[3] = {0, 0, 0};
  bool have_format = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) {
      fail(ErrorKind::kFormat, path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
    try {
      if (key == "format") {
        if (value != "agentreg-dataset 1") fail(ErrorKind::kFormat, path + ": unsupported format " + value);
        have_format = true;
      } else if (key == "seed") {
        d.seed = std::stoull(value);
      } else if (key == "train" || key == "val" || key == "test") {
        declared[key == "train" ? 0 : (key == "val" ? 1 : 2)] = std::stoull(value);
      } else if (key == "pair") {
        entries.push_back(value);
      } else {
        fail(ErrorKind::kFormat, path + ":" + std::to_string(line_no) + ": unknown key " + key);
      }
    } catch (const std::logic_error&) {
      fail(ErrorKind::kFormat, path + ":" + std::to_string(line_no) + ": bad value " + value);
    }
  }
  if (!have_format) fail(ErrorKind::kFormat, path + ": missing format line");
  std::vector<std::pair<std::size_t, std::size_t>> slots(entries.size());
  for (std::size_t j = 0; j < entries.size(); ++j) {
    const std::string split = entries[j].substr(0, entries[j].find('/'));
    std::size_t s = 3;
    for (std::size_t k = 0; k < 3; ++k) {
      if (split == kSplits[k]) s = k;
    }
    if (s == 3) fail(ErrorKind::kFormat, path + ": pair outside a known split: " + entries[j]);
    slots[j] = {s, split_of(d, s).size()};
    split_of(d, s).emplace_back();
  }
  for (std::size_t s = 0; s < 3; ++s) {
    if (split_of(d, s).size() != declared[s]) {
      fail(ErrorKind::kFormat, path + ": " + kSplits[s] + " count disagrees with its pair entries");
    }
  }
  parallel_for(entries.size(), [&](std::size_t j) {
    SyntheticPair p = read_pair((fs::path(dir) / entries[j]).string());
    split_of(d, slots[j].first)[slots[j].second] = std::move(p);
  });
  return d;
}

// ---------------------------------------------------------------------------
// Training

std::vector<PreparedPair> prepare_pairs(const std::vector<SyntheticPair>& pairs,
                                        const LossParams& loss, bool with_phase, bool parallel) {
  std::vector<PreparedPair> out(pairs.size());
  auto job = [&](std::size_t i) { out[i] = prepare_pair(pairs[i], loss, with_phase); };
  if (parallel) {
    parallel_for(pairs.size(), job);
  } else {
    for (std::size_t i = 0; i < pairs.size(); ++i) job(i);
  }
  return out;
}

Stage training_stage(const ExperimentConfig& cfg, int epoch) {
  if (cfg.variant.tri) return stage_of_epoch(epoch, cfg.reward, cfg.epochs);
  return Stage::kWarmUp;
}

TrainResult train_model(const ExperimentConfig& cfg, const std::vector<SyntheticPair>& train,
                        const std::vector<PreparedPair>* prepared, const Model* resume) {
  cfg.validate();
  if (train.empty()) fail(ErrorKind::kInsufficientData, "training split is empty");
  std::vector<PreparedPair> own;
  if (!prepared) {
    own = prepare_pairs(train, cfg.loss, cfg.variant.phase);
    prepared = &own;
  }
  if (prepared->size() != train.size()) fail(ErrorKind::kContract, "prepared pairs do not match the split");

  const Rng root(cfg.seed);
  Rng init_rng = root.derive(kInitStream);
  Rng train_rng = root.derive(kTrainStream);
  TrainResult result{resume ? *resume : Model::init(cfg, init_rng), {}};
  Model& model = result.model;
  if (resume) {
    if (!(model.variant == cfg.variant) || model.pool.k != cfg.k ||
        model.channels() != cfg.scene.feature_dim || !(model.reward == cfg.reward)) {
      fail(ErrorKind::kConfig, "checkpoint does not match the training config");
    }
    train_rng = Rng(train_rng.seed(), model.train_rng_counter);
  }

  std::vector<std::size_t> order(train.size());
  for (int epoch = model.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const Stage stage = training_stage(cfg, epoch);
    model.pool.stage = stage;
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = root.derive(kShuffleStream).derive(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.uniform_index(i)]);

    EpochLog log;
    log.epoch = epoch;
    log.stage = stage;
    double policy_sum = 0.0;
    std::size_t policy_n = 0;
    for (std::size_t idx : order) {
      const StepStats s = train_step(model, (*prepared)[idx], cfg, stage, epoch, train_rng);
      log.task_loss += s.task_loss;
      log.alpha = s.alpha;
      log.tau = s.tau;
      if (s.policy_loss) {
        policy_sum += *s.policy_loss;
        ++policy_n;
      }
    }
    log.task_loss /= static_cast<double>(order.size());
    if (policy_n) log.policy_loss = policy_sum / static_cast<double>(policy_n);
    model.epoch = epoch;
    model.train_rng_counter = train_rng.counter();
    log.selected = model.deployed_agents();
    result.log.push_back(std::move(log));
  }
  model.pool.stage = Stage::kFinal;
  return result;
}

void write_train_log(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,stage,L_t,L_full,alpha,tau,selected\n";
  out << std::setprecision(17);
  for (const auto& e : log) {
    out << e.epoch << ',' << to_string(e.stage) << ',' << e.task_loss << ',';
    if (e.policy_loss) out << *e.policy_loss;
    out << ',' << e.alpha << ',' << e.tau << ',';
    for (std::size_t i = 0; i < e.selected.size(); ++i) out << (i ? " " : "") << e.selected[i];
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

PairMetrics evaluate_pair(const Model& model, const PreparedPair& in, const ExperimentConfig& cfg,
                          const EvalOptions& options, Rng rng) {
  const SyntheticPair& pair = *in.pair;
  PairMetrics m;
  m.id = pair.id;
  const ForwardState st = forward(model, in, Stage::kFinal);
  FeatureGrid grid = pair.grid;
  grid.features = st.image_out;
  PointFeatures sp = pair.superpoints;
  sp.features = st.point_out;

  const auto coarse = coarse_match(grid, sp, cfg.matching);
  const auto fine = fine_match(coarse, pair.pixels, pair.points, sp, cfg.matching);
  m.coarse_count = coarse.size();
  m.fine_count = fine.size();
  m.pir = patch_inlier_ratio(coarse, grid, sp, pair.cloud, pair.t_gt, pair.camera,
                             cfg.metrics.patch_overlap).value;

  std::vector<Eigen::Vector3d> image_pts, cloud_pts;
  std::vector<Correspondence2D3D> corr;
  for (const auto& f : fine) {
    image_pts.push_back(pair.pixel_points[f.pixel_index]);
    cloud_pts.push_back(pair.cloud[f.point_index]);
    corr.push_back({Eigen::Vector2d(f.uv[0], f.uv[1]), pair.cloud[f.point_index]});
  }
  m.ir = inlier_ratio(image_pts, cloud_pts, pair.t_gt, cfg.metrics.inlier_m).value;

  std::optional<RigidTransform> estimate;
  if (options.oracle_pose) {
    estimate = pair.t_gt;
  } else {
    try {
      const RansacResult r = ransac_pnp(corr, pair.camera, cfg.ransac, rng);
      estimate = r.pose;
      m.ransac_inliers = r.inlier_count;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kNumerical) throw;
      m.failure = std::string(to_string(e.kind())) + ": " + e.what();
    }
  }
  if (estimate) {
    m.pose_ok = true;
    m.rmse = rmse(*estimate, pair.t_gt, pair.cloud);
    m.recalled = m.rmse < cfg.metrics.rmse_m;
    const PoseError pe = pose_errors(*estimate, pair.t_gt);
    m.rotation_deg = pe.rotation_deg;
    m.translation_m = pe.translation_m;
  } else {
    m.rmse = std::numeric_limits<double>::infinity();
  }
  return m;
}

}  // namespace

MetricReport evaluate_model(const Model& model, const std::vector<SyntheticPair>& test,
                            const ExperimentConfig& cfg, const EvalOptions& options,
                            const std::vector<PreparedPair>* prepared) {
  cfg.ransac.validate();
  cfg.matching.validate();
  cfg.metrics.validate();
  std::vector<PreparedPair> own;
  if (!prepared) {
    own = prepare_pairs(test, cfg.loss, model.variant.phase, options.parallel);
    prepared = &own;
  }
  if (prepared->size() != test.size()) fail(ErrorKind::kContract, "prepared pairs do not match the split");
  MetricReport report;
  report.pairs.resize(test.size());
  const Rng root = Rng(cfg.seed).derive(kEvalStream);
  auto job = [&](std::size_t i) {
    report.pairs[i] = evaluate_pair(model, (*prepared)[i], cfg, options, root.derive(i));
  };
  if (options.parallel) {
    parallel_for(test.size(), job);
  } else {
    for (std::size_t i = 0; i < test.size(); ++i) job(i);
  }
  report.summarize(cfg.metrics);
  return report;
}

// ---------------------------------------------------------------------------
// Ablation

std::vector<std::string> ablation_variants() { return {"M1", "M6", "M7", "M8"}; }

AblationResult run_ablation(const ExperimentConfig& cfg, const Dataset* shared) {
  cfg.validate();
  const auto variants = ablation_variants();
  const auto& seeds = cfg.ablation_seeds;

  // One dataset and one set of phase maps per seed, shared by its variants.
  std::vector<Dataset> datasets(shared ? 0 : seeds.size());
  if (!shared) {
    for (std::size_t s = 0; s < seeds.size(); ++s) datasets[s] = generate_dataset(cfg, seeds[s]);
  }
  auto data_of = [&](std::size_t s) -> const Dataset& { return shared ? *shared : datasets[s]; };
  const std::size_t n_data = shared ? 1 : seeds.size();
  std::vector<std::vector<PreparedPair>> train_prep(n_data), test_prep(n_data);
  for (std::size_t s = 0; s < n_data; ++s) {
    train_prep[s] = prepare_pairs(data_of(s).train, cfg.loss, true);
    test_prep[s] = prepare_pairs(data_of(s).test, cfg.loss, true);
  }

  AblationResult result;
  result.cells.resize(seeds.size() * variants.size());
  parallel_for(result.cells.size(), [&](std::size_t j) {
    const std::size_t s = j / variants.size(), v = j % variants.size();
    const std::size_t d = shared ? 0 : s;
    AblationCell& cell = result.cells[j];
    cell.variant = variants[v];
    cell.seed = seeds[s];
    ExperimentConfig run = cfg;
    run.variant = variant_by_name(variants[v]);
    run.seed = seeds[s];
    try {
      const TrainResult trained = train_model(run, data_of(d).train, &train_prep[d]);
      EvalOptions opts;
      opts.parallel = false;
      const MetricReport rep = evaluate_model(trained.model, data_of(d).test, run, opts, &test_prep[d]);
      cell.ok = true;
      cell.pir = rep.pir;
      cell.ir = rep.ir;
      cell.fmr = rep.fmr;
      cell.rr = rep.rr;
    } catch (const std::exception& e) {
      cell.failure = e.what();
    }
  });

  for (std::size_t v = 0; v < variants.size(); ++v) {
    AblationRow row;
    row.variant = variants[v];
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const AblationCell& c = result.cells[s * variants.size() + v];
      if (!c.ok) continue;
      ++row.runs;
      row.pir += c.pir;
      row.ir += c.ir;
      row.fmr += c.fmr;
      row.rr += c.rr;
    }
    if (row.runs) {
      const double n = static_cast<double>(row.runs);
      row.pir /= n;
      row.ir /= n;
      row.fmr /= n;
      row.rr /= n;
    }
    result.rows.push_back(row);
  }

  const bool complete = std::all_of(result.cells.begin(), result.cells.end(),
                                    [](const AblationCell& c) { return c.ok; });
  // rows follow ablation_variants(): M1, M6, M7, M8
  const auto& r = result.rows;
  result.ordering_holds = complete && r[3].rr >= r[2].rr && r[2].rr >= r[1].rr && r[1].rr >= r[0].rr;
  result.gap_every_seed = complete;
  for (std::size_t s = 0; s < seeds.size() && complete; ++s) {
    const auto& m1 = result.cells[s * variants.size() + 0];
    const auto& m8 = result.cells[s * variants.size() + 3];
    if (!(m8.rr - m1.rr > 0.0)) result.gap_every_seed = false;
  }
  return result;
}

namespace {

std::string fixed(double x) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4) << x;
  return ss.str();
}

std::string csv_field(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + '"';
}

}  // namespace

void write_ablation_csv(std::ostream& out, const AblationResult& result) {
  out << "kind,variant,seed,PIR,IR,FMR,RR,status\n";
  for (const auto& c : result.cells) {
    out << "run," << c.variant << ',' << c.seed << ',';
    if (c.ok) {
      out << fixed(c.pir) << ',' << fixed(c.ir) << ',' << fixed(c.fmr) << ',' << fixed(c.rr) << ",ok\n";
    } else {
      out << ",,,," << csv_field("failed: " + c.failure) << '\n';
    }
  }
  for (const auto& r : result.rows) {
    out << "mean," << r.variant << ",," << fixed(r.pir) << ',' << fixed(r.ir) << ',' << fixed(r.fmr)
        << ',' << fixed(r.rr) << ',' << r.runs << " runs\n";
  }
  out << "check,RR M8>=M7>=M6>=M1,,,,,," << (result.ordering_holds ? "PASS" : "FAIL") << '\n';
  out << "check,RR M8-M1>0 every seed,,,,,," << (result.gap_every_seed ? "PASS" : "FAIL") << '\n';
}

void write_ablation_markdown(std::ostream& out, const AblationResult& result) {
  out << "| Variant | Phase | RAI | Tri | Topk | PIR | IR | FMR | RR |\n"
      << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : result.rows) {
    const VariantFlags f = variant_by_name(r.variant);
    auto mark = [](bool b) { return b ? "x" : " "; };
    out << "| " << r.variant << " | " << mark(f.phase) << " | " << mark(f.rai) << " | "
        << mark(f.tri) << " | " << mark(f.topk) << " | ";
    if (r.runs) {
      out << fixed(r.pir) << " | " << fixed(r.ir) << " | " << fixed(r.fmr) << " | " << fixed(r.rr) << " |\n";
    } else {
      out << "failed | failed | failed | failed |\n";
    }
  }
  out << "\nRR ordering M8 >= M7 >= M6 >= M1: " << (result.ordering_holds ? "PASS" : "FAIL") << '\n';
  out << "RR gap M8 - M1 > 0 in every seed: " << (result.gap_every_seed ? "PASS" : "FAIL") << '\n';
}

}  // namespace agentreg
