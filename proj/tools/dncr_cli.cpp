// SPDX-License-Identifier: Apache-2.0
//
// Batch entry point: instance generation, exact solving, curriculum
// training with resumable state, evaluation, gradient verification, and a
// token-stream debug dump.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "dncr/checkpoint.hpp"
#include "dncr/curriculum.hpp"
#include "dncr/dnc.hpp"
#include "dncr/encoding.hpp"
#include "dncr/errors.hpp"
#include "dncr/gradcheck.hpp"
#include "dncr/instance.hpp"
#include "dncr/oracles.hpp"
#include "dncr/rng.hpp"

namespace fs = std::filesystem;
using namespace dncr;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitBounds = 3;
constexpr int kExitNumeric = 4;

RoutingInstance load_instance_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open instance file: " + path);
  return read_instance(is);
}

// --- train state (resume) --------------------------------------------------

struct TrainState {
  uint32_t lesson_pos = 0;
  uint64_t next_step = 0;
};

const char kStateMagic[4] = {'D', 'N', 'C', 'S'};

void save_train_state(const std::string& path, const TrainState& st, const DncConfig& cfg,
                      const DncParams& params, const DncParams& opt_acc) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    os.write(kStateMagic, 4);
    uint32_t v[4] = {1, st.lesson_pos, static_cast<uint32_t>(st.next_step & 0xffffffffu),
                     static_cast<uint32_t>(st.next_step >> 32)};
    os.write(reinterpret_cast<const char*>(v), sizeof v);
    save_checkpoint(tmp + ".ck", cfg, params);  // reuse the exact tensor format
    std::ifstream ck(tmp + ".ck", std::ios::binary);
    os << ck.rdbuf();
    std::ostringstream acc;
    write_tensors(acc, opt_acc);
    os << acc.str();
  }
  fs::remove(tmp + ".ck");
  fs::rename(tmp, path);
}

bool load_train_state(const std::string& path, TrainState& st, DncConfig& cfg,
                      DncParams& params, DncParams& opt_acc) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kStateMagic, 4) != 0)
    throw MalformedError("bad train state file");
  uint32_t v[4];
  is.read(reinterpret_cast<char*>(v), sizeof v);
  st.lesson_pos = v[1];
  st.next_step = uint64_t{v[2]} | uint64_t{v[3]} << 32;
  // Embedded checkpoint blob: write it out and reuse the loader.
  std::string tmp = path + ".ld";
  {
    std::ofstream os(tmp, std::ios::binary);
    os << is.rdbuf();
  }
  // The blob is checkpoint + acc tensors; load checkpoint first.
  Checkpoint ck = load_checkpoint(tmp);
  cfg = ck.config;
  params = std::move(ck.params);
  opt_acc = DncParams::zeros(cfg);
  {
    std::ifstream blob(tmp, std::ios::binary);
    // Skip past the checkpoint portion by re-reading it.
    char m2[4];
    blob.read(m2, 4);
    for (int i = 0; i < 8; ++i) {
      uint32_t dummy;
      blob.read(reinterpret_cast<char*>(&dummy), 4);
    }
    DncParams scratch = DncParams::zeros(cfg);
    read_tensors(blob, scratch);
    read_tensors(blob, opt_acc);
  }
  fs::remove(tmp);
  return true;
}

// Drop CSV rows past the resume step so a resumed run reproduces the exact
// trace of an uninterrupted one.
void truncate_csv(const std::string& path, long keep_through_step) {
  std::ifstream is(path);
  if (!is) return;
  std::vector<std::string> kept;
  std::string line;
  while (std::getline(is, line)) {
    if (kept.empty()) {
      kept.push_back(line);  // header
      continue;
    }
    long step = std::strtol(line.c_str(), nullptr, 10);
    if (step <= keep_through_step) kept.push_back(line);
  }
  is.close();
  std::ofstream os(path, std::ios::trunc);
  for (const auto& l : kept) os << l << '\n';
}

// --- commands --------------------------------------------------------------

int cmd_generate(const std::string& kind, int min_nodes, int max_nodes, int trucks, int count,
                 const std::string& topography, uint64_t seed, const std::string& out_dir,
                 bool tsplib) {
  GenerateParams params;
  params.kind = problem_kind_from_string(kind);
  params.min_nodes = min_nodes;
  params.max_nodes = max_nodes;
  params.n_trucks = trucks;
  if (topography == "uniform")
    params.topography = Topography::Uniform;
  else if (topography == "clustered")
    params.topography = Topography::Clustered;
  else
    throw ConfigError("topography must be uniform or clustered");

  fs::create_directories(out_dir);
  for (int i = 0; i < count; ++i) {
    params.seed = derive_seed(seed, "cli-generate", i);
    RoutingInstance inst = generate_instance(params);
    char name[32];
    std::snprintf(name, sizeof name, "inst_%05d.txt", i);
    fs::path path = fs::path(out_dir) / name;
    std::ofstream os(path);
    write_instance(os, inst);
    if (tsplib) {
      std::ofstream ts(fs::path(out_dir) / (std::string(name) + ".tsp"));
      write_tsplib(ts, inst, name);
    }
    std::cout << path.string() << " kind=" << to_string(inst.kind)
              << " nodes=" << inst.n_nodes << " trucks=" << inst.n_trucks() << '\n';
  }
  return 0;
}

int cmd_solve_exact(const std::string& instance_path, std::string out_path) {
  RoutingInstance inst = load_instance_file(instance_path);
  OracleResult result = solve_exact(inst);
  if (out_path.empty()) out_path = instance_path + ".sol";
  std::ofstream os(out_path);
  write_solution(os, result.solution);
  std::cout.precision(17);
  std::cout << "cost=" << result.cost << '\n';
  return 0;
}

double eval_accuracy(const DncModel& model, const TrainerConfig& tcfg, const Lesson& lesson,
                     int count, uint64_t seed, int jobs) {
  std::atomic<int> next{0};
  std::atomic<int> ok{0};
  auto worker = [&]() {
    for (;;) {
      int k = next.fetch_add(1);
      if (k >= count) return;
      auto params = lesson_generate_params(lesson, derive_seed(seed, "cli-eval", k));
      RoutingInstance inst = generate_instance(params);
      OracleResult oracle = lesson_oracle(inst);
      EncodedEpisode ep = make_inference_episode(inst, tcfg.n_max, tcfg.t_max);
      EpisodeResult res = model.episode(ep);
      DecodeResult dec = decode_output(res.scored_logits, inst, tcfg.n_max, tcfg.t_max);
      if (solved(inst, dec.solution, oracle)) ok.fetch_add(1);
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return static_cast<double>(ok.load()) / count;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& problem, int count,
             uint64_t seed, const std::string& curriculum_path, int jobs) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  TrainerConfig tcfg;
  tcfg.dnc = ck.config;
  tcfg.n_max = ck.config.dest_classes_ - 2;
  tcfg.t_max = ck.config.truck_classes_ - 2;
  DncModel model(ck.config, std::move(ck.params));

  std::vector<Lesson> lessons;
  if (curriculum_path.empty()) {
    lessons = default_curriculum();
  } else {
    std::ifstream is(curriculum_path);
    if (!is) throw ConfigError("cannot open curriculum: " + curriculum_path);
    lessons = read_curriculum(is);
  }
  ProblemKind kind = problem_kind_from_string(problem);
  const Lesson* last = nullptr;
  for (const auto& l : lessons)
    if (l.problem == kind) last = &l;
  if (!last) throw ConfigError("curriculum has no " + problem + " lesson");

  double acc = eval_accuracy(model, tcfg, *last, count, seed, jobs);
  std::cout << "problem=" << problem << " count=" << count << " accuracy=" << acc << '\n';
  return 0;
}

int cmd_grad_check(uint64_t seed, int seeds) {
  double worst = 0.0;
  for (int s = 0; s < seeds; ++s) {
    GradCheckResult r = grad_check_tiny(derive_seed(seed, "cli-gradcheck", s));
    worst = std::max(worst, r.max_rel_err);
    std::cout << "seed " << s << ": max_rel_err=" << r.max_rel_err
              << (r.pass ? " pass" : " FAIL") << '\n';
  }
  std::cout << "overall max_rel_err=" << worst << '\n';
  if (worst >= 1e-4) {
    std::cerr << "gradient check failed\n";
    return kExitNumeric;
  }
  return 0;
}

int cmd_encode_debug(const std::string& instance_path, int n_max, int t_max) {
  RoutingInstance inst = load_instance_file(instance_path);
  std::cout << format_token_stream(encode_instance(inst, n_max, t_max));
  return 0;
}

int cmd_train(const std::string& curriculum_path, const std::string& config_path,
              uint64_t seed, const std::string& out_dir, bool resume, bool force) {
  std::vector<Lesson> lessons;
  if (curriculum_path.empty()) {
    lessons = default_curriculum();
  } else {
    std::ifstream is(curriculum_path);
    if (!is) throw ConfigError("cannot open curriculum: " + curriculum_path);
    lessons = read_curriculum(is);
  }
  TrainerConfig tcfg;
  if (!config_path.empty()) {
    std::ifstream is(config_path);
    if (!is) throw ConfigError("cannot open trainer config: " + config_path);
    tcfg = read_trainer_config(is);
  }

  fs::create_directories(out_dir);
  fs::path state_path = fs::path(out_dir) / "train_state.bin";
  fs::path final_path = fs::path(out_dir) / "final.dncr";
  if (!resume && !force && fs::exists(final_path))
    throw ConfigError("checkpoint exists: " + final_path.string() + " (use --force)");

  DncConfig mcfg = tcfg.make_model_config();
  DncParams params = DncParams::init(mcfg, derive_seed(seed, "init"));
  DncParams acc = DncParams::zeros(mcfg);
  TrainState st;
  if (resume) {
    DncConfig loaded_cfg;
    if (load_train_state(state_path.string(), st, loaded_cfg, params, acc)) {
      if (!(loaded_cfg == mcfg)) throw ConfigError("resume config mismatch");
      std::cout << "resuming at lesson position " << st.lesson_pos << " step " << st.next_step
                << '\n';
    } else {
      std::cout << "no state file, starting fresh\n";
    }
  }

  DncModel model(mcfg, std::move(params));
  RmsProp opt(mcfg);
  opt.learning_rate = tcfg.learning_rate;
  opt.decay = tcfg.decay;
  opt.epsilon = tcfg.epsilon;
  opt.clip_norm = tcfg.clip_norm;
  opt.accumulator() = std::move(acc);

  CurriculumTrainer trainer(tcfg, seed);
  CurriculumResult result;

  for (uint32_t pos = st.lesson_pos; pos < lessons.size(); ++pos) {
    const Lesson& lesson = lessons[pos];
    long start_step = pos == st.lesson_pos ? static_cast<long>(st.next_step) : 0;
    fs::path csv_path = fs::path(out_dir) / ("lesson_" + std::to_string(lesson.index) + ".csv");
    if (start_step > 0) truncate_csv(csv_path.string(), start_step);
    std::ofstream csv(csv_path, start_step > 0 ? std::ios::app : std::ios::trunc);

    trainer.post_eval_hook = [&](const Lesson& l, long step, double) {
      TrainState snap{pos, static_cast<uint64_t>(step)};
      save_train_state(state_path.string(), snap, mcfg, model.params(), opt.accumulator());
      (void)l;
    };
    LessonLog log = trainer.run_lesson(model, opt, lesson, &csv, start_step);
    result.logs.push_back(log);
    save_checkpoint((fs::path(out_dir) / ("lesson_" + std::to_string(lesson.index) + ".dncr"))
                        .string(),
                    mcfg, model.params());
    std::cout << "lesson " << lesson.index << ": steps=" << log.steps_used
              << " holdout=" << log.final_holdout_rate
              << (log.converged ? " (passed)" : " (step cap reached)") << '\n';
    TrainState snap{pos + 1, 0};
    save_train_state(state_path.string(), snap, mcfg, model.params(), opt.accumulator());
  }

  save_checkpoint(final_path.string(), mcfg, model.params());

  std::cout << "\nLesson  Problem  Nodes        Trucks  Test (%)\n";
  for (ProblemKind kind :
       {ProblemKind::TSP, ProblemKind::VRP, ProblemKind::CVRP, ProblemKind::SPP}) {
    const Lesson* last = nullptr;
    for (const auto& l : lessons)
      if (l.problem == kind) last = &l;
    if (!last) continue;
    double acc_pct = trainer.benchmark_problem_type(model, lessons, kind) * 100.0;
    std::cout << last->index << "  " << to_string(kind) << "  (" << last->min_nodes << ", "
              << last->max_nodes << ")  " << last->trucks << "  " << acc_pct << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Routing-problem solver with memory-augmented sequence models"};
  app.require_subcommand(1);

  uint64_t seed = 0;
  std::string out;
  std::string config;
  int jobs = 1;
  bool resume = false;
  bool force = false;
  app.add_option("--seed", seed, "base RNG seed")->capture_default_str();
  app.add_option("--out", out, "output directory or file");
  app.add_option("--config", config, "config file");
  app.add_option("--jobs", jobs, "worker threads for evaluation")->capture_default_str();
  app.add_flag("--resume", resume, "resume from saved state");
  app.add_flag("--force", force, "overwrite existing outputs");

  auto* gen = app.add_subcommand("generate", "generate instance files");
  std::string kind = "TSP", topography = "uniform";
  int min_nodes = 5, max_nodes = 10, trucks = 1, count = 1;
  bool tsplib = false;
  gen->add_option("kind", kind, "SPP|TSP|VRP|CVRP")->required();
  gen->add_option("--min-nodes", min_nodes)->capture_default_str();
  gen->add_option("--max-nodes", max_nodes)->capture_default_str();
  gen->add_option("--trucks", trucks)->capture_default_str();
  gen->add_option("--count", count)->capture_default_str();
  gen->add_option("--topography", topography, "uniform|clustered")->capture_default_str();
  gen->add_flag("--tsplib", tsplib, "also write TSPLIB exports");

  auto* solve = app.add_subcommand("solve-exact", "solve one instance exactly");
  std::string instance_path;
  solve->add_option("instance", instance_path, "instance file")->required();

  auto* train = app.add_subcommand("train", "run the curriculum");
  std::string curriculum_path;
  train->add_option("--curriculum", curriculum_path, "curriculum file (default: built-in)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint_path, problem = "TSP";
  int eval_count = 200;
  eval->add_option("checkpoint", checkpoint_path)->required();
  eval->add_option("--problem", problem)->capture_default_str();
  eval->add_option("--count", eval_count)->capture_default_str();
  eval->add_option("--curriculum", curriculum_path, "curriculum file (default: built-in)");

  auto* grad = app.add_subcommand("grad-check", "verify gradients by finite differences");
  int grad_seeds = 10;
  grad->add_option("--seeds", grad_seeds, "number of random seeds")->capture_default_str();

  auto* enc = app.add_subcommand("encode-debug", "print the token stream of an instance");
  int n_max = 32, t_max = 4;
  enc->add_option("instance", instance_path)->required();
  enc->add_option("--n-max", n_max)->capture_default_str();
  enc->add_option("--t-max", t_max)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed())
      return cmd_generate(kind, min_nodes, max_nodes, trucks, count, topography, seed,
                          out.empty() ? "." : out, tsplib);
    if (solve->parsed()) return cmd_solve_exact(instance_path, out);
    if (train->parsed())
      return cmd_train(curriculum_path, config, seed, out.empty() ? "run" : out, resume, force);
    if (eval->parsed())
      return cmd_eval(checkpoint_path, problem, eval_count, seed, curriculum_path, jobs);
    if (grad->parsed()) return cmd_grad_check(seed, grad_seeds);
    if (enc->parsed()) return cmd_encode_debug(instance_path, n_max, t_max);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const BoundsError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBounds;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure at step " << e.step << ": " << e.what() << '\n';
    return kExitNumeric;
  } catch (const MalformedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return 0;
}
