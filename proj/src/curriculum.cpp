// SPDX-License-Identifier: Apache-2.0
#include "dncr/curriculum.hpp"

#include <algorithm>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "dncr/errors.hpp"
#include "dncr/rng.hpp"

namespace dncr {

void Lesson::check() const {
  if (min_nodes < 3) throw ConfigError("lesson node bounds must start at 3 or more");
  if (max_nodes < min_nodes) throw ConfigError("empty lesson node bounds");
  if (pass_threshold <= 0.0 || pass_threshold > 1.0)
    throw ConfigError("pass threshold must be in (0, 1]");
  if (trucks < 1) throw ConfigError("lesson needs at least one truck");
  if (holdout_size < 1 || eval_interval < 1) throw ConfigError("bad lesson cadence");
  if (max_steps < 0) throw ConfigError("negative step cap");
}

std::vector<Lesson> default_curriculum() {
  auto mk = [](int idx, ProblemKind p, int lo, int hi, int trucks) {
    Lesson l;
    l.index = idx;
    l.problem = p;
    l.min_nodes = lo;
    l.max_nodes = hi;
    l.trucks = trucks;
    return l;
  };
  return {
      mk(1, ProblemKind::TSP, 5, 10, 1),   mk(2, ProblemKind::TSP, 5, 20, 1),
      mk(3, ProblemKind::TSP, 10, 20, 1),  mk(4, ProblemKind::TSP, 10, 25, 1),
      mk(5, ProblemKind::VRP, 10, 20, 2),  mk(6, ProblemKind::VRP, 10, 25, 2),
      mk(7, ProblemKind::VRP, 20, 30, 2),  mk(8, ProblemKind::CVRP, 10, 25, 2),
      mk(9, ProblemKind::CVRP, 20, 30, 3), mk(10, ProblemKind::CVRP, 20, 30, 4),
  };
}

std::vector<Lesson> read_curriculum(std::istream& is) {
  std::vector<Lesson> lessons;
  std::string line;
  while (std::getline(is, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string problem;
    Lesson l;
    if (!(ls >> l.index)) continue;  // blank line
    if (!(ls >> problem >> l.min_nodes >> l.max_nodes >> l.trucks >> l.pass_threshold >>
          l.holdout_size >> l.eval_interval >> l.max_steps))
      throw ConfigError("bad curriculum line: " + line);
    l.problem = problem_kind_from_string(problem);
    l.check();
    lessons.push_back(l);
  }
  if (lessons.empty()) throw ConfigError("curriculum file has no lessons");
  return lessons;
}

void write_curriculum(std::ostream& os, const std::vector<Lesson>& lessons) {
  os << "# index problem n_min n_max trucks threshold holdout eval_interval max_steps\n";
  for (const auto& l : lessons)
    os << l.index << ' ' << to_string(l.problem) << ' ' << l.min_nodes << ' ' << l.max_nodes
       << ' ' << l.trucks << ' ' << l.pass_threshold << ' ' << l.holdout_size << ' '
       << l.eval_interval << ' ' << l.max_steps << '\n';
}

bool solved(const RoutingInstance& inst, const Solution& decoded, const OracleResult& oracle) {
  try {
    if (!validate_solution(inst, decoded).feasible()) return false;
  } catch (const MalformedError&) {
    return false;
  }
  return solution_cost(inst, decoded) <= oracle.cost * (1.0 + 1e-9);
}

uint64_t instance_hash(const RoutingInstance& inst) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  int kind = static_cast<int>(inst.kind);
  mix(&kind, sizeof kind);
  mix(&inst.n_nodes, sizeof inst.n_nodes);
  for (const auto& row : inst.dist) mix(row.data(), row.size() * sizeof(double));
  mix(inst.cargo.data(), inst.cargo.size() * sizeof(double));
  mix(inst.capacities.data(), inst.capacities.size() * sizeof(double));
  mix(&inst.spp_target, sizeof inst.spp_target);
  return h;
}

GenerateParams lesson_generate_params(const Lesson& lesson, uint64_t seed) {
  GenerateParams p;
  p.kind = lesson.problem;
  p.min_nodes = lesson.min_nodes;
  p.max_nodes = lesson.max_nodes;
  p.n_trucks =
      (lesson.problem == ProblemKind::TSP || lesson.problem == ProblemKind::SPP)
          ? 1
          : lesson.trucks;
  p.topography = Topography::Uniform;
  p.seed = seed;
  return p;
}

OracleResult lesson_oracle(const RoutingInstance& inst) {
  OracleResult r = solve_exact(inst);
  r.solution = canonicalize(r.solution);
  return r;
}

namespace {

void check_oracle_bounds(const Lesson& lesson) {
  switch (lesson.problem) {
    case ProblemKind::SPP: return;
    case ProblemKind::TSP:
      if (lesson.max_nodes > kHeldKarpMaxNodes)
        throw ConfigError("lesson " + std::to_string(lesson.index) + ": TSP oracle supports " +
                          std::to_string(kHeldKarpMaxNodes) + " nodes at most");
      return;
    case ProblemKind::VRP:
    case ProblemKind::CVRP:
      if (lesson.max_nodes > kBruteForceMaxNodes)
        throw ConfigError("lesson " + std::to_string(lesson.index) +
                          ": VRP/CVRP oracle supports " + std::to_string(kBruteForceMaxNodes) +
                          " nodes at most");
      if (lesson.trucks > kBruteForceMaxTrucks)
        throw ConfigError("lesson " + std::to_string(lesson.index) + ": too many trucks");
      return;
  }
}

}  // namespace

DncConfig TrainerConfig::make_model_config() const {
  DncConfig c = dnc;
  c.truck_classes_ = truck_classes(t_max);
  c.dest_classes_ = dest_classes(n_max);
  return c;
}

TrainerConfig read_trainer_config(std::istream& is) {
  TrainerConfig cfg;
  std::string key;
  double value;
  while (is >> key) {
    if (key[0] == '#') {
      std::string rest;
      std::getline(is, rest);
      continue;
    }
    if (!(is >> value)) throw ConfigError("bad trainer config value for " + key);
    if (key == "n_max") cfg.n_max = static_cast<int>(value);
    else if (key == "t_max") cfg.t_max = static_cast<int>(value);
    else if (key == "memory_rows") cfg.dnc.memory_rows = static_cast<int>(value);
    else if (key == "word_size") cfg.dnc.word_size = static_cast<int>(value);
    else if (key == "read_heads") cfg.dnc.read_heads = static_cast<int>(value);
    else if (key == "hidden") cfg.dnc.hidden = static_cast<int>(value);
    else if (key == "learning_rate") cfg.learning_rate = value;
    else if (key == "decay") cfg.decay = value;
    else if (key == "epsilon") cfg.epsilon = value;
    else if (key == "clip_norm") cfg.clip_norm = value;
    else throw ConfigError("unknown trainer config key: " + key);
  }
  return cfg;
}

void write_trainer_config(std::ostream& os, const TrainerConfig& cfg) {
  os << "n_max " << cfg.n_max << "\nt_max " << cfg.t_max << "\nmemory_rows "
     << cfg.dnc.memory_rows << "\nword_size " << cfg.dnc.word_size << "\nread_heads "
     << cfg.dnc.read_heads << "\nhidden " << cfg.dnc.hidden << "\nlearning_rate "
     << cfg.learning_rate << "\ndecay " << cfg.decay << "\nepsilon " << cfg.epsilon
     << "\nclip_norm " << cfg.clip_norm << '\n';
}

CurriculumTrainer::CurriculumTrainer(TrainerConfig cfg, uint64_t seed)
    : cfg_(std::move(cfg)), seed_(seed) {}

std::vector<std::pair<RoutingInstance, OracleResult>>& CurriculumTrainer::holdout_set(
    const Lesson& lesson) {
  auto it = holdouts_.find(lesson.index);
  if (it != holdouts_.end()) return it->second;
  auto& set = holdouts_[lesson.index];
  auto& hashes = holdout_hashes_[lesson.index];
  for (int k = 0; k < lesson.holdout_size; ++k) {
    auto params = lesson_generate_params(lesson, derive_seed(seed_, "holdout", lesson.index, k));
    RoutingInstance inst = generate_instance(params);
    hashes.push_back(instance_hash(inst));
    OracleResult oracle = lesson_oracle(inst);
    set.emplace_back(std::move(inst), std::move(oracle));
  }
  std::sort(hashes.begin(), hashes.end());
  return set;
}

double CurriculumTrainer::evaluate_holdout(DncModel& model, const Lesson& lesson) {
  auto& set = holdout_set(lesson);
  int ok = 0;
  for (auto& [inst, oracle] : set) {
    EncodedEpisode ep = make_inference_episode(inst, cfg_.n_max, cfg_.t_max);
    EpisodeResult res = model.episode(ep);
    DecodeResult dec = decode_output(res.scored_logits, inst, cfg_.n_max, cfg_.t_max);
    if (solved(inst, dec.solution, oracle)) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(set.size());
}

double CurriculumTrainer::train_step(DncModel& model, RmsProp& opt, const Lesson& lesson,
                                     long step) {
  const auto& hashes = holdout_hashes_[lesson.index];
  RoutingInstance inst;
  for (uint64_t attempt = 0;; ++attempt) {
    uint64_t s = derive_seed(seed_, "train", static_cast<uint64_t>(lesson.index),
                             static_cast<uint64_t>(step) * 1024 + attempt);
    inst = generate_instance(lesson_generate_params(lesson, s));
    uint64_t h = instance_hash(inst);
    if (!std::binary_search(hashes.begin(), hashes.end(), h)) break;
  }
  OracleResult oracle = lesson_oracle(inst);
  EncodedEpisode ep = make_training_episode(inst, oracle.solution, cfg_.n_max, cfg_.t_max);
  EpisodeOptions opts;
  opts.compute_grads = true;
  EpisodeResult res = model.episode(ep, opts);
  opt.apply(model.params(), std::move(res.grads));
  return res.loss;
}

LessonLog CurriculumTrainer::run_lesson(DncModel& model, RmsProp& opt, const Lesson& lesson,
                                        std::ostream* csv, long start_step) {
  lesson.check();
  if (!step_override) check_oracle_bounds(lesson);
  if (lesson.max_nodes > cfg_.n_max || lesson.trucks > cfg_.t_max)
    throw ConfigError("lesson exceeds encoder limits (n_max/t_max)");
  if (!eval_override) holdout_set(lesson);  // materialize before training

  if (csv && start_step == 0) *csv << "step,loss,holdout_rate\n";

  LessonLog log;
  log.index = lesson.index;
  int eval_index = 0;
  for (long step = start_step; step < lesson.max_steps; ++step) {
    double loss = step_override ? step_override(model, opt, lesson, step)
                                : train_step(model, opt, lesson, step);
    bool eval_now = (step + 1) % lesson.eval_interval == 0;
    double rate = 0.0;
    if (eval_now) {
      rate = eval_override ? eval_override(model, lesson, eval_index)
                           : evaluate_holdout(model, lesson);
      ++eval_index;
      log.final_holdout_rate = rate;
      if (post_eval_hook) post_eval_hook(lesson, step + 1, rate);
    }
    if (csv) {
      *csv << (step + 1) << ',' << loss << ',';
      if (eval_now) *csv << rate;
      *csv << '\n';
    }
    log.steps_used = step + 1;
    if (eval_now && rate >= lesson.pass_threshold) {
      log.converged = true;
      break;
    }
  }
  return log;
}

CurriculumResult CurriculumTrainer::run(DncModel& model, RmsProp& opt,
                                        const std::vector<Lesson>& lessons) {
  CurriculumResult result;
  for (const auto& lesson : lessons) {
    if (on_lesson_boundary) on_lesson_boundary(lesson, model, true);
    result.logs.push_back(run_lesson(model, opt, lesson));
    if (on_lesson_boundary) on_lesson_boundary(lesson, model, false);
  }
  for (ProblemKind kind :
       {ProblemKind::SPP, ProblemKind::TSP, ProblemKind::VRP, ProblemKind::CVRP}) {
    bool present = std::any_of(lessons.begin(), lessons.end(),
                               [&](const Lesson& l) { return l.problem == kind; });
    if (present) result.benchmarks[kind] = benchmark_problem_type(model, lessons, kind);
  }
  return result;
}

double CurriculumTrainer::benchmark_problem_type(DncModel& model,
                                                 const std::vector<Lesson>& lessons,
                                                 ProblemKind problem, int count) {
  const Lesson* last = nullptr;
  for (const auto& l : lessons)
    if (l.problem == problem) last = &l;
  if (!last) throw ConfigError("no lesson with the requested problem type");
  int n = count > 0 ? count : last->holdout_size;
  int ok = 0;
  for (int k = 0; k < n; ++k) {
    auto params = lesson_generate_params(*last, derive_seed(seed_, "benchmark", last->index, k));
    RoutingInstance inst = generate_instance(params);
    OracleResult oracle = lesson_oracle(inst);
    EncodedEpisode ep = make_inference_episode(inst, cfg_.n_max, cfg_.t_max);
    EpisodeResult res = model.episode(ep);
    DecodeResult dec = decode_output(res.scored_logits, inst, cfg_.n_max, cfg_.t_max);
    if (solved(inst, dec.solution, oracle)) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(n);
}

}  // namespace dncr
