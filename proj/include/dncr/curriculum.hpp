// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dncr/dnc.hpp"
#include "dncr/instance.hpp"
#include "dncr/optimizer.hpp"
#include "dncr/oracles.hpp"

namespace dncr {

struct Lesson {
  int index = 0;
  ProblemKind problem = ProblemKind::TSP;
  int min_nodes = 5;
  int max_nodes = 10;
  int trucks = 1;
  double pass_threshold = 0.8;
  int holdout_size = 200;
  int eval_interval = 1000;
  long max_steps = 200000;

  void check() const;
};

// The ten-lesson routing curriculum: TSP sizes (5,10) through (10,25), VRP
// (10,20) through (20,30), CVRP with 2..4 trucks.
std::vector<Lesson> default_curriculum();

// Line-oriented config:
//   index problem n_min n_max trucks threshold holdout eval_interval max_steps
std::vector<Lesson> read_curriculum(std::istream& is);
void write_curriculum(std::ostream& os, const std::vector<Lesson>& lessons);

struct LessonLog {
  int index = 0;
  long steps_used = 0;
  double final_holdout_rate = 0.0;
  bool converged = false;
};

struct CurriculumResult {
  std::vector<LessonLog> logs;
  std::map<ProblemKind, double> benchmarks;
};

// A decoded solution counts as solved when it is feasible and its cost is
// within relative 1e-9 of the oracle optimum.
bool solved(const RoutingInstance& inst, const Solution& decoded, const OracleResult& oracle);

// Instance content hash, used to keep hold-out sets disjoint from training.
uint64_t instance_hash(const RoutingInstance& inst);

GenerateParams lesson_generate_params(const Lesson& lesson, uint64_t seed);

// Exact label for a lesson-sized instance; throws BoundsError past the
// oracle size limits.
OracleResult lesson_oracle(const RoutingInstance& inst);

struct TrainerConfig {
  int n_max = 32;
  int t_max = 4;
  DncConfig dnc;  // head sizes derived from n_max/t_max in make_model_config()
  double learning_rate = 1e-4;
  double decay = 0.9;
  double epsilon = 1e-10;
  double clip_norm = 50.0;

  DncConfig make_model_config() const;
};

// Key-value model/trainer config file ("memory_rows 256", one per line).
TrainerConfig read_trainer_config(std::istream& is);
void write_trainer_config(std::ostream& os, const TrainerConfig& cfg);

class CurriculumTrainer {
public:
  CurriculumTrainer(TrainerConfig cfg, uint64_t seed);

  // Test hooks. When set they replace the real gradient step / hold-out
  // evaluation; curriculum mechanics stay identical.
  std::function<double(DncModel&, RmsProp&, const Lesson&, long step)> step_override;
  std::function<double(DncModel&, const Lesson&, int eval_index)> eval_override;
  std::function<void(const Lesson&, const DncModel&, bool starting)> on_lesson_boundary;
  // Called after every hold-out evaluation; the CLI uses it to persist
  // resumable run state.
  std::function<void(const Lesson&, long step, double rate)> post_eval_hook;

  // Sample-label-encode-train loop with periodic hold-out evaluation; stops
  // at the pass threshold or at max_steps (non-converged). start_step > 0
  // resumes mid-lesson. csv, when given, receives `step,loss,holdout_rate`
  // rows.
  LessonLog run_lesson(DncModel& model, RmsProp& opt, const Lesson& lesson,
                       std::ostream* csv = nullptr, long start_step = 0);

  CurriculumResult run(DncModel& model, RmsProp& opt, const std::vector<Lesson>& lessons);

  double evaluate_holdout(DncModel& model, const Lesson& lesson);
  // Solved-rate on a fresh set sampled at the final lesson of the problem
  // type, `count` instances from the named seed stream.
  double benchmark_problem_type(DncModel& model, const std::vector<Lesson>& lessons,
                                ProblemKind problem, int count = -1);

  double train_step(DncModel& model, RmsProp& opt, const Lesson& lesson, long step);

  const TrainerConfig& config() const { return cfg_; }
  uint64_t seed() const { return seed_; }

private:
  std::vector<std::pair<RoutingInstance, OracleResult>>& holdout_set(const Lesson& lesson);

  TrainerConfig cfg_;
  uint64_t seed_;
  std::map<int, std::vector<std::pair<RoutingInstance, OracleResult>>> holdouts_;
  std::map<int, std::vector<uint64_t>> holdout_hashes_;
};

}  // namespace dncr
