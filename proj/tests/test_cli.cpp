// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dncr/instance.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

std::string cli_path() {
  const char* p = std::getenv("DNCR_CLI");
  REQUIRE_MESSAGE(p != nullptr, "DNCR_CLI must point at the command-line binary");
  return p;
}

RunResult run(const std::string& args) {
  RunResult r;
  std::string cmd = cli_path() + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (size_t n = fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch_dir() {
  auto dir = fs::temp_directory_path() / "dncr_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_triangle(const fs::path& p, const char* kind, int trucks) {
  std::ofstream os(p);
  os << kind << " 3 " << trucks << "\n0 1 1\n1 0 1\n1 1 0\n0 0 0\n";
  for (int i = 0; i < trucks; ++i) os << "5 ";
  os << "\n";
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("generate").code == 2);              // missing required kind
  CHECK(run("solve-exact --bogus x.txt").code == 2);
  CHECK(run("solve-exact /no/such/file.txt").code == 2);
}

TEST_CASE("generate is deterministic per seed") {
  auto dir = scratch_dir();
  auto a = dir / "a", b = dir / "b", c = dir / "c";
  auto res = run("--seed 7 --out " + a.string() + " generate TSP --min-nodes 5 --max-nodes 8 --count 3");
  CHECK(res.code == 0);
  int lines = 0;
  for (char ch : res.output) lines += ch == '\n';
  CHECK(lines == 3);
  CHECK(run("--seed 7 --out " + b.string() + " generate TSP --min-nodes 5 --max-nodes 8 --count 3").code == 0);
  CHECK(run("--seed 8 --out " + c.string() + " generate TSP --min-nodes 5 --max-nodes 8 --count 3").code == 0);
  for (int i = 0; i < 3; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "inst_%05d.txt", i);
    CHECK(slurp(a / name) == slurp(b / name));
    CHECK(slurp(a / name) != slurp(c / name));
    std::ifstream is(a / name);
    CHECK_NOTHROW(dncr::read_instance(is).check());
  }
}

TEST_CASE("generate can emit tsplib exports") {
  auto dir = scratch_dir();
  CHECK(run("--out " + dir.string() + " generate TSP --count 1 --tsplib").code == 0);
  CHECK(fs::exists(dir / "inst_00000.txt.tsp"));
  CHECK(slurp(dir / "inst_00000.txt.tsp").find("DIMENSION") != std::string::npos);
}

TEST_CASE("solve-exact on a hand instance") {
  auto dir = scratch_dir();
  auto inst = dir / "tri.txt";
  write_triangle(inst, "TSP", 1);
  auto res = run("solve-exact " + inst.string());
  CHECK(res.code == 0);
  CHECK(res.output.find("cost=3") != std::string::npos);
  std::ifstream sol(inst.string() + ".sol");
  REQUIRE(sol.good());
  CHECK(dncr::read_solution(sol).routes == std::vector<std::vector<int>>{{0, 1, 2, 0}});
}

TEST_CASE("a single-truck fleet reduces to the tsp optimum") {
  auto dir = scratch_dir();
  auto tsp = dir / "as_tsp.txt", vrp = dir / "as_vrp.txt";
  CHECK(run("--seed 3 --out " + dir.string() + " generate TSP --min-nodes 7 --max-nodes 7 --count 1").code == 0);
  fs::copy_file(dir / "inst_00000.txt", tsp);
  {
    std::ifstream is(tsp);
    auto inst = dncr::read_instance(is);
    inst.kind = dncr::ProblemKind::VRP;
    inst.cargo.assign(inst.n_nodes, 1.0);
    inst.cargo[0] = 0.0;
    std::ofstream os(vrp);
    dncr::write_instance(os, inst);
  }
  auto a = run("solve-exact " + tsp.string());
  auto b = run("solve-exact " + vrp.string());
  CHECK(a.code == 0);
  CHECK(b.code == 0);
  auto cost_of = [](const std::string& out) {
    auto pos = out.find("cost=");
    REQUIRE(pos != std::string::npos);
    return std::strtod(out.c_str() + pos + 5, nullptr);
  };
  CHECK(cost_of(a.output) == doctest::Approx(cost_of(b.output)).epsilon(1e-12));
}

TEST_CASE("oversized instances exit with code 3") {
  auto dir = scratch_dir();
  CHECK(run("--out " + dir.string() +
            " generate TSP --min-nodes 30 --max-nodes 30 --count 1").code == 0);
  CHECK(run("solve-exact " + (dir / "inst_00000.txt").string()).code == 3);
  CHECK(run("encode-debug " + (dir / "inst_00000.txt").string() + " --n-max 20").code == 3);
}

TEST_CASE("encode-debug prints one row per token") {
  auto dir = scratch_dir();
  auto inst = dir / "tri.txt";
  write_triangle(inst, "TSP", 1);
  auto res = run("encode-debug " + inst.string());
  CHECK(res.code == 0);
  int lines = 0;
  for (char ch : res.output) lines += ch == '\n';
  // 3 edges + 3 cargo + 1 task + 5 warm-up + (3 + 2 + 1) solve rows.
  CHECK(lines == 3 + 3 + 1 + 5 + 6);
  CHECK(res.output.find('_') != std::string::npos);
}

TEST_CASE("grad-check passes and reports per-seed errors") {
  auto res = run("grad-check --seeds 1");
  CHECK(res.code == 0);
  CHECK(res.output.find("seed 0") != std::string::npos);
  CHECK(res.output.find(" pass") != std::string::npos);
  CHECK(res.output.find("FAIL") == std::string::npos);
}

TEST_CASE("train runs a tiny curriculum end to end and resumes") {
  auto dir = scratch_dir();
  auto config = dir / "trainer.cfg";
  auto curriculum = dir / "lessons.txt";
  {
    std::ofstream os(config);
    os << "n_max 6\nt_max 2\nmemory_rows 8\nword_size 8\nread_heads 1\nhidden 10\n";
  }
  {
    std::ofstream os(curriculum);
    os << "1 TSP 4 5 1 1.0 3 2 4\n";
  }
  auto out = dir / "run";
  std::string pre = "--seed 5 --config " + config.string() + " --out " + out.string();
  std::string post = " train --curriculum " + curriculum.string();
  auto res = run(pre + post);
  CHECK(res.code == 0);
  CHECK(res.output.find("lesson 1:") != std::string::npos);
  CHECK(res.output.find("step cap reached") != std::string::npos);
  CHECK(fs::exists(out / "final.dncr"));
  CHECK(fs::exists(out / "lesson_1.dncr"));
  CHECK(fs::exists(out / "train_state.bin"));
  auto csv = slurp(out / "lesson_1.csv");
  CHECK(csv.rfind("step,loss,holdout_rate", 0) == 0);
  int rows = 0;
  for (char ch : csv) rows += ch == '\n';
  CHECK(rows == 5);  // header + 4 steps

  // Refuse to clobber, then allow it explicitly.
  CHECK(run(pre + post).code == 2);
  CHECK(run(pre + " --force" + post).code == 0);

  // Resuming from the completed state reproduces the final checkpoint.
  auto final_before = slurp(out / "final.dncr");
  auto res2 = run(pre + " --resume" + post);
  CHECK(res2.code == 0);
  CHECK(res2.output.find("resuming at lesson position 1") != std::string::npos);
  CHECK(slurp(out / "final.dncr") == final_before);

  // The checkpoint evaluates, serially and in parallel.
  std::string eval_cmd = "--seed 9 eval " + (out / "final.dncr").string() +
                         " --problem TSP --count 4 --curriculum " + curriculum.string();
  auto ev = run(eval_cmd);
  CHECK(ev.code == 0);
  CHECK(ev.output.find("accuracy=") != std::string::npos);
  auto ev2 = run("--jobs 2 " + eval_cmd);
  CHECK(ev2.code == 0);
  CHECK(ev2.output == ev.output);
}

TEST_CASE("eval rejects a missing checkpoint") {
  CHECK(run("eval /no/such/model.dncr").code == 2);
}
