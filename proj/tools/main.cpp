#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "promptmr/config.hpp"
#include "promptmr/error.hpp"
#include "promptmr/pipeline.hpp"

namespace fs = std::filesystem;
using namespace promptmr;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kDivergence = 4 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string log_level = "info";
};

ReconConfig resolve(const Globals& g) {
  std::optional<fs::path> file;
  if (!g.config.empty()) file = g.config;
  return load_config(file, g.overrides, g.seed);
}

fs::path or_default(const std::string& s, const fs::path& fallback) { return s.empty() ? fallback : fs::path(s); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PromptMR: two-stage unrolled MRI reconstruction on synthetic multi-coil data"};
  app.require_subcommand(0, 1);
  Globals g;
  bool print_config = false;
  app.add_option("--config", g.config, "YAML configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the configuration seed");
  app.add_option("--override", g.overrides, "key.path=value override (repeatable)");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off");
  app.add_flag("--print-config", print_config, "Print the fully resolved configuration and exit");

  auto* sim = app.add_subcommand("simulate", "Generate the synthetic data set and its split manifest");

  bool resume1 = false;
  auto* tr1 = app.add_subcommand("train-stage1", "Train the unrolled Stage-I model");
  tr1->add_flag("--resume", resume1, "Continue from <run_dir>/stage1/state");

  bool resume2 = false;
  std::string s1_for_s2;
  auto* tr2 = app.add_subcommand("train-stage2", "Train the Stage-II refiner on frozen Stage-I outputs");
  tr2->add_flag("--resume", resume2, "Continue from <run_dir>/stage2/state");
  tr2->add_option("--stage1", s1_for_s2, "Stage-I checkpoint (default <run_dir>/stage1/checkpoint)");

  std::string rc_s1, rc_s2, rc_out;
  std::vector<std::string> rc_cases;
  bool rc_no_s2 = false;
  auto* rc = app.add_subcommand("reconstruct", "Reconstruct test cases at every configured acceleration");
  rc->add_option("--stage1", rc_s1, "Stage-I checkpoint (default <run_dir>/stage1/checkpoint)");
  rc->add_option("--stage2", rc_s2, "Stage-II checkpoint (default <run_dir>/stage2/checkpoint when present)");
  rc->add_flag("--no-stage2", rc_no_s2, "Skip Stage II");
  rc->add_option("--case", rc_cases, "Case container directory (repeatable; default: test split)");
  rc->add_option("--out", rc_out, "Output directory (default <run_dir>/recon)");

  std::string ev_dir, ev_report;
  auto* ev = app.add_subcommand("evaluate", "Score reconstructions and write the metric report");
  ev->add_option("--recon", ev_dir, "Reconstruction directory (default <run_dir>/recon)");
  ev->add_option("--report", ev_report, "CSV path (default <run_dir>/report.csv)");

  std::string ex_s1, ex_out, ex_split = "test";
  auto* ex = app.add_subcommand("export-prompts", "Write prompt weights of the final cascade as CSV");
  ex->add_option("--stage1", ex_s1, "Stage-I checkpoint (default <run_dir>/stage1/checkpoint)");
  ex->add_option("--split", ex_split, "train|val|test")->check(CLI::IsMember({"train", "val", "test"}));
  ex->add_option("--out", ex_out, "CSV path (default <run_dir>/prompts.csv)");
  int ex_cascade = -1;
  ex->add_option("--cascade", ex_cascade, "Cascade index, 0-based (default: last)");

  for (auto* sub : {sim, tr1, tr2, rc, ev, ex}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  spdlog::set_level(spdlog::level::from_str(g.log_level));
  try {
    const ReconConfig cfg = resolve(g);
    if (print_config) {
      std::cout << dump_config(cfg);
      return kOk;
    }
    if (app.get_subcommands().empty()) throw ConfigError("no command given (see --help)");
    const fs::path s1_default = stage_dir(cfg, 1) / "checkpoint";

    if (*sim) {
      cmd_simulate(cfg);
    } else if (*tr1) {
      const auto s = cmd_train_stage1(cfg, TrainOptions{resume1, -1});
      std::cout << s.checkpoint.string() << "\n";
    } else if (*tr2) {
      const auto s = cmd_train_stage2(cfg, or_default(s1_for_s2, s1_default), TrainOptions{resume2, -1});
      std::cout << s.checkpoint.string() << "\n";
    } else if (*rc) {
      ReconstructOptions o;
      o.stage1_checkpoint = or_default(rc_s1, s1_default);
      const fs::path s2 = or_default(rc_s2, stage_dir(cfg, 2) / "checkpoint");
      if (!rc_no_s2 && (!rc_s2.empty() || fs::exists(s2))) o.stage2_checkpoint = s2;
      for (const auto& c : rc_cases) o.cases.emplace_back(c);
      o.out_dir = rc_out;
      for (const auto& p : cmd_reconstruct(cfg, o)) std::cout << p.string() << "\n";
    } else if (*ev) {
      const fs::path report = or_default(ev_report, cfg.run_dir / "report.csv");
      const auto rows = cmd_evaluate(cfg, or_default(ev_dir, cfg.run_dir / "recon"), report);
      std::cout << format_report_table(aggregate(rows));
    } else if (*ex) {
      const fs::path out = or_default(ex_out, cfg.run_dir / "prompts.csv");
      const auto rows = cmd_export_prompts(cfg, or_default(ex_s1, s1_default), out, ex_split, ex_cascade);
      std::cout << rows.size() << " rows -> " << out.string() << "\n";
    }
  } catch (const ConfigError& e) {
    spdlog::error("configuration: {}", e.what());
    return kConfig;
  } catch (const DataError& e) {
    spdlog::error("data: {}", e.what());
    return kData;
  } catch (const DivergenceError& e) {
    spdlog::error("divergence: {}", e.what());
    return kDivergence;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
  return kOk;
}
