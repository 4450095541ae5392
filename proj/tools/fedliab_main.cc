// Copyright 2026 The fedliab Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

// fedliab: federated training with node-liability auditing.
//
//   fedliab run --config FILE [--scenario S] [--alpha A] [--seed N] [--out DIR]
//   fedliab audit --run-dir DIR --sample-id K
//   fedliab overhead --config FILE [--rounds R] [--repeats K] [--out DIR]
//
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "fedliab/harness/config.h"
#include "fedliab/harness/experiment.h"
#include "fedliab/harness/export.h"
#include "fedliab/nn/params.h"
#include "fedliab/util/binary_io.h"

namespace {

namespace fs = std::filesystem;
using namespace fedliab;

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

std::string ReadText(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

std::string Percent(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * v);
  return buf;
}

std::string JoinIds(const std::vector<std::size_t>& ids) {
  std::string out = "[";
  for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? "," : "") + std::to_string(ids[i]);
  return out + "]";
}

void PrintSummary(const harness::ScenarioResult& r, const harness::ExperimentConfig& cfg) {
  const auto source = static_cast<std::size_t>(cfg.corruption.source_class);
  if (r.audited_run) {
    std::cout << "audited run (" << harness::ScenarioName(r.audited_run->scenario)
              << "): accuracy " << Percent(r.audited_run->test_eval.overall) << ", class "
              << source << " " << Percent(r.audited_run->test_eval.per_class[source]) << "\n";
  }
  std::cout << harness::ScenarioName(r.scenario) << ": " << r.roster.size() << " nodes, "
            << r.training.history.size() << " rounds, " << r.training.message_count
            << " messages\n"
            << "  test accuracy " << Percent(r.test_eval.overall) << ", class " << source << " "
            << Percent(r.test_eval.per_class[source]) << "\n"
            << "  audited " << r.audit.report.sample_id << " (" << r.audit.report.selection_rule
            << ")\n"
            << "  flagged " << JoinIds(r.audit.report.flagged) << " at alpha "
            << FormatDouble(r.audit.report.alpha) << "\n";
}

int Run(const std::string& config_path, const std::optional<std::string>& scenario,
        const std::optional<std::string>& alpha, const std::optional<std::string>& seed,
        const std::optional<std::string>& out) {
  auto cfg = harness::LoadConfig(config_path);
  if (scenario) harness::SetConfigValue(cfg, "scenario", *scenario);
  if (alpha) harness::SetConfigValue(cfg, "alpha", *alpha);
  if (seed) harness::SetConfigValue(cfg, "seed", *seed);
  if (out) harness::SetConfigValue(cfg, "out", *out);
  cfg.Validate();

  const auto data = harness::PrepareData(cfg);
  const auto result = harness::RunScenario(cfg, data);
  auto [net, unused_init] = harness::BuildModel(cfg, data.test);
  const auto overhead = harness::MeasureOverhead(net, result.training.final_params, data.test,
                                                 result, cfg.overhead_calls, cfg.lrp);
  harness::ExportMetrics(result, cfg, data, &overhead, cfg.out_dir);
  PrintSummary(result, cfg);
  std::cout << "  wrote " << cfg.out_dir << "\n";
  return 0;
}

int Audit(const fs::path& run_dir, const std::string& sample_id) {
  auto cfg = harness::ParseConfig(ReadText(run_dir / "manifest.json"));
  std::string digits = sample_id;
  if (digits.rfind("test:", 0) == 0) digits = digits.substr(5);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) {
    throw harness::ConfigError("sample id must be a test index, e.g. 17 or test:17");
  }
  const std::size_t index = std::stoul(digits);

  const auto data = harness::PrepareData(cfg);
  auto [net, unused_init] = harness::BuildModel(cfg, data.test);
  std::ifstream model_in(run_dir / "model.bin", std::ios::binary);
  if (!model_in) throw std::runtime_error("cannot read " + (run_dir / "model.bin").string());
  const auto params = nn::ReadParams(model_in);
  std::ifstream dist_in(run_dir / "distances.bin", std::ios::binary);
  if (!dist_in) throw std::runtime_error("cannot read " + (run_dir / "distances.bin").string());
  const auto distances = audit::ReadDistanceBinary(dist_in);

  // A retrained run's distances cover the nodes its audit did not flag.
  std::vector<std::size_t> roster(distances.nodes());
  std::iota(roster.begin(), roster.end(), std::size_t{0});
  if (cfg.scenario == harness::Scenario::kAuditedRetrain) {
    const auto exclusion = audit::ParseAuditReportJson(ReadText(run_dir / "audit.json"));
    roster.clear();
    for (std::size_t id = 0; id < cfg.nodes; ++id) {
      if (std::find(exclusion.flagged.begin(), exclusion.flagged.end(), id) ==
          exclusion.flagged.end()) {
        roster.push_back(id);
      }
    }
    if (roster.size() != distances.nodes()) {
      throw std::runtime_error("audit.json does not match distances.bin");
    }
  }

  auto outcome = harness::AuditSample(net, params, data.test, index, distances, cfg);
  for (auto& id : outcome.report.flagged) id = roster[id];
  outcome.report.selection_rule = "requested by the user";
  const std::string json = audit::AuditReportJson(outcome.report);
  const auto stem = "sample_" + std::to_string(index);
  {
    std::ofstream out(run_dir / ("audit_" + stem + ".json"), std::ios::binary);
    out << json;
  }
  {
    auto fwd = nn::Forward(net, params, data.test.images[index]);
    auto map = lrp::Propagate(net, params, fwd.trace, outcome.predicted_class, cfg.lrp);
    std::ofstream out(run_dir / ("relevance_" + stem + ".pgm"), std::ios::binary);
    lrp::WritePgmHeatmap(out, map.input());
  }
  std::cout << "sample " << index << ": label " << data.test.labels[index] << ", predicted "
            << outcome.predicted_class << "\n"
            << json;
  return 0;
}

int Overhead(const std::string& config_path, std::size_t rounds, std::size_t repeats,
             const std::optional<std::string>& out) {
  auto cfg = harness::LoadConfig(config_path);
  const auto data = harness::PrepareData(cfg);
  const auto result = harness::RunScenario(cfg, data);
  auto [net, unused_init] = harness::BuildModel(cfg, data.test);
  auto report = harness::MeasureOverhead(net, result.training.final_params, data.test, result,
                                         cfg.overhead_calls, cfg.lrp);
  harness::MeasureObserverOverhead(cfg, data, rounds, repeats, report);
  const std::string json = harness::OverheadJson(report);
  if (out) {
    fs::create_directories(*out);
    std::ofstream file(fs::path(*out) / "overhead.json", std::ios::binary);
    if (!file) throw std::runtime_error("cannot write " + *out + "/overhead.json");
    file << json;
  }
  std::cout << json;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with node-liability auditing"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> scenario, alpha, seed, out;
  auto* run = app.add_subcommand("run", "train one scenario and export its metrics");
  run->add_option("--config", config_path, "config file or manifest.json")->required();
  run->add_option("--scenario", scenario, "all_correct | with_misbehaving | audited_retrain");
  run->add_option("--alpha", alpha, "detection threshold factor (> 1)");
  run->add_option("--seed", seed, "master seed");
  run->add_option("--out", out, "output directory");

  std::string run_dir, sample_id;
  auto* audit_cmd = app.add_subcommand("audit", "audit one decision of a finished run");
  audit_cmd->add_option("--run-dir", run_dir, "directory written by `fedliab run`")->required();
  audit_cmd->add_option("--sample-id", sample_id, "test sample index")->required();

  std::string overhead_config;
  std::size_t rounds = 3, repeats = 5;
  std::optional<std::string> overhead_out;
  auto* overhead = app.add_subcommand("overhead", "measure the cost of auditing");
  overhead->add_option("--config", overhead_config, "config file")->required();
  overhead->add_option("--rounds", rounds, "rounds per observer timing run")
      ->check(CLI::PositiveNumber);
  overhead->add_option("--repeats", repeats, "timing runs with and without the observer")
      ->check(CLI::PositiveNumber);
  overhead->add_option("--out", overhead_out, "directory for overhead.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return Run(config_path, scenario, alpha, seed, out);
    if (*audit_cmd) return Audit(run_dir, sample_id);
    if (*overhead) return Overhead(overhead_config, rounds, repeats, overhead_out);
  } catch (const harness::ConfigError& e) {
    std::cerr << "fedliab: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "fedliab: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
