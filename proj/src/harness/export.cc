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

#include "fedliab/harness/export.h"

#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "fedliab/nn/params.h"
#include "fedliab/util/binary_io.h"

namespace fedliab::harness {

namespace {

namespace fs = std::filesystem;

template <typename WriteFn>
void WriteFile(const fs::path& path, WriteFn write) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write(out);
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

void WriteAccuracyCsv(std::ostream& out,
                      const std::vector<std::pair<std::string, const fl::EvalResult*>>& rows) {
  out << "scenario,class,accuracy\n";
  for (const auto& [scenario, eval] : rows) {
    out << scenario << ",all," << FormatDouble(eval->overall) << '\n';
    for (std::size_t c = 0; c < eval->per_class.size(); ++c) {
      out << scenario << ',' << c << ',' << FormatDouble(eval->per_class[c]) << '\n';
    }
  }
}

void ExportMetrics(const ScenarioResult& result, const ExperimentConfig& cfg,
                   const ExperimentData& data, const OverheadReport* overhead,
                   const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory " + dir.string());
  }

  WriteFile(dir / "manifest.json", [&](std::ostream& out) { out << ManifestJson(cfg); });

  std::vector<std::pair<std::string, const fl::EvalResult*>> accuracy;
  if (result.audited_run) {
    accuracy.emplace_back(std::string(ScenarioName(result.audited_run->scenario)),
                          &result.audited_run->test_eval);
  }
  accuracy.emplace_back(std::string(ScenarioName(result.scenario)), &result.test_eval);
  WriteFile(dir / "accuracy.csv", [&](std::ostream& out) { WriteAccuracyCsv(out, accuracy); });

  // RAdist of this run's distances under the audited decision's relevance.
  // For audited_retrain that decision came from the audited run; a run too
  // small to audit falls back to uniform layer weights.
  lrp::LayerRelevanceVector relevance = result.audit.relevance;
  if (relevance.size() == 0) {
    const std::size_t layers = result.distances.layers();
    relevance.weights.assign(layers, 1.0 / static_cast<double>(layers));
  }
  const auto radist = audit::NormalizeScores(audit::ComputeRadist(result.distances, relevance));
  std::vector<std::pair<std::string, audit::ScoreMatrix>> metrics;
  metrics.emplace_back("radist", radist);
  metrics.emplace_back("cosine", result.NormalizedCosine(cfg.cosine_baseline));
  metrics.emplace_back("reputation", result.NormalizedReputationSuspicion(cfg.reputation_decay));
  WriteFile(dir / "scores.csv",
            [&](std::ostream& out) { audit::WriteScoreCsv(out, metrics, result.roster); });

  WriteFile(dir / "audit.json",
            [&](std::ostream& out) { out << audit::AuditReportJson(result.audit.report); });
  WriteFile(dir / "distances.csv",
            [&](std::ostream& out) { audit::WriteDistanceCsv(out, result.distances); });
  WriteFile(dir / "distances.bin",
            [&](std::ostream& out) { audit::WriteDistanceBinary(out, result.distances); });
  WriteFile(dir / "model.bin",
            [&](std::ostream& out) { nn::WriteParams(out, result.training.final_params); });
  WriteFile(dir / "partition.json", [&](std::ostream& out) {
    out << data::PartitionManifestJson(data.partition, data.plan) << '\n';
  });
  if (overhead) {
    WriteFile(dir / "overhead.json", [&](std::ostream& out) { out << OverheadJson(*overhead); });
  }

  if (result.audited_run) {
    ExperimentConfig audited_cfg = cfg;
    audited_cfg.scenario = result.audited_run->scenario;
    ExportMetrics(*result.audited_run, audited_cfg, data, nullptr, dir / "audited_run");
  }
}

}  // namespace fedliab::harness
